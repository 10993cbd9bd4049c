import itertools
import json
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from defectlab import channel as ch
from defectlab import classical as cl
from defectlab.errors import AtomsNotPartition, EmptySupport, WeightBelowThreshold

H = F(1, 2)


def _walk_oracle(pattern, supp, k):
    """Atoms at the end of a length-k walk from supp, by boolean matrix powers (edge j -> i iff pattern[i][j])."""
    A = np.array(pattern, dtype=np.int64)
    v = np.zeros(len(pattern), dtype=np.int64)
    v[list(supp)] = 1
    for _ in range(k):
        v = (A @ v > 0).astype(np.int64)
    return frozenset(np.flatnonzero(v).tolist())


# ----------------------------------------------------------- systems


def test_system_validation():
    with pytest.raises(ValueError):
        cl.SubMarkovSystem.uniform([[H, H, H], [0, 0, 0], [0, 0, 0]])
    with pytest.raises(ValueError):
        cl.SubMarkovSystem(1, (F(0),), ((F(0),),))
    with pytest.raises(ValueError):
        cl.SubMarkovSystem.uniform([[F(-1, 3)]])
    with pytest.raises(TypeError):
        cl.SubMarkovSystem.uniform([[0.5]])


def test_system_json_round_trip():
    s = cl.SubMarkovSystem(2, (F(1), F(1, 3)), ((F(1, 2), F(1, 4)), (F(0), F(2, 3))))
    text = json.dumps(s.to_json())
    assert json.loads(text)["coeffs"][0] == ["1/2", "1/4"]
    assert cl.SubMarkovSystem.from_json(json.loads(text)) == s
    with pytest.raises(ValueError):
        cl.SubMarkovSystem.from_json({"atoms": 2})


# ----------------------------------------------------------- digraph


def test_chain_height_and_orbit():
    s = cl.chain_system(3)
    h = cl.digraph_height(s, {0})
    assert h.finite and h.height == 2 and h.predicted_index == 3
    orb = cl.classical_orbit(s)
    assert orb.stabilized and orb.index == 3
    assert orb.orbit[:3] == [(1, 0, 0), (0, 1, 0), (0, 0, 1)]


def test_self_loop():
    s = cl.SubMarkovSystem.uniform([[H]])
    h = cl.digraph_height(s, {0})
    assert not h.finite and h.cycle == [0] and h.predicted_index is None
    orb = cl.classical_orbit(s, max_iter=30)
    assert not orb.stabilized and orb.cycle == [0] and orb.decisive
    assert orb.orbit[30] == (H**31,)


def test_absorbing_zero_atom():
    s = cl.SubMarkovSystem.uniform([[0, 0], [0, 1]])
    h = cl.digraph_height(s, {0})
    assert h.finite and h.height == 0 and h.predicted_index == 1
    assert cl.classical_orbit(s).index == 1


def test_zero_defect_and_empty_support():
    s = cl.SubMarkovSystem.uniform([[1, 0], [0, 1]])
    assert cl.classical_orbit(s).index == 1
    with pytest.raises(EmptySupport):
        cl.digraph_height(s, set())
    with pytest.raises(ValueError):
        cl.classical_orbit(s, defect=(F(2), F(0)))


@pytest.mark.parametrize("lam,stabilizes", [(F(0), True), (F(1), True), (F(1, 3), False), (F(9, 10), False)])
def test_scalar_system(lam, stabilizes):
    orb = cl.classical_orbit(cl.SubMarkovSystem.uniform([[lam]]), max_iter=50)
    assert orb.stabilized is stabilizes
    if stabilizes:
        assert orb.index == 1
    else:
        assert all(x[0] == lam**k * (1 - lam) for k, x in enumerate(orb.orbit))


def test_telescoping_exact():
    s = cl.SubMarkovSystem.uniform([[F(1, 3), F(1, 3)], [F(1, 5), 0]])
    for p in range(6):
        assert cl.telescoping_exact(s, p) == (0, 0)


_patterns = st.integers(1, 4).flatmap(
    lambda n: st.lists(st.lists(st.booleans(), min_size=n, max_size=n), min_size=n, max_size=n)
)


@given(_patterns, st.integers(0, 2**31 - 1))
def test_digraph_criterion(pattern, seed):
    n = len(pattern)
    rng = np.random.default_rng(seed)
    coeffs = [[F(0)] * n for _ in range(n)]
    for i in range(n):
        nz = [j for j in range(n) if pattern[i][j]]
        for j in nz:
            coeffs[i][j] = F(int(rng.integers(1, 8)), 7 * max(1, len(nz)))
    s = cl.SubMarkovSystem.uniform(coeffs)
    d = tuple(F(int(rng.integers(0, 4)), 3) for _ in range(n))
    supp = cl.support(d)
    orb = cl.classical_orbit(s, d, max_iter=n + 1)
    assert orb.decisive
    for k, x in enumerate(orb.orbit):
        assert cl.support(x) == _walk_oracle(pattern, supp, k)
    if not supp:
        assert orb.index == 1
        return
    h = cl.digraph_height(s, supp)
    assert orb.stabilized == h.finite
    first = next((k for k in range(1, n + 2) if not _walk_oracle(pattern, supp, k)), None)
    assert orb.index == first
    if h.finite:
        assert orb.index <= h.predicted_index


def test_step_reachable_sets_chain():
    sets = cl.step_reachable_sets(cl.chain_system(3), {0}, 3)
    assert sets == [frozenset({0}), frozenset({1}), frozenset({2}), frozenset()]
    assert cl.first_pathless_length(cl.chain_system(3), {0}) == 3
    assert cl.first_pathless_length(cl.SubMarkovSystem.uniform([[H]]), {0}) is None


# ----------------------------------------------------------- rank functions


def test_rank_function_chain():
    v = cl.rank_function_verify(cl.chain_system(3), [2, 1, 0])
    assert v.holds
    assert v.details["height"] == 2 and v.details["bound"] == 3
    assert v.details["filtration_exact"] and v.details["defect_covered"] and v.details["orbit_confirms"]
    assert v.details["measured_index"] == 3


def test_rank_function_offending_edge():
    v = cl.rank_function_verify(cl.chain_system(3), [1, 1, 0])
    assert not v.holds and v.details["offending_edges"] == [(0, 1)]
    with pytest.raises(ValueError):
        cl.rank_function_verify(cl.chain_system(3), [1, 0])


def test_rank_function_edgeless():
    s = cl.SubMarkovSystem.uniform([[0, 0], [0, 0]])
    v = cl.rank_function_verify(s, [0, 0])
    assert v.holds and v.details["height"] == 0 and v.details["bound"] == 1 and v.details["measured_index"] == 1


@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_rank_function_from_topological_order(n, seed):
    # random DAG on atoms ordered by rank; any strictly decreasing rank certifies it
    rng = np.random.default_rng(seed)
    r = [int(x) for x in rng.permutation(n)]
    coeffs = [[F(0)] * n for _ in range(n)]
    for i, j in itertools.product(range(n), repeat=2):
        if r[i] < r[j] and rng.random() < 0.5:
            coeffs[i][j] = F(1, n)
    s = cl.SubMarkovSystem.uniform(coeffs)
    v = cl.rank_function_verify(s, r)
    assert v.holds and v.details["filtration_exact"] and v.details["orbit_confirms"]


# ----------------------------------------------------------- lattices


def test_bounded_denominator_chain():
    s = cl.SubMarkovSystem.uniform([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    v = cl.bounded_denominator_propagation(s, (H, 0, 0), 2, 5)
    assert v.holds and v.details["closed"]
    orb = cl.classical_orbit(s, (H, 0, 0))
    assert all(x in (0, H, 1) for vec in orb.orbit for x in vec)


def test_bounded_denominator_hypothesis_fails():
    v = cl.bounded_denominator_propagation(cl.SubMarkovSystem.uniform([[F(1, 3)]]), None, 2, 5)
    assert not v.holds and v.details["hypothesis_holds"] is False
    assert v.details["offending_coeffs"] == [(0, 0)]


def test_bounded_denominator_products_leave_lattice():
    s = cl.SubMarkovSystem.uniform([[0, 0], [H, 0]])
    v = cl.bounded_denominator_propagation(s, (H, 0), 2, 4)
    assert v.details["hypothesis_holds"] and not v.details["closed"]
    assert v.details["first_violation"] == {"step": 1, "atom": 1, "value": "1/4"}


@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_zero_one_systems_stay_zero_one(n, seed):
    rng = np.random.default_rng(seed)
    coeffs = [[F(0)] * n for _ in range(n)]
    for i in range(n):
        j = int(rng.integers(0, n + 1))
        if j < n:
            coeffs[i][j] = F(1)
    s = cl.SubMarkovSystem.uniform(coeffs)
    v = cl.bounded_denominator_propagation(s, None, 1, 2 * n)
    assert v.holds


def test_gap_chain():
    g = cl.gap_bound(cl.chain_system(3), None, 1, 1, k_max=4)
    assert g.trace_values == [1, 1, 1, 0, 0] and g.gap == 1 and g.gap_holds
    assert g.first_zero == 3


def test_gap_weighted():
    s = cl.SubMarkovSystem(3, (F(1), H, F(1, 4)), ((0, 0, 0), (H, 0, 0), (0, 1, 0)))
    g = cl.gap_bound(s, None, 2, F(1, 4))
    assert g.gap == F(1, 8) and g.gap_holds
    assert g.trace_values[:4] == [F(5, 4), F(3, 8), F(1, 8), 0]
    assert g.bound_respected


def test_gap_zero_defect_and_threshold():
    g = cl.gap_bound(cl.SubMarkovSystem.uniform([[1]]), None, 1, 1)
    assert all(t == 0 for t in g.trace_values) and g.contraction is None
    with pytest.raises(WeightBelowThreshold):
        cl.gap_bound(cl.chain_system(2, weights=[1, F(1, 10)]), None, 1, F(1, 2))


# ----------------------------------------------------------- quantum bridge


def test_expectation_shift_is_chain():
    for d in (2, 3, 5):
        ec = cl.expectation_coefficients(ch.shift(d), np.eye(d))
        assert ec.diagonal_preserving and ec.approximate
        assert ec.snapped == cl.chain_system(d)
        assert cl.diagonal_orbit_agrees(ch.shift(d), np.eye(d), ec.snapped, d + 1)


def test_expectation_dephasing_and_identity():
    ec = cl.expectation_coefficients(ch.dephasing_decay(0.5), np.eye(2))
    assert np.allclose(ec.matrix, np.diag([1.0, 0.5]))
    assert ec.snapped.coeffs == ((1, 0), (0, H))
    ec = cl.expectation_coefficients(ch.identity_channel(3), np.eye(3))
    assert np.allclose(ec.matrix, np.eye(3))


def test_expectation_rejects_non_basis():
    with pytest.raises(AtomsNotPartition):
        cl.expectation_coefficients(ch.shift(2), np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_expectation_non_diagonal():
    ec = cl.expectation_coefficients(ch.qubit_noncommuting_povm(), np.eye(2))
    assert not ec.diagonal_preserving
