"""Acceptance criteria, one test per criterion (see README for the list)."""

import time

import numpy as np

from defectlab import suites
from defectlab.channel import (
    defect,
    dephasing_decay,
    qubit_noncommuting_effects,
    qubit_noncommuting_povm,
    random_commuting_instrument,
    random_flag_nilpotent,
    random_subunital,
    shift,
)
from defectlab.matcore import eig_hermitian, frob, hermitian_rank
from defectlab.stabilization import (
    accumulated_defect,
    analyze,
    asymptotic_defect,
    cumulative_dims,
    defect_orbit,
    rank_bounds,
    reachability,
    reachable_support,
)

SEED = 20240611


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def _report(label: str, ok: bool, **info) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {label} {info}")


def test_c01_shift_sharpness():
    with Timer() as t:
        for d in range(2, 9):
            rep = analyze(shift(d))
            assert rep.stabilized and rep.index == d
            for k in range(d):
                target = np.zeros((d, d))
                target[k, k] = 1.0
                assert np.max(np.abs(rep.orbit[k] - target)) <= 1e-12
            assert rep.corner_rank == d
            assert rep.is_maximal
    assert t.seconds < 1.0
    _report("shift sharpness", True, seconds=round(t.seconds, 3))


def test_c02_cp_dimension_bound():
    with Timer() as t:
        bound, corner = suites.cp_bound_suite(SEED, "desk")
    assert bound.summary["stabilized"] >= 450
    assert bound.passed and corner.passed, (bound.examples, corner.examples)
    assert t.seconds < 30.0
    _report("cp dimension bound", True, stabilized=bound.summary["stabilized"], seconds=round(t.seconds, 2))


def test_c03_cocycle_identities():
    with Timer() as t:
        seq, it = suites.cocycle_suite(SEED, "desk")
    assert seq.checked == 1000 and it.checked == 1000
    assert seq.passed and it.passed, (seq.examples, it.examples)
    assert seq.summary["max_residual"] <= 1e-10
    assert it.summary["max_residual"] <= 1e-9
    assert t.seconds < 20.0
    _report("cocycle identities", True, seq=seq.summary["max_residual"], iterated=it.summary["max_residual"])


def test_c04_parallel_composition():
    with Timer() as t:
        props = suites.parallel_suite(SEED, "desk")
    by_name = {p.name: p for p in props}
    assert by_name["defect_unit_success_form"].checked == 59
    assert by_name["index_le_max"].checked == 59
    assert all(p.passed for p in props), [p.examples for p in props]
    assert t.seconds < 15.0
    _report("parallel composition", True, seconds=round(t.seconds, 2))


def test_c05_qubit_noncommuting_povm():
    with Timer() as t:
        E1, E2 = qubit_noncommuting_effects()
        lam, _ = eig_hermitian(E1 + E2)
        assert np.max(np.abs(lam - np.array([1.0, 1.0 / 6.0]))) <= 1e-12
        T = qubit_noncommuting_povm()
        d = defect(T).defect
        assert hermitian_rank(d) == 1
        dl, _ = eig_hermitian(d)
        assert np.max(np.abs(dl - np.array([5.0 / 6.0, 0.0]))) <= 1e-12
        R = reachability(T, 1)
        assert R[1].shape[1] == 2
        assert rank_bounds(T).actual_rank_Q == 2
    assert t.seconds < 1.0
    _report("qubit noncommuting POVM", True)


def test_c06_commuting_instrument():
    rng = np.random.default_rng(SEED)
    with Timer() as t:
        for k in range(100):
            d = 2 + k % 5
            T = random_commuting_instrument(d, int(rng.integers(2**31)))
            rd = hermitian_rank(defect(T).defect)
            R = reachability(T, d)
            assert cumulative_dims(R)[-1] == rd
            assert hermitian_rank(reachable_support(T)) == rd
            assert rank_bounds(T).actual_rank_Q == rd
    assert t.seconds < 10.0
    _report("commuting instrument", True, seconds=round(t.seconds, 2))


def test_c07_digraph_criterion_exhaustive():
    with Timer() as t:
        verdict, supports = suites.digraph_suite(SEED, exhaustive_max=3, random_sizes=(4, 5), random_count=2000)
    assert verdict.summary["exhaustive_patterns"] == 2**1 + 2**4 + 2**9
    assert verdict.checked == 2 * (530 + 2000)
    assert verdict.failures == 0, verdict.examples
    assert supports.failures == 0
    assert t.seconds < 30.0
    _report("digraph criterion", True, cases=verdict.checked, seconds=round(t.seconds, 2))


def test_c08_counterexample_conjunction():
    for d in range(2, 7):
        c = suites.counterexample_check(d)
        assert c["annihilates"], c
        assert c["no_subharmonic"], c
        assert c["not_unital"], c
    _report("counterexample conjunction", True)


def test_c09_abstract_engine_exactness():
    with Timer() as t:
        props = {p.name: p for p in suites.abstract_suite(SEED, "desk")}
    rep = props["repetition_implies_annihilation"]
    assert rep.checked >= 150
    assert len(suites.abstract_instances(SEED, 240)) >= 200
    assert rep.passed, rep.examples
    assert props["half_plane_cancellation_fails"].passed
    assert props["preorder_cycle_not_stabilized"].passed
    assert all(p.passed for p in props.values())
    assert t.seconds < 10.0
    _report("abstract engine", True, outcomes=rep.summary["outcomes"], seconds=round(t.seconds, 2))


def test_c10_asymptotic_defect():
    worst = 0.0
    for s in range(60):
        ad = asymptotic_defect(random_subunital(2 + s % 4, s))
        assert ad.converged
        worst = max(worst, ad.residual)
    assert worst <= 1e-8
    for c in (0.3, 0.5, 0.9):
        ad = asymptotic_defect(dephasing_decay(c))
        assert ad.residual <= 1e-8
        assert frob(ad.d_inf - np.diag([0.0, 1.0])) <= 1e-10
    for s in range(60):
        T = random_flag_nilpotent(2 + s % 6, 1000 + s)
        rep = defect_orbit(T)
        assert rep.stabilized
        ad = asymptotic_defect(T)
        assert ad.residual <= 1e-8
        assert frob(ad.d_inf - accumulated_defect(rep)) <= 1e-9
    _report("asymptotic defect", True, worst_residual=worst)


def test_c11_certificate_equivalence():
    res = suites.certificate_equivalence_sweep(SEED, 200)
    assert res.checked == 200
    assert 0 < res.summary["holding_certificates"] < 200
    assert res.passed, res.examples
    _report("certificate equivalence", True, **res.summary)


def test_c12_scalar_robustness():
    res = suites.scalar_robustness_sweep(SEED, 500)
    assert res.checked == 500
    assert res.passed, res.examples
    _report("scalar robustness", True, **res.summary)
