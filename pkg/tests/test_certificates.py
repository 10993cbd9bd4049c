import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from defectlab import channel as ch
from defectlab.certificates import (
    DiscretenessWitness,
    FiltrationCertificate,
    LyapunovWitness,
    approx_quantization_check,
    approx_trapping_experiment,
    certificate_from_json,
    check_certificate,
    contraction_discrete_bound,
    delta_resolution_bound,
    find_flag,
    kraus_level_lowering,
    lyapunov_check,
    orbit_trace_values,
    pinch,
    rank_one_chain_check,
    shift_flag,
    verify_filtration,
)
from defectlab.errors import (
    ContractionNotObserved,
    EpsilonTooLarge,
    InvalidParams,
    MalformedCertificate,
    RequiresStabilization,
    SigmaNotPositive,
)
from defectlab.stabilization import accumulated_defect, defect_orbit

seeds = st.integers(0, 2**31 - 1)


def _rotated(cert, theta):
    """Rotate every projection of the certificate by a fixed small unitary mixing sites 0 and d-1."""
    d = cert.projections[0].shape[0]
    U = np.eye(d, dtype=np.complex128)
    U[0, 0] = U[-1, -1] = math.cos(theta)
    U[0, -1], U[-1, 0] = -math.sin(theta), math.sin(theta)
    return FiltrationCertificate([U @ p @ U.conj().T for p in cert.projections], cert.claimed_bound)


# ----------------------------------------------------------- filtrations


@pytest.mark.parametrize("d", [2, 3, 5])
def test_shift_flag_holds(d):
    v = verify_filtration(ch.shift(d), shift_flag(d))
    assert v.holds and v.details["implied_bound"] == d
    assert v.details["measured_index"] == d and v.details["cross_check"]
    k = kraus_level_lowering(ch.shift(d), shift_flag(d))
    assert k.holds and k.details["max_residual"] <= 1e-12


def test_identity_fails_first_level():
    v = verify_filtration(ch.identity_channel(3), shift_flag(3))
    assert not v.holds and v.details["failed_levels"][0] == 1
    assert not kraus_level_lowering(ch.identity_channel(3), shift_flag(3)).holds


def test_rotated_flag_fails_both():
    cert = _rotated(shift_flag(3), 0.1)
    v = verify_filtration(ch.shift(3), cert)
    k = kraus_level_lowering(ch.shift(3), cert)
    assert not v.holds and not k.holds
    assert k.details["max_residual"] > 1e-3


def test_single_level_certificate():
    # V = |0><1| kills level p_1 = |1><1|, but the defect |0><0| sits outside p_1
    V = np.array([[0.0, 1.0], [0.0, 0.0]])
    T = ch.KrausMap(np.array([V]))
    cert = FiltrationCertificate([np.zeros((2, 2)), np.diag([0.0, 1.0])], 1)
    assert kraus_level_lowering(T, cert).holds
    v = verify_filtration(T, cert)
    assert v.holds and not v.details["defect_covered"] and "implied_bound" not in v.details
    full = FiltrationCertificate(cert.projections + [np.eye(2)], 2)
    v = verify_filtration(T, full)
    assert v.holds and v.details["implied_bound"] == 2 and v.details["measured_index"] == 2


def test_malformed_certificates():
    with pytest.raises(MalformedCertificate):
        verify_filtration(ch.shift(2), FiltrationCertificate([np.zeros((2, 2))], 1))
    with pytest.raises(MalformedCertificate):
        verify_filtration(ch.shift(2), FiltrationCertificate([np.eye(2), np.eye(2)], 1))
    with pytest.raises(MalformedCertificate):
        verify_filtration(ch.shift(2), FiltrationCertificate([np.zeros((2, 2)), 0.5 * np.eye(2)], 1))
    with pytest.raises(MalformedCertificate):
        verify_filtration(ch.shift(2), FiltrationCertificate([np.zeros((2, 2)), np.eye(2), np.diag([1.0, 0.0])], 2))
    with pytest.raises(MalformedCertificate):
        certificate_from_json({"kind": "nonsense"})
    with pytest.raises(MalformedCertificate):
        certificate_from_json({"kind": "lyapunov"})


def test_find_flag_examples():
    assert find_flag(ch.dephasing_decay(0.5)) is None
    trivial = find_flag(ch.random_unital(3, 1))
    assert trivial.claimed_bound == 0
    cert = find_flag(ch.shift(4))
    assert cert.claimed_bound == 4
    for p, q in zip(cert.projections, shift_flag(4).projections):
        assert np.max(np.abs(p - q)) <= 1e-10


def test_certificate_json_round_trip():
    T = ch.random_flag_nilpotent(4, 3)
    cert = find_flag(T)
    back = certificate_from_json(json.loads(json.dumps(cert.to_json())))
    assert verify_filtration(T, back).holds
    v = check_certificate(T, back)
    assert v.holds and v.details["equivalence_agrees"]


@given(seeds, st.integers(2, 6))
def test_find_flag_verifies(seed, d):
    T = ch.random_flag_nilpotent(d, seed)
    cert = find_flag(T)
    v = verify_filtration(T, cert)
    assert v.holds and v.details["defect_covered"] and v.details["cross_check"]
    assert kraus_level_lowering(T, cert).holds


# Rotations in roughly (1e-9, 1e-4) land inside the tolerance band, where the order residual
# (linear in the angle) and the Kraus residual (quadratic) can straddle their thresholds.
@given(seeds, st.integers(2, 5), st.one_of(st.just(0.0), st.floats(1e-3, 0.5)))
def test_filtration_kraus_equivalence(seed, d, theta):
    T = ch.random_flag_nilpotent(d, seed)
    cert = _rotated(find_flag(T), theta)
    if cert.claimed_bound == 0:
        return
    assert verify_filtration(T, cert).holds == kraus_level_lowering(T, cert).holds


# ----------------------------------------------------------- rank-one chains


def test_rank_one_chain():
    v = rank_one_chain_check(ch.shift(4))
    assert v.holds and v.details["conclusion_verified"]
    assert not rank_one_chain_check(ch.direct_sum(ch.shift(2), ch.shift(2))).holds
    assert not rank_one_chain_check(ch.random_unital(2, 0)).holds
    with pytest.raises(RequiresStabilization):
        rank_one_chain_check(ch.dephasing_decay(0.5))


# ----------------------------------------------------------- Lyapunov


@pytest.mark.parametrize("d", [2, 4, 6])
def test_lyapunov_shift(d):
    t = 0.5
    sigma = np.diag([t ** (k + 1) for k in range(d)])
    v = lyapunov_check(ch.shift(d), LyapunovWitness(sigma, t))
    assert v.holds and v.details["empirical_decay"]
    assert abs(v.details["margin"]) <= 1e-12


def test_lyapunov_identity_fails():
    v = lyapunov_check(ch.identity_channel(3), LyapunovWitness(np.eye(3), 0.9))
    assert not v.holds and v.details["consistent"]


def test_lyapunov_errors():
    with pytest.raises(SigmaNotPositive):
        lyapunov_check(ch.shift(2), LyapunovWitness(np.diag([1.0, 0.0]), 0.5))
    with pytest.raises(InvalidParams):
        lyapunov_check(ch.shift(2), LyapunovWitness(np.eye(2), 1.0))


@given(seeds, st.integers(2, 5))
def test_lyapunov_verdict_consistent(seed, d):
    T = ch.random_flag_nilpotent(d, seed)
    sigma = accumulated_defect(defect_orbit(T)) + 0.1 * np.eye(d)
    v = lyapunov_check(T, LyapunovWitness(sigma, 0.9))
    assert v.details["consistent"]
    if v.holds:
        assert all(r <= 0.9 + 1e-8 for r in v.details["ratios"])


# ----------------------------------------------------------- discreteness


def test_delta_resolution_examples():
    assert delta_resolution_bound([0.4, 0.3, 0.2, 0.0, 0.0], 0.2) == (True, 5)
    assert delta_resolution_bound([0.4, 0.05], 0.2)[0] is False
    for d in (2, 3, 7):
        vals = orbit_trace_values(ch.shift(d), d)
        assert delta_resolution_bound(vals, 1.0 / d) == (True, d)
    with pytest.raises(InvalidParams):
        delta_resolution_bound([0.1], 0.0)


def test_contraction_bound_examples():
    assert contraction_discrete_bound(1.0, 0.5, 0.1) == 5
    assert contraction_discrete_bound(0.0, 0.5, 0.1) == 1
    with pytest.raises(InvalidParams):
        contraction_discrete_bound(1.0, 1.0, 0.1)


@given(st.floats(0.01, 10.0), st.floats(0.05, 0.95), st.floats(0.001, 1.0))
def test_snapped_contraction_hits_zero(x0, c, delta):
    # an oracle independent of the formula: iterate and snap down to the lattice
    N = contraction_discrete_bound(x0, c, delta)
    x = math.floor(x0 / delta) * delta
    steps = 0
    while x > 0:
        x = math.floor(c * x / delta + 1e-12) * delta
        steps += 1
    assert steps <= N


def test_quantization_examples():
    w = DiscretenessWitness(0.2, 0.01)
    v = approx_quantization_check([0.41, 0.19, 0.001], w)
    assert v.holds and v.details["classified"] == [0.41, 0.19, 0.0]
    assert abs(v.details["effective_delta"] - 0.19) <= 1e-15
    assert not approx_quantization_check([0.09], w).holds
    exact = approx_quantization_check([0.4, 0.2, 0.0], DiscretenessWitness(0.2, 0.0))
    assert exact.holds and exact.details["effective_delta"] == 0.2
    with pytest.raises(EpsilonTooLarge):
        approx_quantization_check([0.1], DiscretenessWitness(0.2, 0.1))
    with pytest.raises(InvalidParams):
        approx_quantization_check([0.1], DiscretenessWitness(0.2, 0.0, points=(0.0, 0.1, 0.3)))


def test_discreteness_certificate_on_shift():
    v = check_certificate(ch.shift(4), DiscretenessWitness(0.25))
    assert v.holds and v.details["implied_bound"] == 4 and v.details["measured_index"] == 4


# ----------------------------------------------------------- trapping


def test_pinch():
    X = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(pinch(X, [1, 2]), np.array([[0, 0, 0], [0, 4, 5], [0, 7, 8.0]]))


def test_trapping_block_diagonal_is_exact():
    T = ch.direct_sum(ch.shift(2), ch.dephasing_decay(0.5))
    r = approx_trapping_experiment(T, [2, 2], 0.9, DiscretenessWitness(0.25))
    assert r.eps0 == 0.0 and r.eps == 0.0
    assert max(r.errors) <= 1e-15 and r.holds


def test_trapping_shift_diagonal():
    r = approx_trapping_experiment(ch.shift(3), [1, 1, 1], 1.0, DiscretenessWitness(1 / 3))
    assert max(r.errors) <= 1e-15 and r.holds and r.triangle_ok


def test_trapping_perturbed():
    eta = 1e-3
    base = ch.direct_sum(ch.KrausMap(np.array([np.sqrt(0.5) * np.eye(2)])), ch.KrausMap(np.array([np.sqrt(0.6) * np.eye(2)])))
    v = np.zeros(4)
    v[0] = v[2] = 1 / np.sqrt(2)
    kraus = np.array([np.sqrt(1 - eta) * k for k in base.kraus] + [np.sqrt(eta) * np.outer(v, v)])
    T = ch.KrausMap(kraus)
    r = approx_trapping_experiment(T, [2, 2], 0.9, DiscretenessWitness(0.125), steps=20)
    assert r.eps > 0.0 and r.eps0 > 0.0
    assert r.holds and r.triangle_ok
    assert abs(r.bound - (r.eps0 + r.eps / 0.1**2)) <= 1e-15


def test_trapping_rejects():
    with pytest.raises(InvalidParams):
        approx_trapping_experiment(ch.shift(2), [1, 2], 0.5, DiscretenessWitness(0.5))
    with pytest.raises(ContractionNotObserved):
        approx_trapping_experiment(ch.dephasing_decay(0.9), [1, 1], 0.5, DiscretenessWitness(0.5))
