"""Seeded property sweeps behind ``defectlab verify``.

Every sweep returns a list of :class:`PropertyResult`; a property passes when
it recorded no failures.  The same sweeps back the acceptance tests, so the
CLI and the test-suite exercise one code path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from . import abstractcore as ac
from . import classical as cl
from .certificates import (
    DiscretenessWitness,
    FiltrationCertificate,
    approx_quantization_check,
    contraction_discrete_bound,
    find_flag,
    kraus_level_lowering,
    shift_flag,
    verify_filtration,
)
from .channel import (
    KrausMap,
    apply,
    apply_power,
    compose,
    conjugate,
    defect,
    random_flag_nilpotent,
    random_subunital,
    random_unital,
    shift,
    success,
    tensor_map,
)
from .errors import UnknownSuite
from .faithfulness import (
    corner_irreducible_unitality,
    projection_kill_check,
    subharmonic_analysis,
    unitality_verdict,
)
from .matcore import DEFAULT_TOL, Tolerances, frob, haar_unitary, hermitian_operator_basis, hermitize
from .stabilization import analyze, corner_map, nilpotency_index

SUITES = ("cocycle", "cp-bound", "parallel", "digraph", "faithfulness", "abstract")
SCALES = ("smoke", "desk", "full")


@dataclass
class PropertyResult:
    name: str
    checked: int = 0
    failures: int = 0
    summary: dict[str, Any] = field(default_factory=dict)
    examples: list[Any] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, ok: bool, example: Any = None) -> None:
        self.checked += 1
        if not ok:
            self.failures += 1
            if example is not None and len(self.examples) < 5:
                self.examples.append(example)

    def to_json(self) -> dict:
        return {
            "checked": self.checked,
            "failures": self.failures,
            "passed": self.passed,
            "summary": self.summary,
            "failure_examples": self.examples,
        }


def _seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31 - 1, size=n)]


def _count(scale: str, smoke: int, desk: int, full: int | None = None) -> int:
    return {"smoke": smoke, "desk": desk, "full": full if full is not None else desk}[scale]


# -------------------------------------------------------------- cocycle


def cocycle_suite(seed: int, scale: str = "desk", tol: Tolerances = DEFAULT_TOL) -> list[PropertyResult]:
    seq = PropertyResult("sequential_cocycle", summary={"tolerance": 1e-10})
    it = PropertyResult("iterated_cocycle", summary={"tolerance": 1e-9, "max_n": 12})
    worst_seq = worst_it = 0.0
    for s in _seeds(seed, _count(scale, 100, 1000)):
        rng = np.random.default_rng(s)
        d = int(rng.integers(2, 6))
        T = random_subunital(d, int(rng.integers(2**31)), margin=float(rng.uniform(0.0, 0.3)))
        S = random_subunital(d, int(rng.integers(2**31)), margin=float(rng.uniform(0.0, 0.3)))
        TS = compose(T, S)
        r = frob(defect(TS, tol).defect - defect(T, tol).defect - apply(T, defect(S, tol).defect))
        worst_seq = max(worst_seq, r)
        seq.record(r <= 1e-10, {"seed": s, "residual": r})
        n = int(rng.integers(1, 13))
        dT = defect(T, tol).defect
        acc, Dk = np.zeros_like(dT), dT
        for _ in range(n):
            acc, Dk = acc + Dk, apply(T, Dk)
        r2 = frob((np.eye(d) - apply_power(T, np.eye(d), n)) - acc)
        worst_it = max(worst_it, r2)
        it.record(r2 <= 1e-9, {"seed": s, "n": n, "residual": r2})
    seq.summary["max_residual"] = worst_seq
    it.summary["max_residual"] = worst_it
    return [seq, it]


# ------------------------------------------------------------- cp-bound


def cp_bound_suite(seed: int, scale: str = "desk", tol: Tolerances = DEFAULT_TOL) -> list[PropertyResult]:
    bound = PropertyResult("index_le_rank_le_dim")
    corner = PropertyResult("index_equals_corner_nilpotency")
    stab = 0
    ratio = 0.0
    for s in _seeds(seed, _count(scale, 50, 500)):
        d = int(np.random.default_rng(s).integers(2, 9))
        T = random_flag_nilpotent(d, s)
        rep = analyze(T, tol=tol)
        if not rep.stabilized:
            continue
        stab += 1
        n, q = rep.index, rep.corner_rank
        ratio = max(ratio, n / d)
        bound.record(n <= q <= d, {"seed": s, "dim": d, "index": n, "rank_Q": q})
        m = nilpotency_index(corner_map(T, rep.orbit_support, rep.corner_basis), tol) if q else 1
        corner.record(m == n, {"seed": s, "dim": d, "index": n, "corner_index": m})
    bound.summary.update({"stabilized": stab, "max_index_over_dim": ratio})
    return [bound, corner]


# ------------------------------------------------------------- parallel


def parallel_pairs(seed: int, n_random: int) -> list[tuple[KrausMap, KrausMap]]:
    pairs = [(shift(a), shift(b)) for a in (2, 3, 4) for b in (2, 3, 4)]
    rng = np.random.default_rng(seed)
    while len(pairs) < 9 + n_random:
        T = random_flag_nilpotent(int(rng.integers(2, 4)), int(rng.integers(2**31)))
        S = random_flag_nilpotent(int(rng.integers(2, 4)), int(rng.integers(2**31)))
        pairs.append((T, S))
    return pairs


def parallel_suite(seed: int, scale: str = "desk", tol: Tolerances = DEFAULT_TOL) -> list[PropertyResult]:
    succ = PropertyResult("success_multiplicative", summary={"tolerance": 1e-11})
    form1 = PropertyResult("defect_unit_success_form", summary={"tolerance": 1e-10})
    form2 = PropertyResult("defect_inclusion_exclusion_form", summary={"tolerance": 1e-10})
    idx = PropertyResult("index_le_max")
    for T, S in parallel_pairs(seed, _count(scale, 10, 50)):
        TS = tensor_map(T, S)
        I1, I2 = np.eye(T.dim), np.eye(S.dim)
        d1, d2 = defect(T, tol).defect, defect(S, tol).defect
        s2 = success(S)
        dTS = defect(TS, tol).defect
        succ.record(frob(success(TS) - np.kron(success(T), s2)) <= 1e-11)
        form1.record(frob(dTS - (np.kron(I1, d2) + np.kron(d1, s2))) <= 1e-10)
        form2.record(frob(dTS - (np.kron(d1, I2) + np.kron(I1, d2) - np.kron(d1, d2))) <= 1e-10)
        rT, rS, rTS = analyze(T, tol=tol), analyze(S, tol=tol), analyze(TS, tol=tol)
        if rT.stabilized and rS.stabilized:
            ok = rTS.stabilized and rTS.index <= max(rT.index, rS.index)
            idx.record(ok, {"T": T.label, "S": S.label, "n_T": rT.index, "n_S": rS.index, "n_TS": rTS.index})
    return [succ, form1, form2, idx]


# -------------------------------------------------------------- digraph


def random_magnitude_system(pattern: list[list[bool]], rng: np.random.Generator, max_den: int = 7) -> cl.SubMarkovSystem:
    """Random rational magnitudes in (0, 1] on the pattern, rows rescaled to sum <= 1."""
    n = len(pattern)
    rows = []
    for i in range(n):
        row = [Fraction(int(rng.integers(1, max_den + 1)), max_den) if pattern[i][j] else Fraction(0) for j in range(n)]
        s = sum(row)
        slack = Fraction(int(rng.integers(0, 3)), 4)
        if s + slack > 1:
            row = [x / (s + slack) for x in row]
        rows.append(row)
    return cl.SubMarkovSystem.uniform(rows)


def random_defect(n: int, rng: np.random.Generator) -> tuple[Fraction, ...]:
    return tuple(Fraction(int(rng.integers(1, 5)), 4) if rng.random() < 0.5 else Fraction(0) for _ in range(n))


def digraph_case(sys: cl.SubMarkovSystem, d: tuple[Fraction, ...]) -> tuple[bool, bool, dict]:
    """(verdict agrees, supports follow reachability, info) for one system and defect."""
    supp = cl.support(d)
    orb = cl.classical_orbit(sys, d, max_iter=sys.n + 1)
    if not supp:
        predicted = 1
        agree = orb.stabilized and orb.index == 1
    else:
        h = cl.digraph_height(sys, supp)
        predicted = h.predicted_index
        if h.finite:
            agree = orb.stabilized and orb.index == predicted == cl.first_pathless_length(sys, supp)
        else:
            agree = (not orb.stabilized) and cl.first_pathless_length(sys, supp) is None
    sets = cl.step_reachable_sets(sys, supp, len(orb.orbit) - 1)
    supports_ok = all(cl.support(x) == sets[k] for k, x in enumerate(orb.orbit))
    return agree, supports_ok, {"predicted": predicted, "measured": orb.index}


def all_patterns(n: int):
    for bits in itertools.product((False, True), repeat=n * n):
        yield [list(bits[i * n:(i + 1) * n]) for i in range(n)]


def digraph_suite(
    seed: int,
    scale: str = "desk",
    exhaustive_max: int | None = None,
    random_sizes: tuple[int, ...] = (4, 5),
    random_count: int | None = None,
) -> list[PropertyResult]:
    """Digraph prediction against exact iteration.

    Exhaustive over every zero pattern up to ``exhaustive_max`` atoms, then
    ``random_count`` random patterns split over ``random_sizes``.  Each
    pattern is checked with the natural defect and with a random one.
    """
    if exhaustive_max is None:
        exhaustive_max = {"smoke": 2, "desk": 3, "full": 4}[scale]
    if random_count is None:
        random_count = _count(scale, 200, 2000, 2000)
    rng = np.random.default_rng(seed)
    verdict = PropertyResult("verdict_and_index_agree")
    supports = PropertyResult("support_equals_k_step_reachability")
    stab = nostab = 0

    def run(pattern):
        nonlocal stab, nostab
        sys = random_magnitude_system(pattern, rng)
        for d in (sys.natural_defect(), random_defect(sys.n, rng)):
            agree, sup_ok, info = digraph_case(sys, d)
            if info["measured"] is None:
                nostab += 1
            else:
                stab += 1
            verdict.record(agree, {"coeffs": sys.to_json()["coeffs"], "defect": [str(x) for x in d], **info})
            supports.record(sup_ok)

    for n in range(1, exhaustive_max + 1):
        for pattern in all_patterns(n):
            run(pattern)
    exhaustive = verdict.checked // 2
    for k in range(random_count):
        n = random_sizes[k % len(random_sizes)]
        run((rng.random((n, n)) < rng.uniform(0.1, 0.6)).tolist())
    verdict.summary.update(
        {
            "exhaustive_max_atoms": exhaustive_max,
            "exhaustive_patterns": exhaustive,
            "random_patterns": random_count,
            "stabilized_cases": stab,
            "non_stabilized_cases": nostab,
        }
    )
    return [verdict, supports]


# --------------------------------------------------------- faithfulness


def counterexample_check(d: int, tol: Tolerances = DEFAULT_TOL) -> dict[str, Any]:
    """Shift(d): T^d kills an operator basis, no subharmonic projection, not unital."""
    T = shift(d)
    killed = max(frob(apply_power(T, E, d)) for E in hermitian_operator_basis(d))
    sub = subharmonic_analysis(T, tol=tol)
    dnorm = float(np.linalg.norm(defect(T, tol).defect, 2))
    return {
        "annihilation_residual": killed,
        "annihilates": killed <= 1e-10,
        "no_subharmonic": sub.nilpotent_excludes_all and sub.route == "nilpotent",
        "defect_norm": dnorm,
        "not_unital": abs(dnorm - 1.0) <= 1e-12,
    }


def faithfulness_suite(seed: int, scale: str = "desk", tol: Tolerances = DEFAULT_TOL) -> list[PropertyResult]:
    counter = PropertyResult("shift_counterexample_conjunction")
    for d in range(2, 7):
        c = counterexample_check(d, tol)
        counter.record(c["annihilates"] and c["no_subharmonic"] and c["not_unital"], {"d": d, **c})
    kill = PropertyResult("shift_kills_last_basis_projection")
    for d in range(2, 7):
        killed, in_kernel = projection_kill_check(shift(d), np.eye(d)[d - 1], tol)
        kill.record(killed and in_kernel, {"d": d})
    consistent = PropertyResult("unitality_verdict_consistent")
    irreducible = PropertyResult("irreducible_corner_unital")
    for s in _seeds(seed, _count(scale, 20, 100)):
        d = int(np.random.default_rng(s).integers(2, 6))
        for T in (random_flag_nilpotent(d, s), random_unital(d, s)):
            rep = unitality_verdict(T, tol)
            consistent.record(rep.verdict_consistent, {"label": T.label})
        v = corner_irreducible_unitality(random_unital(d, s), tol)
        irreducible.record(v.status != "inconsistent", {"seed": s, "status": v.status})
    irreducible.summary["note"] = "inconclusive verdicts are allowed; only contradictions fail"
    return [counter, kill, consistent, irreducible]


# ------------------------------------------------------------- abstract


def abstract_instances(seed: int, count: int) -> list[ac.MonotoneSubunitalMap]:
    rng = np.random.default_rng(seed)
    makers = (ac.random_integer_instance, ac.random_rational_instance, ac.random_psd_instance)
    out = [ac.coordinate_projection_example(), ac.chain_example(3)]
    for k in range(count):
        out.append(makers[k % 3](int(rng.integers(2, 5)), rng))
    return out


def abstract_suite(seed: int, scale: str = "desk") -> list[PropertyResult]:
    rep = PropertyResult("repetition_implies_annihilation")
    const = PropertyResult("stabilization_is_constancy")
    tele = PropertyResult("telescoping_exact")
    axioms = PropertyResult("map_axioms_on_samples")
    rng = np.random.default_rng(seed + 1)
    outcomes = {"stabilized": 0, "orbit_open": 0, "repetition_without_annihilation": 0}
    for T in abstract_instances(seed, _count(scale, 60, 240)):
        r = ac.generic_stabilize(T, max_iter=60)
        outcomes[r.status] += 1
        if r.repetition is not None:
            n, m = r.repetition
            zero = all(T.space.is_zero(T.power(r.defect, n + k)) for k in range(m - n))
            rep.record(zero and r.stabilized, {"label": T.label, "repetition": [n, m]})
        if r.stabilized:
            const.record(r.constancy_verified, {"label": T.label})
        for p in (1, 2, 3, 5):
            tele.record(T.space.is_zero(ac.telescoping_check(T, p)))
        axioms.record(all(T.check_on_samples(ac.random_samples(T.space, rng, 4)).values()), {"label": T.label})
    rep.summary["outcomes"] = outcomes
    half = PropertyResult("half_plane_cancellation_fails")
    for normal in ((1, 0), (1, 1)):
        H = ac.HalfPlaneCone(normal)
        v = ac.cancellation_check(H, list(H.null_witness()))
        half.record(not v.holds, {"normal": list(normal)})
    pointed = PropertyResult("pointed_cones_cancel")
    for space in (ac.RationalLattice(2), ac.IntLattice(3), ac.SymmetricPSD(2)):
        pointed.record(ac.cancellation_check(space, ac.random_samples(space, rng, 6)).holds, {"space": space.name})
    preorder = PropertyResult("preorder_cycle_not_stabilized")
    r = ac.generic_stabilize(ac.preorder_cycle_example())
    preorder.record(r.status == "repetition_without_annihilation", {"status": r.status})
    return [rep, const, tele, axioms, half, pointed, preorder]


# ---------------------------------------------- certificate equivalence


def _random_flag(d: int, rng: np.random.Generator) -> FiltrationCertificate:
    U = haar_unitary(d, rng)
    cuts = sorted(set(int(x) for x in rng.integers(1, d + 1, size=int(rng.integers(1, d + 1)))) | {d})
    ps = [np.zeros((d, d), dtype=np.complex128)]
    for c in cuts:
        B = U[:, :c]
        ps.append(B @ B.conj().T)
    return FiltrationCertificate(ps, len(ps) - 1)


def _small_unitary(d: int, theta: float, rng: np.random.Generator) -> np.ndarray:
    """exp(i theta H) for a random Hermitian H of unit operator norm."""
    H = hermitize(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
    w, V = np.linalg.eigh(H / np.linalg.norm(H, 2))
    return (V * np.exp(1j * theta * w)) @ V.conj().T


def _rotate(cert: FiltrationCertificate, theta: float, rng: np.random.Generator) -> FiltrationCertificate:
    U = _small_unitary(cert.projections[0].shape[0], theta, rng)
    return FiltrationCertificate([hermitize(U @ p @ U.conj().T) for p in cert.projections], cert.claimed_bound)


def certificate_pairs(seed: int, count: int) -> list[tuple[KrausMap, FiltrationCertificate, str]]:
    rng = np.random.default_rng(seed)
    out: list[tuple[KrausMap, FiltrationCertificate, str]] = []
    kinds = ("found", "shift", "rotated_flag", "rotated_map", "random_flag")
    k = 0
    while len(out) < count:
        kind = kinds[k % len(kinds)]
        k += 1
        d = int(rng.integers(2, 7))
        if kind == "shift":
            out.append((shift(d), shift_flag(d), kind))
            continue
        T = random_flag_nilpotent(d, int(rng.integers(2**31)))
        cert = find_flag(T)
        if cert is None:
            continue
        if kind == "found":
            out.append((T, cert, kind))
        elif kind == "rotated_flag":
            out.append((T, _rotate(cert, float(rng.uniform(0.05, 0.5)), rng), kind))
        elif kind == "rotated_map":
            U = _small_unitary(d, float(rng.uniform(0.05, 0.5)), rng)
            out.append((conjugate(T, U), cert, kind))
        else:
            out.append((T, _random_flag(d, rng), kind))
    return out


def certificate_equivalence_sweep(seed: int, count: int = 200, tol: Tolerances = DEFAULT_TOL) -> PropertyResult:
    res = PropertyResult("filtration_equivalence")
    holds = 0
    by_kind: dict[str, int] = {}
    for T, cert, kind in certificate_pairs(seed, count):
        a = verify_filtration(T, cert, tol).holds
        b = kraus_level_lowering(T, cert, tol).holds
        holds += a
        by_kind[kind] = by_kind.get(kind, 0) + 1
        res.record(a == b, {"kind": kind, "order_test": a, "level_lowering": b})
    res.summary.update({"holding_certificates": holds, "by_kind": by_kind})
    return res


# --------------------------------------------------- scalar robustness


def lattice_snapped_sequence(
    x0: float, c: float, delta: float, eps: float, steps: int, rng: np.random.Generator
) -> list[float]:
    """y_0 = x0, y_{k+1} <= c y_k, each y_k within eps of delta * N (possibly in (0, eps])."""
    ys = [x0]
    for _ in range(steps):
        target = c * ys[-1]
        top = int(np.floor(target / delta))
        m = top if rng.random() < 0.7 else int(rng.integers(0, top + 1))
        lo, hi = max(0.0, m * delta - eps), min(target, m * delta + eps)
        ys.append(float(rng.uniform(lo, hi)) if hi > lo else max(0.0, min(lo, target)))
    return ys


def scalar_robustness_sweep(seed: int, count: int = 500) -> PropertyResult:
    res = PropertyResult("scalar_robustness")
    rng = np.random.default_rng(seed)
    hit_before = 0
    for _ in range(count):
        delta = float(rng.uniform(0.05, 0.5))
        eps = float(rng.uniform(0.0, 0.45)) * delta
        c = float(rng.uniform(0.1, 0.95))
        x0 = delta * int(rng.integers(1, 30)) + float(rng.uniform(-eps, eps))
        N = contraction_discrete_bound(x0, c, delta - eps)
        ys = lattice_snapped_sequence(x0, c, delta, eps, N + 5, rng)
        q = approx_quantization_check(ys, DiscretenessWitness(delta, eps))
        cls = q.details["classified"]
        first = next((k for k, v in enumerate(cls) if v == 0.0), None)
        ok = q.holds and first is not None and first <= N and all(v == 0.0 for v in cls[first:])
        hit_before += first is not None and first < N
        res.record(ok, {"x0": x0, "c": c, "delta": delta, "eps": eps, "N": N, "first_zero": first})
    res.summary["hit_strictly_before_bound"] = hit_before
    return res


# ------------------------------------------------------------- dispatch


SUITE_RUNNERS: dict[str, Callable[..., list[PropertyResult]]] = {
    "cocycle": cocycle_suite,
    "cp-bound": cp_bound_suite,
    "parallel": parallel_suite,
    "digraph": digraph_suite,
    "faithfulness": faithfulness_suite,
    "abstract": abstract_suite,
}


def run_suite(name: str, seed: int, scale: str = "desk") -> dict[str, Any]:
    if scale not in SCALES:
        raise UnknownSuite(f"unknown scale {scale!r}; choose from {', '.join(SCALES)}")
    names = SUITES if name == "all" else (name,)
    if any(n not in SUITE_RUNNERS for n in names):
        raise UnknownSuite(f"unknown suite {name!r}; choose from {', '.join(SUITES + ('all',))}")
    out: dict[str, Any] = {"seed": seed, "scale": scale, "suites": {}}
    ok = True
    for n in names:
        props = SUITE_RUNNERS[n](seed, scale)
        out["suites"][n] = {p.name: p.to_json() for p in props}
        ok &= all(p.passed for p in props)
    out["passed"] = ok
    return out
