"""Checkers for sufficient conditions that bound the stabilization index.

Each checker takes a map and a supplied witness and returns a
:class:`Verdict`.  Nothing here searches for witnesses except
:func:`find_flag`, whose output is meant to be re-checked independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .channel import KrausMap, apply, defect, matrix_from_json, matrix_to_json
from .errors import (
    ContractionNotObserved,
    EpsilonTooLarge,
    InvalidParams,
    MalformedCertificate,
    RequiresStabilization,
    SigmaNotPositive,
)
from .matcore import (
    DEFAULT_TOL,
    Tolerances,
    frob,
    hermitian_rank,
    hermitize,
    is_projection,
    min_eig,
    range_basis,
    span_basis,
    trace_norm,
)
from .stabilization import (
    analyze,
    corner_map,
    cumulative_dims,
    defect_orbit,
    kernel_flag,
    reachability,
)


@dataclass
class Verdict:
    holds: bool
    details: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"holds": bool(self.holds), "details": _jsonable(self.details)}


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, np.ndarray):
        return matrix_to_json(x) if x.ndim == 2 else _jsonable(x.tolist())
    return x


# ------------------------------------------------------------- filtrations


@dataclass(frozen=True, eq=False)
class FiltrationCertificate:
    """Increasing projections p_0 = 0 <= p_1 <= ... <= p_N."""

    projections: list[np.ndarray]
    claimed_bound: int

    def validate(self, dim: int, tol: Tolerances = DEFAULT_TOL) -> None:
        ps = self.projections
        if len(ps) != self.claimed_bound + 1:
            raise MalformedCertificate(
                f"{len(ps)} projections given for claimed bound {self.claimed_bound}"
            )
        for k, p in enumerate(ps):
            if np.shape(p) != (dim, dim):
                raise MalformedCertificate(f"p_{k} has shape {np.shape(p)}, expected {(dim, dim)}")
            if not is_projection(p, tol.proj_tol):
                raise MalformedCertificate(f"p_{k} is not an orthogonal projection")
        if frob(ps[0]) > tol.proj_tol:
            raise MalformedCertificate("p_0 must be zero")
        for k in range(1, len(ps)):
            if min_eig(ps[k] - ps[k - 1]) < -tol.psd_tol:
                raise MalformedCertificate(f"p_{k - 1} is not below p_{k}")

    def to_json(self) -> dict:
        return {
            "kind": "filtration",
            "claimed_bound": self.claimed_bound,
            "projections": [matrix_to_json(p) for p in self.projections],
        }


def verify_filtration(
    T: KrausMap, cert: FiltrationCertificate, tol: Tolerances = DEFAULT_TOL
) -> Verdict:
    """Check T(p_k) <= p_{k-1} for k = 1..N."""
    cert.validate(T.dim, tol)
    ps = cert.projections
    N = cert.claimed_bound
    residuals = [max(0.0, -min_eig(ps[k - 1] - apply(T, ps[k]))) for k in range(1, N + 1)]
    failures = [k for k, r in enumerate(residuals, start=1) if r > tol.psd_tol]
    holds = not failures
    details: dict[str, Any] = {"level_residuals": residuals, "failed_levels": failures}
    if holds:
        dd = defect(T, tol)
        outside = np.eye(T.dim) - ps[N]
        covered = frob(outside @ dd.defect @ outside) <= tol.zero_tol * (1.0 + dd.scale)
        details["defect_covered"] = covered
        if covered:
            details["implied_bound"] = N
            rep = defect_orbit(T, max(N, 4 * T.dim, 1), tol)
            details["measured_index"] = rep.index
            details["cross_check"] = rep.stabilized and rep.index <= max(N, 1)
    return Verdict(holds, details)


def kraus_level_lowering(
    T: KrausMap, cert: FiltrationCertificate, tol: Tolerances = DEFAULT_TOL
) -> Verdict:
    """Check p_k V_r (I - p_{k-1}) = 0 for every level k and Kraus operator V_r.

    A level passes when the summed squared Frobenius residual is at most
    ``psd_tol``; this is the quantity the order test sees on the complement
    of p_{k-1}, so both checks share one threshold.
    """
    cert.validate(T.dim, tol)
    ps = cert.projections
    I = np.eye(T.dim)
    per_level, worst = [], 0.0
    for k in range(1, cert.claimed_bound + 1):
        res = [frob(ps[k] @ v @ (I - ps[k - 1])) for v in T.kraus]
        worst = max(worst, max(res))
        per_level.append(float(sum(r * r for r in res)))
    failures = [k for k, r in enumerate(per_level, start=1) if r > tol.psd_tol]
    return Verdict(
        not failures,
        {"level_sq_residuals": per_level, "max_residual": worst, "failed_levels": failures},
    )


def shift_flag(d: int) -> FiltrationCertificate:
    """p_k projects onto the last k standard basis vectors."""
    ps = []
    for k in range(d + 1):
        p = np.zeros((d, d), dtype=np.complex128)
        for j in range(d - k, d):
            p[j, j] = 1.0
        ps.append(p)
    return FiltrationCertificate(ps, d)


def find_flag(T: KrausMap, tol: Tolerances = DEFAULT_TOL) -> FiltrationCertificate | None:
    """Filtration built from the kernel flag H_0 ⊂ H_1 ⊂ ... ⊂ H_m of the corner map.

    p_k projects onto B (H_{m-k})^⊥ inside range(Q), so p_0 = 0, p_m = Q and
    the Kraus operators lower the levels.  Returns None when the defect orbit
    is not annihilated.
    """
    rep = analyze(T, tol=tol)
    if not rep.stabilized:
        return None
    if rep.corner_rank == 0:
        return FiltrationCertificate([np.zeros((T.dim, T.dim), dtype=np.complex128)], 0)
    B = rep.corner_basis
    s = B.shape[1]
    alpha = corner_map(T, rep.orbit_support, B)
    flag = kernel_flag(alpha, tol=tol)
    if flag[-1].shape[1] != s:
        return None
    m = len(flag) - 1
    ps = []
    for k in range(m + 1):
        H = flag[m - k]
        comp = np.eye(s) - H @ H.conj().T
        ps.append(hermitize(B @ comp @ B.conj().T))
    return FiltrationCertificate(ps, m)


# ------------------------------------------------------- rank-one chains


def _contained(X: np.ndarray, Y: np.ndarray, tol: float) -> bool:
    """span(X) ⊆ span(Y) for column sets with orthonormal Y."""
    if X.shape[1] == 0:
        return True
    resid = X - Y @ (Y.conj().T @ X) if Y.shape[1] else X
    return float(np.linalg.norm(resid, 2)) <= tol * max(1.0, float(np.linalg.norm(X, 2)))


def rank_one_chain_check(T: KrausMap, tol: Tolerances = DEFAULT_TOL) -> Verdict:
    """Conditions for a maximal (rank-one step) defect chain.

    (i) rank T^k(d) = 1 for k < s, (ii) dim(R_0 + ... + R_k) = k + 1,
    (iii) for each level some V_i^H pushes R_k outside R_0 + ... + R_{k-1}.
    When all hold the stabilization index is checked to equal s = rank Q.
    """
    rep = analyze(T, tol=tol)
    if not rep.stabilized:
        raise RequiresStabilization("rank-one chain check needs a stabilized map")
    if rep.trivial_defect:
        return Verdict(False, {"applies": False, "reason": "zero defect"})
    s = rep.corner_rank
    orbit = rep.orbit
    ranks = [hermitian_rank(orbit[k], tol.rank_tol) if k < len(orbit) else 0 for k in range(s)]
    cond_i = all(r == 1 for r in ranks)
    R = reachability(T, max(s - 1, 0), tol)
    cum = cumulative_dims(R, tol)
    cond_ii = cum[:s] == list(range(1, s + 1))
    witnesses: list[int | None] = []
    for k in range(s):
        prev = span_basis(np.hstack(R[:k]), tol.rank_tol, ref=1.0) if k else np.zeros((T.dim, 0))
        found = None
        for i, v in enumerate(T.kraus):
            if not _contained(v.conj().T @ R[k], prev, 1e-8):
                found = i
                break
        witnesses.append(found)
    cond_iii = all(w is not None for w in witnesses[: max(s - 1, 0)])
    applies = cond_i and cond_ii and cond_iii
    details: dict[str, Any] = {
        "applies": applies,
        "orbit_ranks": ranks,
        "cumulative_dims": cum[:s],
        "witnesses": witnesses,
        "corner_rank": s,
        "index": rep.index,
    }
    if applies:
        details["conclusion"] = "n_T = rank(Q)"
        details["conclusion_verified"] = rep.index == s
    return Verdict(applies, details)


# ------------------------------------------------------------- Lyapunov


@dataclass(frozen=True, eq=False)
class LyapunovWitness:
    sigma: np.ndarray
    c: float

    def to_json(self) -> dict:
        return {"kind": "lyapunov", "sigma": matrix_to_json(self.sigma), "c": self.c}


def lyapunov_check(
    T: KrausMap,
    w: LyapunovWitness,
    Q: np.ndarray | None = None,
    tol: Tolerances = DEFAULT_TOL,
    steps: int = 10,
) -> Verdict:
    """Check sum_i V_i sigma V_i^H <= c sigma, optionally compressed to range(Q)."""
    if not 0.0 < w.c < 1.0:
        raise InvalidParams("the Lyapunov rate c must lie in (0, 1)")
    sigma = hermitize(np.asarray(w.sigma, dtype=np.complex128))
    if Q is not None:
        B = range_basis(Q, tol)
        ops = [B.conj().T @ v @ B for v in T.kraus]
        sig = B.conj().T @ sigma @ B
    else:
        B = None
        ops = list(T.kraus)
        sig = sigma
    if sig.shape[0] == 0 or min_eig(sig) <= 0.0:
        raise SigmaNotPositive("sigma must be strictly positive on the relevant space")
    pushed = hermitize(sum(v @ sig @ v.conj().T for v in ops))
    margin = min_eig(w.c * sig - pushed)
    holds = margin >= -tol.psd_tol

    d = defect(T, tol).defect
    values = []
    Dk = d
    for _ in range(steps + 1):
        X = Dk if B is None else B.conj().T @ Dk @ B
        values.append(float(np.real(np.trace(sig @ X))))
        Dk = apply(T, Dk)
    ratios = [values[k] / values[k - 1] if values[k - 1] > 1e-14 else 0.0 for k in range(1, len(values))]
    decay_ok = all(values[k] <= w.c * values[k - 1] + 1e-8 * max(values[0], 1e-300) for k in range(1, len(values)))
    return Verdict(
        holds,
        {
            "margin": margin,
            "omega_values": values,
            "ratios": ratios,
            "empirical_decay": decay_ok,
            "consistent": (not holds) or decay_ok,
        },
    )


# ---------------------------------------------------- scalar discreteness


def delta_resolution_bound(
    values: list[float], delta: float, zero_tol: float = DEFAULT_TOL.zero_tol
) -> tuple[bool, int]:
    """Every value is 0 or at least delta; then at most floor(1/delta) nonzero steps."""
    if delta <= 0:
        raise InvalidParams("delta must be positive")
    valid = all(abs(v) <= zero_tol or v >= delta - zero_tol for v in values)
    return valid, int(math.floor(1.0 / delta + 1e-12))


def contraction_discrete_bound(x0: float, c: float, delta: float) -> int:
    """Steps after which a c-contracting sequence with gap delta must be zero."""
    if not 0.0 < c < 1.0 or delta <= 0.0 or x0 < 0.0:
        raise InvalidParams("need 0 < c < 1, delta > 0, x0 >= 0")
    if x0 < delta:
        return 1
    return 1 + math.ceil(math.log(x0 / delta) / math.log(1.0 / c) - 1e-12)


@dataclass(frozen=True)
class DiscretenessWitness:
    """Lattice delta*N (``points`` None) or an explicit finite set, plus slack epsilon."""

    lattice_gap: float
    epsilon: float = 0.0
    points: tuple[float, ...] | None = None

    def distance(self, v: float) -> float:
        if self.points is not None:
            return min(abs(v - p) for p in self.points)
        if v <= 0:
            return abs(v)
        m = round(v / self.lattice_gap)
        return abs(v - m * self.lattice_gap)

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "kind": "discreteness",
            "lattice_gap": self.lattice_gap,
            "epsilon": self.epsilon,
        }
        if self.points is not None:
            out["points"] = list(self.points)
        return out


def approx_quantization_check(values: list[float], w: DiscretenessWitness) -> Verdict:
    """Each value within epsilon of the lattice; values at most epsilon count as 0."""
    delta, eps = w.lattice_gap, w.epsilon
    if delta <= 0 or eps < 0:
        raise InvalidParams("need delta > 0 and epsilon >= 0")
    if eps >= delta / 2:
        raise EpsilonTooLarge(f"epsilon {eps} must be below delta/2 = {delta / 2}")
    if w.points is not None and any(0 < p < delta for p in w.points):
        raise InvalidParams("explicit lattice has points inside (0, delta)")
    slack = 1e-12
    dists = [w.distance(v) for v in values]
    near = [dv <= eps + slack for dv in dists]
    classified = [0.0 if v <= eps + slack else float(v) for v in values]
    dichotomy = all(x == 0.0 or x >= delta - eps - slack for x in classified)
    return Verdict(
        all(near) and dichotomy,
        {
            "distances": dists,
            "classified": classified,
            "dichotomy": dichotomy,
            "effective_delta": delta - eps,
        },
    )


# ------------------------------------------------- approximate trapping


def pinch(X: np.ndarray, block_sizes: list[int]) -> np.ndarray:
    """Block-diagonal part of X."""
    out = np.zeros_like(X)
    i = 0
    for b in block_sizes:
        out[i : i + b, i : i + b] = X[i : i + b, i : i + b]
        i += b
    return out


def _abs_herm(X: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(hermitize(X))
    return (V * np.abs(w)) @ V.conj().T


@dataclass(frozen=True)
class TrappingReport:
    errors: list[float]
    eps0: float
    eps: float
    bound: float
    holds: bool
    tau_orbit: list[float]
    tau_trapped: list[float]
    lattice_distance: list[float]
    triangle_ok: bool


def approx_trapping_experiment(
    T: KrausMap,
    block_sizes: list[int],
    c: float,
    lattice: DiscretenessWitness,
    steps: int | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> TrappingReport:
    """Compare the defect orbit with the orbit of its block-pinched shadow.

    With normalized trace tau, x_k = T^k(d) and a_k = (E T)^k E(d), the error
    e_k = tau|x_k - a_k| obeys e_k <= eps0 + eps / (1 - c)^2 where eps0 and
    eps are measured.  Trace contraction at rate c is checked on x_k, a_k and
    |x_k - a_k|, which are exactly the elements the error recursion uses.
    """
    if not 0.0 < c <= 1.0:
        raise InvalidParams("c must lie in (0, 1]")
    if sum(block_sizes) != T.dim or any(b <= 0 for b in block_sizes):
        raise InvalidParams("block sizes must be positive and sum to the dimension")
    n = T.dim
    steps = 4 * n if steps is None else steps

    def tau(X: np.ndarray) -> float:
        return float(np.real(np.trace(X))) / n

    def contracts(X: np.ndarray) -> bool:
        return tau(apply(T, X)) <= c * tau(X) + tol.zero_tol

    d = defect(T, tol).defect
    x, a = d, pinch(d, block_sizes)
    eps0 = trace_norm(d - a) / n
    errors, tau_x, tau_a, eps = [], [], [], 0.0
    for _ in range(steps + 1):
        diff = _abs_herm(x - a)
        errors.append(tau(diff))
        tau_x.append(tau(x))
        tau_a.append(tau(a))
        for probe in (x, a, diff):
            if not contracts(probe):
                raise ContractionNotObserved(
                    f"trace grew beyond rate {c}: {tau(apply(T, probe)):.3e} > {c * tau(probe):.3e}"
                )
        Ta = apply(T, a)
        Ea = pinch(Ta, block_sizes)
        if tau(a) > tol.zero_tol:
            eps = max(eps, trace_norm(Ta - Ea) / n / tau(a))
        x, a = apply(T, x), Ea
    if eps <= 0.0:
        bound = eps0
    elif c >= 1.0:
        bound = float("inf")
    else:
        bound = eps0 + eps / (1.0 - c) ** 2
    holds = all(e <= bound + 1e-12 for e in errors)
    dist_x = [lattice.distance(t) for t in tau_x]
    triangle = all(
        dx <= lattice.distance(ta) + e + 1e-12 for dx, ta, e in zip(dist_x, tau_a, errors)
    )
    return TrappingReport(errors, eps0, eps, bound, holds, tau_x, tau_a, dist_x, triangle)


# ------------------------------------------------------------ JSON I/O


def certificate_from_json(obj: dict) -> FiltrationCertificate | LyapunovWitness | DiscretenessWitness:
    try:
        kind = obj["kind"]
        if kind == "filtration":
            ps = [matrix_from_json(p) for p in obj["projections"]]
            return FiltrationCertificate(ps, int(obj.get("claimed_bound", len(ps) - 1)))
        if kind == "lyapunov":
            return LyapunovWitness(matrix_from_json(obj["sigma"]), float(obj["c"]))
        if kind == "discreteness":
            pts = obj.get("points")
            return DiscretenessWitness(
                float(obj["lattice_gap"]),
                float(obj.get("epsilon", 0.0)),
                tuple(float(p) for p in pts) if pts is not None else None,
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedCertificate(f"bad certificate: {exc}") from exc
    raise MalformedCertificate(f"unknown certificate kind {obj.get('kind')!r}")


def orbit_trace_values(T: KrausMap, steps: int, tol: Tolerances = DEFAULT_TOL) -> list[float]:
    """Normalized traces of D_0 .. D_steps."""
    d = defect(T, tol).defect
    out, Dk = [], d
    for _ in range(steps + 1):
        out.append(float(np.real(np.trace(Dk))) / T.dim)
        Dk = apply(T, Dk)
    return out


def check_certificate(T: KrausMap, cert: Any, tol: Tolerances = DEFAULT_TOL) -> Verdict:
    """Dispatch a parsed certificate to its checker."""
    if isinstance(cert, FiltrationCertificate):
        v = verify_filtration(T, cert, tol)
        k = kraus_level_lowering(T, cert, tol)
        v.details["kraus_level_lowering"] = k.to_json()
        v.details["equivalence_agrees"] = v.holds == k.holds
        return v
    if isinstance(cert, LyapunovWitness):
        try:
            return lyapunov_check(T, cert, tol=tol)
        except InvalidParams as exc:
            raise MalformedCertificate(str(exc)) from exc
    if isinstance(cert, DiscretenessWitness):
        try:
            values = orbit_trace_values(T, 4 * T.dim, tol)
            q = approx_quantization_check(values, cert)
        except (EpsilonTooLarge, InvalidParams) as exc:
            raise MalformedCertificate(str(exc)) from exc
        eff = q.details["effective_delta"]
        valid, bound = delta_resolution_bound(q.details["classified"], eff, tol.zero_tol)
        rep = defect_orbit(T, max(bound, 1) + 1, tol)
        details = dict(q.details)
        details.update({"resolution_valid": valid, "implied_bound": bound, "measured_index": rep.index})
        holds = q.holds and valid
        if holds:
            details["cross_check"] = rep.stabilized and rep.index <= max(bound, 1)
        return Verdict(holds, details)
    raise MalformedCertificate(f"unsupported certificate type {type(cert).__name__}")
