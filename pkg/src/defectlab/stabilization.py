"""Defect orbits, stabilization indices and the orbit-support corner.

The defect orbit of a subunital map is ``D_k = T^k(I - T(I))``.  It is
annihilated after finitely many steps exactly when the unit orbit
``T^k(I)`` becomes constant; the first such step is the stabilization
index.  When that happens all leakage lives in the support ``Q`` of
``sum_{k<n} D_k`` and the compression of ``T`` to ``Q`` is nilpotent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import KrausMap, apply, defect, success
from .errors import Divergent, NotNilpotent, RequiresStabilization, ZeroCorner, ZeroDefect
from .matcore import (
    DEFAULT_TOL,
    Tolerances,
    frob,
    hermitian_rank,
    hermitize,
    intersection_dim,
    null_basis,
    range_basis,
    span_basis,
)

VERIFY_EXTRA_STEPS = 3


@dataclass(frozen=True)
class RankBounds:
    rank_defect: int
    rank_TI: int
    kraus_bound: int
    intrinsic_bound: int
    actual_rank_Q: int

    def holds(self, dim: int) -> bool:
        return self.actual_rank_Q <= min(self.kraus_bound, self.intrinsic_bound, dim)


@dataclass(frozen=True, eq=False)
class DefectOrbitReport:
    """Result of iterating the defect.

    ``index`` is the stabilization index when ``stabilized`` is true and
    ``None`` otherwise; in the latter case the orbit was followed for
    ``max_iter`` steps without being annihilated.  The corner fields are
    filled in by :func:`analyze` and stay ``None`` for non-stabilized maps.
    """

    dim: int
    orbit: list[np.ndarray]
    stabilized: bool
    index: int | None
    max_iter: int
    trivial_defect: bool
    scale: float
    zero_threshold: float
    reach_dims: list[int] = field(default_factory=list)
    orbit_support: np.ndarray | None = None
    corner_basis: np.ndarray | None = None
    corner_rank: int | None = None
    rank_sequence: list[int] | None = None
    nilpotent_type: list[int] | None = None
    kernel_flag_dims: list[int] | None = None
    bounds: RankBounds | None = None

    @property
    def defect(self) -> np.ndarray:
        return self.orbit[0]

    @property
    def is_maximal(self) -> bool | None:
        if self.nilpotent_type is None:
            return None
        return all(x == 1 for x in self.nilpotent_type)


# ------------------------------------------------------------ reachability


def _kraus_scale(T: KrausMap) -> float:
    return max(1.0, max(float(np.linalg.norm(v, 2)) for v in T.kraus))


def reach_step(T: KrausMap, basis: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of sum_i V_i^H (span basis)."""
    if basis.shape[1] == 0:
        return basis
    M = np.hstack([v.conj().T @ basis for v in T.kraus])
    return span_basis(M, tol.rank_tol, ref=_kraus_scale(T))


def reachability(
    T: KrausMap, k_max: int, tol: Tolerances = DEFAULT_TOL
) -> list[np.ndarray]:
    """Bases of R_0 = range d(T), R_{k+1} = sum_i V_i^H R_k for k <= k_max."""
    d = defect(T, tol).defect
    R0 = range_basis(d, tol)
    if R0.shape[1] == 0:
        raise ZeroDefect("the defect is zero, so nothing is reachable")
    out = [R0]
    for _ in range(k_max):
        out.append(reach_step(T, out[-1], tol))
    return out


def cumulative_dims(bases: list[np.ndarray], tol: Tolerances = DEFAULT_TOL) -> list[int]:
    """dim(R_0 + ... + R_k) for each k."""
    dims, acc = [], np.zeros((bases[0].shape[0], 0), dtype=np.complex128)
    for B in bases:
        acc = span_basis(np.hstack([acc, B]), tol.rank_tol, ref=1.0)
        dims.append(acc.shape[1])
    return dims


def reachable_support(T: KrausMap, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Projection onto R_0 + R_1 + ... (the orbit support, with or without stabilization)."""
    d = defect(T, tol).defect
    acc = range_basis(d, tol)
    frontier = acc
    for _ in range(T.dim + 1):
        frontier = reach_step(T, frontier, tol)
        new = span_basis(np.hstack([acc, frontier]), tol.rank_tol, ref=1.0)
        if new.shape[1] == acc.shape[1]:
            break
        acc = new
    return acc @ acc.conj().T


# ------------------------------------------------------------ defect orbit


def defect_orbit(
    T: KrausMap, max_iter: int | None = None, tol: Tolerances = DEFAULT_TOL
) -> DefectOrbitReport:
    """Iterate the defect until it is annihilated or ``max_iter`` steps pass.

    A step counts as annihilation only when the iterate is numerically zero
    AND the reachable subspace R_k (propagated with per-step normalization)
    is trivial.  The second test keeps slowly decaying orbits from being
    mistaken for annihilated ones once they drop under the absolute
    threshold.
    """
    if max_iter is None:
        max_iter = 4 * T.dim
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    dd = defect(T, tol)
    d = dd.defect
    scale = dd.scale
    thr = tol.zero_tol * (1.0 + scale)
    trivial = scale <= tol.zero_tol
    orbit = [d]
    R = range_basis(d, tol)
    reach_dims = [R.shape[1]]
    index = None
    Dk = d
    for k in range(1, max_iter + 1):
        Dk = apply(T, Dk)
        R = reach_step(T, R, tol)
        orbit.append(Dk)
        reach_dims.append(R.shape[1])
        if frob(Dk) <= thr and R.shape[1] == 0:
            probe = Dk
            if all(frob(probe := apply(T, probe)) <= thr for _ in range(VERIFY_EXTRA_STEPS)):
                index = k
                break
    return DefectOrbitReport(
        dim=T.dim,
        orbit=orbit,
        stabilized=index is not None,
        index=index,
        max_iter=max_iter,
        trivial_defect=trivial,
        scale=scale,
        zero_threshold=thr,
        reach_dims=reach_dims,
    )


def accumulated_defect(report: DefectOrbitReport) -> np.ndarray:
    if not report.stabilized:
        raise RequiresStabilization("the defect orbit was not annihilated")
    return hermitize(sum(report.orbit[: report.index]))


def orbit_support(report: DefectOrbitReport, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Q = support of sum_{k<n} D_k."""
    B = corner_basis(report, tol)
    return B @ B.conj().T


def corner_basis(report: DefectOrbitReport, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Isometry onto range(Q) built from eigenvectors of the accumulated defect."""
    if report.trivial_defect and report.stabilized:
        return np.zeros((report.dim, 0), dtype=np.complex128)
    return range_basis(accumulated_defect(report), tol)


def corner_map(T: KrausMap, Q: np.ndarray, basis: np.ndarray | None = None) -> KrausMap:
    """Compression X -> Q T(X) Q written on range(Q), Kraus L_i = B^H V_i B."""
    if basis is None:
        w, V = np.linalg.eigh(hermitize(np.asarray(Q, dtype=np.complex128)))
        basis = V[:, w > 0.5][:, ::-1]
    if basis.shape[1] == 0:
        raise ZeroCorner("the corner projection has rank 0")
    B = basis
    return KrausMap(np.array([B.conj().T @ v @ B for v in T.kraus]), "corner")


# ----------------------------------------------------------- kernel flag


def kernel_flag(alpha: KrausMap, k_max: int | None = None, tol: Tolerances = DEFAULT_TOL) -> list[np.ndarray]:
    """Bases of N_0 = 0, N_1 = ∩ ker L_i, N_{k+1} = {x : L_i x in N_k for all i}.

    Stops once the flag reaches the whole space or stops growing (unless
    ``k_max`` asks for more terms, in which case the last one is repeated).
    """
    s = alpha.dim
    L = alpha.kraus
    ref = max(1.0, max(float(np.linalg.norm(v, 2)) for v in L))
    N = np.zeros((s, 0), dtype=np.complex128)
    flag = [N]
    limit = s if k_max is None else k_max
    while len(flag) <= limit:
        P = N @ N.conj().T
        comp = np.eye(s) - P
        M = np.vstack([comp @ v for v in L])
        N_next = null_basis(M, tol.rank_tol, ref=ref)
        flag.append(N_next)
        if k_max is None and (N_next.shape[1] == s or N_next.shape[1] == N.shape[1]):
            break
        N = N_next
    return flag


def nilpotency_index(alpha: KrausMap, tol: Tolerances = DEFAULT_TOL) -> int | None:
    """First k with N_k the full space, or None when the flag stalls below it."""
    flag = kernel_flag(alpha, tol=tol)
    dims = [B.shape[1] for B in flag]
    if dims[-1] == alpha.dim:
        return dims.index(alpha.dim)
    return None


def word_kernel_dims(alpha: KrausMap, k_max: int, tol: Tolerances = DEFAULT_TOL) -> list[int]:
    """dim N_k for k = 0..k_max."""
    return [B.shape[1] for B in kernel_flag(alpha, k_max=k_max, tol=tol)][: k_max + 1]


@dataclass(frozen=True)
class NilpotentType:
    rank_sequence: list[int]
    is_maximal: bool

    @property
    def drops(self) -> list[int]:
        r = self.rank_sequence
        return [r[k] - r[k + 1] for k in range(len(r) - 1)]


def unit_rank_sequence(alpha: KrausMap, n: int, tol: Tolerances = DEFAULT_TOL) -> list[int]:
    X = np.eye(alpha.dim, dtype=np.complex128)
    out = [hermitian_rank(X, tol.rank_tol)]
    for _ in range(n):
        X = apply(alpha, X)
        out.append(hermitian_rank(X, tol.rank_tol))
    return out


def classify_nilpotent_type(alpha: KrausMap, tol: Tolerances = DEFAULT_TOL) -> NilpotentType:
    m = nilpotency_index(alpha, tol)
    if m is None:
        raise NotNilpotent("the kernel flag stalls below the full space")
    s = alpha.dim
    ranks = unit_rank_sequence(alpha, m, tol)
    maximal = ranks == [s - k for k in range(s + 1)]
    return NilpotentType(ranks, maximal)


# ------------------------------------------------------------ rank bounds


def matrix_rank(A: np.ndarray, rel_tol: float) -> int:
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > rel_tol * max(float(s[0]) if s.size else 0.0, 1.0)))


def rank_bounds(
    T: KrausMap, tol: Tolerances = DEFAULT_TOL, report: DefectOrbitReport | None = None
) -> RankBounds:
    """Rank of Q against its a-priori bounds.

    For a map whose defect orbit is never annihilated, Q is taken to be the
    projection onto the reachable space R_0 + R_1 + ... (both bounds still
    apply to it).
    """
    if report is None:
        report = defect_orbit(T, tol=tol)
    d = report.defect
    TI = success(T)
    rd = hermitian_rank(d, tol.rank_tol)
    rt = hermitian_rank(TI, tol.rank_tol)
    kraus = rd + sum(matrix_rank(v, tol.rank_tol) for v in T.kraus)
    intrinsic = min(T.dim, rd + rt)
    if report.stabilized:
        actual = corner_basis(report, tol).shape[1]
    else:
        actual = hermitian_rank(reachable_support(T, tol), tol.rank_tol)
    return RankBounds(rd, rt, kraus, intrinsic, actual)


def intrinsic_overlap(T: KrausMap, tol: Tolerances = DEFAULT_TOL) -> int:
    """dim(Ran d(T) ∩ Ran T(I)), which sharpens the intrinsic bound."""
    dd = defect(T, tol)
    return intersection_dim(range_basis(dd.defect, tol), range_basis(dd.success, tol), tol.rank_tol)


# ------------------------------------------------------------ full analysis


def analyze(T: KrausMap, max_iter: int | None = None, tol: Tolerances = DEFAULT_TOL) -> DefectOrbitReport:
    """Defect orbit plus corner data, nilpotent type and rank bounds."""
    rep = defect_orbit(T, max_iter, tol)
    if not rep.stabilized:
        return replace(rep, bounds=rank_bounds(T, tol, rep))
    B = corner_basis(rep, tol)
    s = B.shape[1]
    if s == 0:
        rank_seq, ntype, kdims = [0], [], [0]
    else:
        alpha = corner_map(T, B @ B.conj().T, B)
        kdims = [F.shape[1] for F in kernel_flag(alpha, tol=tol)]
        rank_seq = unit_rank_sequence(alpha, rep.index, tol)
        ntype = [rank_seq[k] - rank_seq[k + 1] for k in range(len(rank_seq) - 1)]
    bounds = rank_bounds(T, tol, rep)
    return DefectOrbitReport(
        dim=rep.dim,
        orbit=rep.orbit,
        stabilized=True,
        index=rep.index,
        max_iter=rep.max_iter,
        trivial_defect=rep.trivial_defect,
        scale=rep.scale,
        zero_threshold=rep.zero_threshold,
        reach_dims=rep.reach_dims,
        orbit_support=B @ B.conj().T,
        corner_basis=B,
        corner_rank=s,
        rank_sequence=rank_seq,
        nilpotent_type=ntype,
        kernel_flag_dims=kdims,
        bounds=bounds,
    )


# -------------------------------------------------------- asymptotic defect


@dataclass(frozen=True, eq=False)
class AsymptoticDefect:
    """Fixed point of X = d(T) + T(X) on the leakage subspace.

    ``converged`` is False when the restriction has spectral radius at or
    above ``1 - 1e-8``; ``d_inf`` and ``residual`` are then None.
    """

    converged: bool
    spectral_radius: float
    leakage_dim: int
    d_inf: np.ndarray | None
    residual: float | None
    restriction: np.ndarray
    coords: np.ndarray | None


DIVERGENCE_MARGIN = 1e-8
KRYLOV_TOL = 1e-9


def leakage_basis(T: KrausMap, d: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns of vectorized matrices) of span{T^k(d)}.

    Built Arnoldi-style: each new direction is T of the last basis element
    orthogonalized against the current span; the closure stops once that
    residual falls below the relative tolerance.
    """
    n = T.dim
    cap = n * n
    v0 = d.reshape(-1)
    nrm = np.linalg.norm(v0)
    if nrm == 0.0:
        return np.zeros((cap, 0), dtype=np.complex128)
    W = [v0 / nrm]
    opnorm = max(float(np.linalg.norm(success(T), 2)), 1e-300)
    while len(W) < cap:
        y = apply(T, W[-1].reshape(n, n), hermitian=False).reshape(-1)
        ny = np.linalg.norm(y)
        Wm = np.array(W).T
        for _ in range(2):
            y = y - Wm @ (Wm.conj().T @ y)
        res = np.linalg.norm(y)
        if res <= KRYLOV_TOL * max(ny, opnorm):
            break
        W.append(y / res)
    return np.array(W).T


def asymptotic_defect(T: KrausMap, tol: Tolerances = DEFAULT_TOL) -> AsymptoticDefect:
    dd = defect(T, tol)
    d = dd.defect
    n = T.dim
    if dd.scale <= tol.zero_tol:
        return AsymptoticDefect(True, 0.0, 0, np.zeros_like(d), 0.0, np.zeros((0, 0)), np.zeros(0))
    W = leakage_basis(T, d)
    k = W.shape[1]
    TW = np.array([apply(T, W[:, j].reshape(n, n), hermitian=False).reshape(-1) for j in range(k)]).T
    A = W.conj().T @ TW
    r = float(np.max(np.abs(np.linalg.eigvals(A)))) if k else 0.0
    if r >= 1.0 - DIVERGENCE_MARGIN:
        return AsymptoticDefect(False, r, k, None, None, A, None)
    c = W.conj().T @ d.reshape(-1)
    x = np.linalg.solve(np.eye(k) - A, c)
    d_inf = hermitize((W @ x).reshape(n, n))
    residual = frob(d_inf - d - apply(T, d_inf))
    return AsymptoticDefect(True, r, k, d_inf, residual, A, x)


def largest_jordan_block(A: np.ndarray, r: float, tol: float = 1e-6) -> int:
    """Heuristic size of the largest Jordan block among eigenvalues of modulus ~ r."""
    k = A.shape[0]
    if k == 0:
        return 0
    lams = np.linalg.eigvals(A)
    top = [lam for lam in lams if abs(abs(lam) - r) <= tol]
    clusters: list[complex] = []
    for lam in top:
        if all(abs(lam - c) > tol for c in clusters):
            clusters.append(lam)
    ref = tol * max(1.0, float(np.linalg.norm(A, 2)))
    best = 1
    for lam in clusters:
        B = A - lam * np.eye(k)
        P = np.eye(k, dtype=np.complex128)
        ranks = [k]
        for _ in range(k):
            P = P @ B
            s = np.linalg.svd(P, compute_uv=False)
            ranks.append(int(np.sum(s > ref)))
            if ranks[-1] == ranks[-2]:
                break
        best = max(best, len(ranks) - 2)
    return best


@dataclass(frozen=True)
class TailEstimate:
    observed_tail: float
    rate_bound: float
    constant: float
    jordan_estimate: int
    spectral_radius: float
    heuristic: bool = True

    @property
    def holds(self) -> bool:
        return self.observed_tail <= self.rate_bound * (1.0 + 1e-9) + 1e-15


def partial_defect_sum(T: KrausMap, n: int, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    d = defect(T, tol).defect
    acc = np.zeros_like(d)
    Dk = d
    for _ in range(n):
        acc = acc + Dk
        Dk = apply(T, Dk)
    return acc


def tail_estimate(T: KrausMap, n: int, tol: Tolerances = DEFAULT_TOL) -> TailEstimate:
    """Observed tail ||d_inf - sum_{k<n} D_k|| against C n^{m-1} r^n.

    C is calibrated so the bound is tight at n = 1.  For a nilpotent
    restriction (r = 0) the bound is 0 from the nilpotency index on and
    infinite before it.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ad = asymptotic_defect(T, tol)
    if not ad.converged:
        raise Divergent(ad.spectral_radius)
    observed = frob(ad.d_inf - partial_defect_sum(T, n, tol))
    r = ad.spectral_radius
    A = ad.restriction
    if r <= 1e-12:
        m, P = 0, np.eye(A.shape[0], dtype=np.complex128)
        while A.shape[0] and np.linalg.norm(P) > 1e-12 and m <= A.shape[0]:
            P = P @ A
            m += 1
        bound = 0.0 if n >= m else float("inf")
        return TailEstimate(observed, bound, 0.0, m, r)
    m = largest_jordan_block(A, r)
    tail1 = frob(ad.d_inf - partial_defect_sum(T, 1, tol))
    C = tail1 / r
    return TailEstimate(observed, C * n ** (m - 1) * r**n, C, m, r)
