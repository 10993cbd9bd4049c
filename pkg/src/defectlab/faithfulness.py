"""Unitality criteria: corner-faithfulness, persistence evidence, invariant
functionals and subharmonic projections."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .channel import (
    KrausMap,
    apply,
    apply_power,
    defect,
    predual_superoperator,
    success,
    unit_orbit,
)
from .errors import HypothesesNotMet, OmegaNotFaithful
from .matcore import (
    DEFAULT_TOL,
    Tolerances,
    eig_hermitian,
    frob,
    hermitian_operator_basis,
    hermitize,
    min_eig,
    null_basis,
    random_hermitian,
)
from .stabilization import analyze, matrix_rank, nilpotency_index


def _q_basis(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(hermitize(np.asarray(Q, dtype=np.complex128)))
    return V[:, w > 0.5]


def common_kernel_on(T: KrausMap, Q: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of range(Q) ∩ ∩_i ker V_i^H (in ambient coordinates)."""
    B = _q_basis(Q)
    if B.shape[1] == 0:
        return B
    M = np.vstack([v.conj().T @ B for v in T.kraus])
    ref = max(1.0, max(float(np.linalg.norm(v, 2)) for v in T.kraus))
    return B @ null_basis(M, tol.rank_tol, ref=ref)


def corner_faithful(T: KrausMap, Q: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> tuple[bool, int]:
    k = common_kernel_on(T, Q, tol).shape[1]
    return k == 0, k


@dataclass(frozen=True)
class PersistenceEvidence:
    has_invertible_kraus: bool
    kraus_span_dim: int


def persistence_certificates(T: KrausMap, tol: Tolerances = DEFAULT_TOL) -> PersistenceEvidence:
    """Sufficient-condition evidence only; neither flag is claimed necessary."""
    smin = [float(np.linalg.svd(v, compute_uv=False)[-1]) for v in T.kraus]
    vecs = T.kraus.reshape(T.n_kraus, -1).T
    return PersistenceEvidence(max(smin) > 1e-8, matrix_rank(vecs, tol.rank_tol))


@dataclass(frozen=True)
class UnitalityReport:
    is_unital: bool
    stabilized: bool
    corner_faithful: bool | None
    persistence_evidence: PersistenceEvidence
    common_kernel_dim_on_Q: int | None
    verdict_consistent: bool

    def to_json(self) -> dict:
        return {
            "is_unital": self.is_unital,
            "stabilized": self.stabilized,
            "corner_faithful": self.corner_faithful,
            "persistence_evidence": {
                "has_invertible_kraus": self.persistence_evidence.has_invertible_kraus,
                "kraus_span_dim": self.persistence_evidence.kraus_span_dim,
            },
            "common_kernel_dim_on_Q": self.common_kernel_dim_on_Q,
            "verdict_consistent": self.verdict_consistent,
        }


def unitality_verdict(
    T: KrausMap, tol: Tolerances = DEFAULT_TOL, max_iter: int | None = None
) -> UnitalityReport:
    """Corner-faithfulness is only defined once the defect orbit is annihilated;
    for other maps ``corner_faithful`` is None."""
    dd = defect(T, tol)
    unital = dd.scale <= tol.zero_tol
    rep = analyze(T, max_iter, tol)
    evidence = persistence_certificates(T, tol)
    faithful: bool | None = None
    kdim: int | None = None
    if rep.stabilized:
        faithful, kdim = corner_faithful(T, rep.orbit_support, tol)
    consistent = not (rep.stabilized and faithful and not unital)
    if evidence.has_invertible_kraus and faithful is False:
        consistent = False
    return UnitalityReport(unital, rep.stabilized, faithful, evidence, kdim, consistent)


def projection_kill_check(T: KrausMap, v: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> tuple[bool, bool]:
    """(T(vv^H) = 0, v in the common kernel of the V_i^H) for a unit vector v."""
    v = np.asarray(v, dtype=np.complex128)
    v = v / np.linalg.norm(v)
    killed = frob(apply(T, np.outer(v, v.conj()))) <= tol.zero_tol
    in_kernel = all(np.linalg.norm(k.conj().T @ v) <= np.sqrt(tol.zero_tol) for k in T.kraus)
    return killed, in_kernel


def common_invariant_functional(
    family: list[KrausMap], omega: np.ndarray, tol: Tolerances = DEFAULT_TOL
) -> dict[str, Any]:
    """Check tr(omega T(I)) = tr(omega) for each map; if all do, each map must be unital."""
    omega = hermitize(np.asarray(omega, dtype=np.complex128))
    if min_eig(omega) <= 0:
        raise OmegaNotFaithful("omega must be strictly positive")
    tr = float(np.real(np.trace(omega)))
    gaps = [abs(float(np.real(np.trace(omega @ success(T)))) - tr) for T in family]
    invariant = [g <= 1e-9 * tr for g in gaps]
    unital = [defect(T, tol).scale <= tol.zero_tol for T in family]
    holds = all(invariant)
    return {
        "holds": holds,
        "gaps": gaps,
        "invariant": invariant,
        "unital": unital,
        "conclusion_verified": (not holds) or all(unital),
    }


# ------------------------------------------------- subharmonic projections


def _spectral_projections(H: np.ndarray, cluster_tol: float = 1e-8) -> list[np.ndarray]:
    """Eigenprojections of H (clustered) and the cumulative top-k ones."""
    w, V = eig_hermitian(hermitize(H))
    groups: list[list[int]] = []
    for i, lam in enumerate(w):
        if groups and abs(w[groups[-1][-1]] - lam) <= cluster_tol * max(1.0, abs(lam)):
            groups[-1].append(i)
        else:
            groups.append([i])
    out = []
    for g in groups:
        B = V[:, g]
        out.append(B @ B.conj().T)
    for j in range(2, len(groups) + 1):
        idx = [i for g in groups[:j] for i in g]
        B = V[:, idx]
        out.append(B @ B.conj().T)
    return out


def _fixed_points(T: KrausMap, tol: float = 1e-8) -> list[np.ndarray]:
    n = T.dim
    S = np.array([apply(T, E, hermitian=False).reshape(-1) for E in np.eye(n * n).reshape(n * n, n, n)]).T
    lam, vecs = np.linalg.eig(S)
    out = []
    for j in np.flatnonzero(np.abs(lam - 1.0) <= tol):
        X = vecs[:, j].reshape(n, n)
        for Y in (hermitize(X), hermitize(1j * X)):
            if frob(Y) > 1e-10:
                out.append(Y / frob(Y))
    return out


@dataclass(frozen=True, eq=False)
class SubharmonicReport:
    nilpotent_excludes_all: bool
    nilpotency_index: int | None
    tested_projections: int
    found_subharmonic: np.ndarray | None
    route: str

    def to_json(self) -> dict:
        return {
            "nilpotent_excludes_all": self.nilpotent_excludes_all,
            "nilpotency_index": self.nilpotency_index,
            "tested_projections": self.tested_projections,
            "found_subharmonic": None if self.found_subharmonic is None else np.real(np.diag(self.found_subharmonic)).tolist(),
            "route": self.route,
        }


def subharmonic_analysis(
    T: KrausMap, seed: int = 0, probes: int = 8, tol: Tolerances = DEFAULT_TOL
) -> SubharmonicReport:
    """Look for a nonzero projection p with T(p) >= p.

    When T itself is nilpotent (T^m = 0 on a full operator basis) no such p
    can exist; this is the "proved" route.  Otherwise candidates are drawn
    from spectral projections of T(I), of fixed points of T and of random
    Hermitian probes pushed towards convergence; a failed search only means
    none was found.
    """
    m = nilpotency_index(T, tol)
    if m is not None:
        killed = all(frob(apply_power(T, E, m)) <= 1e-10 for E in hermitian_operator_basis(T.dim))
        if killed:
            return SubharmonicReport(True, m, 0, None, "nilpotent")
    rng = np.random.default_rng(seed)
    sources = [success(T)] + _fixed_points(T)
    for _ in range(probes):
        X = random_hermitian(T.dim, rng)
        for _ in range(200):
            Y = apply(T, X)
            ny = frob(Y)
            if ny <= 1e-14:
                break
            Y = Y / ny
            if frob(Y - X) <= 1e-12:
                X = Y
                break
            X = Y
        sources.append(X)
    tested = 0
    for H in sources:
        for p in _spectral_projections(H):
            tested += 1
            if min_eig(apply(T, p) - p) >= -tol.psd_tol:
                return SubharmonicReport(False, m, tested, p, "search")
    return SubharmonicReport(False, m, tested, None, "search")


# -------------------------------------------------- corner irreducibility


@dataclass(frozen=True, eq=False)
class IrreducibleUnitalityVerdict:
    status: str  # "unital_confirmed", "inconsistent" or "inconclusive"
    eigenvalue: complex | None
    omega: np.ndarray | None
    unit_limit: np.ndarray
    unital_residual: float

    @property
    def confirmed(self) -> bool:
        return self.status == "unital_confirmed"


def corner_irreducible_unitality(
    alpha: KrausMap, tol: Tolerances = DEFAULT_TOL, max_iter: int | None = None
) -> IrreducibleUnitalityVerdict:
    """Faithful invariant functional route to alpha(I) = I.

    Requires the unit orbit to become constant at a full-rank v.  A
    positive-definite omega with omega o alpha = omega then forces
    tr(omega (I - alpha(I))) = 0 and hence unitality.  When no such omega is
    found numerically the verdict is inconclusive.
    """
    s = alpha.dim
    max_iter = 4 * s if max_iter is None else max_iter
    orbit = unit_orbit(alpha, max_iter + 1)
    n = next(
        (k for k in range(max_iter + 1) if frob(orbit[k + 1] - orbit[k]) <= tol.zero_tol),
        None,
    )
    if n is None:
        raise HypothesesNotMet("the unit orbit does not become constant")
    v = orbit[n]
    if min_eig(v) <= tol.rank_tol * max(1.0, float(np.linalg.norm(v, 2))):
        raise HypothesesNotMet("the unit orbit stabilizes at a rank-deficient element")
    P = predual_superoperator(alpha)
    lam, vecs = np.linalg.eig(P)
    j = int(np.argmin(np.abs(lam - 1.0)))
    resid = frob(success(alpha) - np.eye(s))
    if abs(lam[j] - 1.0) > 1e-8:
        return IrreducibleUnitalityVerdict("inconclusive", complex(lam[j]), None, v, resid)
    W = vecs[:, j].reshape(s, s)
    tr = np.trace(W)
    if abs(tr) > 1e-12:
        W = W * (abs(tr) / tr)
    omega = hermitize(W)
    t = float(np.real(np.trace(omega)))
    if abs(t) <= 1e-12:
        return IrreducibleUnitalityVerdict("inconclusive", complex(lam[j]), None, v, resid)
    omega = omega / t
    if min_eig(omega) <= 1e-10:
        return IrreducibleUnitalityVerdict("inconclusive", complex(lam[j]), omega, v, resid)
    pre = hermitize((P @ omega.reshape(-1)).reshape(s, s))
    if frob(pre - omega) > 1e-8:
        return IrreducibleUnitalityVerdict("inconclusive", complex(lam[j]), omega, v, resid)
    status = "unital_confirmed" if resid <= tol.zero_tol * 10 else "inconsistent"
    return IrreducibleUnitalityVerdict(status, complex(lam[j]), omega, v, resid)
