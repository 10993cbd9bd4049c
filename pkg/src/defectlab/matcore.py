"""Dense Hermitian linear algebra with explicit numerical tolerances.

Every "equals zero" or "has rank r" question in the package is routed
through this module so that the thresholds live in one place.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimMismatch, NonHermitianInput, NotPSD


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds.

    ``zero_tol`` is scaled by ``1 + scale`` where the caller supplies the
    scale (usually the Frobenius norm of the defect).  ``rank_tol`` is
    relative to ``max(lambda_max, 1)``.
    """

    zero_tol: float = 1e-9
    rank_tol: float = 1e-9
    psd_tol: float = 1e-9
    herm_tol: float = 1e-10
    proj_tol: float = 1e-8

    def with_overrides(self, **kwargs: float | None) -> "Tolerances":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


DEFAULT_TOL = Tolerances()


def as_matrix(A: np.ndarray | list) -> np.ndarray:
    """Coerce to a finite complex128 2-d array."""
    M = np.asarray(A, dtype=np.complex128)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def frob(A: np.ndarray) -> float:
    return float(np.linalg.norm(A))


def hermitize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def is_hermitian(A: np.ndarray, herm_tol: float = DEFAULT_TOL.herm_tol) -> bool:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return False
    return frob(A - A.conj().T) <= herm_tol * (1.0 + frob(A))


def _check_hermitian(A: np.ndarray, herm_tol: float) -> np.ndarray:
    A = as_matrix(A)
    if not is_hermitian(A, herm_tol):
        raise NonHermitianInput(
            f"||A - A^H||_F = {frob(A - A.conj().T):.3e} exceeds tolerance"
        )
    return hermitize(A)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Rotate each column so its first non-negligible entry is real positive."""
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size:
            z = col[idx[0]]
            V[:, j] = col * (abs(z) / z)
    return V


def eig_hermitian(
    A: np.ndarray, herm_tol: float = DEFAULT_TOL.herm_tol
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order with orthonormal eigenvector columns."""
    H = _check_hermitian(A, herm_tol)
    w, V = np.linalg.eigh(H)
    return w[::-1].copy(), _fix_signs(V[:, ::-1])


def min_eig(A: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(hermitize(as_matrix(A)))[0])


def _psd_spectrum(A: np.ndarray, tol: Tolerances) -> tuple[np.ndarray, np.ndarray]:
    w, V = eig_hermitian(A, tol.herm_tol)
    if w.size and w[-1] < -tol.psd_tol:
        raise NotPSD(f"minimum eigenvalue {w[-1]:.3e} below -{tol.psd_tol:g}")
    return w, V


def range_basis(A: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis (as columns) of the support of a PSD matrix."""
    w, V = _psd_spectrum(A, tol)
    cut = tol.rank_tol * max(float(w[0]) if w.size else 0.0, 1.0)
    return V[:, w > cut]


def support_projection(A: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    B = range_basis(A, tol)
    return B @ B.conj().T


def psd_leq(A: np.ndarray, B: np.ndarray, tol: float = DEFAULT_TOL.psd_tol) -> bool:
    """True iff B - A is positive semidefinite up to ``tol``."""
    A, B = as_matrix(A), as_matrix(B)
    if A.shape != B.shape:
        raise DimMismatch(f"{A.shape} vs {B.shape}")
    return min_eig(B - A) >= -tol


def hermitian_rank(A: np.ndarray, rank_tol: float = DEFAULT_TOL.rank_tol) -> int:
    """Number of eigenvalues with modulus above ``rank_tol * max(|lambda|_max, 1)``."""
    w = np.abs(np.linalg.eigvalsh(hermitize(as_matrix(A))))
    if w.size == 0:
        return 0
    return int(np.sum(w > rank_tol * max(float(w.max()), 1.0)))


def tensor(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.kron(A, B)


def join(P: np.ndarray, Q: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Projection onto the closed span of the ranges of P and Q."""
    return support_projection(P + Q, tol)


def is_projection(P: np.ndarray, proj_tol: float = DEFAULT_TOL.proj_tol) -> bool:
    P = np.asarray(P)
    if not is_hermitian(P, proj_tol):
        return False
    if frob(P @ P - P) > proj_tol:
        return False
    w = np.linalg.eigvalsh(hermitize(P))
    return bool(np.all(np.minimum(np.abs(w), np.abs(w - 1.0)) <= proj_tol))


def projection_onto(B: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the columns of an isometry."""
    return B @ B.conj().T


def span_basis(M: np.ndarray, rel_tol: float, ref: float | None = None) -> np.ndarray:
    """Orthonormal basis of the column span of M.

    Singular values at or below ``rel_tol * ref`` are dropped; ``ref``
    defaults to ``max(sigma_max, 1)``.
    """
    M = np.asarray(M, dtype=np.complex128)
    if M.size == 0:
        return np.zeros((M.shape[0], 0), dtype=np.complex128)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if ref is None:
        ref = max(float(s[0]) if s.size else 0.0, 1.0)
    return U[:, s > rel_tol * ref]


def null_basis(M: np.ndarray, rel_tol: float, ref: float | None = None) -> np.ndarray:
    """Orthonormal basis of the null space of M (columns)."""
    M = np.asarray(M, dtype=np.complex128)
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n, dtype=np.complex128)
    _, s, Vh = np.linalg.svd(M, full_matrices=True)
    if ref is None:
        ref = max(float(s[0]) if s.size else 0.0, 1.0)
    r = int(np.sum(s > rel_tol * ref))
    return Vh[r:].conj().T


def intersection_dim(U: np.ndarray, V: np.ndarray, rel_tol: float = 1e-9) -> int:
    """Dimension of span(U) ∩ span(V) for orthonormal column sets."""
    if U.shape[1] == 0 or V.shape[1] == 0:
        return 0
    joint = span_basis(np.hstack([U, V]), rel_tol)
    return U.shape[1] + V.shape[1] - joint.shape[1]


def trace_norm(A: np.ndarray) -> float:
    """Sum of absolute eigenvalues of a Hermitian matrix."""
    return float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(as_matrix(A))))))


def basis_vector(d: int, i: int) -> np.ndarray:
    e = np.zeros(d, dtype=np.complex128)
    e[i] = 1.0
    return e


def ket_bra(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.outer(x, np.conj(y))


def hermitian_operator_basis(d: int) -> list[np.ndarray]:
    """A real basis of the d x d Hermitian matrices (also a complex basis of M_d)."""
    out = []
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d), dtype=np.complex128)
            if i == j:
                E[i, i] = 1.0
            elif i < j:
                E[i, j] = E[j, i] = 1.0
            else:
                E[i, j], E[j, i] = 1j, -1j
            out.append(E)
    return out


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Qm, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Qm * ph


def random_psd(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    r = d if rank is None else rank
    G = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    return hermitize(G @ G.conj().T)


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return hermitize(G)
