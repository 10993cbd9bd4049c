"""Completely positive subunital maps in Kraus form (Heisenberg picture).

A map is stored as a stack of Kraus operators ``V`` of shape (r, d, d) and
acts on effects by ``T(X) = sum_i V_i^H X V_i``.  The defect of a map is
``I - T(I)``; it is positive semidefinite exactly when the map is
subunital.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, InvalidDescriptor, NotSubunital
from .matcore import (
    DEFAULT_TOL,
    Tolerances,
    as_matrix,
    eig_hermitian,
    frob,
    haar_unitary,
    hermitize,
    min_eig,
)

MAX_MATERIALIZED_KRAUS = 4096


@dataclass(frozen=True, eq=False)
class KrausMap:
    kraus: np.ndarray
    label: str | None = None

    def __post_init__(self) -> None:
        K = np.asarray(self.kraus, dtype=np.complex128)
        if K.ndim == 2:
            K = K[None]
        if K.ndim != 3 or K.shape[0] == 0 or K.shape[1] != K.shape[2] or K.shape[1] == 0:
            raise ValueError(f"Kraus stack must have shape (r, d, d) with r, d >= 1; got {K.shape}")
        if not np.all(np.isfinite(K)):
            raise ValueError("Kraus operators contain non-finite entries")
        K.setflags(write=False)
        object.__setattr__(self, "kraus", K)

    @property
    def dim(self) -> int:
        return int(self.kraus.shape[1])

    @property
    def n_kraus(self) -> int:
        return int(self.kraus.shape[0])

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return apply(self, X)

    def relabel(self, label: str | None) -> "KrausMap":
        return KrausMap(self.kraus, label)


@dataclass(frozen=True, eq=False)
class DefectData:
    defect: np.ndarray
    success: np.ndarray
    scale: float = field(default=0.0)


def _check_dim(T: KrausMap, X: np.ndarray) -> None:
    if X.shape != (T.dim, T.dim):
        raise DimMismatch(f"map acts on dimension {T.dim}, input has shape {X.shape}")


def apply(T: KrausMap, X: np.ndarray, hermitian: bool = True) -> np.ndarray:
    """Heisenberg action ``sum_i V_i^H X V_i``.

    With ``hermitian=True`` (the default) the output is symmetrized, which is
    only correct for Hermitian inputs.
    """
    X = np.asarray(X, dtype=np.complex128)
    _check_dim(T, X)
    V = T.kraus
    Y = (V.conj().transpose(0, 2, 1) @ X @ V).sum(axis=0)
    return hermitize(Y) if hermitian else Y


def apply_power(T: KrausMap, X: np.ndarray, n: int, hermitian: bool = True) -> np.ndarray:
    Y = np.asarray(X, dtype=np.complex128)
    for _ in range(n):
        Y = apply(T, Y, hermitian)
    return Y


def apply_predual(T: KrausMap, rho: np.ndarray, hermitian: bool = True) -> np.ndarray:
    """Schroedinger-picture action ``sum_i V_i rho V_i^H``."""
    rho = np.asarray(rho, dtype=np.complex128)
    _check_dim(T, rho)
    V = T.kraus
    Y = (V @ rho @ V.conj().transpose(0, 2, 1)).sum(axis=0)
    return hermitize(Y) if hermitian else Y


def superoperator(T: KrausMap) -> np.ndarray:
    """d^2 x d^2 matrix of the Heisenberg action on row-major vectorizations."""
    V = T.kraus
    return sum(np.kron(v.conj().T, v.T) for v in V)


def predual_superoperator(T: KrausMap) -> np.ndarray:
    V = T.kraus
    return sum(np.kron(v, v.conj()) for v in V)


def unit_orbit(T: KrausMap, n: int) -> list[np.ndarray]:
    """``[I, T(I), ..., T^n(I)]``."""
    out = [np.eye(T.dim, dtype=np.complex128)]
    for _ in range(n):
        out.append(apply(T, out[-1]))
    return out


def success(T: KrausMap) -> np.ndarray:
    return apply(T, np.eye(T.dim, dtype=np.complex128))


def is_subunital(T: KrausMap, tol: Tolerances = DEFAULT_TOL) -> bool:
    return min_eig(np.eye(T.dim) - success(T)) >= -tol.psd_tol


def defect(T: KrausMap, tol: Tolerances = DEFAULT_TOL) -> DefectData:
    s = success(T)
    d = np.eye(T.dim, dtype=np.complex128) - s
    m = min_eig(d)
    if m < -tol.psd_tol:
        raise NotSubunital(f"T(I) exceeds I: min eigenvalue of I - T(I) is {m:.3e}")
    return DefectData(defect=d, success=s, scale=frob(d))


def compose(T: KrausMap, S: KrausMap) -> KrausMap:
    """The map X -> T(S(X)), with Kraus family {W_j V_i} (W from S, V from T)."""
    if T.dim != S.dim:
        raise DimMismatch(f"{T.dim} vs {S.dim}")
    count = T.n_kraus * S.n_kraus
    if count > MAX_MATERIALIZED_KRAUS:
        raise ValueError(
            f"composition would hold {count} Kraus operators (cap {MAX_MATERIALIZED_KRAUS}); "
            "use apply_power instead"
        )
    words = np.einsum("jab,ibc->ijac", S.kraus, T.kraus).reshape(count, T.dim, T.dim)
    return KrausMap(words)


def power(T: KrausMap, n: int) -> KrausMap:
    if n < 1:
        raise ValueError("power needs n >= 1")
    out = T
    for _ in range(n - 1):
        out = compose(out, T)
    return out


def tensor_map(T: KrausMap, S: KrausMap) -> KrausMap:
    ops = [np.kron(v, w) for v in T.kraus for w in S.kraus]
    return KrausMap(np.array(ops))


def direct_sum(T: KrausMap, S: KrausMap) -> KrausMap:
    """Block-diagonal sum acting as T on the first block and S on the second."""
    d1, d2 = T.dim, S.dim
    ops = []
    for v in T.kraus:
        M = np.zeros((d1 + d2, d1 + d2), dtype=np.complex128)
        M[:d1, :d1] = v
        ops.append(M)
    for w in S.kraus:
        M = np.zeros((d1 + d2, d1 + d2), dtype=np.complex128)
        M[d1:, d1:] = w
        ops.append(M)
    return KrausMap(np.array(ops))


def conjugate(T: KrausMap, U: np.ndarray) -> KrausMap:
    """Change of basis: Kraus operators U V U^H."""
    return KrausMap(np.array([U @ v @ U.conj().T for v in T.kraus]), T.label)


def cocycle_residual(T: KrausMap, S: KrausMap) -> float:
    """Frobenius residual of d(T o S) - d(T) - T(d(S))."""
    I = np.eye(T.dim, dtype=np.complex128)
    dT = I - success(T)
    dS = I - success(S)
    dTS = I - apply(T, apply(S, I))
    return frob(dTS - dT - apply(T, dS))


def telescoping_residual(T: KrausMap, n: int) -> float:
    """Frobenius residual of (I - T^n(I)) - sum_{k<n} T^k(d(T))."""
    I = np.eye(T.dim, dtype=np.complex128)
    d = I - success(T)
    acc = np.zeros_like(d)
    Dk = d
    for _ in range(n):
        acc = acc + Dk
        Dk = apply(T, Dk)
    return frob((I - apply_power(T, I, n)) - acc)


# ---------------------------------------------------------------- generators


def identity_channel(d: int) -> KrausMap:
    return KrausMap(np.eye(d, dtype=np.complex128)[None], f"identity:{d}")


def unitary_channel(U: np.ndarray, label: str | None = None) -> KrausMap:
    return KrausMap(as_matrix(U)[None], label)


def shift(d: int) -> KrausMap:
    """Kraus operators e_i e_{i+1}^T for i = 0..d-2 (zero map when d = 1)."""
    if d < 1:
        raise InvalidDescriptor("shift needs d >= 1")
    if d == 1:
        return KrausMap(np.zeros((1, 1, 1)), "shift:1")
    ops = np.zeros((d - 1, d, d), dtype=np.complex128)
    for i in range(d - 1):
        ops[i, i, i + 1] = 1.0
    return KrausMap(ops, f"shift:{d}")


def dephasing_decay(c: float) -> KrausMap:
    """Qubit map with T^k(I) = diag(1, c^k)."""
    if not 0.0 < c < 1.0:
        raise InvalidDescriptor("dephasing_decay needs 0 < c < 1")
    V1 = np.diag([1.0, 0.0]).astype(np.complex128)
    V2 = np.diag([0.0, np.sqrt(c)]).astype(np.complex128)
    return KrausMap(np.array([V1, V2]), f"dephasing:{c!r}")


def psd_sqrt(E: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    w, V = eig_hermitian(E, tol.herm_tol)
    if w.size and w[-1] < -tol.psd_tol:
        raise InvalidDescriptor(f"effect has eigenvalue {w[-1]:.3e} < 0")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.conj().T


def povm_instrument(effects: list[np.ndarray], tol: Tolerances = DEFAULT_TOL, label: str | None = None) -> KrausMap:
    """Instrument with Kraus operators E_a^{1/2}; requires sum_a E_a <= I."""
    if not effects:
        raise InvalidDescriptor("need at least one effect")
    Es = [hermitize(as_matrix(E)) for E in effects]
    d = Es[0].shape[0]
    if any(E.shape != (d, d) for E in Es):
        raise InvalidDescriptor("effects must share one square shape")
    total = sum(Es)
    if min_eig(np.eye(d) - total) < -tol.psd_tol:
        raise InvalidDescriptor("sum of effects exceeds the identity")
    return KrausMap(np.array([psd_sqrt(E, tol) for E in Es]), label)


def qubit_noncommuting_effects() -> list[np.ndarray]:
    e0 = np.array([1.0, 0.0], dtype=np.complex128)
    plus = np.array([1.0, 1.0], dtype=np.complex128) / np.sqrt(2.0)
    return [0.5 * np.outer(e0, e0), (2.0 / 3.0) * np.outer(plus, plus)]


def qubit_noncommuting_povm() -> KrausMap:
    return povm_instrument(qubit_noncommuting_effects(), label="qubitpovm")


def _complex_gaussian(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_subunital(d: int, seed: int, n_kraus: int | None = None, margin: float = 0.05) -> KrausMap:
    """Gaussian Kraus family rescaled so that T(I) <= I / (1 + margin)."""
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, d + 1)) if n_kraus is None else n_kraus
    V = _complex_gaussian(rng, (r, d, d))
    lam = float(np.linalg.eigvalsh(np.einsum("rji,rjk->ik", V.conj(), V))[-1])
    V = V / np.sqrt(lam * (1.0 + margin))
    return KrausMap(V, f"randsub:{d},seed={seed}")


def random_unital(d: int, seed: int, n_kraus: int | None = None) -> KrausMap:
    """Gaussian family K_i made unital as V_i = K_i M^{-1/2}, M = sum K_i^H K_i."""
    rng = np.random.default_rng(seed)
    r = int(rng.integers(2, d + 2)) if n_kraus is None else n_kraus
    K = _complex_gaussian(rng, (r, d, d))
    M = hermitize(np.einsum("rji,rjk->ik", K.conj(), K))
    w, U = np.linalg.eigh(M)
    Minv_half = (U / np.sqrt(w)) @ U.conj().T
    return KrausMap(np.array([k @ Minv_half for k in K]), f"randunital:{d},seed={seed}")


def random_commuting_instrument(d: int, seed: int, n_effects: int | None = None) -> KrausMap:
    """Instrument whose effects are diagonal in one hidden random basis.

    Each basis direction either keeps full weight (no leakage there) or a
    random total in [0.2, 0.9]; at least one direction leaks.
    """
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4)) if n_effects is None else n_effects
    totals = np.where(rng.random(d) < 0.5, 1.0, rng.uniform(0.2, 0.9, size=d))
    totals[int(rng.integers(d))] = rng.uniform(0.2, 0.9)
    shares = rng.dirichlet(np.ones(m), size=d)
    U = haar_unitary(d, rng)
    effects = [hermitize(U @ np.diag(totals * shares[:, a]) @ U.conj().T) for a in range(m)]
    return povm_instrument(effects, label=f"commuting:{d},seed={seed}")


def random_mixed_unitary(d: int, seed: int, n_kraus: int = 3) -> KrausMap:
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(n_kraus))
    ops = [np.sqrt(pi) * haar_unitary(d, rng) for pi in p]
    return KrausMap(np.array(ops), f"mixedunitary:{d},seed={seed}")


def random_flag_nilpotent(d: int, seed: int) -> KrausMap:
    """Random CP subunital map whose defect orbit is annihilated in finitely many steps.

    In a hidden random basis the space splits as A ⊕ B.  On A the Kraus
    operators are strictly upper triangular (so they lower a complete flag),
    rescaled so that their contribution to T(I) stays below I.  On B they form
    a random unitary mixture, so the defect vanishes there.
    """
    if d < 1:
        raise InvalidDescriptor("randflag needs d >= 1")
    rng = np.random.default_rng(seed)
    s = int(rng.integers(1, d + 1))
    r = int(rng.integers(1, 4))
    keep = rng.uniform(0.3, 1.0)
    N = np.zeros((r, s, s), dtype=np.complex128)
    for i in range(r):
        for a in range(s):
            for b in range(a + 1, s):
                if rng.random() < keep:
                    N[i, a, b] = rng.uniform(0.3, 1.0) * np.exp(2j * np.pi * rng.random())
    M = np.einsum("rji,rjk->ik", N.conj(), N)
    lam = float(np.linalg.eigvalsh(M)[-1]) if s > 1 else 0.0
    if lam > 0:
        margin = 0.0 if rng.random() < 0.3 else float(rng.uniform(0.0, 0.5))
        N = N / np.sqrt(lam * (1.0 + margin))
    ops = np.zeros((r, d, d), dtype=np.complex128)
    ops[:, :s, :s] = N
    if d > s:
        p = rng.dirichlet(np.ones(r))
        for i in range(r):
            ops[i, s:, s:] = np.sqrt(p[i]) * haar_unitary(d - s, rng)
    W = haar_unitary(d, rng)
    ops = np.array([W @ v @ W.conj().T for v in ops])
    return KrausMap(ops, f"randflag:{d},seed={seed}")


_DESCRIPTOR = re.compile(r"^\s*([a-z]+)\s*(?::\s*(.*))?$")


def parse_descriptor(desc: str) -> tuple[str, list[str], dict[str, str]]:
    m = _DESCRIPTOR.match(desc)
    if not m:
        raise InvalidDescriptor(f"cannot parse descriptor {desc!r}")
    name, rest = m.group(1), m.group(2)
    args: list[str] = []
    kwargs: dict[str, str] = {}
    if rest:
        for tok in rest.split(","):
            tok = tok.strip()
            if not tok:
                continue
            if "=" in tok:
                k, v = tok.split("=", 1)
                kwargs[k.strip()] = v.strip()
            else:
                args.append(tok)
    return name, args, kwargs


def generate(desc: str, seed: int | None = None) -> KrausMap:
    """Build a map from a descriptor such as ``shift:4`` or ``randflag:5,seed=9``.

    Recognized names: shift, dephasing, qubitpovm, identity, randflag,
    randsub, randunital, mixedunitary, commuting.  Random generators take their seed
    from the descriptor, falling back to ``seed``.
    """
    name, args, kwargs = parse_descriptor(desc)
    try:
        if name == "qubitpovm":
            return qubit_noncommuting_povm()
        if name == "dephasing":
            return dephasing_decay(float(args[0]))
        d = int(args[0])
        if name == "shift":
            return shift(d)
        if name == "identity":
            return identity_channel(d)
        random_makers = {
            "randflag": random_flag_nilpotent,
            "randsub": random_subunital,
            "randunital": random_unital,
            "mixedunitary": random_mixed_unitary,
            "commuting": random_commuting_instrument,
        }
        if name in random_makers:
            s = kwargs.get("seed")
            if s is None and seed is None:
                raise InvalidDescriptor(f"{name} needs a seed")
            return random_makers[name](d, int(s) if s is not None else int(seed))
    except (IndexError, ValueError) as exc:
        if isinstance(exc, InvalidDescriptor):
            raise
        raise InvalidDescriptor(f"bad parameters in {desc!r}: {exc}") from exc
    raise InvalidDescriptor(f"unknown generator {name!r}")


# ------------------------------------------------------------ serialization


def matrix_to_json(A: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(A)]


def matrix_from_json(rows: list) -> np.ndarray:
    A = np.array(rows, dtype=np.float64)
    if A.ndim != 3 or A.shape[2] != 2:
        raise ValueError("matrix must be rows of [re, im] pairs")
    return A[..., 0] + 1j * A[..., 1]


def to_json(T: KrausMap) -> dict:
    out: dict = {"dim": T.dim, "kraus": [matrix_to_json(v) for v in T.kraus]}
    if T.label is not None:
        out["label"] = T.label
    return out


def from_json(obj: dict) -> KrausMap:
    try:
        dim = int(obj["dim"])
        ops = [matrix_from_json(v) for v in obj["kraus"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed Kraus map JSON: {exc}") from exc
    if not ops or any(v.shape != (dim, dim) for v in ops):
        raise ValueError("Kraus operators must be dim x dim and non-empty")
    return KrausMap(np.array(ops), obj.get("label"))


def dumps(T: KrausMap) -> str:
    return json.dumps(to_json(T), sort_keys=True)


def loads(text: str) -> KrausMap:
    return from_json(json.loads(text))
