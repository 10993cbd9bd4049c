"""Finite atomic (commutative) model with exact rational arithmetic.

A sub-Markov system on atoms 0..n-1 has coefficients p[i][j] >= 0 with
P(z_j) = sum_i p[i][j] z_i.  On coefficient vectors this reads
(P x)_i = sum_j p[i][j] x_j, and P(1) <= 1 becomes the row condition
sum_j p[i][j] <= 1.  The defect of P is d_i = 1 - sum_j p[i][j].

Mass of the defect moves along edges j -> i whenever p[i][j] > 0, so the
support of P^k d is the set of atoms reached by walks of length k from the
support of d.  All atom indices here are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Sequence

import networkx as nx
import numpy as np

from .certificates import Verdict, contraction_discrete_bound
from .channel import KrausMap, apply
from .errors import AtomsNotPartition, EmptySupport, WeightBelowThreshold

Vector = tuple[Fraction, ...]


def as_fraction(x: Any) -> Fraction:
    if isinstance(x, float):
        raise TypeError("floats are not accepted in exact systems; use Fraction or 'num/den'")
    return Fraction(x)


def fraction_str(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


@dataclass(frozen=True)
class SubMarkovSystem:
    n: int
    weights: tuple[Fraction, ...]
    coeffs: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self) -> None:
        w = tuple(as_fraction(x) for x in self.weights)
        p = tuple(tuple(as_fraction(x) for x in row) for row in self.coeffs)
        if self.n < 1 or len(w) != self.n or len(p) != self.n or any(len(r) != self.n for r in p):
            raise ValueError("weights must have n entries and coeffs must be n x n")
        if any(x <= 0 for x in w):
            raise ValueError("atom weights must be positive")
        if any(x < 0 for r in p for x in r):
            raise ValueError("coefficients must be non-negative")
        for i, r in enumerate(p):
            if sum(r) > 1:
                raise ValueError(f"row {i} sums to {sum(r)} > 1, so the system is not subunital")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "coeffs", p)

    @classmethod
    def uniform(cls, coeffs: Sequence[Sequence[Any]]) -> "SubMarkovSystem":
        n = len(coeffs)
        return cls(n, tuple(Fraction(1) for _ in range(n)), tuple(tuple(r) for r in coeffs))

    def apply(self, x: Sequence[Fraction]) -> Vector:
        return tuple(sum((pij * xj for pij, xj in zip(row, x)), Fraction(0)) for row in self.coeffs)

    def natural_defect(self) -> Vector:
        return tuple(1 - sum(row) for row in self.coeffs)

    def edges(self) -> list[tuple[int, int]]:
        """Edges (j, i) meaning j -> i, present when p[i][j] > 0."""
        return [(j, i) for i in range(self.n) for j in range(self.n) if self.coeffs[i][j] > 0]

    def graph(self) -> nx.DiGraph:
        G = nx.DiGraph()
        G.add_nodes_from(range(self.n))
        G.add_edges_from(self.edges())
        return G

    def to_json(self) -> dict:
        return {
            "atoms": self.n,
            "weights": [fraction_str(w) for w in self.weights],
            "coeffs": [[fraction_str(x) for x in row] for row in self.coeffs],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SubMarkovSystem":
        try:
            n = int(obj["atoms"])
            w = obj.get("weights") or ["1/1"] * n
            return cls(n, tuple(Fraction(x) for x in w), tuple(tuple(Fraction(x) for x in r) for r in obj["coeffs"]))
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"malformed system JSON: {exc}") from exc


def chain_system(n: int, weights: Sequence[Any] | None = None) -> SubMarkovSystem:
    """Classical shift 0 -> 1 -> ... -> n-1 with unit coefficients."""
    p = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n - 1):
        p[i + 1][i] = Fraction(1)
    w = tuple(Fraction(x) for x in weights) if weights is not None else tuple(Fraction(1) for _ in range(n))
    return SubMarkovSystem(n, w, tuple(tuple(r) for r in p))


def support(x: Sequence[Fraction]) -> frozenset[int]:
    return frozenset(i for i, v in enumerate(x) if v != 0)


# ---------------------------------------------------------------- digraph


@dataclass(frozen=True)
class HeightResult:
    finite: bool
    height: int | None
    cycle: list[int] | None
    reachable: frozenset[int]

    @property
    def predicted_index(self) -> int | None:
        return None if not self.finite else self.height + 1


def digraph_height(sys: SubMarkovSystem, supp: Iterable[int]) -> HeightResult:
    """Longest path from the support, or a cycle reachable from it."""
    S = set(supp)
    if not S:
        raise EmptySupport("support must be non-empty")
    G = sys.graph()
    reach = set(S)
    for s in S:
        reach |= nx.descendants(G, s)
    sub = G.subgraph(reach)
    try:
        cyc = nx.find_cycle(sub)
    except nx.NetworkXNoCycle:
        return HeightResult(True, int(nx.dag_longest_path_length(sub)), None, frozenset(reach))
    return HeightResult(False, None, [u for u, _ in cyc], frozenset(reach))


def step_reachable_sets(sys: SubMarkovSystem, supp: Iterable[int], k_max: int) -> list[frozenset[int]]:
    """S_0 = supp, S_{k+1} = out-neighbours of S_k (atoms ending a length-k walk)."""
    out = [frozenset(supp)]
    succ = {j: [i for (jj, i) in sys.edges() if jj == j] for j in range(sys.n)}
    for _ in range(k_max):
        out.append(frozenset(i for j in out[-1] for i in succ[j]))
    return out


def first_pathless_length(sys: SubMarkovSystem, supp: Iterable[int]) -> int | None:
    """Smallest k >= 1 with no walk of length k from supp (None if walks of every length exist)."""
    sets = step_reachable_sets(sys, supp, sys.n + 1)
    for k in range(1, len(sets)):
        if not sets[k]:
            return k
    return None


# ------------------------------------------------------------ exact orbits


@dataclass(frozen=True)
class ClassicalDefectOrbit:
    defect: Vector
    orbit: list[Vector]
    stabilized: bool
    index: int | None
    cycle: list[int] | None
    decisive: bool


def classical_orbit(
    sys: SubMarkovSystem, defect: Sequence[Any] | None = None, max_iter: int | None = None
) -> ClassicalDefectOrbit:
    """Exact iteration of the defect.

    The verdict comes from iteration alone.  It is decisive once
    ``max_iter >= n``: a nonzero iterate at step n needs a walk of length n,
    which must revisit an atom.  The cycle witness is attached afterwards
    from the digraph.
    """
    d = tuple(as_fraction(x) for x in (sys.natural_defect() if defect is None else defect))
    if len(d) != sys.n or any(x < 0 or x > 1 for x in d):
        raise ValueError("defect entries must lie in [0, 1] and match the atom count")
    max_iter = sys.n + 1 if max_iter is None else max_iter
    orbit = [d]
    x = d
    index = None
    for k in range(1, max_iter + 1):
        x = sys.apply(x)
        orbit.append(x)
        if not any(x):
            index = k
            break
    cycle = None
    if index is None and support(d):
        cycle = digraph_height(sys, support(d)).cycle
    return ClassicalDefectOrbit(d, orbit, index is not None, index, cycle, index is not None or max_iter >= sys.n)


def telescoping_exact(sys: SubMarkovSystem, p: int) -> Vector:
    """(1 - P^p 1) - sum_{k<p} P^k d, which must vanish identically."""
    one = tuple(Fraction(1) for _ in range(sys.n))
    d = sys.natural_defect()
    acc = [Fraction(0)] * sys.n
    u, x = one, d
    for _ in range(p):
        acc = [a + b for a, b in zip(acc, x)]
        x = sys.apply(x)
        u = sys.apply(u)
    return tuple(1 - ui - ai for ui, ai in zip(u, acc))


# -------------------------------------------------------------- certificates


def rank_function_verify(sys: SubMarkovSystem, r: Sequence[int], defect: Sequence[Any] | None = None) -> Verdict:
    """Check that the rank r strictly decreases along every edge.

    The induced filtration is p_k = 1_{r < k}: mass only moves to strictly
    lower rank, so P(p_k) <= p_{k-1} entrywise.
    """
    if len(r) != sys.n:
        raise ValueError("rank function must be defined on every atom")
    bad = [(j, i) for (j, i) in sys.edges() if not r[i] < r[j]]
    if bad:
        return Verdict(False, {"offending_edges": bad})
    d = tuple(as_fraction(x) for x in (sys.natural_defect() if defect is None else defect))
    supp = support(d)
    h = max((r[j] for j in supp), default=0)
    filtration = []
    ok = True
    for k in range(h + 2):
        filtration.append(tuple(Fraction(1) if r[j] < k else Fraction(0) for j in range(sys.n)))
    for k in range(1, h + 2):
        Pp = sys.apply(filtration[k])
        ok &= all(a <= b for a, b in zip(Pp, filtration[k - 1]))
    covered = all(filtration[h + 1][j] == 1 for j in supp)
    orb = classical_orbit(sys, d, max_iter=h + 2)
    return Verdict(
        True,
        {
            "height": h,
            "bound": h + 1,
            "filtration_exact": ok,
            "defect_covered": covered,
            "measured_index": orb.index,
            "orbit_confirms": orb.stabilized and orb.index <= h + 1,
        },
    )


def _in_lattice(x: Fraction, N: int) -> bool:
    return 0 <= x <= 1 and (x * N).denominator == 1


def bounded_denominator_propagation(
    sys: SubMarkovSystem, defect: Sequence[Any] | None, N: int, k_max: int
) -> Verdict:
    """Does the orbit stay in {0, 1/N, ..., 1} when the data does?

    Closure is reported rather than assumed: products of lattice coefficients
    can leave the lattice (1/2 * 1/2 = 1/4), in which case the first
    offending coefficient is returned.
    """
    if N < 1:
        raise ValueError("N must be a positive integer")
    d = tuple(as_fraction(x) for x in (sys.natural_defect() if defect is None else defect))
    off_coeffs = [(i, j) for i in range(sys.n) for j in range(sys.n) if not _in_lattice(sys.coeffs[i][j], N)]
    off_defect = [j for j, x in enumerate(d) if not _in_lattice(x, N)]
    if off_coeffs or off_defect:
        return Verdict(
            False,
            {"hypothesis_holds": False, "offending_coeffs": off_coeffs, "offending_defect": off_defect},
        )
    x = d
    violation = None
    for k in range(1, k_max + 1):
        x = sys.apply(x)
        bad = [j for j, v in enumerate(x) if not _in_lattice(v, N)]
        if bad:
            violation = {"step": k, "atom": bad[0], "value": fraction_str(x[bad[0]])}
            break
    return Verdict(violation is None, {"hypothesis_holds": True, "closed": violation is None, "first_violation": violation})


@dataclass(frozen=True)
class GapReport:
    gap: Fraction
    trace_values: list[Fraction]
    gap_holds: bool
    contraction: Fraction | None
    first_zero: int | None
    contraction_bound: int | None
    bound_respected: bool | None


def gap_bound(
    sys: SubMarkovSystem,
    defect: Sequence[Any] | None,
    N: int,
    delta0: Any,
    k_max: int | None = None,
) -> GapReport:
    """Weighted traces tau_k = sum_j a_{k,j} w_j are 0 or at least delta0 / N."""
    delta0 = as_fraction(delta0)
    d = tuple(as_fraction(x) for x in (sys.natural_defect() if defect is None else defect))
    supp = support(d)
    if supp:
        reach = digraph_height(sys, supp).reachable
        low = [j for j in reach if sys.weights[j] < delta0]
        if low:
            raise WeightBelowThreshold(f"atoms {sorted(low)} have weight below {delta0}")
    k_max = sys.n + 1 if k_max is None else k_max
    gap = delta0 / N
    taus, x = [], d
    for _ in range(k_max + 1):
        taus.append(sum((a * w for a, w in zip(x, sys.weights)), Fraction(0)))
        x = sys.apply(x)
    gap_holds = all(t == 0 or t >= gap for t in taus)
    ratios = [taus[k + 1] / taus[k] for k in range(len(taus) - 1) if taus[k] > 0]
    c = max(ratios) if ratios else None
    first_zero = next((k for k, t in enumerate(taus) if t == 0 and k >= 1), None)
    nbound, respected = None, None
    if c is not None and c < 1 and taus[0] > 0:
        nbound = contraction_discrete_bound(float(taus[0]), float(c) if c > 0 else 1e-300, float(gap))
        respected = first_zero is not None and first_zero <= nbound
    return GapReport(gap, taus, gap_holds, c, first_zero, nbound, respected)


# --------------------------------------------------- quantum -> classical


@dataclass(frozen=True, eq=False)
class ExpectationCoefficients:
    matrix: np.ndarray
    diagonal_preserving: bool
    snapped: SubMarkovSystem | None
    approximate: bool = True


def expectation_coefficients(
    T: KrausMap, atom_basis: np.ndarray, snap_tol: float = 1e-9, max_den: int = 10**6
) -> ExpectationCoefficients:
    """p_ij = tr(z_i T(z_j)) / tr(z_i) for the rank-one atoms z_j = u_j u_j^H."""
    U = np.asarray(atom_basis, dtype=np.complex128)
    d = T.dim
    if U.shape != (d, d) or np.linalg.norm(U.conj().T @ U - np.eye(d)) > 1e-9:
        raise AtomsNotPartition("atom vectors must form an orthonormal basis")
    P = np.zeros((d, d))
    diag_ok = True
    for j in range(d):
        z = np.outer(U[:, j], U[:, j].conj())
        Y = U.conj().T @ apply(T, z) @ U
        P[:, j] = np.real(np.diag(Y))
        off = Y - np.diag(np.diag(Y))
        diag_ok &= bool(np.linalg.norm(off) <= snap_tol)
    snapped = None
    fr = [[Fraction(float(x)).limit_denominator(max_den) for x in row] for row in P]
    if all(abs(float(f) - x) <= snap_tol for row_f, row in zip(fr, P) for f, x in zip(row_f, row)):
        fr = [[max(f, Fraction(0)) for f in row] for row in fr]
        try:
            snapped = SubMarkovSystem.uniform(fr)
        except ValueError:
            snapped = None
    return ExpectationCoefficients(P, diag_ok, snapped)


def diagonal_orbit_agrees(T: KrausMap, atom_basis: np.ndarray, system: SubMarkovSystem, steps: int, tol: float = 1e-9) -> bool:
    """Compare the classical defect orbit with the diagonal of the quantum one."""
    U = np.asarray(atom_basis, dtype=np.complex128)
    Dk = np.eye(T.dim) - apply(T, np.eye(T.dim))
    x = system.natural_defect()
    for _ in range(steps + 1):
        diag = np.real(np.diag(U.conj().T @ Dk @ U))
        if np.max(np.abs(diag - np.array([float(v) for v in x]))) > tol:
            return False
        Dk = apply(T, Dk)
        x = system.apply(x)
    return True
