"""Exact ordered-effect-space engine: orbit repetition, annihilation and cancellation.

An instance only supplies addition, negation, exact equality, cone
membership and a unit; there is no scalar multiplication.  Elements are
immutable and hashable (tuples of ints or Fractions), so orbit repetition is
detected by hashing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Hashable, Sequence

import numpy as np

from .certificates import Verdict

Element = Hashable


class EffectSpace:
    """Base class for exact instances.  Subclasses define the group and cone."""

    name = "abstract"
    unit: Element
    zero: Element

    def add(self, x: Element, y: Element) -> Element:
        raise NotImplementedError

    def neg(self, x: Element) -> Element:
        raise NotImplementedError

    def in_cone(self, x: Element) -> bool:
        raise NotImplementedError

    def sub(self, x: Element, y: Element) -> Element:
        return self.add(x, self.neg(y))

    def leq(self, x: Element, y: Element) -> bool:
        return self.in_cone(self.sub(y, x))

    def is_zero(self, x: Element) -> bool:
        return x == self.zero

    def total(self, xs: Sequence[Element]) -> Element:
        acc = self.zero
        for x in xs:
            acc = self.add(acc, x)
        return acc


class _VectorSpace(EffectSpace):
    def __init__(self, n: int, unit: Sequence[Any] | None = None):
        self.n = n
        self.zero = tuple(self._coerce(0) for _ in range(n))
        self.unit = tuple(self._coerce(x) for x in (unit if unit is not None else [1] * n))
        if not self.in_cone(self.unit):
            raise ValueError("unit must lie in the positive cone")

    def _coerce(self, x: Any) -> Any:
        return x

    def element(self, xs: Sequence[Any]) -> tuple:
        if len(xs) != self.n:
            raise ValueError("wrong element length")
        return tuple(self._coerce(x) for x in xs)

    def add(self, x, y):
        return tuple(a + b for a, b in zip(x, y))

    def neg(self, x):
        return tuple(-a for a in x)

    def in_cone(self, x):
        return all(a >= 0 for a in x)


class IntLattice(_VectorSpace):
    """Z^n with the componentwise order."""

    name = "int-lattice"

    def _coerce(self, x):
        if isinstance(x, Fraction):
            if x.denominator != 1:
                raise ValueError("integer lattice element must be integral")
            return int(x)
        if not isinstance(x, (int, np.integer)):
            raise TypeError("integer lattice elements must be ints")
        return int(x)


class RationalLattice(_VectorSpace):
    """Q^n with the componentwise order."""

    name = "rational-lattice"

    def _coerce(self, x):
        if isinstance(x, float):
            raise TypeError("floats are not exact")
        return Fraction(x)


class HalfPlaneCone(_VectorSpace):
    """Q^2 ordered by the half-plane {x : <normal, x> >= 0}.

    The cone contains the whole line orthogonal to ``normal``, so it is not
    pointed and the order is only a preorder.
    """

    name = "half-plane"

    def __init__(self, normal: Sequence[Any] = (1, 0), unit: Sequence[Any] | None = None):
        self.normal = tuple(Fraction(x) for x in normal)
        if all(x == 0 for x in self.normal):
            raise ValueError("normal must be nonzero")
        super().__init__(2, unit if unit is not None else self.normal)

    def _coerce(self, x):
        if isinstance(x, float):
            raise TypeError("floats are not exact")
        return Fraction(x)

    def in_cone(self, x):
        return self.normal[0] * x[0] + self.normal[1] * x[1] >= 0

    def null_witness(self) -> tuple[tuple, tuple]:
        """A nonzero x with x and -x both in the cone."""
        x = (-self.normal[1], self.normal[0])
        return x, self.neg(x)


def exact_det(M: Sequence[Sequence[Fraction]]) -> Fraction:
    A = [list(map(Fraction, row)) for row in M]
    n = len(A)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if A[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            A[c], A[piv] = A[piv], A[c]
            det = -det
        det *= A[c][c]
        for r in range(c + 1, n):
            f = A[r][c] / A[c][c]
            if f:
                A[r] = [a - f * b for a, b in zip(A[r], A[c])]
    return det


def exact_psd(M: Sequence[Sequence[Fraction]]) -> bool:
    """Symmetric M is PSD iff every principal minor is non-negative."""
    n = len(M)
    for k in range(1, n + 1):
        for idx in itertools.combinations(range(n), k):
            if exact_det([[M[i][j] for j in idx] for i in idx]) < 0:
                return False
    return True


class SymmetricPSD(EffectSpace):
    """Rational symmetric n x n matrices with the PSD order (exact minors)."""

    name = "symmetric-psd"

    def __init__(self, n: int):
        self.n = n
        self.zero = tuple(tuple(Fraction(0) for _ in range(n)) for _ in range(n))
        self.unit = tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))

    def element(self, rows: Sequence[Sequence[Any]]) -> tuple:
        M = tuple(tuple(Fraction(x) for x in r) for r in rows)
        if any(M[i][j] != M[j][i] for i in range(self.n) for j in range(self.n)):
            raise ValueError("element must be symmetric")
        return M

    def add(self, x, y):
        return tuple(tuple(a + b for a, b in zip(r, s)) for r, s in zip(x, y))

    def neg(self, x):
        return tuple(tuple(-a for a in r) for r in x)

    def in_cone(self, x):
        return exact_psd(x)


# ------------------------------------------------------------------- maps


@dataclass(frozen=True)
class MonotoneSubunitalMap:
    space: EffectSpace
    fn: Callable[[Element], Element]
    label: str = ""

    def __call__(self, x: Element) -> Element:
        return self.fn(x)

    def power(self, x: Element, k: int) -> Element:
        for _ in range(k):
            x = self.fn(x)
        return x

    def defect(self) -> Element:
        return self.space.sub(self.space.unit, self.fn(self.space.unit))

    def check_on_samples(self, samples: Sequence[Element]) -> dict[str, bool]:
        S = self.space
        additive = all(S.add(self(x), self(y)) == self(S.add(x, y)) for x in samples for y in samples)
        monotone = all(S.leq(self(x), self(y)) for x in samples for y in samples if S.leq(x, y))
        return {"additive": additive, "monotone": monotone, "subunital": S.in_cone(self.defect())}


def matrix_map(space: _VectorSpace, M: Sequence[Sequence[Any]], label: str = "") -> MonotoneSubunitalMap:
    """x -> M x on a vector instance."""
    rows = [tuple(space._coerce(a) for a in r) for r in M]

    def fn(x):
        return tuple(sum((a * b for a, b in zip(r, x)), space._coerce(0)) for r in rows)

    return MonotoneSubunitalMap(space, fn, label)


def conjugation_map(space: SymmetricPSD, kraus: Sequence[Sequence[Sequence[Any]]], label: str = "") -> MonotoneSubunitalMap:
    """X -> sum_i V_i^T X V_i with rational V_i."""
    Vs = [[[Fraction(a) for a in r] for r in V] for V in kraus]
    n = space.n

    def fn(X):
        out = [[Fraction(0)] * n for _ in range(n)]
        for V in Vs:
            XV = [[sum((X[i][k] * V[k][j] for k in range(n)), Fraction(0)) for j in range(n)] for i in range(n)]
            for i in range(n):
                for j in range(n):
                    out[i][j] += sum((V[k][i] * XV[k][j] for k in range(n)), Fraction(0))
        return tuple(tuple(r) for r in out)

    return MonotoneSubunitalMap(space, fn, label)


def coordinate_projection_example() -> MonotoneSubunitalMap:
    """(x, y, z) -> (x, y, 0) on Z^3."""
    Z3 = IntLattice(3)
    return matrix_map(Z3, [[1, 0, 0], [0, 1, 0], [0, 0, 0]], "coordinate-projection")


def chain_example(n: int = 3) -> MonotoneSubunitalMap:
    Qn = RationalLattice(n)
    M = [[int(i == j + 1) for j in range(n)] for i in range(n)]
    return matrix_map(Qn, M, f"chain-{n}")


def preorder_cycle_example() -> MonotoneSubunitalMap:
    """(x, y) -> (x, x - y) on Z^2 ordered by {x >= 0}; monotone, unit (1, 0)."""
    space = HalfPlaneCone((1, 0), unit=(1, 0))
    return MonotoneSubunitalMap(space, lambda v: (v[0], v[0] - v[1]), "preorder-cycle")


# ---------------------------------------------------------------- engine


@dataclass(frozen=True)
class AbstractOrbitResult:
    status: str  # "stabilized", "orbit_open" or "repetition_without_annihilation"
    index: int | None
    repetition: tuple[int, int] | None
    orbit: list[Element]
    defect: Element
    annihilation_verified: bool
    constancy_verified: bool
    failed_terms: list[int] = field(default_factory=list)
    note: str = "the family-cardinality bound is not checked; only the found index is reported"

    @property
    def stabilized(self) -> bool:
        return self.status == "stabilized"


def generic_stabilize(T: MonotoneSubunitalMap, max_iter: int = 100, constancy_steps: int = 5) -> AbstractOrbitResult:
    """Iterate the unit until the first exact repetition u_m = u_n (n < m).

    The defect terms T^{n+k}(d) for k < m - n then telescope to zero; in a
    pointed cone they must each vanish, which is verified rather than
    assumed.  If they do not (non-antisymmetric order), the orbit is cycling
    and the engine reports the failure instead of a stabilization.
    """
    S = T.space
    d = T.defect()
    orbit = [S.unit]
    seen = {S.unit: 0}
    for m in range(1, max_iter + 1):
        nxt = T(orbit[-1])
        if nxt in seen:
            n = seen[nxt]
            orbit.append(nxt)
            terms = [T.power(d, n + k) for k in range(m - n)]
            failed = [k for k, t in enumerate(terms) if not S.is_zero(t)]
            if failed:
                return AbstractOrbitResult(
                    "repetition_without_annihilation", None, (n, m), orbit, d, False, False, failed
                )
            base = orbit[n]
            constant = all(T.power(base, k) == base for k in range(1, constancy_steps + 1))
            return AbstractOrbitResult("stabilized", max(n, 1), (n, m), orbit, d, True, constant)
        seen[nxt] = m
        orbit.append(nxt)
    return AbstractOrbitResult("orbit_open", None, None, orbit, d, False, False)


def telescoping_check(T: MonotoneSubunitalMap, p: int) -> Element:
    """(u - T^p(u)) - sum_{k<p} T^k(d); exactly zero for any additive T."""
    S = T.space
    d = T.defect()
    terms = [T.power(d, k) for k in range(p)]
    return S.sub(S.sub(S.unit, T.power(S.unit, p)), S.total(terms))


def cancellation_check(space: EffectSpace, samples: Sequence[Element], max_subset: int = 3) -> Verdict:
    """Look for cone elements summing to zero without all being zero.

    Candidates come from the samples themselves, their negatives (when the
    cone contains them) and small subsets of the combined pool.
    """
    cone = [x for x in samples if space.in_cone(x)]
    pool = list(cone) + [space.neg(x) for x in cone if space.in_cone(space.neg(x))]
    pool = list(dict.fromkeys(pool))
    checked = 0
    for r in range(2, max_subset + 1):
        for combo in itertools.combinations(range(len(pool)), r):
            xs = [pool[i] for i in combo]
            checked += 1
            if space.is_zero(space.total(xs)) and any(not space.is_zero(x) for x in xs):
                return Verdict(False, {"counterexample": [_plain(x) for x in xs], "subsets_checked": checked})
    return Verdict(True, {"subsets_checked": checked, "cone_samples": len(cone)})


def pointedness_check(space: EffectSpace, samples: Sequence[Element]) -> bool:
    return all(space.is_zero(x) for x in samples if space.in_cone(x) and space.in_cone(space.neg(x)))


def order_axioms_check(space: EffectSpace, samples: Sequence[Element]) -> dict[str, bool]:
    reflexive = all(space.leq(x, x) for x in samples)
    transitive = all(
        space.leq(x, z)
        for x in samples
        for y in samples
        for z in samples
        if space.leq(x, y) and space.leq(y, z)
    )
    return {"reflexive": reflexive, "transitive": transitive, "antisymmetric": pointedness_check(space, [space.sub(x, y) for x in samples for y in samples])}


def _plain(x: Any) -> Any:
    if isinstance(x, tuple):
        return [_plain(a) for a in x]
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return x


# ------------------------------------------------------- random instances


def random_integer_instance(n: int, rng: np.random.Generator) -> MonotoneSubunitalMap:
    """Nonnegative integer matrix with row sums <= 1 (a partial function)."""
    M = [[0] * n for _ in range(n)]
    for i in range(n):
        j = int(rng.integers(-1, n))
        if j >= 0:
            M[i][j] = 1
    return matrix_map(IntLattice(n), M, "random-int")


def random_rational_instance(n: int, rng: np.random.Generator, max_den: int = 4, density: float = 0.5) -> MonotoneSubunitalMap:
    """Nonnegative rational matrix with row sums <= 1."""
    M = []
    for _ in range(n):
        row = [Fraction(int(rng.integers(1, max_den + 1)), max_den) if rng.random() < density else Fraction(0) for _ in range(n)]
        s = sum(row)
        if s > 1:
            row = [x / s for x in row]
        M.append(row)
    return matrix_map(RationalLattice(n), M, "random-rational")


def random_psd_instance(n: int, rng: np.random.Generator) -> MonotoneSubunitalMap:
    """Conjugation by a random strictly upper triangular 0/1 matrix (sub-isometric)."""
    V = [[0] * n for _ in range(n)]
    for i in range(n - 1):
        if rng.random() < 0.8:
            V[i][i + 1] = 1
    return conjugation_map(SymmetricPSD(n), [V], "random-psd")


def random_samples(space: EffectSpace, rng: np.random.Generator, count: int = 8) -> list[Element]:
    out = [space.zero, space.unit]
    for _ in range(count):
        if isinstance(space, SymmetricPSD):
            A = [[Fraction(int(rng.integers(-2, 3))) for _ in range(space.n)] for _ in range(space.n)]
            out.append(tuple(tuple(sum((A[k][i] * A[k][j] for k in range(space.n)), Fraction(0)) for j in range(space.n)) for i in range(space.n)))
        else:
            out.append(space.element([int(rng.integers(-2, 3)) for _ in range(space.n)]))
    return out
