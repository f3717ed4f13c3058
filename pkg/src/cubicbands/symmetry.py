"""
Octahedral point group, admissible abelian subgroups and symmetry sectors.

Group elements act on Cartesian vectors by matrix multiplication and on functions
by ``g_* f(x) = f(g^T x)``; on a plane wave this gives ``g_* e^{i k.x} = e^{i (g k).x}``.

Exponent multi-indices ``j`` run over ``{0, ..., n_i - 1}`` for each generator of
order ``n_i`` (the power ``n_i`` is the identity, so this is the same index set
as ``{1, ..., n_i}`` up to relabelling).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .lattice import Lattice, ReciprocalBasis, dual_basis, k_class, named_point

IntTriple = Tuple[int, int, int]


class SymmetryError(ValueError):
    """Raised when an admissibility condition fails."""


@dataclass(frozen=True, order=True)
class GroupElement:
    """Signed 3x3 permutation matrix, stored as nested tuples so it is hashable."""

    rows: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        a = np.array(self.rows, dtype=int)
        if a.shape != (3, 3) or not np.array_equal(a.T @ a, np.eye(3, dtype=int)):
            raise SymmetryError(f"not an orthogonal integer matrix: {self.rows}")
        if not (np.all(np.abs(a).sum(axis=0) == 1) and np.all(np.abs(a).sum(axis=1) == 1)):
            raise SymmetryError(f"not a signed permutation: {self.rows}")

    @classmethod
    def of(cls, matrix) -> "GroupElement":
        return cls(tuple(tuple(int(v) for v in row) for row in np.asarray(matrix)))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.rows, dtype=int)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement.of(self.matrix @ other.matrix)

    def inverse(self) -> "GroupElement":
        return GroupElement.of(self.matrix.T)

    def power(self, n: int) -> "GroupElement":
        out = IDENTITY
        base = self if n >= 0 else self.inverse()
        for _ in range(abs(n)):
            out = out @ base
        return out

    @property
    def order(self) -> int:
        g, n = self, 1
        while g != IDENTITY:
            g, n = g @ self, n + 1
        return n


IDENTITY = GroupElement.of(np.eye(3, dtype=int))

# Generators of the octahedral group and the named elements used for the cubic cases.
R = GroupElement.of([[0, 0, 1], [1, 0, 0], [0, 1, 0]])
S = GroupElement.of([[0, 1, 0], [1, 0, 0], [0, 0, -1]])
F = GroupElement.of(-np.eye(3, dtype=int))
F1 = GroupElement.of(np.diag([-1, 1, 1]))
F2 = GroupElement.of(np.diag([1, -1, 1]))
F3 = GroupElement.of(np.diag([1, 1, -1]))
F12 = GroupElement.of(np.diag([-1, -1, 1]))
F13 = GroupElement.of(np.diag([-1, 1, -1]))
F23 = GroupElement.of(np.diag([1, -1, -1]))
S0 = GroupElement.of([[0, 1, 0], [-1, 0, 0], [0, 0, -1]])

NAMED_ELEMENTS: Dict[str, GroupElement] = {
    "r": R, "s": S, "f": F, "f1": F1, "f2": F2, "f3": F3,
    "f12": F12, "f13": F13, "f23": F23, "s0": S0,
}

#: Abelian subgroups satisfying the admissibility assumption at the named points.
TABLE_SUBGROUPS: Dict[Tuple[str, str], Tuple[str, ...]] = {
    ("sc", "R"): ("f1", "f2", "f3"),
    ("bcc", "P"): ("f13", "f23"),
    ("bcc", "H"): ("r", "f"),
    ("fcc", "W"): ("s0",),
}


def closure(generators: Iterable[GroupElement]) -> frozenset:
    """Breadth-first closure of a set of group elements under multiplication."""
    gens = list(generators)
    seen = {IDENTITY}
    frontier = [IDENTITY]
    while frontier:
        nxt = []
        for a in frontier:
            for g in gens:
                b = a @ g
                if b not in seen:
                    seen.add(b)
                    nxt.append(b)
        frontier = nxt
    return frozenset(seen)


def octahedral_group() -> frozenset:
    """The 48 signed permutation matrices, generated by ``r``, ``s`` and ``f``."""
    return closure([R, S, F])


def verify_lattice_invariance(group: Iterable[GroupElement], lattice: Lattice, tol: float = 1e-9) -> bool:
    """True iff each element maps every basis vector to an integer combination of basis vectors."""
    binv = np.linalg.inv(lattice.basis)
    for g in group:
        coords = (lattice.basis @ g.matrix.T) @ binv  # row i: coordinates of g v_i
        if np.max(np.abs(coords - np.rint(coords))) > tol:
            return False
    return True


def is_k_invariant(g: GroupElement, K, recip: ReciprocalBasis) -> bool:
    return recip.integer_coords(g.matrix @ np.asarray(K, dtype=float) - K) is not None


def act_on_planewave(g: GroupElement, m, K, recip: ReciprocalBasis) -> IntTriple:
    """Index ``m'`` with ``g (K + m k) = K + m' k``, i.e. ``g_*`` applied to the plane wave ``m``."""
    K = np.asarray(K, dtype=float)
    image = g.matrix @ (K + recip.to_cartesian(m))
    c = recip.integer_coords(image - K)
    if c is None:
        raise SymmetryError("not K-invariant: image momentum is not in K + dual lattice")
    return tuple(int(v) for v in c)


@dataclass(frozen=True, order=True)
class SectorLabel:
    """Tuple of roots of unity ``omega_i = exp(2 pi i p_i / n_i)`` stored as exact angles.

    ``turns[i]`` is the Fraction ``p_i / n_i`` reduced to ``[0, 1)``.
    """

    turns: Tuple[Fraction, ...]
    orders: Tuple[int, ...]

    def __post_init__(self):
        for t, n in zip(self.turns, self.orders):
            if (t * n).denominator != 1:
                raise SymmetryError(f"{t} is not an angle of an {n}-th root of unity")

    @classmethod
    def from_numerators(cls, p: Sequence[int], orders: Sequence[int]) -> "SectorLabel":
        return cls(tuple(Fraction(int(a) % n, n) for a, n in zip(p, orders)), tuple(orders))

    @property
    def numerators(self) -> Tuple[int, ...]:
        return tuple(int(t * n) for t, n in zip(self.turns, self.orders))

    @property
    def values(self) -> np.ndarray:
        return np.array([_root(t) for t in self.turns])

    def character(self, j: Sequence[int]) -> complex:
        """``omega^j = prod_i omega_i^{j_i}``, reduced exactly before evaluation."""
        return _root(sum((t * int(a) for t, a in zip(self.turns, j)), Fraction(0)))

    def conjugate(self) -> "SectorLabel":
        return SectorLabel.from_numerators([-p for p in self.numerators], self.orders)

    def to_json(self) -> List[dict]:
        return [{"p": t.numerator, "q": t.denominator} for t in self.turns]

    def __str__(self) -> str:
        return "(" + ",".join(_fmt_root(t) for t in self.turns) + ")"


def _root(turn: Fraction) -> complex:
    turn = turn % 1
    exact = {Fraction(0): 1.0, Fraction(1, 4): 1j, Fraction(1, 2): -1.0, Fraction(3, 4): -1j}
    if turn in exact:
        return complex(exact[turn])
    return complex(np.exp(2j * np.pi * float(turn)))


def _fmt_root(turn: Fraction) -> str:
    names = {Fraction(0): "1", Fraction(1, 2): "-1", Fraction(1, 4): "i", Fraction(3, 4): "-i",
             Fraction(1, 3): "z3", Fraction(2, 3): "z3*"}
    return names.get(turn % 1, f"e^(2pi i {turn})")


@dataclass(frozen=True)
class AdmissibleSubgroup:
    """Abelian subgroup ``G_0`` with ``G_0 K = [K]`` and ``|G_0| = |G_0 K|``."""

    lattice: Lattice
    K: np.ndarray
    generators: Tuple[GroupElement, ...]
    generator_names: Tuple[str, ...]
    orders: Tuple[int, ...]
    elements: Dict[Tuple[int, ...], GroupElement]
    m_table: Dict[Tuple[int, ...], IntTriple]

    @property
    def recip(self) -> ReciprocalBasis:
        return dual_basis(self.lattice)

    @property
    def size(self) -> int:
        return len(self.elements)

    @property
    def index_set(self) -> List[Tuple[int, ...]]:
        return list(itertools.product(*(range(n) for n in self.orders)))

    @cached_property
    def sectors(self) -> List[SectorLabel]:
        return [SectorLabel.from_numerators(p, self.orders) for p in self.index_set]

    def element(self, j: Sequence[int]) -> GroupElement:
        return self.elements[tuple(int(a) % n for a, n in zip(j, self.orders))]

    def sector(self, numerators: Sequence[int]) -> SectorLabel:
        return SectorLabel.from_numerators(numerators, self.orders)

    def to_json(self) -> dict:
        return {
            "generators": [
                {"name": n, "matrix": [list(r) for r in g.rows], "order": o}
                for n, g, o in zip(self.generator_names, self.generators, self.orders)
            ],
            "order": self.size,
            "U": [w.to_json() for w in self.sectors],
            "m_of_j": [{"j": list(j), "m": list(self.m_table[j])} for j in self.index_set],
        }


def _build_subgroup(lattice: Lattice, K, gens: Sequence[GroupElement], names: Sequence[str]) -> AdmissibleSubgroup:
    K = np.asarray(K, dtype=float)
    recip = dual_basis(lattice)
    for a, b in itertools.combinations(gens, 2):
        if a @ b != b @ a:
            raise SymmetryError("A3 violated: generators do not commute")
    orders = tuple(g.order for g in gens)
    elements: Dict[Tuple[int, ...], GroupElement] = {}
    for j in itertools.product(*(range(n) for n in orders)):
        g = IDENTITY
        for gen, a in zip(gens, j):
            g = g @ gen.power(a)
        elements[j] = g
    if len(set(elements.values())) != len(elements):
        raise SymmetryError("A3 violated: generators are not a minimal (direct product) system")
    m_table = {}
    for j, g in elements.items():
        c = recip.integer_coords(g.matrix @ K - K)
        if c is None:
            raise SymmetryError(f"A3 violated: g^{j} K is not in K + dual lattice")
        m_table[j] = tuple(int(v) for v in c)
    cls_ = k_class(K, recip)
    orbit = {tuple(m) for m in m_table.values()}
    if len(orbit) != len(elements):
        raise SymmetryError(f"A3 violated: |G0 K| = {len(orbit)} differs from |G0| = {len(elements)}")
    if orbit != {tuple(int(v) for v in s) for s in cls_.shifts}:
        raise SymmetryError(f"A3 violated: G0 K differs from [K] (|[K]| = {len(cls_)})")
    return AdmissibleSubgroup(lattice, K, tuple(gens), tuple(names), orders, elements, m_table)


def admissible_subgroup(lattice, K, generators: Optional[Sequence] = None) -> AdmissibleSubgroup:
    """Admissible abelian subgroup at ``K``.

    ``lattice`` is a :class:`Lattice` or a lattice name; ``K`` is a point label
    (``"R"``, ``"P"``, ``"H"``, ``"W"``) or a vector. ``generators`` may name elements
    (``"r"``, ``"f13"``, ...) or give :class:`GroupElement` objects. Without generators
    the tabulated subgroup is used for named points, and other points fall back to a
    search over abelian subgroups generated by at most three elements.
    """
    if isinstance(lattice, str):
        lattice = Lattice.named(lattice)
    label = None
    if isinstance(K, str):
        label = K.upper()
        K = named_point(lattice.name, label)
    K = np.asarray(K, dtype=float)
    if label is None:
        for (lname, lab), vec in _named_points_for(lattice.name):
            if np.allclose(vec, K, atol=1e-12):
                label = lab
    if generators is None and label is not None and (lattice.name, label) in TABLE_SUBGROUPS:
        generators = TABLE_SUBGROUPS[(lattice.name, label)]
    if generators is not None:
        gens, names = [], []
        for g in generators:
            if isinstance(g, str):
                gens.append(NAMED_ELEMENTS[g.lower()])
                names.append(g.lower())
            else:
                gens.append(g)
                names.append("custom")
        return _build_subgroup(lattice, K, gens, names)
    return search_admissible_subgroup(lattice, K)


def _named_points_for(lattice_name: str):
    from .lattice import NAMED_POINTS

    return [(key, vec) for key, vec in NAMED_POINTS.items() if key[0] == lattice_name]


def search_admissible_subgroup(lattice: Lattice, K) -> AdmissibleSubgroup:
    """Best-effort search over generator subsets of size 1..3 of the K-invariant point group."""
    K = np.asarray(K, dtype=float)
    recip = dual_basis(lattice)
    group = sorted(octahedral_group())
    if not verify_lattice_invariance(group, lattice):
        raise SymmetryError("octahedral group does not preserve this lattice")
    target = len(k_class(K, recip))
    cands = [g for g in group if g != IDENTITY and is_k_invariant(g, K, recip)]
    for size in (1, 2, 3):
        for gens in itertools.combinations(cands, size):
            if np.prod([g.order for g in gens]) != target:
                continue
            try:
                return _build_subgroup(lattice, K, gens, ["custom"] * size)
            except SymmetryError:
                continue
    raise SymmetryError("A3 violated: no abelian subgroup with G0 K = [K] found")


def m_of_j(sub: AdmissibleSubgroup, j: Sequence[int]) -> IntTriple:
    """Integer triple ``m(j)`` with ``g^j K = K + m(j) . (k1, k2, k3)``."""
    key = tuple(int(a) % n for a, n in zip(j, sub.orders))
    if key not in sub.m_table:
        raise SymmetryError(f"index {tuple(j)} not in J")
    return sub.m_table[key]


def symmetry_eigenvector(sub: AdmissibleSubgroup, omega: SectorLabel) -> Dict[IntTriple, complex]:
    """Plane-wave coefficients of the unperturbed sector eigenvector.

    The coefficient of the wave at momentum ``g^{-j} K`` is ``omega^j / sqrt(|G0|)``.
    """
    norm = 1.0 / np.sqrt(sub.size)
    out: Dict[IntTriple, complex] = {}
    for j in sub.index_set:
        inv = tuple(-a for a in j)
        out[m_of_j(sub, inv)] = omega.character(j) * norm
    return out


def planewave_permutation(g: GroupElement, indices: np.ndarray, K, recip: ReciprocalBasis) -> np.ndarray:
    """``perm`` with ``g_* e_i = e_{perm[i]}`` on a plane-wave index set closed under ``g``."""
    K = np.asarray(K, dtype=float)
    lookup = {tuple(int(v) for v in m): i for i, m in enumerate(indices)}
    images = (K + recip.to_cartesian(indices)) @ g.matrix.T - K
    coords = recip.to_dual(images)
    rounded = np.rint(coords)
    if np.max(np.abs(coords - rounded)) > 1e-9:
        raise SymmetryError("not K-invariant: image momentum is not in K + dual lattice")
    try:
        return np.array([lookup[tuple(int(v) for v in m)] for m in rounded.astype(int)])
    except KeyError as exc:
        raise SymmetryError(f"plane-wave index set not closed under the group element: {exc}") from None


def planewave_operator(g: GroupElement, indices: np.ndarray, K, recip: ReciprocalBasis) -> np.ndarray:
    """Unitary matrix of ``g_*`` on the plane-wave index set (a permutation matrix)."""
    perm = planewave_permutation(g, indices, K, recip)
    n = len(indices)
    op = np.zeros((n, n))
    op[perm, np.arange(n)] = 1.0
    return op


def character_projector(sub: AdmissibleSubgroup, omega: SectorLabel, indices: np.ndarray) -> np.ndarray:
    """``P_omega = |G0|^{-1} sum_j omega^{-j} (g^j)_*`` on the plane-wave index set."""
    recip = sub.recip
    n = len(indices)
    proj = np.zeros((n, n), dtype=complex)
    for j in sub.index_set:
        perm = planewave_permutation(sub.element(j), indices, sub.K, recip)
        proj[perm, np.arange(n)] += np.conj(omega.character(j))
    return proj / sub.size
