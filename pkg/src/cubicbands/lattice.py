"""
Lattices, dual lattices and Brillouin zones.

Conventions
-----------
Vectors are stored as rows: ``lattice.basis[i]`` is the i-th generator ``v_i``
and ``recip.kvecs[i]`` is the dual generator ``k_i`` with ``k_i . v_j = 2 pi delta_ij``.
A point of the dual lattice is written ``m @ recip.kvecs`` for an integer triple ``m``
("dual coordinates").

The Brillouin zone is the Voronoi cell of the dual lattice around the origin,
i.e. the intersection of the half-spaces ``x . g <= |g|^2 / 2`` over nonzero dual
lattice vectors ``g``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

PI = np.pi

#: Tolerance used to merge numerically identical vertices.
VERTEX_MERGE_TOL = 1e-8
#: Tolerance on half-space membership and facet activity.
MEMBERSHIP_TOL = 1e-9

NAMED_BASES: Dict[str, np.ndarray] = {
    "sc": np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
    "bcc": np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.5]]),
    "fcc": np.array([[0.5, 0.5, 0.0], [-0.5, 0.5, 0.0], [0.0, -0.5, 0.5]]),
}

#: Zone vertices with distinct point-group orbits, one per Table-1 style case.
#: Labels: R (simple cubic corner), P and H (body-centred), W (face-centred).
NAMED_POINTS: Dict[Tuple[str, str], np.ndarray] = {
    ("sc", "R"): np.array([PI, PI, PI]),
    ("bcc", "P"): np.array([PI, PI, PI]),
    ("bcc", "H"): np.array([0.0, 0.0, 2 * PI]),
    ("fcc", "W"): np.array([0.0, 2 * PI, PI]),
}


class LatticeError(ValueError):
    """Raised for degenerate lattices, insufficient shells or points outside the zone."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Lattice:
    """Bravais lattice in three dimensions.

    Attributes
    ----------
    basis : np.ndarray
        (3, 3) array whose rows are the generators ``v_1, v_2, v_3``.
    name : str
        ``"sc"``, ``"bcc"``, ``"fcc"`` or ``"custom"``.
    """

    basis: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        b = _frozen(self.basis)
        if b.shape != (3, 3):
            raise LatticeError("basis must be a 3x3 array")
        if abs(np.linalg.det(b)) <= 1e-12:
            raise LatticeError("degenerate lattice")
        object.__setattr__(self, "basis", b)
        if self.name in NAMED_BASES and not np.array_equal(b, NAMED_BASES[self.name]):
            raise LatticeError(f"basis does not match the standard {self.name} basis")

    @classmethod
    def named(cls, name: str) -> "Lattice":
        key = name.lower()
        if key not in NAMED_BASES:
            raise LatticeError(f"unknown lattice {name!r}; expected one of {sorted(NAMED_BASES)}")
        return cls(NAMED_BASES[key], key)

    @property
    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))


@dataclass(frozen=True)
class ReciprocalBasis:
    """Dual basis; rows of ``kvecs`` are ``k_1, k_2, k_3``."""

    kvecs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kvecs", _frozen(self.kvecs))

    def to_cartesian(self, m) -> np.ndarray:
        """Dual coordinates -> Cartesian momenta (works on stacks of triples)."""
        return np.asarray(m, dtype=float) @ self.kvecs

    def to_dual(self, k) -> np.ndarray:
        """Cartesian momenta -> real dual coordinates (not rounded)."""
        return np.asarray(k, dtype=float) @ np.linalg.inv(self.kvecs)

    def integer_coords(self, k, tol: float = 1e-9) -> Optional[np.ndarray]:
        """Integer dual coordinates of ``k``, or ``None`` if ``k`` is not on the lattice."""
        c = self.to_dual(k)
        r = np.rint(c)
        if np.max(np.abs(c - r)) > tol:
            return None
        return r.astype(int)


def dual_basis(lattice: Lattice) -> ReciprocalBasis:
    """Dual basis with ``k_i . v_j = 2 pi delta_ij``.

    With basis vectors as rows ``B``, the dual rows are ``D = 2 pi (B^{-1})^T``,
    so that ``D B^T = 2 pi I``.
    """
    b = np.asarray(lattice.basis, dtype=float)
    if abs(np.linalg.det(b)) <= 1e-12:
        raise LatticeError("degenerate lattice")
    return ReciprocalBasis(2 * PI * np.linalg.inv(b).T)


def lattice_points(recip: ReciprocalBasis, radius: float, include_origin: bool = False):
    """All dual lattice points with norm ``<= radius``.

    Returns
    -------
    coords : (n, 3) int array
    vectors : (n, 3) float array
    Both sorted by norm, then lexicographically by coordinates.
    """
    kinv = np.linalg.inv(recip.kvecs)
    # |m_i| = |g . kinv[:, i]| <= radius * |kinv[:, i]|
    bounds = np.ceil(radius * np.linalg.norm(kinv, axis=0)).astype(int) + 1
    axes = [np.arange(-n, n + 1) for n in bounds]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    vecs = grid @ recip.kvecs
    norms = np.linalg.norm(vecs, axis=1)
    keep = norms <= radius * (1 + 1e-12)
    if not include_origin:
        keep &= np.any(grid != 0, axis=1)
    grid, vecs, norms = grid[keep], vecs[keep], norms[keep]
    order = np.lexsort((grid[:, 2], grid[:, 1], grid[:, 0], np.round(norms, 9)))
    return grid[order], vecs[order]


@dataclass(frozen=True)
class BrillouinZone:
    """Voronoi cell of the dual lattice.

    ``halfspaces`` holds the facet-defining dual vectors ``g`` (one per face) with
    offsets ``|g|^2 / 2``; ``faces[i]`` lists vertex indices of the facet of
    ``halfspaces[i]`` in counter-clockwise order seen from outside.
    """

    normals: np.ndarray
    normal_coords: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray
    faces: Tuple[Tuple[int, ...], ...]
    recip: ReciprocalBasis
    shell_radius: float

    @property
    def halfspaces(self) -> List[Tuple[np.ndarray, float]]:
        return [(g, float(o)) for g, o in zip(self.normals, self.offsets)]

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.normals @ x <= self.offsets + tol * np.maximum(1.0, self.offsets)))

    def to_json(self) -> dict:
        return {
            "halfspaces": [
                {"g": [float(v) for v in g], "m": [int(v) for v in m], "offset": float(o)}
                for g, m, o in zip(self.normals, self.normal_coords, self.offsets)
            ],
            "vertices": [[float(v) for v in x] for x in self.vertices],
            "faces": [list(f) for f in self.faces],
        }


def _triple_intersections(normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    idx = np.array(list(itertools.combinations(range(len(normals)), 3)))
    a = normals[idx]  # (t, 3, 3)
    rhs = offsets[idx]  # (t, 3)
    det = np.linalg.det(a)
    ok = np.abs(det) > 1e-9 * np.prod(np.linalg.norm(a, axis=2), axis=1)
    return np.linalg.solve(a[ok], rhs[ok][..., None])[..., 0]


def _canonical_rows(x: np.ndarray) -> np.ndarray:
    key = np.round(x, 8) + 0.0  # +0.0 folds -0.0 into 0.0
    order = np.lexsort(key.T[::-1])
    return x[order]


def _merge_points(points: np.ndarray, tol: float) -> np.ndarray:
    if len(points) == 0:
        return points.reshape(0, 3)
    # coarse pass drops exact repeats; the greedy pass merges what rounding split
    _, first = np.unique(np.round(points, 6) + 0.0, axis=0, return_index=True)
    merged: List[np.ndarray] = []
    for p in points[np.sort(first)]:
        if not any(np.max(np.abs(p - q)) <= tol for q in merged):
            merged.append(p)
    return np.array(merged)


def _order_face(vertices: np.ndarray, members: Sequence[int], normal: np.ndarray) -> Tuple[int, ...]:
    pts = vertices[list(members)]
    centre = pts.mean(axis=0)
    n = normal / np.linalg.norm(normal)
    u = pts[0] - centre
    u -= (u @ n) * n
    u /= np.linalg.norm(u)
    w = np.cross(n, u)
    ang = np.arctan2((pts - centre) @ w, (pts - centre) @ u)
    ang = np.where(ang < -1e-12, ang + 2 * PI, ang)
    ordered = [members[i] for i in np.argsort(ang, kind="stable")]
    start = ordered.index(min(ordered))
    return tuple(ordered[start:] + ordered[:start])


def brillouin_zone(recip: ReciprocalBasis, shell_radius: Optional[float] = None) -> BrillouinZone:
    """Brillouin zone as an intersection of half-spaces.

    Candidate vertices are intersections of three bisector planes of dual vectors
    with ``|g| <= shell_radius`` that satisfy every half-space constraint of the
    shell. The truncation is certified by testing the vertices against the
    half-spaces of the doubled shell: if all of them pass, the doubled shell
    yields the same polytope.
    """
    kmax = float(np.max(np.linalg.norm(recip.kvecs, axis=1)))
    if shell_radius is None:
        shell_radius = 2.0 * kmax
    coords, normals = lattice_points(recip, shell_radius)
    if len(normals) < 4:
        raise LatticeError("insufficient shell")
    offsets = 0.5 * np.einsum("ij,ij->i", normals, normals)
    scale = max(1.0, float(offsets.max()))

    cand = _triple_intersections(normals, offsets)
    inside = np.all(cand @ normals.T <= offsets + MEMBERSHIP_TOL * scale, axis=1)
    verts = _merge_points(_canonical_rows(cand[inside]), VERTEX_MERGE_TOL * scale)
    if len(verts) < 4:
        raise LatticeError("insufficient shell")

    _, big = lattice_points(recip, 2.0 * shell_radius)
    big_off = 0.5 * np.einsum("ij,ij->i", big, big)
    if np.any(verts @ big.T > big_off + MEMBERSHIP_TOL * max(1.0, float(big_off.max()))):
        raise LatticeError("insufficient shell")

    verts = _canonical_rows(verts) + 0.0
    active = np.abs(verts @ normals.T - offsets) <= MEMBERSHIP_TOL * scale  # (nv, nh)
    face_normals, face_coords, face_offsets, faces = [], [], [], []
    for h in range(len(normals)):
        members = list(np.nonzero(active[:, h])[0])
        if len(members) >= 3:
            face_normals.append(normals[h])
            face_coords.append(coords[h])
            face_offsets.append(offsets[h])
            faces.append(_order_face(verts, members, normals[h]))
    face_normals = np.array(face_normals)
    face_coords = np.array(face_coords)
    order = np.lexsort((np.round(face_normals, 8) + 0.0).T[::-1])
    return BrillouinZone(
        normals=_frozen(face_normals[order]),
        normal_coords=np.array(face_coords)[order],
        offsets=_frozen(np.array(face_offsets)[order]),
        vertices=_frozen(verts),
        faces=tuple(faces[i] for i in order),
        recip=recip,
        shell_radius=float(shell_radius),
    )


@dataclass(frozen=True)
class MomentumClass:
    """The set ``[K]`` of points in ``K + Lambda^*`` with the same norm as ``K``."""

    base: np.ndarray
    members: np.ndarray
    shifts: np.ndarray = field(repr=False)  # integer dual coordinates of member - base

    def __len__(self) -> int:
        return len(self.members)


def k_class(K, recip: ReciprocalBasis, shell_radius: Optional[float] = None,
            tol: float = 1e-9) -> MomentumClass:
    """Enumerate ``[K]``; its size is the multiplicity of ``|K|^2`` for ``-Laplacian`` on ``L^2_K``."""
    K = np.asarray(K, dtype=float)
    kmax = float(np.max(np.linalg.norm(recip.kvecs, axis=1)))
    if shell_radius is None:
        shell_radius = 2.0 * np.linalg.norm(K) + kmax
    coords, vecs = lattice_points(recip, shell_radius, include_origin=True)
    n0 = K @ K
    norms = np.einsum("ij,ij->i", K + vecs, K + vecs)
    sel = np.abs(norms - n0) <= tol * max(1.0, n0)
    shifts = coords[sel]
    members = K + vecs[sel]
    order = np.lexsort((np.round(members, 9) + 0.0).T[::-1])
    return MomentumClass(base=_frozen(K), members=_frozen(members[order]), shifts=shifts[order])


def faces_containing(K, bz: BrillouinZone, tol: float = MEMBERSHIP_TOL) -> int:
    """Number of zone facets through ``K``; raises if ``K`` lies outside the zone."""
    K = np.asarray(K, dtype=float)
    scale = np.maximum(1.0, bz.offsets)
    slack = bz.normals @ K - bz.offsets
    if np.any(slack > tol * scale):
        raise LatticeError("point lies outside the Brillouin zone")
    return int(np.sum(np.abs(slack) <= tol * scale))


def is_vertex(K, bz: BrillouinZone, tol: float = VERTEX_MERGE_TOL) -> bool:
    K = np.asarray(K, dtype=float)
    scale = max(1.0, float(bz.offsets.max()))
    return bool(np.any(np.max(np.abs(bz.vertices - K), axis=1) <= tol * scale))


def verify_vertex_class(K, bz: BrillouinZone, recip: ReciprocalBasis) -> bool:
    """True iff every member of ``[K]`` is a vertex of the zone."""
    return all(is_vertex(k, bz) for k in k_class(K, recip).members)


def named_point(lattice_name: str, label: str) -> np.ndarray:
    key = (lattice_name.lower(), label.upper())
    if key not in NAMED_POINTS:
        known = ", ".join(f"{a}:{b}" for a, b in NAMED_POINTS)
        raise LatticeError(f"unknown point {label!r} for lattice {lattice_name!r} (known: {known})")
    return NAMED_POINTS[key].copy()
