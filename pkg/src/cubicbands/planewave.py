"""
Truncated plane-wave representation of ``H_z = -Laplacian + z V`` on quasi-periodic functions.

The basis function with index ``m`` is ``exp(i (K + kappa + m . k) . x)``. Index sets
are balls ``|K + m . k|^2 <= cutoff`` around the origin in momentum space, which are
mapped onto themselves by every point-group element that fixes ``K`` modulo the dual
lattice. Sector projectors are therefore exact on the truncation.
"""

from __future__ import annotations

import hashlib
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .lattice import Lattice, ReciprocalBasis, dual_basis, lattice_points
from .potential import InvariantPotential
from .symmetry import AdmissibleSubgroup, SectorLabel, planewave_permutation

DEFAULT_CUTOFF_FACTOR = 10.0
MAX_DIMENSION = 20000
SECTOR_RANK_TOL = 1e-10


class SolverError(RuntimeError):
    """Raised when a basis, eigensolve or sector restriction cannot be carried out."""


@dataclass(frozen=True)
class PlaneWaveBasis:
    lattice: Lattice
    K: np.ndarray
    kappa: np.ndarray
    indices: np.ndarray
    energy_cutoff: float

    @property
    def recip(self) -> ReciprocalBasis:
        return dual_basis(self.lattice)

    @property
    def dimension(self) -> int:
        return len(self.indices)

    @property
    def momenta(self) -> np.ndarray:
        """``K + kappa + m . k`` for each basis index."""
        return self.K + self.kappa + self.recip.to_cartesian(self.indices)

    def index_of(self, m) -> int:
        hits = np.flatnonzero(np.all(self.indices == np.asarray(m, dtype=int), axis=1))
        if len(hits) == 0:
            raise KeyError(tuple(m))
        return int(hits[0])

    def with_kappa(self, kappa) -> "PlaneWaveBasis":
        """Same index set, shifted quasi-momentum."""
        return PlaneWaveBasis(self.lattice, self.K, np.asarray(kappa, dtype=float), self.indices, self.energy_cutoff)


def build_basis(lattice, K, kappa=None, energy_cutoff: Optional[float] = None,
                max_dimension: int = MAX_DIMENSION) -> PlaneWaveBasis:
    """All ``m`` with ``|K + m . k|^2 <= energy_cutoff``, sorted by kinetic energy then index.

    The default cutoff is ``10 |K|^2`` (or ``10 max |k_i|^2`` at ``K = 0``).
    """
    if isinstance(lattice, str):
        lattice = Lattice.named(lattice)
    K = np.asarray(K, dtype=float)
    kappa = np.zeros(3) if kappa is None else np.asarray(kappa, dtype=float)
    recip = dual_basis(lattice)
    k2 = float(K @ K)
    if energy_cutoff is None:
        energy_cutoff = DEFAULT_CUTOFF_FACTOR * (k2 if k2 > 0 else float(np.max(np.sum(recip.kvecs ** 2, axis=1))))
    energy_cutoff = float(energy_cutoff)
    slack = 1e-9 * max(1.0, energy_cutoff)
    if energy_cutoff < k2 - slack:
        raise SolverError(f"energy cutoff {energy_cutoff} is below |K|^2 = {k2}: empty shell")
    # Rough count before enumerating: ball volume / cell volume.
    vol = abs(np.linalg.det(recip.kvecs))
    estimate = 4.0 / 3.0 * np.pi * energy_cutoff ** 1.5 / vol
    if estimate > 2 * max_dimension:
        raise SolverError(f"cutoff too large: about {int(estimate)} plane waves (max {max_dimension})")
    coords, vecs = lattice_points(recip, np.sqrt(energy_cutoff) + np.linalg.norm(K), include_origin=True)
    energy = np.sum((K + vecs) ** 2, axis=1)
    keep = energy <= energy_cutoff + slack
    coords, energy = coords[keep], energy[keep]
    if len(coords) > max_dimension:
        raise SolverError(f"cutoff too large: {len(coords)} plane waves (max {max_dimension})")
    order = np.lexsort(tuple(coords.T[::-1]) + (np.round(energy, 9),))
    return PlaneWaveBasis(lattice, K, kappa, coords[order].astype(int), energy_cutoff)


@dataclass
class HamiltonianMatrix:
    entries: np.ndarray
    z: float
    basis: PlaneWaveBasis
    potential: Optional[InvariantPotential] = None

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def norm(self) -> float:
        """Spectral norm (largest absolute eigenvalue)."""
        ev = np.linalg.eigvalsh(self.entries)
        return float(np.max(np.abs(ev)))

    def fingerprint(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.entries).tobytes()).hexdigest()[:16]


def _coefficient_lookup(indices: np.ndarray, pot: InvariantPotential) -> np.ndarray:
    """Matrix ``V_{m - m'}`` on the index set, via a dense lookup cube over differences."""
    n = len(indices)
    if not pot.coeffs:
        return np.zeros((n, n))
    diffs = indices[:, None, :] - indices[None, :, :]
    lo = diffs.reshape(-1, 3).min(axis=0)
    hi = diffs.reshape(-1, 3).max(axis=0)
    cube = np.zeros(tuple(hi - lo + 1))
    for m, v in pot.coeffs.items():
        pos = np.asarray(m) - lo
        if np.all(pos >= 0) and np.all(pos < cube.shape):
            cube[tuple(pos)] = v
    d = diffs - lo
    return cube[d[..., 0], d[..., 1], d[..., 2]]


def build_hamiltonian(basis: PlaneWaveBasis, pot: Optional[InvariantPotential], z: float) -> HamiltonianMatrix:
    """Diagonal ``|K + kappa + m . k|^2`` plus ``z V_{m - m'}`` off the diagonal."""
    kinetic = np.sum(basis.momenta ** 2, axis=1)
    h = np.diag(kinetic).astype(complex)
    if pot is not None and z != 0.0:
        v = _coefficient_lookup(basis.indices, pot)
        h = h + z * v
    return HamiltonianMatrix(h, float(z), basis, pot)


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    norm: float

    def clusters(self, tol: Optional[float] = None) -> List[Tuple[int, int]]:
        return cluster_ranges(self.eigenvalues, cluster_tolerance(self.norm) if tol is None else tol)

    def cluster_near(self, energy: float, tol: Optional[float] = None) -> Tuple[int, int]:
        """Index range ``[start, stop)`` of the cluster whose mean is closest to ``energy``."""
        ranges = self.clusters(tol)
        means = [abs(self.eigenvalues[a:b].mean() - energy) for a, b in ranges]
        return ranges[int(np.argmin(means))]


def cluster_tolerance(norm: float) -> float:
    return max(1e-7, 1e-6 * norm)


def cluster_ranges(values: np.ndarray, tol: float) -> List[Tuple[int, int]]:
    """Split ascending values into runs whose consecutive gaps are below ``tol``."""
    values = np.asarray(values)
    if len(values) == 0:
        return []
    cuts = np.flatnonzero(np.diff(values) >= tol) + 1
    edges = np.concatenate([[0], cuts, [len(values)]])
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column real and positive (first one on ties)."""
    if vecs.size == 0:
        return vecs
    mags = np.abs(vecs)
    idx = np.argmax(mags > mags.max(axis=0) * (1 - 1e-9), axis=0)
    lead = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(lead) / lead)[None, :]


def eigensolve_matrix(h: np.ndarray, check: bool = True) -> Spectrum:
    """Dense Hermitian eigendecomposition with residual and orthonormality checks."""
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] == 0:
        raise SolverError("eigensolve needs a non-empty square matrix")
    fp = hashlib.sha256(np.ascontiguousarray(h).tobytes()).hexdigest()[:16]
    if not np.all(np.isfinite(h)):
        raise SolverError(f"eigensolver input has non-finite entries (matrix {fp})")
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"eigensolver did not converge (matrix {fp}): {exc}") from None
    v = _fix_phases(v)
    norm = float(np.max(np.abs(w)))
    if check:
        scale = 1e-8 * max(norm, 1.0)
        resid = np.max(np.linalg.norm(h @ v - v * w, axis=0))
        ortho = np.max(np.abs(v.conj().T @ v - np.eye(len(w))))
        if not (resid <= scale and ortho <= 1e-8):
            raise SolverError(f"eigensolve check failed (matrix {fp}): residual {resid:.2e}, "
                              f"orthogonality {ortho:.2e}")
    return Spectrum(w, v, norm)


def eigensolve(H: HamiltonianMatrix) -> Spectrum:
    return eigensolve_matrix(H.entries)


@dataclass
class SectorSpectrum:
    omega: SectorLabel
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sector_basis: np.ndarray = field(repr=False)

    @property
    def full_vectors(self) -> np.ndarray:
        """Eigenvectors expressed in the plane-wave basis."""
        return self.sector_basis @ self.eigenvectors


def sector_basis(basis: PlaneWaveBasis, sub: AdmissibleSubgroup, omega: SectorLabel,
                 rank_tol: float = SECTOR_RANK_TOL) -> np.ndarray:
    """Orthonormal columns spanning the image of the character projector for ``omega``.

    Projected plane waves from different ``G_0``-orbits have disjoint support, so one
    projected representative per orbit, dropped when its norm is below ``rank_tol``
    relative to the largest, gives an orthonormal basis.
    """
    n = basis.dimension
    perms = [planewave_permutation(sub.element(j), basis.indices, basis.K, basis.recip) for j in sub.index_set]
    chars = np.array([np.conj(omega.character(j)) for j in sub.index_set])
    seen = np.zeros(n, dtype=bool)
    cols = []
    for i in range(n):
        if seen[i]:
            continue
        vec = np.zeros(n, dtype=complex)
        for perm, c in zip(perms, chars):
            vec[perm[i]] += c
            seen[perm[i]] = True
        cols.append(vec / sub.size)
    q = np.array(cols).T
    norms = np.linalg.norm(q, axis=0)
    keep = norms > rank_tol * (norms.max() if norms.size else 0.0)
    q = q[:, keep] / norms[keep]
    if q.shape[1] == 0:
        raise SolverError(f"sector empty at this cutoff: {omega}")
    return q


def sector_restrict(H: HamiltonianMatrix, sub: AdmissibleSubgroup, omega: SectorLabel,
                    q: Optional[np.ndarray] = None) -> SectorSpectrum:
    """Eigenpairs of ``H`` compressed to the ``omega`` sector (requires ``kappa = 0``)."""
    if np.any(H.basis.kappa != 0):
        raise SolverError("sector restriction is defined only at kappa = 0")
    if not np.allclose(H.basis.K, sub.K, atol=1e-12):
        raise SolverError("basis and subgroup are built at different K")
    if q is None:
        q = sector_basis(H.basis, sub, omega)
    hq = q.conj().T @ H.entries @ q
    spec = eigensolve_matrix(0.5 * (hq + hq.conj().T))
    return SectorSpectrum(omega, spec.eigenvalues, spec.eigenvectors, q)


@dataclass
class DispersionTable:
    points: np.ndarray
    energies: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        nb = self.energies.shape[1]
        buf.write(",".join(["k_x", "k_y", "k_z"] + [f"E_{i + 1}" for i in range(nb)]) + "\n")
        for p, e in zip(self.points, self.energies):
            buf.write(",".join(f"{v:.12g}" for v in list(p) + list(e)) + "\n")
        return buf.getvalue()


def dispersion_scan(lattice, pot: Optional[InvariantPotential], z: float, k_path: Sequence,
                    cutoff: Optional[float] = None, n_bands: int = 8, center=None,
                    threads: int = 1) -> DispersionTable:
    """Lowest ``n_bands`` eigenvalues at each path point.

    All points share the index set built around ``center`` (default: first path
    point); each point enters as the offset ``kappa = k - center``.
    """
    pts = np.atleast_2d(np.asarray(k_path, dtype=float))
    if pts.shape[1] != 3 or not np.all(np.isfinite(pts)):
        raise SolverError("k path must be finite 3-vectors")
    center = pts[0] if center is None else np.asarray(center, dtype=float)
    base = build_basis(lattice, center, energy_cutoff=cutoff)
    nb = min(n_bands, base.dimension)

    def bands(k):
        H = build_hamiltonian(base.with_kappa(k - center), pot, z)
        return np.linalg.eigvalsh(H.entries)[:nb]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(bands, pts))
    else:
        rows = [bands(k) for k in pts]
    return DispersionTable(pts, np.array(rows).reshape(len(pts), nb))
