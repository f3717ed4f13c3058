"""
First-order splitting of the degenerate level at a zone vertex and the effective
``k.p`` matrix on each degenerate cluster.

For a cluster spanned by eigenvectors ``phi_1..phi_m`` of ``H_z`` at ``K``, the
eigenvalues near ``K + kappa`` are ``mu + eig(M(kappa)) + O(|kappa|^2)`` with
``M(kappa) = -2i kappa . G`` and ``G_{jl} = <phi_j, grad phi_l>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from .lattice import Lattice
from .planewave import (
    PlaneWaveBasis,
    SolverError,
    build_basis,
    build_hamiltonian,
    cluster_tolerance,
    eigensolve,
    sector_basis,
    sector_restrict,
)
from .potential import InvariantPotential, orbit_representative
from .symmetry import (
    R,
    AdmissibleSubgroup,
    SectorLabel,
    admissible_subgroup,
    m_of_j,
    planewave_permutation,
)

SLOPE_TOL = 1e-9
GRADIENT_ZERO_TOL = 1e-8  # relative to |K|
WEYL_POLY_TOL = 1e-8
SEPARATION_RATIO = 0.1

#: The cubic's linear coefficient as derived from the effective matrix, and the
#: variant printed in the general definition; only the first is used.
WEYL_POLYNOMIAL_NOTE = (
    "Weyl cubic uses mu^3 - 4|alpha|^2 |kappa|^2 mu + 16 Im(alpha^3) k1 k2 k3; "
    "the variant with 4|alpha|^3 kappa^2 in the linear term is not used"
)


class MultiplicityAnomaly(RuntimeError):
    """Observed cluster multiplicity differs from the predicted one (candidate exceptional z)."""

    def __init__(self, message: str, details: Optional[dict] = None):
        super().__init__(message)
        self.details = details or {}


# ---------------------------------------------------------------------------
# first order splitting


def first_order_slope(sub: AdmissibleSubgroup, omega: SectorLabel, pot: InvariantPotential) -> float:
    """``sum_j omega^j V_{m(j)}``: derivative in ``z`` of the sector eigenvalue at ``z = 0``."""
    total = 0j
    for j in sub.index_set:
        total += omega.character(j) * pot[m_of_j(sub, j)]
    scale = max(1.0, pot.l1_norm())
    if abs(total.imag) > 1e-12 * scale:
        raise ValueError(f"potential not invariant: slope {total} has imaginary part")
    return float(total.real)


def slope_coefficients(sub: AdmissibleSubgroup, omega: SectorLabel) -> Dict[Tuple[int, ...], complex]:
    """Slope as a linear form in the orbit values: orbit representative -> summed character."""
    recip = sub.recip
    out: Dict[Tuple[int, ...], complex] = {}
    for j in sub.index_set:
        rep = orbit_representative(m_of_j(sub, j), recip)
        out[rep] = out.get(rep, 0j) + omega.character(j)
    return {k: v for k, v in out.items() if abs(v) > 1e-12}


def generic_groups(sub: AdmissibleSubgroup) -> List[List[SectorLabel]]:
    """Partition of the sectors by identical slope forms.

    Sectors in one group share a slope for every invariant potential; sectors in
    different groups have different slopes for a generic one.
    """
    forms = [(w, slope_coefficients(sub, w)) for w in sub.sectors]
    groups: List[List[SectorLabel]] = []
    keys: List[dict] = []
    for w, f in forms:
        for g, k in zip(groups, keys):
            if set(k) == set(f) and all(abs(k[r] - f[r]) < 1e-9 for r in f):
                g.append(w)
                break
        else:
            groups.append([w])
            keys.append(f)
    return groups


@dataclass
class SplittingTable:
    slopes: Dict[SectorLabel, float]
    groups: List[List[SectorLabel]]
    generic: List[List[SectorLabel]]

    @property
    def multiplicities(self) -> List[int]:
        return [len(g) for g in self.groups]

    def group_of(self, omega: SectorLabel) -> List[SectorLabel]:
        return next(g for g in self.groups if omega in g)

    def to_json(self) -> dict:
        return {
            "slopes": [{"omega": str(w), "U": w.to_json(), "slope": s} for w, s in self.slopes.items()],
            "groups": [{"sectors": [str(w) for w in g], "multiplicity": len(g),
                        "slope": float(np.mean([self.slopes[w] for w in g]))} for g in self.groups],
            "generic_groups": [[str(w) for w in g] for g in self.generic],
        }

    def to_text(self) -> str:
        lines = [f"{'sector':<20}{'slope':>16}{'group':>8}"]
        for w, s in self.slopes.items():
            gi = next(i for i, g in enumerate(self.groups) if w in g)
            lines.append(f"{str(w):<20}{s:>16.10f}{gi:>8d}")
        return "\n".join(lines) + "\n"


def splitting_table(sub: AdmissibleSubgroup, pot: InvariantPotential, tol: float = SLOPE_TOL) -> SplittingTable:
    """Slopes per sector, grouped by equality (ascending slope order)."""
    slopes = {w: first_order_slope(sub, w, pot) for w in sub.sectors}
    scale = max(1.0, pot.l1_norm())
    order = sorted(sub.sectors, key=lambda w: slopes[w])
    groups: List[List[SectorLabel]] = []
    for w in order:
        if groups and abs(slopes[w] - slopes[groups[-1][-1]]) <= tol * scale:
            groups[-1].append(w)
        else:
            groups.append([w])
    return SplittingTable(slopes, groups, generic_groups(sub))


def _sector_eigenvalue(H, sub, omega, target: float, window: float) -> float:
    spec = sector_restrict(H, sub, omega)
    d = np.abs(spec.eigenvalues - target)
    close = np.flatnonzero(d < window)
    if len(close) != 1:
        raise SolverError(f"sector eigenvalue tracking ambiguous in {omega}: {len(close)} candidates")
    return float(spec.eigenvalues[close[0]])


def numeric_slope(lattice, pot: InvariantPotential, K, omega: SectorLabel, h: float = 1e-4,
                  sub: Optional[AdmissibleSubgroup] = None, cutoff: Optional[float] = None) -> float:
    """Central difference ``(mu(h) - mu(-h)) / 2h`` of the sector eigenvalue near ``|K|^2``."""
    if not 0 < h <= 1e-2:
        raise ValueError("step h must lie in (0, 1e-2]")
    if sub is None:
        sub = admissible_subgroup(lattice, K)
    basis = build_basis(sub.lattice, sub.K, energy_cutoff=cutoff)
    k2 = float(sub.K @ sub.K)
    window = 0.5 * _level_spacing(basis)
    vals = []
    for zz in (h, -h):
        H = build_hamiltonian(basis, pot, zz)
        vals.append(_sector_eigenvalue(H, sub, omega, k2, window))
    return (vals[0] - vals[1]) / (2 * h)


def _level_spacing(basis: PlaneWaveBasis) -> float:
    """Gap from ``|K|^2`` to the next free kinetic level."""
    kin = np.sum(basis.momenta ** 2, axis=1)
    k2 = float(basis.K @ basis.K)
    others = kin[np.abs(kin - k2) > 1e-9 * max(1.0, k2)]
    return float(np.min(np.abs(others - k2)))


# ---------------------------------------------------------------------------
# degenerate clusters


PHASE_MODES = ("largest", "rotation", "conjugation")
DEFAULT_PHASE_MODE = {("bcc", "P"): "rotation", ("fcc", "W"): "conjugation"}
#: Sector (as character numerators) of the first vector in a rotation/conjugation chain.
CHAIN_START = {("bcc", "P"): (1, 0), ("fcc", "W"): (1,)}


@dataclass
class ClusterBasis:
    """Orthonormal eigenvectors of one degenerate cluster, one per sector."""

    vectors: np.ndarray  # plane-wave coefficients, one column per eigenvector
    sectors: List[SectorLabel]
    mu: float
    basis: PlaneWaveBasis
    sub: AdmissibleSubgroup
    phase_mode: str
    gap: float
    width: float

    @property
    def multiplicity(self) -> int:
        return self.vectors.shape[1]


def _point_label(sub: AdmissibleSubgroup) -> Optional[Tuple[str, str]]:
    from .lattice import NAMED_POINTS

    for key, vec in NAMED_POINTS.items():
        if key[0] == sub.lattice.name and np.allclose(vec, sub.K, atol=1e-12):
            return key
    return None


def _largest_real(v: np.ndarray) -> np.ndarray:
    mags = np.abs(v)
    i = int(np.argmax(mags > mags.max() * (1 - 1e-9)))
    return v * (abs(v[i]) / v[i])


def _apply_group(g, v: np.ndarray, basis: PlaneWaveBasis) -> np.ndarray:
    perm = planewave_permutation(g, basis.indices, basis.K, basis.recip)
    out = np.zeros_like(v)
    out[perm] = v
    return out


def sector_of(v: np.ndarray, sub: AdmissibleSubgroup, basis: PlaneWaveBasis, tol: float = 1e-8) -> Optional[SectorLabel]:
    """Sector containing ``v``, or ``None`` if ``v`` is not a joint eigenvector of the generators."""
    nums = []
    for gen, n in zip(sub.generators, sub.orders):
        gv = _apply_group(gen, v, basis)
        ratio = np.vdot(v, gv) / np.vdot(v, v)
        if np.linalg.norm(gv - ratio * v) > tol * np.linalg.norm(v):
            return None
        p = int(np.rint(np.angle(ratio) / (2 * np.pi) * n)) % n
        nums.append(p)
    return SectorLabel.from_numerators(nums, sub.orders)


def degenerate_cluster_basis(lattice, pot: InvariantPotential, z: float, K,
                             omega_group: Sequence[SectorLabel], sub: Optional[AdmissibleSubgroup] = None,
                             phase_mode: Optional[str] = None, cutoff: Optional[float] = None,
                             table: Optional[SplittingTable] = None) -> ClusterBasis:
    """Eigenvectors of ``H_z`` at ``K`` for the cluster predicted by ``omega_group``.

    Phase conventions: ``largest`` makes the largest coefficient of each vector real
    positive; ``rotation`` takes ``phi_1`` from the first sector and sets
    ``phi_{i+1} = r_* phi_i``; ``conjugation`` sets ``phi_2 = T phi_1`` where
    ``T f(x) = conj(f(-x))`` conjugates the plane-wave coefficients.
    """
    if sub is None:
        sub = admissible_subgroup(lattice, K)
    label = _point_label(sub)
    if phase_mode is None:
        phase_mode = DEFAULT_PHASE_MODE.get(label, "largest")
    if phase_mode not in PHASE_MODES:
        raise ValueError(f"unknown phase mode {phase_mode!r}")
    if table is None:
        table = splitting_table(sub, pot)
    omega_group = list(omega_group)
    basis = build_basis(sub.lattice, sub.K, energy_cutoff=cutoff)
    H = build_hamiltonian(basis, pot, z)
    spec = eigensolve(H)
    k2 = float(sub.K @ sub.K)
    predicted = k2 + z * float(np.mean([table.slopes[w] for w in omega_group]))
    tol = cluster_tolerance(spec.norm)
    sector_specs = {w: sector_restrict(H, sub, w) for w in omega_group}
    # The cluster is the level shared by every sector of the group that lies nearest the prediction.
    lam = None
    for cand in sorted(sector_specs[omega_group[0]].eigenvalues, key=lambda e: abs(e - predicted)):
        if all(np.min(np.abs(ss.eigenvalues - cand)) < tol for ss in sector_specs.values()):
            lam = float(cand)
            break
    if lam is None:
        raise MultiplicityAnomaly(f"multiplicity anomaly at z={z}: no level common to sectors "
                                  f"{[str(w) for w in omega_group]}", {"z": z})
    a, b = spec.cluster_near(lam)
    vals = spec.eigenvalues
    mult = b - a
    width = float(vals[b - 1] - vals[a])
    gap = float(min(vals[a] - vals[a - 1] if a > 0 else np.inf, vals[b] - vals[b - 1] if b < len(vals) else np.inf))
    details = {"z": z, "predicted_multiplicity": len(omega_group), "observed_multiplicity": mult,
               "cluster": vals[a:b].tolist(), "gap": gap, "first_order_prediction": predicted}
    if mult != len(omega_group):
        raise MultiplicityAnomaly(f"multiplicity anomaly at z={z}: observed {mult}, predicted {len(omega_group)}", details)
    mu = float(vals[a:b].mean())
    if width > SEPARATION_RATIO * gap:
        raise MultiplicityAnomaly(f"multiplicity anomaly at z={z}: cluster not separated (width {width:.3g}, gap {gap:.3g})", details)

    sector_vecs = {}
    for w, ss in sector_specs.items():
        i = int(np.argmin(np.abs(ss.eigenvalues - mu)))
        sector_vecs[w] = _largest_real(ss.full_vectors[:, i])

    if phase_mode == "largest":
        vecs = [sector_vecs[w] for w in omega_group]
        sectors = list(omega_group)
    else:
        first = omega_group[0]
        start = CHAIN_START.get(label)
        if start is not None and sub.sector(start) in omega_group:
            first = sub.sector(start)
        vecs = [sector_vecs[first]]
        for _ in range(len(omega_group) - 1):
            if phase_mode == "rotation":
                vecs.append(_apply_group(R, vecs[-1], basis))
            else:
                vecs.append(np.conj(vecs[-1]))
        sectors = []
        for v in vecs:
            w = sector_of(v, sub, basis)
            if w is None or w not in omega_group or w in sectors:
                raise MultiplicityAnomaly(f"phase construction {phase_mode!r} left the predicted sectors", details)
            sectors.append(w)
            resid = np.linalg.norm(H.entries @ v - mu * v)
            if resid > 1e-6 * max(1.0, spec.norm):
                raise MultiplicityAnomaly(f"phase construction {phase_mode!r} did not give an eigenvector (residual {resid:.2e})", details)
    return ClusterBasis(np.array(vecs).T, sectors, mu, basis, sub, phase_mode, gap, width)


# ---------------------------------------------------------------------------
# effective matrix


def gradient_elements(vectors: np.ndarray, basis: PlaneWaveBasis) -> np.ndarray:
    """``G[j, l] = <phi_j, grad phi_l> = sum_m conj(c_jm) c_lm i p_m`` with ``p_m`` the momenta."""
    c = np.asarray(vectors)
    p = basis.momenta
    G = 1j * np.einsum("mj,ml,ma->jla", c.conj(), c, p)
    anti = np.max(np.abs(G + np.conj(np.swapaxes(G, 0, 1)))) if G.size else 0.0
    if anti > 1e-10 * max(1.0, np.max(np.abs(p))):
        raise SolverError(f"gradient block fails skew-Hermitian symmetry ({anti:.2e})")
    return G


@dataclass
class EffectiveMatrix:
    G: np.ndarray
    mu: float
    sectors: List[SectorLabel]
    provenance: str
    K: np.ndarray

    @property
    def dimension(self) -> int:
        return self.G.shape[0]

    def matrix(self, kappa) -> np.ndarray:
        """``M(kappa) = -2i sum_a kappa_a G[:, :, a]`` (Hermitian)."""
        return -2j * np.tensordot(self.G, np.asarray(kappa, dtype=float), axes=([2], [0]))

    def max_gradient(self) -> float:
        return float(np.max(np.abs(self.G))) if self.G.size else 0.0


def effective_matrix(cb: ClusterBasis) -> EffectiveMatrix:
    G = gradient_elements(cb.vectors, cb.basis)
    return EffectiveMatrix(G, cb.mu, cb.sectors, f"phase={cb.phase_mode}; sectors={[str(w) for w in cb.sectors]}", cb.sub.K)


def sector_constraint_residual(eff: EffectiveMatrix, sub: AdmissibleSubgroup) -> float:
    """Max of ``|g^j G_{jl} - conj(omega^j) omega'^j G_{jl}|`` over ``j`` and pairs of sectors."""
    worst = 0.0
    for j in sub.index_set:
        g = sub.element(j).matrix
        for a, wa in enumerate(eff.sectors):
            for b, wb in enumerate(eff.sectors):
                lam = np.conj(wa.character(j)) * wb.character(j)
                worst = max(worst, float(np.max(np.abs(g @ eff.G[a, b] - lam * eff.G[a, b]))))
    return worst


def weyl_polynomial(alpha: complex, kappa) -> np.ndarray:
    """Coefficients (descending) of ``mu^3 - 4|alpha|^2 |kappa|^2 mu + 16 Im(alpha^3) k1 k2 k3``."""
    k = np.asarray(kappa, dtype=float)
    return np.array([1.0, 0.0, -4 * abs(alpha) ** 2 * (k @ k), 16 * (alpha ** 3).imag * k[0] * k[1] * k[2]])


def characteristic_coefficients(M: np.ndarray) -> np.ndarray:
    """Coefficients (descending) of ``det(mu I - M)`` for a 3x3 matrix, from traces and the determinant."""
    t1 = np.trace(M)
    t2 = np.trace(M @ M)
    e2 = 0.5 * (t1 ** 2 - t2)
    return np.array([1.0, -t1, e2, -np.linalg.det(M)])


def halton_directions(n: int) -> np.ndarray:
    """``n`` unit vectors from an unscrambled 2-D Halton sequence mapped onto the sphere."""
    u = qmc.Halton(d=2, scramble=False).random(n + 1)[1:]
    cos_t = 2 * u[:, 0] - 1
    sin_t = np.sqrt(1 - cos_t ** 2)
    phi = 2 * np.pi * u[:, 1]
    return np.column_stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])


@dataclass
class DegeneracyReport:
    lattice: str
    K: np.ndarray
    z: float
    mu: float
    multiplicity: int
    sectors: List[SectorLabel]
    classification: str
    alpha: Optional[complex] = None
    velocity: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)
    fit: Optional[dict] = None

    @property
    def label(self) -> str:
        if self.classification == "quadratic":
            return f"quadratic({self.multiplicity})"
        return self.classification

    def to_json(self) -> dict:
        out = {
            "lattice": self.lattice,
            "K": [float(v) for v in self.K],
            "z": self.z,
            "mu": self.mu,
            "multiplicity": self.multiplicity,
            "sectors": [str(w) for w in self.sectors],
            "classification": self.label,
            "diagnostics": self.diagnostics,
            "metadata": {"weyl_polynomial": WEYL_POLYNOMIAL_NOTE},
        }
        if self.alpha is not None:
            out["alpha"] = {"re": self.alpha.real, "im": self.alpha.imag, "abs": abs(self.alpha),
                            "im_alpha_cubed": (self.alpha ** 3).imag}
        if self.velocity is not None:
            out["velocity"] = [float(v) for v in self.velocity]
        if self.fit is not None:
            out["fit"] = self.fit
        return out


def _axis_support(v: np.ndarray, tol: float) -> Optional[int]:
    big = np.flatnonzero(np.abs(v) > tol)
    return int(big[0]) if len(big) == 1 else None


def classify(eff: EffectiveMatrix, z: float, lattice_name: str, n_check: int = 20) -> DegeneracyReport:
    """Match the gradient block against the quadratic, valley and three-fold Weyl templates."""
    K = np.asarray(eff.K, dtype=float)
    knorm = float(np.linalg.norm(K))
    tol = GRADIENT_ZERO_TOL * max(knorm, 1.0)
    m = eff.dimension
    G = eff.G
    diag = {"max_gradient": eff.max_gradient(), "zero_tol": tol, "provenance": eff.provenance}
    base = dict(lattice=lattice_name, K=K, z=z, mu=eff.mu, multiplicity=m, sectors=eff.sectors)
    if eff.max_gradient() < tol:
        return DegeneracyReport(classification="quadratic", diagnostics=diag, **base)
    diag_max = max(float(np.max(np.abs(G[i, i]))) for i in range(m))
    diag["max_diagonal"] = diag_max
    if diag_max > tol:
        diag["reason"] = "nonzero diagonal gradient"
        return DegeneracyReport(classification="unclassified", diagnostics=diag, **base)
    if m == 2:
        axis = _axis_support(G[0, 1], tol)
        if axis is None:
            diag["reason"] = "off-diagonal gradient not along a single axis"
            return DegeneracyReport(classification="unclassified", diagnostics=diag, **base)
        alpha = complex(G[0, 1][axis])
        v = np.zeros(3)
        v[axis] = 2 * abs(alpha)
        return DegeneracyReport(classification="valley", alpha=alpha, velocity=v, diagnostics=diag, **base)
    if m == 3:
        pattern = [((0, 1), 2), ((0, 2), 1), ((1, 2), 0)]
        if any(_axis_support(G[a, b], tol) != ax for (a, b), ax in pattern):
            diag["reason"] = "gradient block does not have the Weyl axis pattern"
            return DegeneracyReport(classification="unclassified", diagnostics=diag, **base)
        alpha = complex(G[0, 1][2])
        beta = complex(G[0, 2][1])
        gamma = complex(G[1, 2][0])
        diag["relation_residual"] = max(abs(beta + np.conj(alpha)), abs(gamma - alpha))
        if diag["relation_residual"] > tol:
            diag["reason"] = "entries violate G13 = -conj(G12), G23 = G12"
            return DegeneracyReport(classification="unclassified", alpha=alpha, diagnostics=diag, **base)
        err = 0.0
        for kappa in 0.1 * max(knorm, 1.0) * halton_directions(n_check):
            got = characteristic_coefficients(eff.matrix(kappa))
            want = weyl_polynomial(alpha, kappa)
            scale = np.array([1.0, 1.0, 4 * abs(alpha) ** 2 * (kappa @ kappa), 16 * abs(alpha) ** 3 * np.linalg.norm(kappa) ** 3])
            err = max(err, float(np.max(np.abs(got - want) / scale)))
        diag["polynomial_relative_error"] = err
        diag["im_alpha_cubed"] = (alpha ** 3).imag
        if err > WEYL_POLY_TOL:
            diag["reason"] = "characteristic polynomial does not match the Weyl cubic"
            return DegeneracyReport(classification="unclassified", alpha=alpha, diagnostics=diag, **base)
        return DegeneracyReport(classification="weyl3", alpha=alpha, diagnostics=diag, **base)
    diag["reason"] = f"no template for multiplicity {m}"
    return DegeneracyReport(classification="unclassified", diagnostics=diag, **base)


# ---------------------------------------------------------------------------
# validation against the full operator


def kappa_samples(K, n_mag: int = 5, n_dir: int = 20, lo: float = 1e-3, hi: float = 10 ** -1.5):
    """Log-spaced magnitudes (relative to ``|K|``) times Halton directions."""
    knorm = float(np.linalg.norm(K))
    mags = np.logspace(np.log10(lo), np.log10(hi), n_mag) * knorm
    return mags, halton_directions(n_dir)


def validate_effective(cb: ClusterBasis, eff: EffectiveMatrix, pot: InvariantPotential, z: float,
                       n_mag: int = 5, n_dir: int = 20, lo: float = 1e-3, hi: float = 10 ** -1.5) -> dict:
    """Fit ``max_dir |E_full(K + kappa) - (mu + eig M(kappa))| ~ C |kappa|^p``.

    The cluster occupies the same positions in the sorted spectrum at ``kappa``
    as at ``kappa = 0``. A sample is excluded (and flagged) when a neighbouring
    eigenvalue is closer to a predicted value than the captured one.
    """
    basis = cb.basis
    a, b = eigensolve(build_hamiltonian(basis, pot, z)).cluster_near(cb.mu)
    if b - a != cb.multiplicity:
        raise MultiplicityAnomaly(f"cluster at mu={cb.mu} has changed multiplicity")
    mags, dirs = kappa_samples(basis.K, n_mag, n_dir, lo, hi)
    residuals, flagged = [], 0
    for r in mags:
        worst = 0.0
        for d in dirs:
            kappa = r * d
            full = np.linalg.eigvalsh(build_hamiltonian(basis.with_kappa(kappa), pot, z).entries)
            pred = cb.mu + np.linalg.eigvalsh(eff.matrix(kappa))
            got = full[a:b]
            dev = np.abs(got - pred)
            neighbours = [full[i] for i in (a - 1, b) if 0 <= i < len(full)]
            if any(np.min(np.abs(pred - nb)) < np.max(dev) for nb in neighbours):
                flagged += 1
                continue
            worst = max(worst, float(np.max(dev)))
        residuals.append(worst)
    residuals = np.array(residuals)
    ok = residuals > 0
    if ok.sum() >= 2:
        p = float(np.polyfit(np.log(mags[ok]), np.log(residuals[ok]), 1)[0])
    else:
        p = float("nan")
    return {"magnitudes": mags.tolist(), "residuals": residuals.tolist(), "exponent": p,
            "excluded_samples": flagged}


# ---------------------------------------------------------------------------
# pipeline


def analyse_point(lattice, K, pot: InvariantPotential, z: float, cutoff: Optional[float] = None,
                  validate: bool = True, sub: Optional[AdmissibleSubgroup] = None) -> Tuple[SplittingTable, List[DegeneracyReport]]:
    """Splitting table plus one report per degenerate group at coupling ``z``.

    Raises :class:`MultiplicityAnomaly` if any cluster disagrees with the prediction.
    """
    if sub is None:
        sub = admissible_subgroup(lattice, K)
    table = splitting_table(sub, pot)
    reports = []
    for grp in table.groups:
        if len(grp) < 2:
            continue
        cb = degenerate_cluster_basis(sub.lattice, pot, z, sub.K, grp, sub=sub, cutoff=cutoff, table=table)
        eff = effective_matrix(cb)
        rep = classify(eff, z, sub.lattice.name)
        rep.diagnostics["sector_constraint_residual"] = sector_constraint_residual(eff, sub)
        rep.diagnostics["cluster_width"] = cb.width
        rep.diagnostics["cluster_gap"] = cb.gap
        if validate:
            rep.fit = validate_effective(cb, eff, pot, z)
        reports.append(rep)
    return table, reports
