"""
Lattice-periodic, point-group-invariant real potentials stored by Fourier coefficients.

A coefficient ``V_m`` multiplies the plane wave ``exp(i (m . k) . x)`` where ``m`` are
integer coordinates in the dual basis ``k_1, k_2, k_3``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from .lattice import Lattice, ReciprocalBasis, dual_basis, lattice_points
from .symmetry import GroupElement, octahedral_group

IntTriple = Tuple[int, int, int]

PRNG_NAME = "numpy.random.default_rng (PCG64)"
INVARIANCE_TOL = 1e-9


class PotentialError(ValueError):
    """Raised for non-invariant or malformed potentials."""


def _key(m) -> IntTriple:
    return tuple(int(v) for v in m)


def _group_stack(group) -> np.ndarray:
    return np.array([g.matrix for g in sorted(group)], dtype=float)


_OH_STACK = _group_stack(octahedral_group())


def orbit(m, recip: ReciprocalBasis, group: Optional[Iterable[GroupElement]] = None) -> List[IntTriple]:
    """Sorted integer dual coordinates of the point-group orbit of ``m . k``."""
    mats = _OH_STACK if group is None else _group_stack(group)
    images = mats @ recip.to_cartesian(m)
    coords = recip.to_dual(images)
    rounded = np.rint(coords)
    if np.max(np.abs(coords - rounded)) > 1e-9:
        raise PotentialError("group does not preserve dual lattice")
    return sorted({_key(c) for c in rounded.astype(int)})


def orbit_representative(m, recip: ReciprocalBasis) -> IntTriple:
    """Lexicographically smallest member of the orbit."""
    return orbit(m, recip)[0]


def orbits_by_norm(recip: ReciprocalBasis, count: int) -> List[List[IntTriple]]:
    """The ``count`` smallest-norm nontrivial orbits, ordered by norm then representative."""
    radius = float(np.max(np.linalg.norm(recip.kvecs, axis=1)))
    while True:
        coords, vecs = lattice_points(recip, radius)
        norms = np.linalg.norm(vecs, axis=1)
        seen, orbs = set(), []
        for m, nrm in zip(coords, norms):
            key = _key(m)
            if key in seen:
                continue
            orb = orbit(key, recip)
            seen.update(orb)
            orbs.append((round(float(nrm), 9), orb[0], orb))
        orbs.sort(key=lambda t: (t[0], t[1]))
        # Orbits strictly inside the enumerated ball are complete and correctly ordered.
        complete = [o for nrm, _, o in orbs if nrm < radius - 1e-9]
        if len(complete) >= count:
            return complete[:count]
        radius *= 1.6


@dataclass(frozen=True)
class InvariantPotential:
    """Finite Fourier series ``V(x) = sum_m V_m exp(i (m.k).x)`` with orbit-constant real ``V_m``."""

    lattice: Lattice
    coeffs: Mapping[IntTriple, float]
    seed: Optional[int] = None
    orbit_reps: Tuple[IntTriple, ...] = field(default=(), compare=False)

    def __post_init__(self):
        coeffs = {_key(m): float(v) for m, v in self.coeffs.items()}
        object.__setattr__(self, "coeffs", coeffs)
        reps = sorted({orbit_representative(m, self.recip) for m in coeffs})
        object.__setattr__(self, "orbit_reps", tuple(reps))
        self.validate()

    @property
    def recip(self) -> ReciprocalBasis:
        return dual_basis(self.lattice)

    @property
    def cutoff_norm(self) -> float:
        """Largest ``|m . k|`` in the support (0 for a constant potential)."""
        if not self.coeffs:
            return 0.0
        vecs = self.recip.to_cartesian(np.array(list(self.coeffs)))
        return float(np.max(np.linalg.norm(vecs, axis=1)))

    def __getitem__(self, m) -> float:
        return self.coeffs.get(_key(m), 0.0)

    def validate(self, tol: float = INVARIANCE_TOL) -> None:
        """Check orbit-constancy (which includes evenness, since ``-I`` is in the group)."""
        recip = self.recip
        done = set()
        for m, v in self.coeffs.items():
            if m in done:
                continue
            orb = orbit(m, recip)
            done.update(orb)
            vals = [self.coeffs.get(o, 0.0) for o in orb]
            if max(vals) - min(vals) > tol * max(1.0, abs(v)):
                raise PotentialError(f"potential not invariant on orbit of {list(orb[0])}: values {vals}")

    def evaluate(self, x) -> np.ndarray:
        """Complex values of the Fourier series at points ``x`` (shape (..., 3))."""
        x = np.asarray(x, dtype=float)
        if not self.coeffs:
            return np.zeros(x.shape[:-1], dtype=complex)
        ms = np.array(list(self.coeffs))
        vs = np.array(list(self.coeffs.values()))
        phases = x @ self.recip.to_cartesian(ms).T
        return np.exp(1j * phases) @ vs

    def scale(self, factor: float) -> "InvariantPotential":
        return InvariantPotential(self.lattice, {m: factor * v for m, v in self.coeffs.items()}, self.seed)

    def l1_norm(self) -> float:
        return float(sum(abs(v) for v in self.coeffs.values()))

    def to_json(self) -> dict:
        return {
            "lattice": self.lattice.name,
            "seed": self.seed,
            "prng": PRNG_NAME if self.seed is not None else None,
            "coeffs": [{"m": list(r), "v": self[r]} for r in self.orbit_reps],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def expand_orbits(lattice: Lattice, rep_values: Mapping[IntTriple, float]) -> Dict[IntTriple, float]:
    """Fill each orbit with its listed value; conflicting listings raise."""
    recip = dual_basis(lattice)
    out: Dict[IntTriple, float] = {}
    for m, v in rep_values.items():
        for o in orbit(m, recip):
            if o in out and abs(out[o] - v) > INVARIANCE_TOL * max(1.0, abs(v)):
                raise PotentialError(
                    f"potential not invariant on orbit of {list(orbit_representative(m, recip))}: "
                    f"values {out[o]} and {v}"
                )
            out[o] = float(v)
    return out


def from_json(data: dict) -> InvariantPotential:
    """Build a potential from the ``{"lattice", "seed", "coeffs": [{"m", "v"}]}`` layout."""
    try:
        lattice = Lattice.named(data["lattice"])
        reps = {_key(e["m"]): float(e["v"]) for e in data["coeffs"]}
    except (KeyError, TypeError) as exc:
        raise PotentialError(f"malformed potential file: {exc}") from None
    if any(len(m) != 3 for m in reps):
        raise PotentialError("malformed potential file: multi-indices must have 3 entries")
    return InvariantPotential(lattice, expand_orbits(lattice, reps), data.get("seed"))


def load(path) -> InvariantPotential:
    with open(path) as fh:
        return from_json(json.load(fh))


def symmetrize(raw: Mapping, lattice) -> InvariantPotential:
    """Group-average a finite real Fourier series: each orbit gets the mean of its raw values."""
    if isinstance(lattice, str):
        lattice = Lattice.named(lattice)
    recip = dual_basis(lattice)
    raw = {_key(m): float(v) for m, v in raw.items()}
    out: Dict[IntTriple, float] = {}
    for m in raw:
        if m in out:
            continue
        orb = orbit(m, recip)
        mean = sum(raw.get(o, 0.0) for o in orb) / len(orb)
        for o in orb:
            out[o] = mean
    out = {m: v for m, v in out.items() if v != 0.0}
    return InvariantPotential(lattice, out)


def zero_potential(lattice) -> InvariantPotential:
    if isinstance(lattice, str):
        lattice = Lattice.named(lattice)
    return InvariantPotential(lattice, {})


def random_invariant(seed: int, lattice_name: str, n_orbits: int = 3, amplitude: float = 1.0) -> InvariantPotential:
    """Deterministic random invariant potential.

    ``V_{0,0,0}`` is drawn first, then one value per orbit for the ``n_orbits``
    smallest-norm nontrivial orbits, all uniform on ``[-amplitude, amplitude]``.
    """
    if n_orbits < 1:
        raise PotentialError("n_orbits must be at least 1")
    lattice = Lattice.named(lattice_name)
    rng = np.random.default_rng(seed)
    orbs = orbits_by_norm(dual_basis(lattice), n_orbits)
    vals = rng.uniform(-amplitude, amplitude, size=n_orbits + 1)
    coeffs: Dict[IntTriple, float] = {}
    if vals[0] != 0.0:
        coeffs[(0, 0, 0)] = float(vals[0])
    for orb, v in zip(orbs, vals[1:]):
        if v != 0.0:
            for o in orb:
                coeffs[o] = float(v)
    return InvariantPotential(lattice, coeffs, seed)


@dataclass
class GenericityReport:
    """Outcome of checking that every generically distinct pair of slopes is distinct."""

    passed: bool
    margin: float
    slopes: Dict[str, float]
    groups: List[List[str]]
    threshold: float

    def to_json(self) -> dict:
        return {"passed": self.passed, "margin": self.margin, "slopes": self.slopes,
                "groups": self.groups, "threshold": self.threshold}


def genericity_check(pot: InvariantPotential, lattice_name: str, K, threshold: float = 1e-9) -> GenericityReport:
    """Evaluate the first-order slopes and compare across generic groups.

    ``margin`` is the smallest slope gap between sectors that differ for a
    generic potential; the check passes when it exceeds ``threshold``.
    """
    from .effective import first_order_slope, generic_groups
    from .symmetry import admissible_subgroup

    sub = admissible_subgroup(lattice_name, K)
    groups = generic_groups(sub)
    slopes = {w: first_order_slope(sub, w, pot) for w in sub.sectors}
    reps = [[slopes[w] for w in grp] for grp in groups]
    margin = np.inf
    for a in range(len(reps)):
        for b in range(a + 1, len(reps)):
            margin = min(margin, abs(reps[a][0] - reps[b][0]))
    if len(groups) == 1:
        margin = np.inf
    margin = float(margin)
    return GenericityReport(
        passed=bool(margin > threshold),
        margin=margin if np.isfinite(margin) else None,
        slopes={str(w): s for w, s in slopes.items()},
        groups=[[str(w) for w in grp] for grp in groups],
        threshold=threshold,
    )
