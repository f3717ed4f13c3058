"""
Finite-dimensional tools for analytic families: gcd degrees from generalized
Sylvester matrices, root-multiplicity profiles, contour-integral root extraction,
Riesz projectors and eigenvalue-branch continuation for Hermitian families.

Polynomial coefficient arrays are stored in ascending order (constant term first).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P

PROFILE_TOLS = (1e-8, 1e-9, 1e-10, 1e-11, 1e-12)
GRAZE_TOL = 1e-8


class ProfileError(ValueError):
    """Raised when the gcd chain is not numerically well determined."""


class ContourError(ValueError):
    """Raised for contours that meet or nearly meet the roots/spectrum."""


@dataclass(frozen=True)
class MonicPolynomial:
    """``x^n + a_{n-1} x^{n-1} + ... + a_0``; ``lower`` holds ``a_0..a_{n-1}``."""

    lower: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=complex).ravel())

    @classmethod
    def from_roots(cls, roots) -> "MonicPolynomial":
        return cls(P.polyfromroots(np.asarray(roots, dtype=complex))[:-1])

    @classmethod
    def from_coefficients(cls, coeffs) -> "MonicPolynomial":
        """Normalize an ascending coefficient array by its leading entry."""
        c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "b")
        if len(c) < 2:
            raise ValueError("polynomial must have degree at least 1")
        return cls(c[:-1] / c[-1])

    @property
    def degree(self) -> int:
        return len(self.lower)

    @property
    def coeffs(self) -> np.ndarray:
        return np.concatenate([self.lower, [1.0]])

    def __call__(self, x):
        return P.polyval(x, self.coeffs)

    def derivative(self, k: int = 1) -> np.ndarray:
        return P.polyder(self.coeffs, k)


def _as_coeffs(a) -> np.ndarray:
    if isinstance(a, MonicPolynomial):
        return a.coeffs
    c = np.trim_zeros(np.asarray(a, dtype=complex).ravel(), "b")
    if len(c) == 0:
        raise ValueError("polynomials must be nonzero")
    return c


@dataclass
class SylvesterBlock:
    polys: List[np.ndarray]
    degrees: List[int]
    matrix: np.ndarray

    @property
    def n(self) -> int:
        return sum(self.degrees)


def generalized_sylvester(*polys) -> SylvesterBlock:
    """Matrix of ``(Q_1..Q_m) -> sum_j A_j Q_j`` with ``deg Q_j < n - n_j`` and ``n = sum n_j``.

    Its rank is ``n - deg gcd(A_1, ..., A_m)``.
    """
    if len(polys) < 2:
        raise ValueError("need at least two polynomials")
    cs = [_as_coeffs(a) for a in polys]
    degs = [len(c) - 1 for c in cs]
    n = sum(degs)
    cols = []
    for c, d in zip(cs, degs):
        for s in range(n - d):
            col = np.zeros(n, dtype=complex)
            col[s:s + d + 1] = c
            cols.append(col)
    mat = np.array(cols).T if cols else np.zeros((n, 0), dtype=complex)
    return SylvesterBlock(cs, degs, mat)


def numeric_rank(matrix, rel_tol: float = 1e-10) -> int:
    """Number of singular values above ``rel_tol`` times the largest."""
    if not 0 < rel_tol <= 1e-3:
        raise ValueError("rel_tol must lie in (0, 1e-3]")
    m = np.asarray(matrix)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def gcd_degree(*polys, rel_tol: float = 1e-10) -> int:
    block = generalized_sylvester(*polys)
    return block.n - numeric_rank(block.matrix, rel_tol)


@dataclass
class MultiplicityProfile:
    d: List[int]  # d[0] = n, d[j] = deg gcd(A, A', ..., A^(j))
    rho: List[int]  # rho[j - 1] = number of distinct roots of multiplicity exactly j

    def as_dict(self) -> dict:
        return {j + 1: r for j, r in enumerate(self.rho) if r}


def _normalized(c: np.ndarray) -> np.ndarray:
    return c / np.max(np.abs(c))


def multiplicity_profile(A, tols: Sequence[float] = PROFILE_TOLS) -> MultiplicityProfile:
    """Root-multiplicity counts from the degrees of ``gcd(A, A', ..., A^(j))``.

    Each gcd degree is certified by requiring the same Sylvester rank at every
    tolerance in ``tols``.
    """
    if not isinstance(A, MonicPolynomial):
        A = MonicPolynomial.from_coefficients(A)
    n = A.degree
    chain = [_normalized(A.coeffs)]
    d = [n]
    for j in range(1, n + 1):
        chain.append(_normalized(A.derivative(j)))
        if d[-1] == 0:
            d.append(0)
            continue
        block = generalized_sylvester(*chain)
        s = np.linalg.svd(block.matrix, compute_uv=False)
        ranks = {int(np.sum(s > t * s[0])) for t in tols}
        if len(ranks) != 1:
            raise ProfileError(f"ill-conditioned profile: rank of gcd chain {j} varies over tolerances {sorted(ranks)}")
        d.append(block.n - ranks.pop())
    d.append(0)  # d_{n+1}
    rho = [(d[j - 1] - d[j]) - (d[j] - d[j + 1]) for j in range(1, n + 1)]
    if any(r < 0 for r in rho) or sum(j * r for j, r in enumerate(rho, start=1)) != n:
        raise ProfileError(f"ill-conditioned profile: inconsistent gcd chain {d}")
    return MultiplicityProfile(d[: n + 1], rho)


def residue_root(A, center: complex, radius: float, m: int, n0: int = 256, tol: float = 1e-10,
                 max_nodes: int = 1 << 16) -> complex:
    """Root of multiplicity ``m`` inside the circle, as ``(1 / 2 pi i m) oint z A'(z) / A(z) dz``.

    With several enclosed roots totalling ``m`` this returns their mean.
    """
    if not isinstance(A, MonicPolynomial):
        A = MonicPolynomial.from_coefficients(A)
    dA = A.derivative()

    def integrals(n):
        theta = 2 * np.pi * np.arange(n) / n
        w = radius * np.exp(1j * theta)
        zeta = center + w
        vals = A(zeta)
        if np.min(np.abs(vals)) <= 1e-12:
            raise ContourError("polynomial vanishes on the contour")
        ratio = P.polyval(zeta, dA) / vals * w
        return np.mean(ratio), np.mean(zeta * ratio)

    n = n0
    wind, first = integrals(n)
    while True:
        n *= 2
        wind2, first2 = integrals(n)
        if abs(first2 - first) < tol * max(1.0, abs(first2)) or n >= max_nodes:
            wind, first = wind2, first2
            break
        wind, first = wind2, first2
    if abs(wind - m) > 1e-6:
        raise ContourError(f"root-count mismatch: winding number {wind.real:.6f}, expected {m}")
    return complex(first / m)


def riesz_projector(T, center: complex, radius: float, n0: int = 64, tol: float = 1e-12,
                    max_nodes: int = 1 << 14) -> np.ndarray:
    """``-(1 / 2 pi i) oint (T - lambda)^{-1} d lambda`` over the circle, by trapezoid quadrature."""
    T = np.asarray(T, dtype=complex)
    ev = np.linalg.eigvals(T)
    if np.any(np.abs(np.abs(ev - center) - radius) < GRAZE_TOL * max(1.0, radius)):
        raise ContourError("contour grazes spectrum")
    eye = np.eye(len(T))

    def node_sum(theta):
        w = radius * np.exp(1j * theta)
        resolvents = np.linalg.inv(T[None, :, :] - (center + w)[:, None, None] * eye)
        return -np.einsum("kij,k->ij", resolvents, w)

    # Trapezoid sums on nested grids: doubling only adds the odd nodes.
    n = n0
    total = node_sum(2 * np.pi * np.arange(n) / n)
    proj = total / n
    while n < max_nodes:
        total = total + node_sum(2 * np.pi * (np.arange(n) + 0.5) / n)
        n *= 2
        nxt = total / n
        done = np.max(np.abs(nxt - proj)) < tol * max(1.0, np.max(np.abs(nxt)))
        proj = nxt
        if done:
            return proj
    raise ContourError("quadrature did not converge: eigenvalue too close to the contour")


# ---------------------------------------------------------------------------
# branch continuation


@dataclass
class _Strand:
    value: float
    slope: float
    proj: np.ndarray
    rank: int
    cluster_mult: int


@dataclass
class Anomaly:
    z: float
    kind: str
    detail: str

    def to_json(self) -> dict:
        return {"z": self.z, "kind": self.kind, "detail": self.detail}


@dataclass
class BranchTrace:
    """Samples ``(z, branch id, eigenvalue, slope, branch rank, observed cluster multiplicity)``."""

    z: List[float] = field(default_factory=list)
    rows: List[Tuple[float, int, float, float, int, int]] = field(default_factory=list)
    anomalies: List[Anomaly] = field(default_factory=list)

    def branch(self, bid: int) -> np.ndarray:
        return np.array([(r[0], r[2], r[3]) for r in self.rows if r[1] == bid])

    @property
    def branch_ids(self) -> List[int]:
        return sorted({r[1] for r in self.rows})

    def to_csv(self) -> str:
        lines = ["z,branch,eigenvalue,multiplicity"]
        for z, bid, val, _, _, mult in self.rows:
            lines.append(f"{z:.12g},{bid},{val:.12g},{mult}")
        return "\n".join(lines) + "\n"


def _strands_at(family, derivative, z, window, tol, slope_tol, fd_step) -> List[_Strand]:
    T = np.asarray(family(z))
    w, v = np.linalg.eigh(T)
    sel = np.flatnonzero((w >= window[0]) & (w <= window[1]))
    if len(sel) == 0:
        return []
    if derivative is not None:
        dT = np.asarray(derivative(z))
    else:
        h = fd_step * max(1.0, abs(z))
        dT = (np.asarray(family(z + h)) - np.asarray(family(z - h))) / (2 * h)
    vals = w[sel]
    cuts = np.flatnonzero(np.diff(vals) >= tol) + 1
    out = []
    for grp in np.split(sel, cuts):
        V = v[:, grp]
        D = V.conj().T @ dT @ V
        s, W = np.linalg.eigh(0.5 * (D + D.conj().T))
        sub_cuts = np.flatnonzero(np.diff(s) >= slope_tol) + 1
        for idx in np.split(np.arange(len(s)), sub_cuts):
            U = V @ W[:, idx]
            proj = U @ U.conj().T
            # slope as the trace formula Tr(pi T' pi) / m
            slope = float(np.real(np.trace(proj @ dT @ proj))) / len(idx)
            out.append(_Strand(float(w[grp].mean()), slope, proj, len(idx), len(grp)))
    return out


def _match(old: List[_Strand], new: List[_Strand], dz: float):
    """Greedy one-to-one matching with ``||P_old - P_new|| < 1`` and equal rank."""
    pairs = []
    for i, a in enumerate(old):
        pred = a.value + dz * a.slope
        for j, b in enumerate(new):
            if a.rank != b.rank:
                continue
            dist = np.linalg.norm(a.proj - b.proj, 2)
            if dist < 1.0:
                pairs.append((dist, abs(b.value - pred), i, j))
    pairs.sort()
    used_o, used_n, match = set(), set(), {}
    for _, _, i, j in pairs:
        if i in used_o or j in used_n:
            continue
        used_o.add(i)
        used_n.add(j)
        match[i] = j
    return match


def continue_branch(family: Callable[[float], np.ndarray], z_grid: Sequence[float], window: Tuple[float, float],
                    derivative: Optional[Callable[[float], np.ndarray]] = None, cluster_tol: Optional[float] = None,
                    slope_tol: float = 1e-6, fd_step: float = 1e-6, max_halvings: int = 8) -> BranchTrace:
    """Track eigenvalue branches of a Hermitian family inside an energy window.

    Each cluster is split further by the eigenvalues of the compressed derivative,
    so analytic branches are followed through crossings. Consecutive samples are
    matched by projector distance (below 1) and the first-order prediction; an
    unmatched interval is bisected up to ``max_halvings`` times before a jump is
    recorded. Anomalies: changes in the pattern of observed cluster multiplicities,
    ordering swaps between branches (crossings) and unresolved projector jumps.
    """
    z_grid = [float(z) for z in z_grid]
    if len(z_grid) == 0 or not np.all(np.isfinite(z_grid)):
        raise ValueError("z grid must be finite and non-empty")
    if cluster_tol is None:
        scale = max(1.0, float(np.max(np.abs(np.linalg.eigvalsh(np.asarray(family(z_grid[0])))))))
        cluster_tol = max(1e-7, 1e-9 * scale)

    def strands(z):
        return _strands_at(family, derivative, z, window, cluster_tol, slope_tol, fd_step)

    trace = BranchTrace()
    cur = strands(z_grid[0])
    ids = list(range(len(cur)))
    next_id = len(cur)
    mults = _cluster_pattern(cur)
    before_change = None  # pattern preceding the most recent change, to skip transient returns

    def record(z):
        trace.z.append(z)
        for s, b in sorted(zip(cur, ids), key=lambda t: (t[1], t[0].value)):
            trace.rows.append((z, b, s.value, s.slope, s.rank, s.cluster_mult))

    record(z_grid[0])
    z0 = z_grid[0]
    for z_target in z_grid[1:]:
        while z0 != z_target:
            step, halvings = z_target - z0, 0
            while True:
                z1 = z0 + step
                new = strands(z1)
                match = _match(cur, new, z1 - z0)
                if len(match) == len(cur) == len(new) or halvings >= max_halvings:
                    break
                step /= 2
                halvings += 1
            new_ids: List[Optional[int]] = [None] * len(new)
            for i, j in match.items():
                new_ids[j] = ids[i]
            if len(match) < max(len(cur), len(new)):
                lost = [ids[i] for i in range(len(cur)) if i not in match]
                trace.anomalies.append(Anomaly(0.5 * (z0 + z1), "projector jump",
                                               f"branches {lost} not continued after {halvings} halvings"))
            for j in range(len(new)):
                if new_ids[j] is None:
                    new_ids[j] = next_id
                    next_id += 1
            for a, b in itertools.combinations(sorted(match), 2):
                d0 = cur[a].value - cur[b].value
                d1 = new[match[a]].value - new[match[b]].value
                if d0 * d1 < 0:
                    zc = z0 + (z1 - z0) * d0 / (d0 - d1)
                    trace.anomalies.append(Anomaly(zc, "crossing", f"branches {ids[a]} and {ids[b]} cross"))
            new_mults = _cluster_pattern(new)
            if new_mults != mults:
                if new_mults != before_change:
                    trace.anomalies.append(Anomaly(z1, "multiplicity change",
                                                   f"cluster multiplicities {mults} -> {new_mults}"))
                before_change = mults
            else:
                before_change = None
            mults = new_mults
            cur, ids = new, new_ids
            z0 = z_target if z1 == z_target else z1
            record(z0)
    return trace


def _cluster_pattern(strands: List[_Strand]) -> List[int]:
    """Sorted multiplicities of the distinct clusters (strands of one cluster share its mean)."""
    return sorted(m for _, m in {(s.value, s.cluster_mult) for s in strands})
