"""
Command-line front end.

Every JSON output carries a ``meta`` block (schema, tool version, resolved
configuration, tolerances, PRNG) and is written with sorted keys, so rerunning
the same command reproduces the file byte for byte.

Exit codes: 0 ok, 2 usage, 3 invalid input, 4 multiplicity anomaly, 5 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from typing import List, Optional

import numpy as np

from . import __version__
from .analytic import ContourError, MonicPolynomial, ProfileError, continue_branch, multiplicity_profile
from .effective import SLOPE_TOL, MultiplicityAnomaly, analyse_point, splitting_table
from .lattice import (
    NAMED_POINTS,
    Lattice,
    LatticeError,
    brillouin_zone,
    dual_basis,
    faces_containing,
    is_vertex,
    k_class,
    named_point,
)
from .planewave import (
    SolverError,
    build_basis,
    build_hamiltonian,
    cluster_tolerance,
    dispersion_scan,
    eigensolve,
    sector_restrict,
)
from .potential import PRNG_NAME, PotentialError, genericity_check, load, random_invariant, zero_potential
from .symmetry import SymmetryError, admissible_subgroup, symmetry_eigenvector

SCHEMA = 1
EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_ANOMALY, EXIT_IO = 0, 2, 3, 4, 5


def _fmt_pi(v: float) -> str:
    return "0" if v == 0 else f"{v / math.pi:g}pi"


POINT_HELP = ", ".join(f"{lat}:{lab}=({' '.join(_fmt_pi(v) for v in vec)})" for (lat, lab), vec in NAMED_POINTS.items())


class InputError(ValueError):
    pass


def _clean(obj):
    """Convert numpy scalars/arrays and complex numbers into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _clean(float(obj.real)), "im": _clean(float(obj.imag))}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _write_text(text: str, path: Optional[str]) -> None:
    """Write to stdout, or atomically to ``path`` via a temporary file and rename."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _config(args) -> dict:
    skip = {"func", "out", "anomalies"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _meta(args, tolerances: Optional[dict] = None) -> dict:
    return {
        "schema": SCHEMA,
        "tool": "cubicbands",
        "version": __version__,
        "config": _config(args),
        "tolerances": tolerances or {},
        "prng": PRNG_NAME,
    }


def _emit(args, payload: dict, tolerances: Optional[dict] = None) -> None:
    payload = dict(payload)
    payload["meta"] = _meta(args, tolerances)
    _write_text(_dump(payload), args.out)


def _csv_header(args, tolerances: Optional[dict] = None) -> str:
    return "# " + json.dumps(_clean(_meta(args, tolerances)), sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# argument helpers


def _resolve_k(lattice: str, k) -> np.ndarray:
    if k is None:
        raise InputError("--k is required")
    if len(k) == 1:
        return named_point(lattice, k[0])
    if len(k) != 3:
        raise InputError("--k takes a point label or three numbers")
    try:
        return np.array([_parse_number(v) for v in k])
    except ValueError as exc:
        raise InputError(f"bad --k component: {exc}") from None


def _parse_number(text: str) -> float:
    """Float, optionally written as a multiple of pi (``2pi``, ``-0.5pi``, ``pi``)."""
    t = text.strip().lower()
    if t.endswith("pi"):
        head = t[:-2]
        factor = 1.0 if head in ("", "+") else -1.0 if head == "-" else float(head.rstrip("*"))
        return factor * math.pi
    return float(t)


def _potential(args, lattice: str):
    if getattr(args, "zero", False):
        return zero_potential(lattice)
    if getattr(args, "potential", None):
        pot = load(args.potential)
        if pot.lattice.name != lattice:
            raise InputError(f"potential file is for lattice {pot.lattice.name!r}, not {lattice!r}")
        return pot
    return random_invariant(args.seed, lattice, args.n_orbits, args.amplitude)


def _add_common(p, k=True, potential=True, z=False, cutoff=True):
    p.add_argument("--lattice", required=True, choices=["sc", "bcc", "fcc"])
    if k:
        p.add_argument("--k", nargs="+", metavar="K",
                       help=f"point label or three components (e.g. 0 2pi pi); labels: {POINT_HELP}")
    if potential:
        p.add_argument("--seed", type=int, default=1, help="seed of the random invariant potential (default 1)")
        p.add_argument("--n-orbits", type=int, default=3, help="number of nontrivial orbits (default 3)")
        p.add_argument("--amplitude", type=float, default=1.0, help="uniform range of coefficients (default 1.0)")
        p.add_argument("--potential", help="potential JSON file (overrides --seed)")
        p.add_argument("--zero", action="store_true", help="use the zero potential")
    if z:
        p.add_argument("--z", type=float, default=0.3, help="coupling z (default 0.3)")
    if cutoff:
        p.add_argument("--cutoff", type=float, default=None, help="plane-wave energy cutoff (default 10|K|^2)")
    p.add_argument("--out", help="output path (default stdout); written atomically")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps (default 1)")


# ---------------------------------------------------------------------------
# subcommands


def cmd_lattice(args) -> int:
    lat = Lattice.named(args.name)
    recip = dual_basis(lat)
    bz = brillouin_zone(recip)
    points = []
    for (lname, label), vec in NAMED_POINTS.items():
        if lname != lat.name:
            continue
        cls = k_class(vec, recip)
        points.append({"label": label, "K": vec, "class_size": len(cls), "faces": faces_containing(vec, bz),
                       "is_vertex": is_vertex(vec, bz)})
    payload = {
        "lattice": lat.name,
        "basis": lat.basis,
        "dual_basis": recip.kvecs,
        "brillouin_zone": bz.to_json(),
        "vertex_count": len(bz.vertices),
        "face_count": len(bz.faces),
        "points": points,
    }
    _emit(args, payload)
    return EXIT_OK


def cmd_sectors(args) -> int:
    K = _resolve_k(args.lattice, args.k)
    sub = admissible_subgroup(args.lattice, K)
    payload = sub.to_json()
    payload["lattice"] = args.lattice
    payload["K"] = K
    payload["phi"] = [
        {"omega": str(w), "U": w.to_json(),
         "coefficients": [{"m": list(m), "c": c} for m, c in sorted(symmetry_eigenvector(sub, w).items())]}
        for w in sub.sectors
    ]
    _emit(args, payload)
    return EXIT_OK


def cmd_split(args) -> int:
    K = _resolve_k(args.lattice, args.k)
    pot = _potential(args, args.lattice)
    sub = admissible_subgroup(args.lattice, K)
    table = splitting_table(sub, pot, tol=args.tol_slope)
    gen = genericity_check(pot, args.lattice, K, threshold=args.tol_genericity)
    if args.format == "text":
        text = table.to_text() + f"generic: {gen.passed} (margin {gen.margin})\n"
        _write_text(text, args.out)
        return EXIT_OK
    payload = {"lattice": args.lattice, "K": K, "splitting": table.to_json(), "genericity": gen.to_json(),
               "potential": pot.to_json()}
    _emit(args, payload, {"slope_equality": args.tol_slope, "genericity_margin": gen.threshold})
    return EXIT_OK


def cmd_spectrum(args) -> int:
    K = _resolve_k(args.lattice, args.k)
    pot = _potential(args, args.lattice)
    basis = build_basis(args.lattice, K, energy_cutoff=args.cutoff)
    H = build_hamiltonian(basis, pot, args.z)
    spec = eigensolve(H)
    tol = args.tol_cluster if args.tol_cluster is not None else cluster_tolerance(spec.norm)
    nb = min(args.n_bands, len(spec.eigenvalues))
    clusters = [{"mean": float(spec.eigenvalues[a:b].mean()), "multiplicity": b - a}
                for a, b in spec.clusters(tol) if a < nb]
    payload = {"lattice": args.lattice, "K": K, "z": args.z, "dimension": basis.dimension,
               "cutoff": basis.energy_cutoff, "eigenvalues": spec.eigenvalues[:nb], "clusters": clusters,
               "potential": pot.to_json()}
    if args.sectors:
        sub = admissible_subgroup(args.lattice, K)
        payload["sectors"] = [{"omega": str(w), "eigenvalues": sector_restrict(H, sub, w).eigenvalues[: args.n_bands]}
                              for w in sub.sectors]
    _emit(args, payload, {"cluster": tol})
    return EXIT_OK


def cmd_classify(args) -> int:
    K = _resolve_k(args.lattice, args.k)
    pot = _potential(args, args.lattice)
    gen = genericity_check(pot, args.lattice, K, threshold=args.tol_genericity)
    try:
        table, reports = analyse_point(args.lattice, K, pot, args.z, cutoff=args.cutoff, validate=not args.no_fit)
    except MultiplicityAnomaly as exc:
        _emit(args, {"anomaly": str(exc), "details": exc.details, "genericity": gen.to_json()})
        return EXIT_ANOMALY
    payload = {"lattice": args.lattice, "K": K, "z": args.z, "splitting": table.to_json(),
               "genericity": gen.to_json(), "reports": [r.to_json() for r in reports], "potential": pot.to_json()}
    _emit(args, payload, {"gradient_zero": "1e-8 |K|", "weyl_polynomial": 1e-8, "separation_ratio": 0.1})
    return EXIT_OK


def _read_path(path: str) -> np.ndarray:
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".json"):
        data = json.loads(text)
        pts = data["points"] if isinstance(data, dict) else data
        return np.array(pts, dtype=float)
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    try:
        return np.array([[_parse_number(v) for v in r[:3]] for r in rows], dtype=float)
    except ValueError:
        return np.array([[_parse_number(v) for v in r[:3]] for r in rows[1:]], dtype=float)


def cmd_dispersion(args) -> int:
    K = _resolve_k(args.lattice, args.k) if args.k else None
    pot = _potential(args, args.lattice)
    if args.path:
        pts = _read_path(args.path)
    else:
        if K is None or args.direction is None:
            raise InputError("give --path, or --k with --direction")
        d = np.array([_parse_number(v) for v in args.direction])
        d = d / np.linalg.norm(d)
        t = np.linspace(-args.half_width, args.half_width, args.points)
        pts = K + t[:, None] * d
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise InputError("path must be a non-empty list of 3-vectors")
    table = dispersion_scan(args.lattice, pot, args.z, pts, cutoff=args.cutoff, n_bands=args.n_bands,
                            center=K, threads=args.threads)
    _write_text(_csv_header(args) + table.to_csv(), args.out)
    return EXIT_OK


def cmd_scan_z(args) -> int:
    K = _resolve_k(args.lattice, args.k)
    pot = _potential(args, args.lattice)
    basis = build_basis(args.lattice, K, energy_cutoff=args.cutoff)
    lo, hi, n = args.z_range
    grid = np.linspace(float(lo), float(hi), int(n))
    k2 = float(K @ K)
    if args.window:
        window = tuple(args.window)
    else:
        kin = np.sum(basis.momenta ** 2, axis=1)
        spacing = float(np.min(np.abs(kin[np.abs(kin - k2) > 1e-9 * k2] - k2)))
        window = (k2 - 0.25 * spacing, k2 + 0.25 * spacing)
    H0 = build_hamiltonian(basis, None, 0.0).entries
    V = build_hamiltonian(basis, pot, 1.0).entries - H0
    if args.mix_seed is not None:
        W = build_hamiltonian(basis, random_invariant(args.mix_seed, args.lattice, args.n_orbits, args.amplitude),
                              1.0).entries - H0
        g = args.mix_coupling

        def family(z):
            return H0 + g * (V + z * W)

        def derivative(z):
            return g * W
    else:
        def family(z):
            return H0 + z * V

        def derivative(z):
            return V

    trace = continue_branch(family, grid, window, derivative=derivative)
    _write_text(_csv_header(args, {"window": list(window)}) + trace.to_csv(), args.out)
    anomalies = {"anomalies": [a.to_json() for a in trace.anomalies], "window": list(window),
                 "meta": _meta(args, {"window": list(window)})}
    if args.anomalies:
        _write_text(_dump(anomalies), args.anomalies)
    else:
        sys.stderr.write(_dump(anomalies))
    return EXIT_OK


def cmd_poly_profile(args) -> int:
    with open(args.input) as fh:
        data = json.load(fh)
    try:
        coeffs = [complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c) for c in data["coeffs"]]
    except (KeyError, TypeError, IndexError) as exc:
        raise InputError(f"malformed polynomial file: {exc}") from None
    A = MonicPolynomial.from_coefficients(np.array(coeffs))
    prof = multiplicity_profile(A)
    _emit(args, {"degree": A.degree, "d": prof.d, "rho": prof.rho, "multiplicities": prof.as_dict()},
          {"rank_sweep": [1e-8, 1e-12]})
    return EXIT_OK


def _add_genericity_tol(p):
    p.add_argument("--tol-genericity", type=float, default=1e-9,
                   help="minimum slope gap between generically distinct sectors (default 1e-9)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cubicbands", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lattice", help="dual basis, Brillouin zone and named points")
    p.add_argument("--name", required=True, choices=["sc", "bcc", "fcc"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_lattice)

    p = sub.add_parser("sectors", help="admissible subgroup, characters, m(j) and sector eigenvectors")
    _add_common(p, potential=False, cutoff=False)
    p.set_defaults(func=cmd_sectors)

    p = sub.add_parser("split", help="first-order splitting table and genericity check")
    _add_common(p, cutoff=False)
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--tol-slope", type=float, default=SLOPE_TOL, help=f"slope equality tolerance (default {SLOPE_TOL:g})")
    _add_genericity_tol(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("spectrum", help="eigenvalues of H_z at K")
    _add_common(p, z=True)
    p.add_argument("--n-bands", type=int, default=16)
    p.add_argument("--sectors", action="store_true", help="also list sector-restricted spectra")
    p.add_argument("--tol-cluster", type=float, default=None,
                   help="eigenvalue clustering gap (default max(1e-7, 1e-6 |H|))")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("classify", help="classify each degenerate cluster at K")
    _add_common(p, z=True)
    p.add_argument("--no-fit", action="store_true", help="skip the residual-exponent fit")
    _add_genericity_tol(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("dispersion", help="band energies along a path (CSV)")
    _add_common(p, z=True)
    p.add_argument("--path", help="JSON list or CSV of 3-vectors")
    p.add_argument("--direction", nargs=3, help="line direction through --k")
    p.add_argument("--half-width", type=float, default=0.2, help="half length of the line (default 0.2)")
    p.add_argument("--points", type=int, default=41)
    p.add_argument("--n-bands", type=int, default=8)
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("scan-z", help="track eigenvalue branches over a z grid (CSV + anomaly JSON)")
    _add_common(p)
    p.add_argument("--z-range", nargs=3, type=float, metavar=("LO", "HI", "N"), default=(0.0, 1.0, 51))
    p.add_argument("--window", nargs=2, type=float, metavar=("EMIN", "EMAX"))
    p.add_argument("--anomalies", help="anomaly JSON path (default stderr)")
    p.add_argument("--mix-seed", type=int, default=None,
                   help="scan H = -Lap + g (V + z W) with W drawn from this seed")
    p.add_argument("--mix-coupling", type=float, default=0.05, help="g for --mix-seed (default 0.05)")
    p.set_defaults(func=cmd_scan_z)

    p = sub.add_parser("poly-profile", help="root multiplicity profile of a polynomial")
    p.add_argument("--input", required=True, help='JSON {"coeffs": [[re, im], ...]} in ascending order')
    p.add_argument("--out")
    p.set_defaults(func=cmd_poly_profile)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MultiplicityAnomaly as exc:
        sys.stderr.write(_dump({"anomaly": str(exc), "details": exc.details}))
        return EXIT_ANOMALY
    except (InputError, PotentialError, LatticeError, SymmetryError, SolverError, ProfileError,
            ContourError, ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
