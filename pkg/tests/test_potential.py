import json

import numpy as np
import pytest

from cubicbands.lattice import Lattice, dual_basis
from cubicbands.potential import (
    PotentialError,
    InvariantPotential,
    from_json,
    genericity_check,
    load,
    orbit,
    orbit_representative,
    orbits_by_norm,
    random_invariant,
    symmetrize,
    zero_potential,
)
from cubicbands.symmetry import octahedral_group

LATTICES = ["sc", "bcc", "fcc"]


def recip(name):
    return dual_basis(Lattice.named(name))


def test_sc_axis_orbit():
    orb = orbit((1, 0, 0), recip("sc"))
    assert set(orb) == {(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)}


def test_bcc_orbit_pairs():
    assert (0, 1, 1) in orbit((1, 0, 1), recip("bcc"))


@pytest.mark.parametrize("name", LATTICES)
def test_origin_orbit(name):
    assert orbit((0, 0, 0), recip(name)) == [(0, 0, 0)]


@pytest.mark.parametrize("name", LATTICES)
def test_orbit_members_share_norm(name):
    r = recip(name)
    for orb in orbits_by_norm(r, 5):
        norms = np.linalg.norm(r.to_cartesian(orb), axis=1)
        assert np.ptp(norms) < 1e-9
        assert orbit_representative(orb[-1], r) == orb[0] == min(orb)


def test_orbit_rejects_non_preserving_group():
    sheared = dual_basis(Lattice(np.array([[1.0, 0.0, 0.0], [0.37, 1.0, 0.0], [0.0, 0.0, 1.3]])))
    with pytest.raises(PotentialError, match="does not preserve dual lattice"):
        orbit((1, 0, 0), sheared)


def test_symmetrize_single_wave():
    pot = symmetrize({(1, 0, 0): 1.0}, "sc")
    assert len(pot.coeffs) == 6
    for v in pot.coeffs.values():
        assert v == pytest.approx(1 / 6)


def test_symmetrize_group_average_oracle():
    """Average of g_* over the 48 elements applied to a single plane wave, read back as coefficients."""
    r = recip("bcc")
    m = np.array([1, 0, 2])
    acc = {}
    for g in octahedral_group():
        img = tuple(int(v) for v in np.rint(r.to_dual(g.matrix @ r.to_cartesian(m))))
        acc[img] = acc.get(img, 0.0) + 1 / 48
    pot = symmetrize({tuple(m): 1.0}, "bcc")
    assert set(acc) == set(pot.coeffs)
    for k, v in acc.items():
        assert pot[k] == pytest.approx(v)


def test_symmetrize_odd_input_vanishes():
    pot = symmetrize({(1, 0, 0): 1.0, (-1, 0, 0): -1.0, (1, 1, 0): 0.5, (-1, -1, 0): -0.5}, "sc")
    assert pot.coeffs == {}


@pytest.mark.parametrize("name", LATTICES)
def test_symmetrize_idempotent(name):
    rng = np.random.default_rng(11)
    raw = {tuple(rng.integers(-2, 3, size=3)): rng.normal() for _ in range(12)}
    once = symmetrize(raw, name)
    twice = symmetrize(once.coeffs, name)
    assert set(once.coeffs) == set(twice.coeffs)
    for k in once.coeffs:
        assert twice[k] == pytest.approx(once[k], abs=1e-14)


def test_random_invariant_deterministic():
    a = random_invariant(5, "fcc", 4)
    b = random_invariant(5, "fcc", 4)
    assert a.coeffs == b.coeffs
    assert random_invariant(6, "fcc", 4).coeffs != a.coeffs


def test_random_invariant_zero_amplitude():
    assert random_invariant(1, "bcc", 3, amplitude=0.0).coeffs == {}


def test_random_invariant_sc_support():
    pot = random_invariant(1, "sc", 3)
    assert pot.orbit_reps == ((-1, -1, -1), (-1, -1, 0), (-1, 0, 0), (0, 0, 0))
    assert len(pot.coeffs) == 1 + 6 + 12 + 8
    assert all(abs(v) <= 1.0 for v in pot.coeffs.values())


def test_random_invariant_needs_an_orbit():
    with pytest.raises(PotentialError):
        random_invariant(1, "sc", 0)


@pytest.mark.parametrize("name", LATTICES)
def test_function_level_invariance(name):
    G = sorted(octahedral_group())
    x = np.random.default_rng(0).uniform(-1, 1, size=(8, 3))
    for seed in range(100 // len(LATTICES) + 1):
        pot = random_invariant(seed, name, 4)
        vals = pot.evaluate(x)
        assert np.max(np.abs(vals.imag)) < 1e-12
        for g in G:
            np.testing.assert_allclose(pot.evaluate(x @ g.matrix), vals, atol=1e-10)


def test_json_round_trip(tmp_path):
    pot = random_invariant(3, "bcc", 4)
    path = tmp_path / "pot.json"
    pot.save(path)
    back = load(path)
    assert back.coeffs == pot.coeffs
    data = json.loads(path.read_text())
    assert data["lattice"] == "bcc" and data["seed"] == 3 and "PCG64" in data["prng"]
    assert len(data["coeffs"]) == len(pot.orbit_reps)


def test_loader_rejects_conflicting_orbit_values():
    data = {"lattice": "sc", "coeffs": [{"m": [1, 0, 0], "v": 0.5}, {"m": [0, 1, 0], "v": 0.2}]}
    with pytest.raises(PotentialError, match="not invariant on orbit"):
        from_json(data)


def test_constructor_rejects_non_invariant_map():
    with pytest.raises(PotentialError, match="not invariant on orbit"):
        InvariantPotential(Lattice.named("sc"), {(1, 0, 0): 1.0, (-1, 0, 0): 1.0})


def test_loader_rejects_malformed():
    with pytest.raises(PotentialError, match="malformed"):
        from_json({"lattice": "sc"})


def test_genericity_sc_single_orbit():
    pot = symmetrize({(1, 0, 0): 1.0, (-1, 0, 0): 1.0, (0, 1, 0): 1.0, (0, -1, 0): 1.0,
                      (0, 0, 1): 1.0, (0, 0, -1): 1.0}, "sc")
    rep = genericity_check(pot, "sc", "R")
    assert rep.passed
    assert sorted(set(np.round(list(rep.slopes.values()), 12))) == [-3.0, -1.0, 1.0, 3.0]


def test_genericity_zero_potential_fails():
    assert not genericity_check(zero_potential("bcc"), "bcc", "P").passed


def test_genericity_fails_on_hyperplane():
    # the two slopes at the body-centred (pi,pi,pi) point differ only through the orbit of (1,0,1)
    pot = random_invariant(2, "bcc", 4)
    r = recip("bcc")
    coeffs = {m: v for m, v in pot.coeffs.items() if (1, 0, 1) not in orbit(m, r)}
    rep = genericity_check(InvariantPotential(pot.lattice, coeffs), "bcc", "P")
    assert not rep.passed
    assert genericity_check(pot, "bcc", "P").passed
