import itertools

import numpy as np
import pytest

from cubicbands.lattice import PI, Lattice, dual_basis, named_point
from cubicbands.planewave import build_basis
from cubicbands.symmetry import (
    F,
    F1,
    F13,
    IDENTITY,
    NAMED_ELEMENTS,
    R,
    S0,
    TABLE_SUBGROUPS,
    GroupElement,
    SectorLabel,
    SymmetryError,
    act_on_planewave,
    admissible_subgroup,
    character_projector,
    closure,
    m_of_j,
    octahedral_group,
    planewave_operator,
    symmetry_eigenvector,
    verify_lattice_invariance,
)

CASES = list(TABLE_SUBGROUPS)


def brute_force_signed_permutations():
    out = set()
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product([1, -1], repeat=3):
            m = np.zeros((3, 3), dtype=int)
            for i, (p, s) in enumerate(zip(perm, signs)):
                m[i, p] = s
            out.add(GroupElement.of(m))
    return out


def test_octahedral_group_is_all_signed_permutations():
    G = octahedral_group()
    assert len(G) == 48
    assert set(G) == brute_force_signed_permutations()
    assert F in G and F.matrix.tolist() == (-np.eye(3, dtype=int)).tolist()
    assert R.power(3) == IDENTITY and R.order == 3


def test_group_axioms():
    G = octahedral_group()
    for a in G:
        assert a.inverse() in G
        assert a @ a.inverse() == IDENTITY
    for a, b in itertools.islice(itertools.product(G, G), 500):
        assert a @ b in G


def test_non_signed_permutation_rejected():
    with pytest.raises(SymmetryError):
        GroupElement.of([[1, 1, 0], [0, 1, 0], [0, 0, 1]])


@pytest.mark.parametrize("name", ["sc", "bcc", "fcc"])
def test_lattice_invariance(name):
    lat = Lattice.named(name)
    assert verify_lattice_invariance(octahedral_group(), lat)
    assert verify_lattice_invariance([IDENTITY, F], lat)


def test_sheared_lattice_breaks_invariance():
    lat = Lattice(np.array([[1.0, 0.0, 0.0], [0.37, 1.0, 0.0], [0.0, 0.0, 1.3]]))
    assert not verify_lattice_invariance(octahedral_group(), lat)
    assert verify_lattice_invariance([IDENTITY, F], lat)


@pytest.mark.parametrize("case,size,orders", [
    (("sc", "R"), 8, (2, 2, 2)),
    (("bcc", "P"), 4, (2, 2)),
    (("bcc", "H"), 6, (3, 2)),
    (("fcc", "W"), 4, (4,)),
])
def test_table_subgroups(case, size, orders):
    sub = admissible_subgroup(*case)
    assert sub.size == size
    assert sub.orders == orders
    assert len(sub.sectors) == size


def test_sc_m_is_minus_j():
    sub = admissible_subgroup("sc", "R")
    for j in sub.index_set:
        assert m_of_j(sub, j) == tuple(-a for a in j)


def test_bcc_f13_multi_index():
    sub = admissible_subgroup("bcc", "P")
    assert sub.element((1, 0)) == F13
    assert m_of_j(sub, (1, 0)) == (-1, 0, -1)
    recip = sub.recip
    np.testing.assert_allclose(F13.matrix @ sub.K, sub.K - recip.kvecs[0] - recip.kvecs[2], atol=1e-12)


def test_fcc_s0_inverse_shift():
    sub = admissible_subgroup("fcc", "W")
    recip = sub.recip
    np.testing.assert_allclose(S0.inverse().matrix @ sub.K, sub.K - recip.kvecs[0], atol=1e-12)
    assert m_of_j(sub, (-1,)) == (-1, 0, 0)


@pytest.mark.parametrize("case", CASES)
def test_m_table_matches_action(case):
    sub = admissible_subgroup(*case)
    recip = sub.recip
    for j in sub.index_set:
        np.testing.assert_allclose(sub.element(j).matrix @ sub.K, sub.K + recip.to_cartesian(m_of_j(sub, j)),
                                   atol=1e-12)


@pytest.mark.parametrize("case", CASES)
def test_exponent_arithmetic(case):
    sub = admissible_subgroup(*case)
    for j, k in itertools.product(sub.index_set, repeat=2):
        jk = tuple(a + b for a, b in zip(j, k))
        assert sub.element(j) @ sub.element(k) == sub.element(jk)


def test_a3_violation_reported():
    with pytest.raises(SymmetryError, match="A3 violated"):
        admissible_subgroup("sc", "R", generators=["f1", "f2"])
    with pytest.raises(SymmetryError, match="commute"):
        admissible_subgroup("sc", "R", generators=["r", "s"])
    with pytest.raises(SymmetryError, match="A3 violated"):
        admissible_subgroup("bcc", "H", generators=["r"])


def test_custom_point_search():
    sub = admissible_subgroup("sc", np.array([PI, 0.3, 0.0]))
    assert sub.size == 2


def test_planewave_action():
    recip = dual_basis(Lattice.named("sc"))
    K = named_point("sc", "R")
    assert act_on_planewave(IDENTITY, (2, -1, 0), K, recip) == (2, -1, 0)
    assert act_on_planewave(F1, (0, 0, 0), K, recip) == (-1, 0, 0)
    with pytest.raises(SymmetryError, match="not K-invariant"):
        act_on_planewave(R, (0, 0, 0), np.array([0.3, 0.1, -0.2]), recip)


def test_sector_label_exact_roots():
    w = SectorLabel.from_numerators((1,), (4,))
    assert w.character((1,)) == 1j
    assert w.character((4,)) == 1
    assert w.conjugate() == SectorLabel.from_numerators((3,), (4,))
    assert w.to_json() == [{"p": 1, "q": 4}]
    z3 = SectorLabel.from_numerators((1, 0), (3, 2))
    assert abs(z3.character((3, 0)) - 1) < 1e-15


def _eigvec_array(sub, omega, basis):
    v = np.zeros(basis.dimension, dtype=complex)
    for m, c in symmetry_eigenvector(sub, omega).items():
        v[basis.index_of(m)] = c
    return v


@pytest.mark.parametrize("case", CASES)
def test_symmetry_eigenvectors(case):
    sub = admissible_subgroup(*case)
    basis = build_basis(sub.lattice, sub.K)
    vecs = np.array([_eigvec_array(sub, w, basis) for w in sub.sectors]).T
    np.testing.assert_allclose(vecs.conj().T @ vecs, np.eye(sub.size), atol=1e-12)
    ops = [planewave_operator(g, basis.indices, sub.K, sub.recip) for g in sub.generators]
    for w, v in zip(sub.sectors, vecs.T):
        for op, val in zip(ops, w.values):
            np.testing.assert_allclose(op @ v, val * v, atol=1e-12)


def test_sc_trivial_sector_weights():
    sub = admissible_subgroup("sc", "R")
    coeffs = symmetry_eigenvector(sub, sub.sector((0, 0, 0)))
    assert len(coeffs) == 8
    for c in coeffs.values():
        assert c == pytest.approx(1 / np.sqrt(8))


@pytest.mark.parametrize("case", CASES)
def test_character_projectors(case):
    sub = admissible_subgroup(*case)
    basis = build_basis(sub.lattice, sub.K)
    P = {w: character_projector(sub, w, basis.indices) for w in sub.sectors}
    total = sum(P.values())
    np.testing.assert_allclose(total, np.eye(basis.dimension), atol=1e-12)
    for w, pw in P.items():
        np.testing.assert_allclose(pw @ pw, pw, atol=1e-12)
        v = _eigvec_array(sub, w, basis)
        np.testing.assert_allclose(pw @ v, v, atol=1e-12)
        for w2, p2 in P.items():
            if w2 != w:
                assert np.max(np.abs(pw @ p2)) < 1e-12
                assert np.max(np.abs(p2 @ v)) < 1e-12


def _psi_functions():
    """Odd trigonometric functions in L^2_K at K = (0, 0, 2 pi) on the body-centred lattice."""
    e = 2 * PI * np.eye(3)
    terms = {
        "psi1": [(e[0], 1 / 2j), (-e[0], -1 / 2j), (e[1], 1j / 2j), (-e[1], -1j / 2j)],
        "psi2": [(e[0], 1 / 2j), (-e[0], -1 / 2j), (e[1], -1j / 2j), (-e[1], 1j / 2j)],
        "psi3": [(e[2], np.sqrt(2) / 2j), (-e[2], -np.sqrt(2) / 2j)],
    }
    return terms


def _as_coeffs(terms, sub, basis):
    v = np.zeros(basis.dimension, dtype=complex)
    for p, c in terms:
        m = sub.recip.integer_coords(p - sub.K)
        assert m is not None
        v[basis.index_of(m)] += c
    return v


def test_odd_functions_at_bcc_h():
    sub = admissible_subgroup("bcc", "H")
    basis = build_basis(sub.lattice, sub.K)
    kin = np.sum(basis.momenta ** 2, axis=1)
    f_op = planewave_operator(F, basis.indices, sub.K, sub.recip)
    s0_op = planewave_operator(S0, basis.indices, sub.K, sub.recip)
    np.testing.assert_allclose(S0.matrix @ sub.K, sub.K - sub.recip.kvecs[2], atol=1e-12)
    eig = {}
    for name, terms in _psi_functions().items():
        v = _as_coeffs(terms, sub, basis)
        assert np.linalg.norm(v) == pytest.approx(1.0)
        np.testing.assert_allclose(kin * v, (2 * PI) ** 2 * v, atol=1e-12)
        np.testing.assert_allclose(f_op @ v, -v, atol=1e-12)
        w = s0_op @ v
        eig[name] = np.vdot(v, w)
        np.testing.assert_allclose(w, eig[name] * v, atol=1e-12)
    # psi1, psi2 lie in conjugate quarter-turn eigenspaces of s0, psi3 in the -1 eigenspace
    assert eig["psi1"] == pytest.approx(1j)
    assert eig["psi2"] == pytest.approx(-1j)
    assert eig["psi3"] == pytest.approx(-1)


def test_odd_function_sample_values():
    x = np.random.default_rng(3).uniform(size=(20, 3))
    s0t = S0.matrix.T
    psi1 = np.sin(2 * PI * x[:, 0]) + 1j * np.sin(2 * PI * x[:, 1])
    moved = np.sin(2 * PI * (x @ s0t.T)[:, 0]) + 1j * np.sin(2 * PI * (x @ s0t.T)[:, 1])
    np.testing.assert_allclose(moved, 1j * psi1, atol=1e-12)


def test_named_elements_are_in_group():
    G = octahedral_group()
    assert all(g in G for g in NAMED_ELEMENTS.values())
    assert closure([R]) == {IDENTITY, R, R.power(2)}
