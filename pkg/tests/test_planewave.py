import itertools

import numpy as np
import pytest

from cubicbands.lattice import PI, Lattice, dual_basis, lattice_points, named_point
from cubicbands.planewave import (
    SolverError,
    build_basis,
    build_hamiltonian,
    cluster_ranges,
    dispersion_scan,
    eigensolve,
    eigensolve_matrix,
    sector_basis,
    sector_restrict,
)
from cubicbands.potential import random_invariant, symmetrize
from cubicbands.symmetry import TABLE_SUBGROUPS, admissible_subgroup, octahedral_group, planewave_permutation

CASES = list(TABLE_SUBGROUPS)


def cell_quadrature(lattice, f, n=12):
    """Mean of ``f`` over one primitive cell on an ``n^3`` grid (exact for low-degree trig polynomials)."""
    s = (np.arange(n) + 0.5) / n
    frac = np.stack(np.meshgrid(s, s, s, indexing="ij"), axis=-1).reshape(-1, 3)
    x = frac @ lattice.basis
    return np.mean(f(x))


def test_matrix_entry_matches_quadrature_sc():
    pot = symmetrize({(1, 0, 0): 6.0}, "sc")
    assert pot[(1, 0, 0)] == pytest.approx(1.0)
    basis = build_basis("sc", named_point("sc", "R"))
    H = build_hamiltonian(basis, pot, 1.0)
    i, j = basis.index_of((0, 0, 0)), basis.index_of((1, 0, 0))
    assert H.entries[i, j] == pytest.approx(1.0)
    p = basis.momenta
    val = cell_quadrature(basis.lattice, lambda x: np.conj(np.exp(1j * x @ p[i])) * pot.evaluate(x) * np.exp(1j * x @ p[j]))
    assert val == pytest.approx(H.entries[i, j], abs=1e-12)


@pytest.mark.parametrize("name", ["bcc", "fcc"])
def test_matrix_entries_match_quadrature(name):
    pot = random_invariant(4, name, 3)
    K = named_point(name, "P" if name == "bcc" else "W")
    basis = build_basis(name, K)
    H = build_hamiltonian(basis, pot, 0.7)
    p = basis.momenta
    rng = np.random.default_rng(0)
    for i, j in rng.integers(0, 20, size=(8, 2)):
        def integrand(x):
            return np.conj(np.exp(1j * x @ p[i])) * pot.evaluate(x) * np.exp(1j * x @ p[j])
        want = 0.7 * cell_quadrature(basis.lattice, integrand) + (p[i] @ p[i] if i == j else 0.0)
        assert H.entries[i, j] == pytest.approx(want, abs=1e-10)


def test_minimal_cutoff_gives_the_class():
    K = named_point("sc", "R")
    basis = build_basis("sc", K, energy_cutoff=K @ K * (1 + 1e-6))
    assert basis.dimension == 8


def test_cutoff_errors():
    K = named_point("sc", "R")
    with pytest.raises(SolverError, match="empty shell"):
        build_basis("sc", K, energy_cutoff=0.5 * K @ K)
    with pytest.raises(SolverError, match="cutoff too large"):
        build_basis("sc", K, energy_cutoff=1e6)


@pytest.mark.parametrize("case", CASES)
def test_basis_closed_under_subgroup(case):
    sub = admissible_subgroup(*case)
    basis = build_basis(sub.lattice, sub.K)
    assert (0, 0, 0) in {tuple(m) for m in basis.indices}
    for g in sub.elements.values():
        perm = planewave_permutation(g, basis.indices, sub.K, sub.recip)
        assert sorted(perm) == list(range(basis.dimension))


def test_basis_is_full_shell():
    K = named_point("fcc", "W")
    basis = build_basis("fcc", K)
    _, vecs = lattice_points(dual_basis(Lattice.named("fcc")), 2 * np.sqrt(basis.energy_cutoff), include_origin=True)
    count = np.sum(np.sum((K + vecs) ** 2, axis=1) <= basis.energy_cutoff * (1 + 1e-12))
    assert count == basis.dimension


def test_kappa_keeps_index_set():
    basis = build_basis("bcc", named_point("bcc", "H"))
    shifted = basis.with_kappa([0.01, -0.02, 0.03])
    assert np.array_equal(shifted.indices, basis.indices)


def test_zero_coupling_is_kinetic_diagonal():
    basis = build_basis("fcc", named_point("fcc", "W"))
    H = build_hamiltonian(basis, random_invariant(1, "fcc"), 0.0)
    np.testing.assert_array_equal(H.entries, np.diag(np.sum(basis.momenta ** 2, axis=1)))


def test_real_symmetric_at_any_kappa():
    basis = build_basis("bcc", named_point("bcc", "P"), kappa=[0.1, 0.2, -0.05])
    H = build_hamiltonian(basis, random_invariant(2, "bcc", 4), 0.9).entries
    assert np.max(np.abs(H.imag)) == 0.0
    np.testing.assert_array_equal(H, H.T)


def test_eigensolve_small_examples():
    spec = eigensolve_matrix(np.diag([3.0, -1.0, 2.0]))
    np.testing.assert_allclose(spec.eigenvalues, [-1, 2, 3])
    spec = eigensolve_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(spec.eigenvalues, [-1, 1])


def test_eigensolve_rejects_bad_input():
    h = np.eye(3)
    h[0, 1] = h[1, 0] = np.nan
    with pytest.raises(SolverError, match="matrix [0-9a-f]{16}"):
        eigensolve_matrix(h)
    with pytest.raises(SolverError):
        eigensolve_matrix(np.zeros((0, 0)))


def test_eigensolve_deterministic():
    basis = build_basis("sc", named_point("sc", "R"))
    H = build_hamiltonian(basis, random_invariant(3, "sc"), 0.4)
    a, b = eigensolve(H), eigensolve(H)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)


@pytest.mark.parametrize("case,mult", [(("sc", "R"), 8), (("bcc", "P"), 4), (("bcc", "H"), 6), (("fcc", "W"), 4)])
def test_free_multiplicity(case, mult):
    K = named_point(*case)
    spec = eigensolve(build_hamiltonian(build_basis(case[0], K), None, 0.0))
    a, b = spec.clusters()[0]
    assert b - a == mult
    assert spec.eigenvalues[0] == pytest.approx(K @ K)


def test_sc_lowest_level_is_three_pi_squared():
    spec = eigensolve(build_hamiltonian(build_basis("sc", named_point("sc", "R")), None, 0.0))
    np.testing.assert_allclose(spec.eigenvalues[:8], 3 * PI ** 2)
    assert spec.eigenvalues[8] > 3 * PI ** 2 + 1


@pytest.mark.parametrize("name", ["sc", "bcc", "fcc"])
def test_translation_covariance(name):
    pot = random_invariant(5, name, 3)
    recip = dual_basis(Lattice.named(name))
    K = np.array([0.4, -0.7, 1.1])
    cutoff = 400.0
    ref = eigensolve(build_hamiltonian(build_basis(name, K, energy_cutoff=cutoff), pot, 0.8)).eigenvalues
    for k in recip.kvecs:
        other = eigensolve(build_hamiltonian(build_basis(name, K + k, energy_cutoff=cutoff), pot, 0.8)).eigenvalues
        np.testing.assert_allclose(other, ref, atol=1e-8)


@pytest.mark.parametrize("name", ["sc", "bcc", "fcc"])
def test_point_group_isospectrality(name):
    pot = random_invariant(6, name, 3)
    K = np.array([0.4, -0.7, 1.1])
    ref = eigensolve(build_hamiltonian(build_basis(name, K, energy_cutoff=400.0), pot, 0.8)).eigenvalues
    for g in sorted(octahedral_group())[::5]:
        gK = g.matrix @ K
        vals = eigensolve(build_hamiltonian(build_basis(name, gK, energy_cutoff=400.0), pot, 0.8)).eigenvalues
        np.testing.assert_allclose(vals, ref, atol=1e-8)


@pytest.mark.parametrize("case", CASES)
def test_cutoff_convergence_is_reported(case):
    K = named_point(*case)
    pot = random_invariant(1, case[0], 3, amplitude=0.5)
    means = []
    for factor in (10.0, 15.0):
        basis = build_basis(case[0], K, energy_cutoff=factor * K @ K)
        spec = eigensolve(build_hamiltonian(basis, pot, 0.2))
        a, b = spec.cluster_near(K @ K)
        means.append(spec.eigenvalues[a:b])
    change = float(np.max(np.abs(means[0][0] - means[1][0])))
    print(f"cutoff convergence {case}: lowest cluster eigenvalue changes by {change:.2e} at 1.5x cutoff")
    assert np.isfinite(change) and change < 1e-3


@pytest.mark.parametrize("case", CASES)
def test_sectors_at_zero_coupling(case):
    sub = admissible_subgroup(*case)
    H = build_hamiltonian(build_basis(sub.lattice, sub.K), None, 0.0)
    k2 = sub.K @ sub.K
    for w in sub.sectors:
        vals = sector_restrict(H, sub, w).eigenvalues
        assert np.sum(np.abs(vals - k2) < 1e-9) == 1


@pytest.mark.parametrize("case", CASES)
def test_sector_union_is_full_spectrum(case):
    sub = admissible_subgroup(*case)
    H = build_hamiltonian(build_basis(sub.lattice, sub.K), random_invariant(2, case[0], 3), 0.6)
    full = eigensolve(H).eigenvalues
    parts = np.sort(np.concatenate([sector_restrict(H, sub, w).eigenvalues for w in sub.sectors]))
    np.testing.assert_allclose(parts, full, atol=1e-8)


@pytest.mark.parametrize("case", CASES)
def test_sector_orthogonality(case):
    sub = admissible_subgroup(*case)
    basis = build_basis(sub.lattice, sub.K)
    qs = [sector_basis(basis, sub, w) for w in sub.sectors]
    for a, b in itertools.combinations_with_replacement(range(len(qs)), 2):
        gram = qs[a].conj().T @ qs[b]
        if a == b:
            np.testing.assert_allclose(gram, np.eye(gram.shape[0]), atol=1e-12)
        else:
            assert np.max(np.abs(gram)) < 1e-12


def test_sector_eigenvalue_in_full_cluster():
    sub = admissible_subgroup("bcc", "H")
    H = build_hamiltonian(build_basis(sub.lattice, sub.K), random_invariant(1, "bcc", 3), 0.05)
    full = eigensolve(H).eigenvalues
    k2 = sub.K @ sub.K
    for w in sub.sectors:
        vals = sector_restrict(H, sub, w).eigenvalues
        near = vals[np.argmin(np.abs(vals - k2))]
        assert np.min(np.abs(full - near)) < 1e-8


def test_sector_restrict_needs_zero_kappa():
    sub = admissible_subgroup("sc", "R")
    H = build_hamiltonian(build_basis("sc", sub.K, kappa=[0.01, 0, 0]), None, 0.0)
    with pytest.raises(SolverError):
        sector_restrict(H, sub, sub.sectors[0])


def test_empty_sector_reported():
    sub = admissible_subgroup("sc", "R")
    basis = build_basis("sc", sub.K, energy_cutoff=sub.K @ sub.K)
    assert sector_basis(basis, sub, sub.sectors[3]).shape[1] == 1
    sub_h = admissible_subgroup("bcc", "H")
    tiny = build_basis("bcc", np.array([0.0, 0.0, 2 * PI]), energy_cutoff=4 * PI ** 2)
    for w in sub_h.sectors:
        assert sector_basis(tiny, sub_h, w).shape[1] == 1


def test_free_dispersion_matches_folded_parabolas():
    path = np.array([[0.1, 0.2, 0.3], [1.0, -0.5, 2.0], [PI, PI, 0.0]])
    table = dispersion_scan("fcc", None, 0.0, path, cutoff=300.0, n_bands=6, center=np.zeros(3))
    _, g = lattice_points(dual_basis(Lattice.named("fcc")), 40.0, include_origin=True)
    for k, row in zip(path, table.energies):
        want = np.sort(np.sum((k + g) ** 2, axis=1))[:6]
        np.testing.assert_allclose(row, want, atol=1e-9)


def test_single_point_dispersion_matches_eigensolve():
    pot = random_invariant(1, "sc")
    K = named_point("sc", "R")
    table = dispersion_scan("sc", pot, 0.3, [K], n_bands=10)
    spec = eigensolve(build_hamiltonian(build_basis("sc", K), pot, 0.3))
    np.testing.assert_allclose(table.energies[0], spec.eigenvalues[:10], atol=1e-12)
    assert table.to_csv().splitlines()[0] == "k_x,k_y,k_z," + ",".join(f"E_{i}" for i in range(1, 11))


def test_three_bands_meet_at_body_centred_corner():
    K = named_point("bcc", "P")
    pot = random_invariant(0, "bcc", 4)
    d = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
    t = np.linspace(-0.05, 0.05, 11)
    table = dispersion_scan("bcc", pot, 0.05, K + t[:, None] * d, center=K, n_bands=4)
    mid = table.energies[5]
    cl = cluster_ranges(mid, 1e-7)
    assert sorted(b - a for a, b in cl) == [1, 3]
    # the body diagonal is a three-fold rotation axis, so two branches stay degenerate along it
    assert sorted(b - a for a, b in cluster_ranges(table.energies[0], 1e-7)) == [1, 1, 2]
    generic = np.array([1.0, 0.3, -0.6]) / np.linalg.norm([1.0, 0.3, -0.6])
    table = dispersion_scan("bcc", pot, 0.05, K + t[:, None] * generic, center=K, n_bands=4)
    assert len(cluster_ranges(table.energies[0], 1e-7)) == 4


def test_threaded_scan_is_identical():
    path = named_point("fcc", "W") + np.linspace(0, 0.1, 6)[:, None] * np.array([0, 0, 1.0])
    pot = random_invariant(2, "fcc")
    a = dispersion_scan("fcc", pot, 0.3, path, threads=1)
    b = dispersion_scan("fcc", pot, 0.3, path, threads=3)
    assert a.to_csv() == b.to_csv()
