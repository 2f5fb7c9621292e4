import itertools

import numpy as np
import pytest

from dmchain.entanglement import (
    Bipartition,
    canonical_bipartitions,
    ggm,
    ggm_histogram,
    ggm_values,
    max_schmidt_sq,
    reduced_density_matrix,
    single_site_probabilities,
)
from dmchain.model import (
    CouplingParams,
    SectorState,
    build_hamiltonian,
    sample_disorder,
    sector_basis,
)


def random_state(basis, seed):
    rng = np.random.default_rng(seed)
    amps = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    return SectorState(basis, amps / np.linalg.norm(amps))


def svd_lambda_sq(state, sites):
    """Oracle: embed in the full space, reshape site axes, take the top singular value."""
    n = state.basis.n_sites
    full = np.zeros(1 << n, dtype=complex)
    full[state.basis.states.astype(np.int64)] = state.amplitudes
    tensor = full.reshape([2] * n)  # axis 0 is site n-1, axis n-1 is site 0
    axes_a = [n - 1 - s for s in sites]
    axes_b = [ax for ax in range(n) if ax not in axes_a]
    mat = np.transpose(tensor, axes_a + axes_b).reshape(2 ** len(sites), -1)
    return float(np.linalg.svd(mat, compute_uv=False)[0] ** 2)


def ghz_type_state(basis):
    n = basis.n_sites
    a = sum(1 << k for k in range(1, n, 2))
    b = sum(1 << k for k in range(0, n, 2))
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index_of(a)] = amps[basis.index_of(b)] = 1.0 / np.sqrt(2.0)
    return SectorState(basis, amps)


def test_bipartition_validation():
    Bipartition((0, 2), 4)
    with pytest.raises(ValueError):
        Bipartition((), 4)
    with pytest.raises(ValueError):
        Bipartition((0, 1, 2, 3), 4)
    with pytest.raises(ValueError):
        Bipartition((0, 4), 4)
    assert Bipartition((2, 0), 4).sites == (0, 2)
    assert Bipartition((1,), 4).complement == (0, 2, 3)


def test_canonical_enumeration_counts():
    for n in range(2, 9):
        cuts = canonical_bipartitions(n)
        assert len(cuts) == 2 ** (n - 1) - 1
        seen = set()
        for cut in cuts:
            assert len(cut.sites) <= n // 2
            if 2 * len(cut.sites) == n:
                assert cut.sites[0] == 0
            # no cut and its complement both present
            key = frozenset(cut.sites)
            assert key not in seen and frozenset(cut.complement) not in seen
            seen.add(key)


def test_reduced_matrix_properties():
    basis = sector_basis(6)
    state = random_state(basis, 1)
    for sites in [(0,), (2, 4), (0, 1, 2)]:
        rho = reduced_density_matrix(state, sites)
        assert rho.shape == (2 ** len(sites),) * 2
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(rho, rho.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_reduced_matrix_of_product_state():
    basis = sector_basis(4)
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index_of(0b1010)] = 1.0  # sites 1 and 3 up
    state = SectorState(basis, amps)
    np.testing.assert_allclose(reduced_density_matrix(state, (0,)), np.diag([1.0, 0.0]), atol=1e-14)
    np.testing.assert_allclose(reduced_density_matrix(state, (1,)), np.diag([0.0, 1.0]), atol=1e-14)


def test_reduced_matrix_guard():
    basis = sector_basis(4)
    state = random_state(basis, 2)
    with pytest.raises(ValueError):
        reduced_density_matrix(state, tuple(range(15)))


def test_max_schmidt_side_symmetry():
    basis = sector_basis(6)
    state = random_state(basis, 3)
    for sites in [(0,), (1, 3), (0, 2, 4)]:
        comp = tuple(k for k in range(6) if k not in sites)
        a = max_schmidt_sq(state, sites)
        b = max_schmidt_sq(state, comp)
        assert a == pytest.approx(b, abs=1e-12)
        assert a == pytest.approx(svd_lambda_sq(state, sites), abs=1e-12)


def test_ghz_type_anchors():
    for n in (4, 6):
        basis = sector_basis(n)
        state = ghz_type_state(basis)
        for cut in [(0,), (0, 1), tuple(range(n // 2))]:
            assert max_schmidt_sq(state, cut) == pytest.approx(0.5, abs=1e-12)
        assert ggm(state, "exact").value == pytest.approx(0.5, abs=1e-12)
        assert ggm(state, "single_site").value == pytest.approx(0.5, abs=1e-12)


def test_w_state_anchor():
    basis = sector_basis(3)
    state = SectorState(basis, np.full(3, 1.0 / np.sqrt(3.0), dtype=complex))
    assert max_schmidt_sq(state, (0,)) == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert ggm(state, "exact").value == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert ggm(state, "single_site").value == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_product_state_measure_zero():
    basis = sector_basis(6)
    amps = np.zeros(basis.dim, dtype=complex)
    amps[17] = 1.0
    state = SectorState(basis, amps)
    assert ggm(state, "exact").value == 0.0
    assert ggm(state, "single_site").value == 0.0


def test_exact_matches_svd_oracle():
    for n, seed in [(4, 10), (5, 11), (6, 12), (7, 13)]:
        basis = sector_basis(n)
        state = random_state(basis, seed)
        result = ggm(state, "exact")
        best = max(svd_lambda_sq(state, cut.sites) for cut in canonical_bipartitions(n))
        assert result.lambda_sq == pytest.approx(best, abs=1e-11)
        assert result.value == pytest.approx(1.0 - best, abs=1e-11)
        # reported argmax partition attains the maximum
        assert svd_lambda_sq(state, result.argmax_partition.sites) == pytest.approx(
            best, abs=1e-11
        )


def test_single_site_uses_occupations():
    basis = sector_basis(8)
    state = random_state(basis, 4)
    p = single_site_probabilities(state)
    assert p.shape == (8,)
    assert np.all((p > -1e-12) & (p < 1 + 1e-12))
    expected = 1.0 - np.maximum(p, 1.0 - p).max()
    assert ggm(state, "single_site").value == pytest.approx(max(expected, 0.0), abs=1e-12)
    # U(1) symmetry makes the single-site reduced matrix diagonal
    k = int(np.argmax(np.maximum(p, 1.0 - p)))
    rho = reduced_density_matrix(state, (k,))
    np.testing.assert_allclose(rho, np.diag([1.0 - p[k], p[k]]), atol=1e-12)


def test_exact_never_exceeds_single_site():
    for seed in range(6):
        basis = sector_basis(6)
        state = random_state(basis, 50 + seed)
        exact = ggm(state, "exact").value
        single = ggm(state, "single_site").value
        assert exact <= single + 1e-12


def test_eigenstate_inequality_battery():
    basis = sector_basis(8)
    field = sample_disorder(8, 3.0, 77)
    op = build_hamiltonian(basis, CouplingParams(D=0.5, boundary="periodic"), field)
    vals, vecs = np.linalg.eigh(op.to_dense())
    exact = ggm_values(vecs, basis, "exact")
    single = ggm_values(vecs, basis, "single_site")
    assert np.all(exact <= single + 1e-12)
    assert np.all(exact >= 0.0) and np.all(single <= 0.5 + 1e-12)


def test_phase_rotation_invariance():
    rng = np.random.default_rng(31)
    basis = sector_basis(6)
    state = random_state(basis, 30)
    phis = rng.uniform(0, 2 * np.pi, 6)
    szs = basis.sz_table()
    rotated = SectorState(basis, state.amplitudes * np.exp(1j * (szs @ phis)))
    for mode in ("exact", "single_site"):
        assert ggm(rotated, mode).value == pytest.approx(ggm(state, mode).value, abs=1e-10)


def test_ggm_values_matches_scalar_path():
    basis = sector_basis(6)
    block = np.column_stack([random_state(basis, 60 + j).amplitudes for j in range(4)])
    for mode in ("exact", "single_site"):
        batch = ggm_values(block, basis, mode)
        for j in range(4):
            one = ggm(SectorState(basis, block[:, j]), mode).value
            assert batch[j] == pytest.approx(one, abs=1e-13)


def test_exact_mode_size_guard():
    basis = sector_basis(16)
    amps = np.zeros(basis.dim, dtype=complex)
    amps[0] = 1.0
    with pytest.raises(ValueError):
        ggm(SectorState(basis, amps), "exact")


def test_unknown_mode_rejected():
    basis = sector_basis(4)
    with pytest.raises(ValueError):
        ggm(ghz_type_state(basis), "pairwise")


def test_histogram_single_bin():
    hist = ggm_histogram(np.full(100, 0.3))
    assert hist.masses.sum() == pytest.approx(1.0, abs=1e-12)
    idx = int(np.argmax(hist.masses))
    assert hist.masses[idx] == 1.0
    assert abs(hist.centers[idx] - 0.3) <= hist.eps + 1e-9


def test_histogram_uniform_samples():
    rng = np.random.default_rng(8)
    samples = rng.uniform(0.0, 0.5, 10**6)
    hist = ggm_histogram(samples)
    assert hist.masses.sum() == pytest.approx(1.0, abs=1e-12)
    # 50 interior bins of width 0.01 on [0, 0.5] each hold about 2%
    np.testing.assert_allclose(hist.masses[:50], 0.02, rtol=0.05)
    assert hist.masses[50] < 1e-4


def test_histogram_validation():
    with pytest.raises(ValueError):
        ggm_histogram([])
    with pytest.raises(ValueError):
        ggm_histogram([0.1], eps=0.0)
    with pytest.raises(ValueError):
        ggm_histogram([0.7])
