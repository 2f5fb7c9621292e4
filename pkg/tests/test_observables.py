import numpy as np
import pytest

from dmchain.model import (
    CouplingParams,
    SectorState,
    build_hamiltonian,
    sample_disorder,
    sector_basis,
)
from dmchain.observables import (
    LOG_CLAMP,
    MEAN_R_GOE,
    MEAN_R_POISSON,
    block_standard_error,
    correlator_profile,
    gap_ratios,
    mean_gap_ratio,
    quenched_average,
    zz_correlator,
    zz_correlator_matrix,
)


def normalized(basis, seed):
    rng = np.random.default_rng(seed)
    amps = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    return SectorState(basis, amps / np.linalg.norm(amps))


def test_gap_ratio_hand_values():
    np.testing.assert_allclose(gap_ratios([0.0, 1.0, 4.0]), [1.0 / 3.0])
    np.testing.assert_allclose(gap_ratios([0.0, 1.0, 3.0, 4.0]), [0.5, 0.5])
    np.testing.assert_allclose(gap_ratios([0.0, 1.0, 2.0, 3.0]), [1.0, 1.0])
    assert mean_gap_ratio([0.0, 1.0, 3.0, 4.0]) == pytest.approx(0.5)


def test_gap_ratio_input_guards():
    with pytest.raises(ValueError):
        gap_ratios([0.0, 1.0])
    with pytest.raises(ValueError):
        gap_ratios([0.0, 2.0, 1.0])


def test_degenerate_levels_merged():
    levels = [0.0, 1.0, 1.0 + 1e-15, 3.0, 4.0]
    # the near twin collapses, leaving spacings 1, 2, 1
    np.testing.assert_allclose(mean_gap_ratio(levels), np.mean([0.5, 0.5]))


def test_goe_statistic_reference():
    rng = np.random.default_rng(42)
    rs = []
    for _ in range(40):
        a = rng.standard_normal((200, 200))
        vals = np.linalg.eigvalsh((a + a.T) / 2.0)
        rs.append(mean_gap_ratio(vals[60:140]))
    assert np.mean(rs) == pytest.approx(MEAN_R_GOE, abs=0.01)


def test_poisson_statistic_reference():
    rng = np.random.default_rng(43)
    rs = [mean_gap_ratio(np.sort(rng.uniform(0, 1, 400))) for _ in range(60)]
    assert np.mean(rs) == pytest.approx(MEAN_R_POISSON, abs=0.01)


def test_zz_product_state_uncorrelated():
    basis = sector_basis(4)
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index_of(0b0101)] = 1.0
    state = SectorState(basis, amps)
    assert zz_correlator(state, 0, 3) == pytest.approx(0.0, abs=1e-14)


def test_zz_singlet_and_ghz_type():
    basis = sector_basis(2)
    down_up = basis.index_of(0b01)
    up_down = basis.index_of(0b10)
    amps = np.zeros(2, dtype=complex)
    amps[down_up] = 1.0 / np.sqrt(2.0)
    amps[up_down] = -1.0 / np.sqrt(2.0)
    assert zz_correlator(SectorState(basis, amps), 0, 1) == pytest.approx(-0.25)

    basis4 = sector_basis(4)
    amps4 = np.zeros(basis4.dim, dtype=complex)
    amps4[basis4.index_of(0b0101)] = 1.0 / np.sqrt(2.0)
    amps4[basis4.index_of(0b1010)] = 1.0 / np.sqrt(2.0)
    ghz = SectorState(basis4, amps4)
    assert zz_correlator(ghz, 0, 2) == pytest.approx(0.25)
    assert zz_correlator(ghz, 0, 1) == pytest.approx(-0.25)


def test_zz_bounds_and_symmetry():
    basis = sector_basis(6)
    state = normalized(basis, 5)
    for i, j in [(0, 3), (1, 4), (2, 5)]:
        c = zz_correlator(state, i, j)
        assert c == pytest.approx(zz_correlator(state, j, i), abs=1e-14)
        assert abs(c) <= 0.5 + 1e-12
    with pytest.raises(ValueError):
        zz_correlator(state, 2, 2)


def test_correlator_matrix_matches_pairwise():
    basis = sector_basis(5)
    block = np.column_stack([normalized(basis, 20 + j).amplitudes for j in range(3)])
    mats = zz_correlator_matrix(block, basis)
    assert mats.shape == (3, 5, 5)
    for n in range(3):
        state = SectorState(basis, block[:, n])
        for i in range(5):
            for j in range(5):
                if i == j:
                    continue
                assert mats[n, i, j] == pytest.approx(zz_correlator(state, i, j), abs=1e-13)


def test_profile_product_state_hits_clamp():
    basis = sector_basis(4)
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index_of(0b0101)] = 1.0
    vecs = amps[:, None]
    prof = correlator_profile(vecs, basis, "periodic")
    np.testing.assert_array_equal(prof.distances, [1, 2])
    assert np.all(prof.mean_log_abs <= np.log(LOG_CLAMP) + 1e-9)


def test_profile_distance_structure():
    basis = sector_basis(6)
    vecs = np.column_stack([normalized(basis, 40 + j).amplitudes for j in range(2)])
    ring = correlator_profile(vecs, basis, "periodic")
    chain = correlator_profile(vecs, basis, "open")
    np.testing.assert_array_equal(ring.distances, [1, 2, 3])
    np.testing.assert_array_equal(chain.distances, [1, 2, 3, 4, 5])
    assert ring.n_states == 2 and chain.n_states == 2
    assert np.all(np.isfinite(ring.mean_log_abs))


def test_profile_periodic_averages_ring_pairs():
    basis = sector_basis(4)
    state = normalized(basis, 60)
    vecs = state.amplitudes[:, None]
    prof = correlator_profile(vecs, basis, "periodic")
    mats = zz_correlator_matrix(vecs, basis)[0]
    r1 = [(0, 1), (1, 2), (2, 3), (3, 0)]
    r2 = [(0, 2), (1, 3)]
    for r, pairs in ((1, r1), (2, r2)):
        expected = np.mean(
            [np.log(max(abs(mats[i, j]), LOG_CLAMP)) for i, j in pairs]
        )
        assert prof.mean_log_abs[r - 1] == pytest.approx(expected, abs=1e-12)


def test_block_error_hand_oracle():
    values = np.arange(20, dtype=float)
    err, method = block_standard_error(values)
    assert method == "block10"
    blocks = [np.mean(b) for b in np.array_split(values, 10)]
    assert err == pytest.approx(np.std(blocks, ddof=1))


def test_block_error_fallbacks():
    err, method = block_standard_error([1.0, 2.0, 3.0])
    assert method == "per_realization"
    assert err == pytest.approx(np.std([1.0, 2.0, 3.0], ddof=1) / np.sqrt(3.0))
    err, method = block_standard_error([4.0])
    assert method == "single" and err == 0.0


def test_quenched_average_matches_manual():
    basis = sector_basis(6)
    params = CouplingParams(D=0.5, boundary="periodic")

    def realize(seed):
        field = sample_disorder(6, 4.0, seed)
        op = build_hamiltonian(basis, params, field)
        vals, vecs = np.linalg.eigh(op.to_dense())
        return vals, vecs

    def observable(real):
        vals, _ = real
        return np.asarray([mean_gap_ratio(vals)])

    seeds = [11, 12, 13, 14]
    record = quenched_average(
        observable,
        realize,
        seeds,
        n_sites=6,
        h=4.0,
        d_two=0.5,
        d_three=0.0,
        n_eps=20,
        master_seed=0,
        label="gap_ratio",
    )
    manual = [float(observable(realize(s))[0]) for s in seeds]
    assert record.mean == pytest.approx(np.mean(manual))
    assert record.n_r == 4 and record.n_failed == 0
    assert record.observable == "gap_ratio"
    expected_err, expected_method = block_standard_error(manual)
    assert record.stderr == pytest.approx(expected_err)
    assert record.stderr_method == expected_method
