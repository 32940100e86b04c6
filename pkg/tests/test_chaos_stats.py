import numpy as np
import pytest

from qchaos.chaos_stats import (GOE_MEAN_RATIO, POISSON_MEAN_RATIO, TooFewLevels,
                                chaos_boundary_scan, first_crossing, fit_brody,
                                mean_spacing_ratio, realization_chaos,
                                spacing_ratios, spacing_statistics, unfold)
from qchaos.register import RegisterConfig, build_hamiltonian, sample_disorder
from qchaos.spectral import diagonalize


def _goe_levels(size, seed):
    a = np.random.default_rng(seed).standard_normal((size, size))
    return np.linalg.eigvalsh((a + a.T) / 2)


def test_unfold_uniform_spectrum():
    s = unfold(np.arange(500) * 0.37 + 2.0)
    assert np.allclose(s, 1.0, atol=1e-8)


def test_unfold_too_few_levels():
    with pytest.raises(TooFewLevels):
        unfold(np.arange(10.0))


def test_poisson_ratio_and_brody():
    gaps = np.random.default_rng(1).exponential(size=1_000_000)
    assert np.mean(spacing_ratios(gaps, sorted_levels=True)) == pytest.approx(0.386, abs=0.01)
    assert POISSON_MEAN_RATIO == pytest.approx(0.3863, abs=1e-4)
    assert fit_brody(gaps[:20000]) < 0.1


def test_goe_ratio_and_brody():
    lv = _goe_levels(2000, 2)
    assert mean_spacing_ratio(lv) == pytest.approx(0.531, abs=0.01)
    stats = spacing_statistics(unfold(lv), raw_levels=lv)
    assert stats.brody_parameter > 0.9
    assert stats.raw_mean_ratio == pytest.approx(GOE_MEAN_RATIO, abs=0.01)
    assert stats.hist_counts.sum() * np.diff(stats.hist_edges)[0] == pytest.approx(1.0, abs=0.01)


def test_zero_coupling_register_is_poisson_like():
    cfg = RegisterConfig(12, j_scale=0.0, master_seed=6)
    spacings = []
    for idx in range(3):
        s = diagonalize(build_hamiltonian(sample_disorder(cfg, idx)))
        spacings.append(unfold(s.eigenvalues[s.sector(0)]))
    assert fit_brody(np.concatenate(spacings)) < 0.3


def test_chain_stays_integrable_grid_does_not():
    # the transverse-field Ising chain maps to free fermions; the lattice needs
    # J of order delta0 before the up-spin count stops being nearly conserved
    chain = RegisterConfig(10, j_scale=2.0, master_seed=3)
    grid = chain.replace(topology="grid")
    rc = np.mean([realization_chaos(chain, k, 0.5).mean_ratio for k in range(4)])
    rg = np.mean([realization_chaos(grid, k, 0.5).mean_ratio for k in range(4)])
    assert rc < 0.42
    assert rg > 0.50


def test_first_crossing():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    assert first_crossing(x, [0.0, 0.5, 1.5, 2.0], 1.0) == pytest.approx(1.5)
    assert first_crossing(x, [0.0, 0.1, 0.2, 0.3], 1.0) is None
    assert first_crossing(x, [2.0, 3.0, 4.0, 5.0], 1.0) is None


def test_scan_small_register():
    cfg = RegisterConfig(8, topology="grid", delta0=1.0, master_seed=4)
    grid = np.array([0.01, 0.1, 0.5]) / 8 * 10
    res = chaos_boundary_scan(cfg, grid, 3)
    assert res.mean_eigenstate_entropy[0] < 0.05
    assert np.all(np.diff(res.mean_eigenstate_entropy) > 0)
    with pytest.raises(ValueError):
        chaos_boundary_scan(cfg, grid[::-1], 3)


def test_scan_scale_invariance():
    cfg = RegisterConfig(7, topology="grid", delta0=1.0, master_seed=9)
    grid = np.array([0.05, 0.2])
    a = chaos_boundary_scan(cfg, grid, 2)
    b = chaos_boundary_scan(cfg.replace(delta0=2.0), 2 * grid, 2)
    assert np.allclose(a.mean_eigenstate_entropy, b.mean_eigenstate_entropy, atol=1e-8)
