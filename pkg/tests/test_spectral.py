import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qchaos.register import (DisorderRealization, RegisterConfig, build_hamiltonian,
                             diagonal_energies, sample_disorder)
from qchaos.spectral import (FitUnavailable, density_of_states, diagonalize,
                             eigenstate_profile, eigenstate_profiles, fit_breit_wigner,
                             golden_rule_width, pooled_strength_function,
                             shannon_entropy_bits, strength_function)
from qchaos.dynamics import central_basis_state


class _Pairs:
    def __init__(self, e, w):
        self.eigenvalues = np.asarray(e, dtype=float)
        self._w = np.asarray(w, dtype=float)

    def weights(self, _):
        return self._w


def _fixed(n, eps, j, delta0=1.0):
    cfg = RegisterConfig(n, delta0=delta0, j_scale=1.0)
    coup = tuple((a, b, float(v)) for (a, b), v in zip(cfg.edges, j))
    return DisorderRealization(cfg, 0, np.asarray(eps, dtype=float), coup)


def test_zero_coupling_spectrum_is_diagonal():
    r = sample_disorder(RegisterConfig(5, j_scale=0.0, master_seed=1), 0)
    s = diagonalize(build_hamiltonian(r))
    assert np.allclose(s.eigenvalues, np.sort(diagonal_energies(r.eps)))
    c = np.abs(s.coefficients)
    assert np.array_equal(c, c.round())
    assert np.all(c.sum(axis=0) == 1) and np.all(c.sum(axis=1) == 1)


def test_single_qubit_eigenvalues():
    s = diagonalize(build_hamiltonian(_fixed(1, [1.0], [])))
    assert np.allclose(s.eigenvalues, [-1.0, 1.0])


def test_parity_and_full_solver_agree():
    r = sample_disorder(RegisterConfig(7, topology="ring", j_scale=0.4, master_seed=8), 0)
    h = build_hamiltonian(r)
    a, b = diagonalize(h), diagonalize(h, use_parity=False)
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-12)
    assert a.residual(h) < 1e-12 and a.orthogonality_error() < 1e-12


def test_strength_function_normalization_and_moments():
    r = sample_disorder(RegisterConfig(8, j_scale=0.2, master_seed=5), 0)
    h = build_hamiltonian(r)
    s = diagonalize(h)
    i = central_basis_state(r)
    sf = strength_function(s, i, 0.05, fit=False)
    assert sf.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.sum(sf.density) * sf.bin_width == pytest.approx(1.0, abs=1e-12)
    m = np.asarray(h.matrix)
    assert sf.first_moment == pytest.approx(m[i, i], abs=1e-12)
    assert sf.second_moment == pytest.approx((m @ m)[i, i] - m[i, i] ** 2, rel=1e-10)


def test_strength_function_zero_coupling_single_bin():
    r = sample_disorder(RegisterConfig(6, j_scale=0.0, master_seed=2), 0)
    s = diagonalize(build_hamiltonian(r))
    sf = strength_function(s, 13, 0.01)
    occupied = np.flatnonzero(sf.density)
    assert occupied.size == 1
    lo, hi = sf.bin_edges[occupied[0]], sf.bin_edges[occupied[0] + 1]
    assert lo <= diagonal_energies(r.eps, [13])[0] < hi
    assert sf.fitted_gamma is None
    with pytest.raises(FitUnavailable):
        fit_breit_wigner(sf)


def test_breit_wigner_recovers_synthetic_lorentzian():
    gamma, center = 0.4, 0.1
    e = np.linspace(-20, 20, 40001)
    w = gamma / (2 * np.pi) / ((e - center) ** 2 + gamma ** 2 / 4)
    w /= w.sum()
    sf = strength_function(_Pairs(e, w), 0, 0.02, fit=False)
    fit = fit_breit_wigner(sf)
    assert fit.gamma == pytest.approx(gamma, rel=0.05)
    assert abs(sf.first_moment + fit.shift - center) < 0.02


def test_breit_wigner_free_scale_variant():
    gamma, center = 0.4, 0.1
    e = np.linspace(-20, 20, 40001)
    w = 0.6 * gamma / (2 * np.pi) / ((e - center) ** 2 + gamma ** 2 / 4)
    sf = strength_function(_Pairs(e, w / w.sum()), 0, 0.02, fit=False)
    fit = fit_breit_wigner(sf, free_scale=True)
    assert fit.gamma == pytest.approx(gamma, rel=0.05)


def test_pooled_fit_matches_golden_rule_in_chaotic_regime():
    n = 10
    cfg = RegisterConfig(n, delta0=1.0, j_scale=1.5 / n, master_seed=77)
    items, golden, de2 = [], [], []
    for idx in range(10):
        r = sample_disorder(cfg, idx)
        i = central_basis_state(r)
        items.append((diagonalize(build_hamiltonian(r)), i))
        golden.append(golden_rule_width(r, i).gamma)
        de2.append(sum(c[2] ** 2 for c in r.couplings))
    sf = pooled_strength_function(items, math.sqrt(np.mean(de2)) / 10)
    g = np.mean(golden)
    assert sf.fitted_gamma is not None
    assert 0.5 * g <= sf.fitted_gamma <= 2.0 * g


def test_golden_rule_coarse_example():
    # nine couplings of magnitude 0.1 on a 10-site chain: J_r^2 = 0.01, qn = 9
    r = _fixed(10, np.linspace(0.6, 1.4, 10), [0.1] * 9)
    gr = golden_rule_width(r, 0)
    assert gr.coarse == pytest.approx(0.09)
    assert gr.coarse_2pi == pytest.approx(0.5655, abs=5e-4)


def test_golden_rule_scaling_and_zero():
    eps = [0.6, 0.9, 1.1, 1.3, 0.8]
    r1 = _fixed(5, eps, [0.1, -0.2, 0.05, 0.3])
    r2 = _fixed(5, eps, [0.2, -0.4, 0.1, 0.6])
    g1, g2 = golden_rule_width(r1, 3), golden_rule_width(r2, 3)
    assert g2.gamma == pytest.approx(4 * g1.gamma)
    r0 = _fixed(5, eps, [0.0] * 4)
    assert golden_rule_width(r0, 3).gamma == 0.0


def test_golden_rule_empty_window_flag():
    r = _fixed(2, [1.0, 1.0], [0.1])
    # state 00 couples only to 11, which lies 4 delta0 above
    gr = golden_rule_width(r, 0)
    assert gr.gamma == 0.0 and gr.empty_window


def test_eigenstate_profiles_limits():
    r = sample_disorder(RegisterConfig(5, j_scale=0.0, master_seed=3), 0)
    ent, part = eigenstate_profiles(diagonalize(build_hamiltonian(r)))
    assert np.all(ent == 0) and np.allclose(part, 1)
    assert shannon_entropy_bits(np.full(64, 1 / 64)) == pytest.approx(6)


def test_two_qubit_zero_field_profiles():
    r = _fixed(2, [0.0, 0.0], [0.7], delta0=0.0)
    s = diagonalize(build_hamiltonian(r))
    assert np.allclose(s.eigenvalues, [-0.7, -0.7, 0.7, 0.7])
    for k in range(4):
        p = eigenstate_profile(s, k)
        assert p.entropy_bits == pytest.approx(1.0)
        assert p.participation == pytest.approx(2.0)


def test_density_of_states_spacing_example():
    n = 10
    r = sample_disorder(RegisterConfig(n, delta0=1.0, j_scale=1.5 / n, master_seed=4), 0)
    dos = density_of_states(diagonalize(build_hamiltonian(r)), 0.1)
    assert dos.coarse_spacing == pytest.approx(n * 2.0 ** -n)
    assert dos.coarse_spacing / 10 <= dos.central_spacing <= 10 * dos.coarse_spacing
    assert dos.counts.sum() == 2 ** n


def test_density_of_states_degenerate():
    r = sample_disorder(RegisterConfig(4, delta0=0.0, j_scale=0.0), 0)
    dos = density_of_states(diagonalize(build_hamiltonian(r)), 0.1)
    assert dos.counts.size == 1 and dos.counts[0] == 16


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 8), seed=st.integers(0, 2**32), j=st.floats(0.01, 1.5),
       c=st.floats(0.2, 5.0))
def test_spectrum_identities_and_scale_invariance(n, seed, j, c):
    cfg = RegisterConfig(n, delta0=1.0, j_scale=j, master_seed=seed)
    h = build_hamiltonian(sample_disorder(cfg, 0))
    s = diagonalize(h)
    m = np.asarray(h.matrix)
    assert s.orthogonality_error() < 1e-10
    assert s.eigenvalues.sum() == pytest.approx(np.trace(m), abs=1e-10)
    assert np.sum(s.eigenvalues ** 2) == pytest.approx(np.sum(m * m), rel=1e-10)
    big = cfg.replace(delta0=c, j_scale=c * j)
    s2 = diagonalize(build_hamiltonian(sample_disorder(big, 0)))
    assert np.allclose(s2.eigenvalues, c * s.eigenvalues, rtol=1e-9, atol=1e-9)
    e1, _ = eigenstate_profiles(s)
    e2, _ = eigenstate_profiles(s2)
    assert np.allclose(np.sort(e1), np.sort(e2), atol=1e-6)
