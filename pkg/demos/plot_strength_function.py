"""
Strength function and its Breit-Wigner width
============================================

Pool the strength functions of a few realizations and fit a Lorentzian.
The fitted width is compared with the golden rule.
"""

import math

import numpy as np

from qchaos import (RegisterConfig, build_hamiltonian, central_basis_state, diagonalize,
                    golden_rule_width, pooled_strength_function, sample_disorder,
                    second_moment)

n = 10
cfg = RegisterConfig(n, topology="grid", delta0=1.0, j_scale=1.5 / n, master_seed=3)

items, golden, de2 = [], [], []
for k in range(12):
    r = sample_disorder(cfg, k)
    i = central_basis_state(r)
    items.append((diagonalize(build_hamiltonian(r)), i))
    golden.append(golden_rule_width(r, i).gamma)
    de2.append(second_moment(r))

bw = math.sqrt(np.mean(de2)) / 10
sf = pooled_strength_function(items, bw)
print(f"second moment {sf.second_moment:.4f} (sum of J^2: {np.mean(de2):.4f})")
print(f"fitted Gamma {sf.fitted_gamma:.4f}, golden rule {np.mean(golden):.4f}")

# crude text histogram of the pooled profile near the centre
centre = np.abs(sf.bin_centers) < 4 * sf.fitted_gamma
peak = sf.density[centre].max()
for e, p in zip(sf.bin_centers[centre], sf.density[centre]):
    print(f"{e:+.3f} {'#' * int(50 * p / peak)}")
