"""
Decay of a basis state and growth of its entropy
================================================

Evolve the central basis state of a disordered 3x4 lattice and compare the
exact survival probability with the closed-form laws.
"""

import math

import numpy as np

from qchaos import (AnalyticModelParams, RegisterConfig, analytic_survival,
                    build_hamiltonian, central_basis_state, diagonalize, evolve,
                    golden_rule_width, measure_critical_time, sample_disorder,
                    second_moment)
from qchaos.dynamics import critical_time, default_time_grid

n = 12
cfg = RegisterConfig(n, topology="grid", delta0=1.0, j_scale=1.5 / n, master_seed=1)
r = sample_disorder(cfg, 0)
s = diagonalize(build_hamiltonian(r))     # two parity blocks of 2048
i = central_basis_state(r)

de2 = second_moment(r)
gamma = golden_rule_width(r, i).gamma
print(f"Delta E = {math.sqrt(de2):.4f}, golden-rule Gamma = {gamma:.4f}")

t = default_time_grid(math.sqrt(de2), gamma, num=60)
traj = evolve(s, i, t)

params = AnalyticModelParams.from_realization(r, i, gamma)
w_int = analytic_survival("interpolated", params, t)

# %%
# the exact W_i follows the Gaussian onset, then the exponential tail, then
# saturates at the stationary value
print(f"{'t':>10} {'W_i':>10} {'interp':>10} {'S (bits)':>9}")
for k in range(0, t.size, 6):
    print(f"{t[k]:10.3g} {traj.survival[k]:10.4f} {w_int[k]:10.4f} {traj.entropy_bits[k]:9.3f}")

# %%
# one bit of entropy marks the end of reliable operation
tc = measure_critical_time(traj)
print("measured t_c:", tc)
print("predicted t_c:", critical_time(params))
