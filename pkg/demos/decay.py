"""Off-diagonal decay of the Green's kernel above the Combes-Thomas gate."""
import numpy as np

from greenlab.bounds import check_combes_thomas, check_windowed_decay
from greenlab.operator_model import make_power_law_potential

V = make_power_law_potential(1, 0.1, 0.8, 64.0)
fit = check_combes_thomas(V, 1.5 + 1j, 8.0, np.linspace(1, 20, 20))
print(f"|G(rho+s, rho)| ~ exp({fit.slope:.4f} s); lemma rate -0.5")
for T in (64.0, 128.0, 256.0):
    k = 1.5 + 8j * T ** -0.8
    fit = check_windowed_decay(make_power_law_potential(1, 1.0, 0.8, T), k, C1=4.0)
    print(f"T={T:5.0f} Im k={k.imag:.4f} fitted c={fit.rate:.4f}")
