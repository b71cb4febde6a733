"""Spectral density of the free half-line operator for an indicator source.

Compares the boundary formula, Stieltjes inversion and the closed form, then
adds a power-law potential and reports the log-density integral over [1, 2].
"""
import math

import numpy as np

from greenlab import (RadialGrid, density_via_boundary, density_via_stieltjes, entropy_integral,
                      make_indicator_source, make_power_law_potential, zero_potential)
from greenlab.spectral import free_density

F = make_indicator_source(1)
V0 = zero_potential(1, 1.0)
print(f"{'k':>8} {'boundary':>14} {'stieltjes':>14} {'closed form':>14}")
for k in (1.0, 2.0, 3.0, math.pi):
    grid = RadialGrid.covering(1e-3, V0.T, k)
    b = density_via_boundary(V0, F, k, grid).density
    s = density_via_stieltjes(V0, F, k * k, grid).extrapolated
    print(f"{k:8.4f} {b:14.10f} {s:14.10f} {float(free_density(k)):14.10f}")

V = make_power_law_potential(1, 0.5, 0.8, 64.0)
for pot in (V0, V):
    rep = entropy_integral(pot, F, (1.0, 2.0), nodes=33, h=2e-3)
    print(f"{pot.label}: int_1^2 log density dk = {rep.entropy:.6f}")
