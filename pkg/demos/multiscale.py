"""Multiscale iteration for a slowly decaying potential, with the free case as a control."""
from greenlab import make_indicator_source, make_power_law_potential, zero_potential
from greenlab.multiscale import IterationSettings, run_iteration

F = make_indicator_source(1)
settings = IterationSettings(y_points=8, x_nodes=32)
for V in (make_power_law_potential(1, 0.5, 0.8, 1024.0), zero_potential(1, 1024.0)):
    print(V.label)
    for s in run_iteration(V, F, (1.0, 2.0), 6, 10, 2.0, settings=settings):
        print(f"  n={s.n:2d} zone=[{s.zone_lower:.4f}, {s.zone_upper:.4f}] A={s.A:.6f} B={s.B:.6f}")
