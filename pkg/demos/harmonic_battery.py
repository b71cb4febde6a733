"""Harmonic measure of the strip 0 < Im k < 1: exact density, grid and walk on spheres."""
from greenlab.harmonic import cylinder_battery

rep = cylinder_battery(walkers=20000)
print(f"{'pole':>12} {'t':>6} {'exact':>10} {'grid':>10} {'seg exact':>10} {'seg MC':>10} {'+-':>8}")
for r in rep.rows:
    print(f"{str(r.pole):>12} {r.pole.real + r.offset:6.2f} {r.exact_density:10.6f} {r.grid_density:10.6f} "
          f"{r.exact_mass:10.6f} {r.mc_mass:10.6f} {r.mc_stderr:8.5f}")
m, se = rep.lower_mass_mc
print(f"lower-side mass at 0.5i: MC {m:.4f} +- {se:.4f}, grid {rep.lower_mass_grid:.6f} (exact 0.5)")
