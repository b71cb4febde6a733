"""Numerical laboratory for half-line matrix Schroedinger operators.

Driven solutions and Green's columns, spectral densities and entropy
integrals, the dyadic truncation iteration, harmonic measure of thin
domains, and executable checks of the supporting estimates.
"""
from .errors import (ConfigError, FitUnderdetermined, GateViolation, GreenLabError, GridTooCoarse, IntervalExhausted,
                     InvalidParameters, MeshTooCoarse, SingularSystem)
from .operator_model import (ChannelSpace, MatrixPotential, RadialGrid, SourceProfile, SpectralParameter,
                             make_indicator_source, make_power_law_potential, make_smooth_source,
                             make_spherical_reduction_potential, zero_potential)
from .resolvent import (WaveSolution, free_green, gauge_transform, greens_column, richardson_check,
                        solve_driven)
from .spectral import density_via_boundary, density_via_stieltjes, entropy_integral, total_mass_check
from .multiscale import pc_stability_probe, pc_zone, run_iteration, shrink_interval, truncate_potential
from .harmonic import (Cylinder, Rectangle, Trapezoid, cylinder_density, measure_by_grid, measure_by_walk,
                       check_trapezoid_bounds, check_total_mass_lemma, check_interpolation_upper,
                       check_interpolation_lower, mean_value_check)
from .bounds import (check_combes_thomas, check_convolution_lemma, check_energy_identity, check_rough_bound,
                     check_windowed_decay)

__version__ = "0.1.0"
