"""Numerical laboratory for the 1-D kinetic relaxation-alignment model and
the isentropic alignment-hydrodynamics system it converges to."""

from .errors import (BudgetError, ConfigurationError, PositivityError,
                     SimulationError, StepSizeError, TruncationError)
from .grids import (TWO_PI, PhaseGrid, TorusGrid, VelocityGrid,
                    build_phase_grid, periodic_distance)
from .weights import (WeightParams, conv_periodic, kernel_matrix,
                      regularized_weight, sample_kernel, singular_weight,
                      weight_gap_check)
from .kinetic import (PRESSURE_CONSTANT, RHO_FLOOR, SUPPORT_HALF_WIDTH,
                      ClosureKind, DistributionField, MomentSet,
                      compute_moments, equilibrium_family, kinetic_energy,
                      load_snapshot, maxwellian_indicator, minimization_check,
                      save_snapshot, second_moment_gap, total_mass,
                      total_momentum)
from .kinetic_solver import (AlignmentCoefficients, EnergyLedger,
                             KineticConfig, alignment_coefficients,
                             alignment_dissipation, run_kinetic,
                             step_relaxation, step_transport,
                             step_velocity_drift, strang_step)
from .macro import (MacroConfig, MacroLedger, MacroState, alignment_source,
                    characteristic_reference, free_energy, macro_flux,
                    macro_step, numerical_flux_rusanov, riemann_invariants,
                    run_macro, shock_time_estimate)
from .entropy import (EntropyReport, RateFit, energy_budget, fit_rate,
                      lower_bound_gap, pressure_entropy_h, relative_entropy_field,
                      relative_flux, theoretical_rate, wellprepared_check)
from .harness import (ConvergenceRecord, StudyConfig, build_initial_data,
                      emit_results, load_config, read_records_csv,
                      run_limit_study, save_config)

__version__ = "0.1.0"
