"""granubath: DSMC solver and analytic toolbox for a gas of inelastic hard
spheres driven by a velocity-space heat bath."""

__version__ = "0.1.0"

from .analytics import (MaxwellianParams, SteadyPrediction,
                        elastic_limit_temperature, energy_balance,
                        energy_balance_root, energy_bounds,
                        energy_eigenfunction, energy_relaxation_rate,
                        gaussian_moment, maxwellian_dissipation,
                        maxwellian_pdf, mean_relative_speed_cubed,
                        steady_temperature)
from .engine import (BimodalInit, MaxwellianInit, SimConfig, SimState,
                     UniformBallInit, VelocityEnsemble, init_ensemble, run,
                     make_state, step)
from .errors import ConfigError, NumericsError
from .experiments import (ExperimentSpec, alpha_sweep, lyapunov_trace,
                          relaxation_fit, run_experiment, scaling_check,
                          steady_state)
from .kinematics import (CrossSection, KernelConstants, energy_loss,
                         kernel_constants, load_cross_section_table,
                         post_collision, sample_sigma,
                         validate_cross_section)
from .observables import (MomentSet, ObservableSeries, RadialHistogram,
                          SeriesRecorder, dissipation_estimate, moments,
                          radial_histogram, relative_entropy,
                          stationarity_residual, weighted_l1_distance)
