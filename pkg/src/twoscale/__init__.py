"""Two-scale elliptic Bayesian inversion toolkit.

Solves locally periodic two-scale elliptic problems by sparse tensor-product
Galerkin methods, exposes observation forward maps, and samples coefficient
posteriors by independence-sampler MCMC.
"""

__version__ = "0.1.0"

from .catalogue import (SeparableTerm, coefficient_preset, list_catalogue_text,
                        observation_preset, parse_term, parse_terms)
from .cells import (CellSolutionSet, CorrectorField, HomogenizedTensorField,
                    corrector_field, homogenized_tensor, solve_cell_problems)
from .coefficients import (ExpansionTerm, TwoScaleCoefficient,
                           log_gaussian_coefficient, sample_prior,
                           uniform_coefficient)
from .config import ExperimentConfig, load_config
from .errors import (CoercivityError, ConfigError, ConvergenceError,
                     MemoryGuardError, NumericalError)
from .experiments import run_experiment
from .finescale import (EpsilonProblem, Exact1DSolution, FineScaleSolution,
                        corrector_error, solve_eps_1d_exact, solve_eps_fem)
from .forward import EpsForward1D, FEForward, SemiAnalytic1D, synthesize_data
from .mcmc import (HellingerEstimate, PosteriorChain, PosteriorModel,
                   estimate_normalizer, hellinger_estimate,
                   hellinger_from_potentials, hellinger_rate_study,
                   posterior_field_mean, run_independence_sampler)
from .observations import (ForwardData, ObservationSpec, forward_map_eps,
                           forward_map_homogenized, load_data, potential,
                           save_data, synthesize_from_values)
from .solvers import (HomogenizedSolution, TwoScaleSolution, TwoScaleSpace,
                      TwoScaleSystem, assemble_two_scale, build_space,
                      energy_norm_nodal, solve_homogenized, solve_two_scale)
from .wavelets import WaveletBasis1D, build_wavelet_basis_1d, count_dofs

__all__ = [name for name in dir() if not name.startswith("_")]
