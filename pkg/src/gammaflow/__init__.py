"""gammaflow: stochasticity in reverse-time diffusion sampling.

Forward noising processes, exact Gaussian-mixture marginals and scores, the
gamma-parameterized reverse SDE/ODE family, KL-divergence estimators, and
log-Sobolev decay bounds, plus an experiment harness that ties them together.
"""

from .analytic import AnalyticConfig, kl_exact, reverse_moments, score_error_moments
from .bounds import (BoundTrace, LsiProfile, chi2_spherical, cor2_bound,
                     lsi_compact_support, lsi_two_component, thm2_bound,
                     thm4_bound_delta, thm4_bound_general, two_component_profile)
from .entropy import (EntropyEstimate, entropy_evolution, kl_gaussian,
                      kl_histogram, kl_quadrature)
from .mixture import (GaussianMixture, default_dataset, default_dataset_2d,
                      diffuse, gaussian_prior)
from .population import ParticlePopulation
from .processes import ForwardProcess, eval_coeffs, make_process
from .sampler import (GammaSchedule, MixtureScore, ParametricGaussianScore,
                      TimeGrid, constant_gamma, effective_step_size, integrate,
                      interval_gamma, karras_grid, reverse_step,
                      time_grid_for_process)
from .score_net import (MlpScore, NetScore, TrainConfig, dsm_loss_and_grad,
                        forward, init_mlp, jacobian_antisymmetry,
                        load_checkpoint, save_checkpoint, score_error_profile,
                        train)

__version__ = "0.1.0"
