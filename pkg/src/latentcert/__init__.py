"""Certified control in learned latent spaces.

Learn (or fix analytically) an encoder/decoder pair with latent dynamics,
design latent controllers, measure how far the pair is from an exact
conjugacy (gamma), and convert latent Lyapunov/barrier certificates into
guarantees on the original system degraded by L * gamma terms.
"""

from .certify import (CERTIFICATE_KINDS, CertificateReport, GridCheck,
                      LatentDomain, PreimageDomain, StateDomain,
                      TrajectoryCheck,
                      check_certificate, compute_alpha0, decay_bound,
                      estimate_Dx, estimate_Dz, estimate_lipschitz,
                      grid_over_box, invariance_check, residual_R,
                      residuals_R, rollout_values, trajectory_bound_check,
                      transfer_bounds, zero_set_scan)
from .config import DEFAULTS, RunConfig, load_run_config, merge_config
from .conjugacy import (ConjugacyEstimate, ConjugacySpec, conjugacy_error_at,
                        estimate_gamma, learned_model_spec,
                        omni_adversarial_spec, omni_analytic_spec,
                        omni_encoder, omni_encoder_jacobian)
from .control import (CbfQpSpec, LqrController, cbf_constraint,
                      cbf_feasibility_margin, cbf_qp, closed_loop_latent,
                      feasibility_scan, lqr_from_latent,
                      nominal_proportional, omni_safety_filter,
                      project_box_halfspace)
from .errors import (CheckpointError, ConfigError, ContractError,
                     DegenerateGeometryError, DivergenceError,
                     InfeasibleError, LatentCertError, NumericError,
                     RankError, SynthesisError)
from .models import (LatentModel, LyapunovNet, Mlp, identity_witness,
                     whiten_latent)
from .numerics import (convex_hull_2d, dare_solve, finite_diff_jacobian,
                       pinv_row_fullrank, point_in_hull, rk4_step,
                       spectral_radius)
from .systems import (CartpoleParams, CartpoleState, OmniParams, OmniState,
                      adversarial_disturbance, cartpole_deriv,
                      cartpole_energy, cartpole_step, energy_residuals,
                      mass_matrix, min_mass_eigenvalue, omni_B_matrix,
                      omni_deriv, omni_step, rotate3_apply, rotation3,
                      velocity_bound)
from .training import (LossWeights, LyapunovTrainResult, TrainConfig,
                       TrainResult, Trajectory, TrajectoryDataset,
                       collect_drift_dataset, collect_random_dataset,
                       loss_and_grads, reconstruction_losses, total_loss,
                       train_latent, train_lyapunov)

__version__ = "0.1.0"
