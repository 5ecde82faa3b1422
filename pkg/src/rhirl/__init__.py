"""Receding-horizon inverse reinforcement learning.

Learn a state-dependent cost from state-only, noise-corrupted expert
demonstrations by matching the local control distributions of a sampling
based receding-horizon controller against demonstration windows, then score
the learned cost by re-optimizing control and measuring ground-truth return.
"""

from .controller import (ControllerConfig, RolloutBatch, compute_weights,
                         evaluate_rollouts, execute_control, receding_step,
                         run_episode, update_nominal)
from .costnet import (CostNet, QuadraticCost, expected_state_cost, load_params,
                      save_params, state_cost, total_cost)
from .demos import DemoSet, generate_demos, load_demos, save_demos
from .dynamics import (ControlBox, DynamicsModel, NoiseSpec, rollout,
                       sample_control_sequence, step, step_stochastic)
from .envs import (EnvSpec, GroundTruthCost, LinearGaussianModel, make_cartpole_swingup,
                   make_double_integrator, make_env, make_pendulum)
from .errors import FormatError, GenerationError, NumericError, UsageError
from .evaluation import (EvalReport, MarginalEstimate, ablate_horizon,
                         estimate_marginals, evaluate_policy, score_ratio,
                         transfer_eval, tv_distance, tv_trend)
from .trainer import (TrainConfig, TrainResult, apply_update, estimate_gradient,
                      extract_windows, train)

__version__ = "0.1.0"
