"""Reward learning from demonstrations on gridworld benchmarks.

The package solves the forward problem with a smoothed Bellman backup,
matches expert and expected visitation counts, and trains linear, dense,
or convolutional reward models by backpropagating the count difference.
"""

from .config import ConfigError, ExperimentConfig, SpecMismatchError, load_config
from .evaluation import (
    TrueRewardBaseline,
    evd_against_baseline,
    expected_value_difference,
    true_reward_baseline,
)
from .mdp import (
    ACTION_NAMES,
    GridMdp,
    RewardVector,
    Trajectory,
    make_gridworld,
    validate_trajectory,
    with_goal,
)
from .nets import (
    AdaGradState,
    FeatureMatrix,
    GridTensor,
    LayerSpec,
    NetworkParams,
    adagrad_update,
    apply_weight_decay,
    backward,
    conv_network,
    feature_network,
    forward,
    init_network,
    linear_model,
    load_params,
    save_params,
)
from .seeding import derive_seed
from .solver import (
    NumericDivergenceError,
    StochasticPolicy,
    ValueFunctions,
    VisitationCounts,
    hard_value_iteration,
    policy_value,
    propagate_policy,
    soft_value_iteration,
)
from .training import (
    DemoSet,
    TrainRecord,
    TrainReport,
    data_gradient_wrt_reward,
    empirical_start_distribution,
    expert_counts,
    gradient_sup_norm,
    maxent_data_loss,
    train,
)
from .worlds import (
    GenerationError,
    World,
    WorldSpec,
    binaryworld_from_colors,
    default_n_objects,
    generate_binaryworld,
    generate_objectworld,
    generate_world,
    load_world,
    objectworld_from_layout,
    sample_demonstrations,
    save_world,
    transfer_evaluate,
    write_pgm,
)

__version__ = "0.1.0"
