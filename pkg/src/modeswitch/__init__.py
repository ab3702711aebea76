"""Change-detection-based controller switching for finite MDPs whose
transition kernel switches once at a geometric random time."""

__version__ = "0.1.0"

from .mdp import (
    ConvergenceError,
    InducedChain,
    ModePairMdp,
    finite_horizon_cost,
    induced_chain,
    value_iteration,
)
from .chains import (
    MixingBoundError,
    MixingBoundReport,
    MixingProfile,
    ReducibleChainError,
    cost_to_go_gap,
    mixing_profile,
    stationary_distribution,
    verify_mixing_bound,
)
from .regret import (
    DetectionStats,
    SwitchingCostRates,
    detection_objective,
    false_alarm_weight,
)
from .detector import (
    BeliefDynamics,
    BeliefGrid,
    BeliefValueTable,
    DivergenceError,
    ImpossibleTransitionError,
    ThresholdStructureError,
    bellman_apply,
    belief_update,
    continuation_values,
    evaluate_switch_rule,
    extract_thresholds,
    finite_horizon_dp,
    mixture_transition,
    solve_fixed_point,
    stop_cost_table,
)
from .environments import (
    InventorySpec,
    RandomMdpSpec,
    SwitchingEnv,
    build_inventory,
    gen_random_mdp,
    inventory_expected_stage_costs,
    random_env,
)
from .pipeline import SolveOptions, SolvedEnv, solve_env
from .simulate import (
    EpisodeBatch,
    EpisodeRecord,
    RegretCheck,
    RegretEstimate,
    SimReport,
    episode_rng,
    estimate_exact_regret,
    estimate_regret_decomposition,
    regret_consistency,
    run_batch,
    run_episode,
    run_experiment,
    sample_change_point,
    summarize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
