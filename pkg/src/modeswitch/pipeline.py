"""End-to-end solve for one environment: mode-optimal policies, induced-chain
stationary analysis, the false-alarm weight, and the optimal switching rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detector import (
    BeliefDynamics,
    BeliefGrid,
    BeliefValueTable,
    _DpKernel,
    extract_thresholds,
    solve_fixed_point,
)
from .environments import SwitchingEnv
from .mdp import InducedChain, greedy_backup, induced_chain, value_iteration
from .chains import stationary_distribution
from .regret import SwitchingCostRates, false_alarm_weight

#: (policy mode, kernel mode) pairs, 1 = pre-change, 2 = post-change.
MODE_PAIRS = ((1, 1), (2, 1), (1, 2), (2, 2))


@dataclass(frozen=True)
class SolveOptions:
    grid_size: int = 1000
    vi_tol: float = 1e-10
    vi_max_iter: int = 2_000_000
    fp_tol: float = 1e-9
    fp_max_iter: int = 1_000_000


@dataclass(frozen=True)
class SolvedEnv:
    """Everything the simulators and exporters need about one environment."""

    env: SwitchingEnv
    options: SolveOptions
    policy_pre: np.ndarray
    policy_post: np.ndarray
    values_pre: np.ndarray
    values_post: np.ndarray
    vi_residual_pre: float
    vi_residual_post: float
    chains: dict = field(repr=False)
    stationary: dict = field(repr=False)
    cost_rates: SwitchingCostRates
    weight: float
    dyn: BeliefDynamics
    grid: BeliefGrid
    value_table: BeliefValueTable
    fp_iterations: int
    fp_residual: float
    thresholds: np.ndarray

    @property
    def grid_slack(self) -> float:
        """Interpolation slack unit: weight times the grid spacing."""
        return self.weight * self.grid.spacing

    def start_value(self) -> float:
        """DP-predicted detection cost from zero belief and the start-state law."""
        return float(self.env.initial_dist @ self.value_table.values[0])


def _bellman_residual(kernel, cost, discount, values) -> float:
    backed_up, _ = greedy_backup(kernel, cost, discount, values)
    return float(np.max(np.abs(backed_up - values)))


def solve_env(env: SwitchingEnv, options: SolveOptions = SolveOptions()) -> SolvedEnv:
    """Run the full pipeline for one environment."""
    mdp = env.mdp
    policy_pre, values_pre = value_iteration(
        mdp.kernel_pre, env.cost_pre, mdp.discount, options.vi_tol, options.vi_max_iter
    )
    policy_post, values_post = value_iteration(
        mdp.kernel_post, env.cost_post, mdp.discount, options.vi_tol, options.vi_max_iter
    )
    policies = {1: policy_pre, 2: policy_post}
    kernels = {1: mdp.kernel_pre, 2: mdp.kernel_post}

    chains: dict[tuple[int, int], InducedChain] = {}
    stationary: dict[tuple[int, int], np.ndarray] = {}
    averages: dict[tuple[int, int], float] = {}
    for policy_mode, kernel_mode in MODE_PAIRS:
        chain = induced_chain(
            policies[policy_mode], kernels[kernel_mode], env.cost_for_mode(kernel_mode)
        )
        dist = stationary_distribution(chain)
        chains[policy_mode, kernel_mode] = chain
        stationary[policy_mode, kernel_mode] = dist
        averages[policy_mode, kernel_mode] = float(chain.cost_vec @ dist)

    rates = SwitchingCostRates(
        post_in_pre=averages[2, 1],
        pre_in_pre=averages[1, 1],
        pre_in_post=averages[1, 2],
        post_in_post=averages[2, 2],
        change_rate=mdp.change_rate,
    )
    weight = false_alarm_weight(rates)

    dyn = BeliefDynamics.from_mdp(mdp, policy_pre)
    grid = BeliefGrid.uniform(options.grid_size)
    table, iterations = solve_fixed_point(
        dyn, weight, grid, options.fp_tol, options.fp_max_iter
    )
    fp_residual = float(
        np.max(np.abs(_DpKernel(dyn, grid).apply(table.values, weight) - table.values))
    )
    thresholds = extract_thresholds(table, dyn, weight)

    return SolvedEnv(
        env=env,
        options=options,
        policy_pre=policy_pre,
        policy_post=policy_post,
        values_pre=values_pre,
        values_post=values_post,
        vi_residual_pre=_bellman_residual(mdp.kernel_pre, env.cost_pre, mdp.discount, values_pre),
        vi_residual_post=_bellman_residual(
            mdp.kernel_post, env.cost_post, mdp.discount, values_post
        ),
        chains=chains,
        stationary=stationary,
        cost_rates=rates,
        weight=weight,
        dyn=dyn,
        grid=grid,
        value_table=table,
        fp_iterations=iterations,
        fp_residual=fp_residual,
        thresholds=thresholds,
    )
