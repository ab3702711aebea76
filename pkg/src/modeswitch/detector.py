"""Bayesian change-point filtering on a finite chain and the optimal-stopping
solver that turns it into state-dependent switching thresholds.

The posterior probability that the kernel has already switched is a scalar
belief updated from observed transitions.  On a uniform belief grid the
stopping problem "pay weight*(1-p) to switch now, or pay p and continue" is
solved by iterating its dynamic-programming operator to a fixed point; the
operator maps tables that are nonnegative and dominated by weight*(1-p) into
themselves, decreases monotonically from that dominating table, and preserves
concavity in the belief, which is what makes per-state thresholds optimal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import ConvergenceError, ModePairMdp, check_stochastic


class ImpossibleTransitionError(ValueError):
    """A transition with probability zero under both kernels was observed."""


class ThresholdStructureError(RuntimeError):
    """The stopping region of a value table is not an upper belief interval."""


class DivergenceError(RuntimeError):
    """Rule evaluation escaped its a-priori value cap."""


@dataclass(frozen=True)
class BeliefGrid:
    """Uniform grid on [0, 1] with exact endpoints."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        pts = self.points
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least two points")
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise ValueError("grid endpoints must be exactly 0 and 1")
        gaps = np.diff(pts)
        if np.any(gaps <= 0.0):
            raise ValueError("grid points must be strictly increasing")
        if np.max(np.abs(gaps - gaps[0])) > 1e-12:
            raise ValueError("grid must be uniformly spaced")

    @classmethod
    def uniform(cls, size: int) -> "BeliefGrid":
        return cls(np.linspace(0.0, 1.0, size))

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def spacing(self) -> float:
        return 1.0 / (self.points.size - 1)


@dataclass(frozen=True)
class BeliefDynamics:
    """Transition rows that drive the belief filter.

    ``kernel_pre[x]`` and ``kernel_post[x]`` are the pre- and post-change
    transition laws from state ``x`` under the action the pre-change policy
    takes there; the filter always conditions on that policy's actions.
    """

    kernel_pre: np.ndarray
    kernel_post: np.ndarray
    change_rate: float

    def __post_init__(self):
        object.__setattr__(self, "kernel_pre", np.asarray(self.kernel_pre, dtype=float))
        object.__setattr__(self, "kernel_post", np.asarray(self.kernel_post, dtype=float))
        if self.kernel_pre.ndim != 2 or self.kernel_pre.shape[0] != self.kernel_pre.shape[1]:
            raise ValueError("kernel_pre must be square")
        if self.kernel_post.shape != self.kernel_pre.shape:
            raise ValueError("kernel shapes must match")
        check_stochastic(self.kernel_pre, "kernel_pre")
        check_stochastic(self.kernel_post, "kernel_post")
        if not 0.0 < self.change_rate < 1.0:
            raise ValueError(f"change_rate must lie in (0, 1), got {self.change_rate}")

    @classmethod
    def from_mdp(cls, mdp: ModePairMdp, policy_pre: np.ndarray) -> "BeliefDynamics":
        rows = np.arange(mdp.n_states)
        policy_pre = np.asarray(policy_pre, dtype=np.int64)
        return cls(
            mdp.kernel_pre[rows, policy_pre],
            mdp.kernel_post[rows, policy_pre],
            mdp.change_rate,
        )

    @property
    def n_states(self) -> int:
        return self.kernel_pre.shape[0]


@dataclass(frozen=True)
class BeliefValueTable:
    """Value table over (belief grid point, state)."""

    grid: BeliefGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.size:
            raise ValueError("values must have shape (grid size, n_states)")

    @property
    def n_states(self) -> int:
        return self.values.shape[1]

    def value_at(self, belief: float, state: int) -> float:
        """Linear interpolation in the belief at a fixed state."""
        return float(np.interp(belief, self.grid.points, self.values[:, state]))


def stop_cost_table(grid: BeliefGrid, weight: float, n_states: int) -> BeliefValueTable:
    """The stopping payoff weight*(1-p), copied across states."""
    column = weight * (1.0 - grid.points)
    return BeliefValueTable(grid, np.tile(column[:, None], (1, n_states)))


def belief_update(dyn: BeliefDynamics, state: int, next_state: int, belief: float) -> float:
    """Posterior change probability after observing one transition.

    Works from the unnormalized joint (never forming a pre/post likelihood
    ratio), so transitions that are impossible under exactly one kernel
    resolve to belief 0 or 1 instead of dividing by zero.

    Raises:
        ImpossibleTransitionError: the transition has probability zero under
            both kernels.
    """
    pre = float(dyn.kernel_pre[state, next_state])
    post = float(dyn.kernel_post[state, next_state])
    if pre == 0.0 and post == 0.0:
        raise ImpossibleTransitionError(
            f"transition {state} -> {next_state} is impossible under both kernels"
        )
    drifted = belief + dyn.change_rate * (1.0 - belief)
    changed_mass = drifted * post
    total_mass = changed_mass + (1.0 - drifted) * pre
    if total_mass == 0.0:
        # Only reachable when drifted == 1 and post == 0; belief 1 is absorbing.
        return 1.0
    return changed_mass / total_mass


def mixture_transition(dyn: BeliefDynamics, state: int, belief: float) -> np.ndarray:
    """Predictive next-state law: the belief-weighted blend of both kernels."""
    drifted = belief + dyn.change_rate * (1.0 - belief)
    return drifted * dyn.kernel_post[state] + (1.0 - drifted) * dyn.kernel_pre[state]


class _DpKernel:
    """Precomputed per-(dynamics, grid) tables for applying the DP operator.

    For every (grid belief i, state x, next state x') this fixes the mixture
    probability and the updated belief's interpolation stencil; applying the
    operator to a table is then a pure gather-blend-reduce, each output cell
    depending only on the input table (deterministic regardless of how the
    cells are scheduled).  The blend uses the form (1-w)*v0 + w*v1, whose
    floating-point evaluation is monotone in the table values; combined with
    nonnegative mixture weights this makes the applied operator exactly
    monotone, not merely up to rounding.
    """

    def __init__(self, dyn: BeliefDynamics, grid: BeliefGrid):
        self.dyn = dyn
        self.grid = grid
        points = grid.points
        size = grid.size
        n = dyn.n_states
        drifted = points + dyn.change_rate * (1.0 - points)
        changed = drifted[:, None, None] * dyn.kernel_post[None, :, :]
        mix = changed + (1.0 - drifted)[:, None, None] * dyn.kernel_pre[None, :, :]
        feasible = mix > 0.0
        updated = np.where(feasible, changed / np.where(feasible, mix, 1.0), 1.0)
        position = updated * (size - 1)
        lower = np.minimum(position.astype(np.int64), size - 2)
        self.mix = mix
        self.lower = lower
        self.blend = position - lower
        self.next_cols = np.broadcast_to(np.arange(n), (size, n, n))

    def continuation(self, values: np.ndarray) -> np.ndarray:
        """Expected interpolated table value after one more observation."""
        v_lo = values[self.lower, self.next_cols]
        v_hi = values[self.lower + 1, self.next_cols]
        blended = (1.0 - self.blend) * v_lo + self.blend * v_hi
        return np.sum(self.mix * blended, axis=2)

    def apply(self, values: np.ndarray, weight: float) -> np.ndarray:
        points = self.grid.points
        stop = weight * (1.0 - points)[:, None]
        return np.minimum(stop, points[:, None] + self.continuation(values))


def continuation_values(table: BeliefValueTable, dyn: BeliefDynamics) -> np.ndarray:
    """Continuation table E[table(updated belief, next state)] per (p, x)."""
    return _DpKernel(dyn, table.grid).continuation(table.values)


def bellman_apply(table: BeliefValueTable, dyn: BeliefDynamics, weight: float) -> BeliefValueTable:
    """One application of the stopping operator min{stop payoff, p + continuation}."""
    kernel = _DpKernel(dyn, table.grid)
    return BeliefValueTable(table.grid, kernel.apply(table.values, weight))


def solve_fixed_point(
    dyn: BeliefDynamics,
    weight: float,
    grid: BeliefGrid,
    tol: float = 1e-9,
    max_iter: int = 1_000_000,
    start: BeliefValueTable | None = None,
) -> tuple[BeliefValueTable, int]:
    """Iterate the stopping operator to its fixed point.

    Starts from the stopping payoff table unless ``start`` is given.  The
    operator contracts with modulus (1 - change_rate) in the (1-p)-weighted
    sup norm, so iteration stops once the sup-norm residual falls below
    ``tol * change_rate``; by the geometric-series bound the returned table is
    then within ``tol`` of the fixed point (and its Bellman residual is well
    under ``tol``).

    Returns:
        ``(table, iterations)``.

    Raises:
        ConvergenceError: ``max_iter`` applications were not enough.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    kernel = _DpKernel(dyn, grid)
    if start is None:
        values = stop_cost_table(grid, weight, dyn.n_states).values
    else:
        if start.grid.size != grid.size:
            raise ValueError("start table lives on a different grid")
        values = start.values
    threshold = tol * dyn.change_rate
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        new_values = kernel.apply(values, weight)
        residual = float(np.max(np.abs(new_values - values)))
        values = new_values
        if residual <= threshold:
            return BeliefValueTable(grid, values), iteration
    raise ConvergenceError("stopping-operator iteration did not converge", residual)


def finite_horizon_dp(
    dyn: BeliefDynamics, weight: float, grid: BeliefGrid, horizon: int
) -> BeliefValueTable:
    """Backward induction over a forced-stop horizon; the time-0 table.

    With ``horizon`` steps to go the terminal table is the stopping payoff
    and each backward step applies the same operator (with the same
    interpolation stencil) as the fixed-point iteration, so this serves as an
    independent finite-horizon oracle for it.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    kernel = _DpKernel(dyn, grid)
    values = stop_cost_table(grid, weight, dyn.n_states).values
    for _ in range(horizon):
        values = kernel.apply(values, weight)
    return BeliefValueTable(grid, values)


def extract_thresholds(
    table: BeliefValueTable, dyn: BeliefDynamics, weight: float
) -> np.ndarray:
    """Per-state belief thresholds of the stop region of a fixed-point table.

    For each state the threshold is the smallest grid belief at which
    stopping is no dearer than continuing (ties stop).  The stop region must
    be an upper interval of the grid; a single interior grid cell of slack is
    tolerated, anything worse signals a concavity violation.
    """
    kernel = _DpKernel(dyn, table.grid)
    cont = kernel.continuation(table.values)
    points = table.grid.points
    stop = weight * (1.0 - points)[:, None] <= points[:, None] + cont
    thresholds = np.empty(dyn.n_states)
    for state in range(dyn.n_states):
        column = stop[:, state]
        first = int(np.argmax(column))
        if not column[first]:
            raise ThresholdStructureError(f"state {state} never stops, not even at belief 1")
        gaps = np.flatnonzero(~column[first:])
        if gaps.size > 1:
            raise ThresholdStructureError(
                f"stopping set for state {state} is not an upper interval "
                f"(continuation wins again at grid offsets {gaps[:5] + first})"
            )
        thresholds[state] = points[first]
    return thresholds


def evaluate_switch_rule(
    thresholds: np.ndarray,
    dyn: BeliefDynamics,
    weight: float,
    grid: BeliefGrid,
    tol: float = 1e-9,
    max_iter: int = 1_000_000,
) -> BeliefValueTable:
    """Value table of a fixed threshold rule (stop once belief >= threshold).

    Solves the rule's linear fixed point by iteration from the stopping
    payoff table, with the same grid interpolation as the optimal solver.
    Values are capped at ``weight + 1/change_rate`` (stop-now cost plus the
    mean change time); a rule that effectively never stops crosses the cap
    and raises instead of looping forever.
    """
    thresholds = np.asarray(thresholds, dtype=float)
    if thresholds.shape != (dyn.n_states,):
        raise ValueError("thresholds length must match the state count")
    if np.any(thresholds < 0.0) or np.any(thresholds > 1.0):
        raise ValueError("thresholds must lie in [0, 1]")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    kernel = _DpKernel(dyn, grid)
    points = grid.points
    stop_mask = points[:, None] >= thresholds[None, :]
    stop_values = weight * (1.0 - points)[:, None]
    cap = weight + 1.0 / dyn.change_rate
    values = np.broadcast_to(stop_values, (grid.size, dyn.n_states)).copy()
    threshold = tol * dyn.change_rate
    residual = np.inf
    for _ in range(max_iter):
        new_values = np.where(
            stop_mask, stop_values, points[:, None] + kernel.continuation(values)
        )
        if float(new_values.max()) > cap:
            raise DivergenceError(
                "rule evaluation exceeded the cap weight + 1/change_rate; "
                "the rule appears never to stop"
            )
        residual = float(np.max(np.abs(new_values - values)))
        values = new_values
        if residual <= threshold:
            return BeliefValueTable(grid, values)
    raise ConvergenceError("switch-rule evaluation did not converge", residual)
