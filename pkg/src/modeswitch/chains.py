"""Stationary analysis of policy-induced chains: fixed-point distributions,
total-variation mixing profiles with fitted geometric envelopes, and checks of
the discounted cost-gap bound those envelopes imply."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp import InducedChain, finite_horizon_cost

_STATIONARY_RESIDUAL_TOL = 1e-10
_ENVELOPE_BETA_FLOOR = 1e-6
_ENVELOPE_CAP_FACTOR = 1e6


class ReducibleChainError(ValueError):
    """The chain failed the positivity check that stationary analysis needs."""


class MixingBoundError(RuntimeError):
    """The cost-gap bound was violated; this indicates a computation bug."""


@dataclass(frozen=True)
class MixingProfile:
    """Worst-case total-variation distance to stationarity, per step.

    ``tv_by_step[t]`` is the maximum over start states of the TV distance
    between the ``t``-step distribution and the stationary one.  The profile
    is dominated by the fitted geometric envelope
    ``envelope_b * envelope_beta ** t`` on the recorded range.
    """

    tv_by_step: np.ndarray
    envelope_b: float
    envelope_beta: float

    def __post_init__(self):
        object.__setattr__(self, "tv_by_step", np.asarray(self.tv_by_step, dtype=float))
        dist = self.tv_by_step
        if np.any(dist < -1e-15) or np.any(dist > 1.0 + 1e-12):
            raise ValueError("tv distances must lie in [0, 1]")
        if np.any(np.diff(dist) > 1e-12):
            raise ValueError("tv distances must be nonincreasing in t")
        if self.envelope_b <= 0.0 or not 0.0 < self.envelope_beta < 1.0:
            raise ValueError("envelope must have b > 0 and beta in (0, 1)")
        steps = np.arange(dist.size)
        if np.any(dist > self.envelope_b * self.envelope_beta**steps + 1e-12):
            raise ValueError("envelope does not dominate the recorded profile")


@dataclass(frozen=True)
class MixingBoundReport:
    """Slack of the geometric cost-gap bound over all (start state, horizon)."""

    k_max: int
    discount: float
    max_slack: float
    min_slack: float


def _reachability(transition: np.ndarray) -> np.ndarray:
    """Boolean pattern of (I + P)^n: who can reach whom in at most n steps."""
    n = transition.shape[0]
    step = ((transition > 0.0) | np.eye(n, dtype=bool)).astype(np.uint8)
    reach = np.eye(n, dtype=np.uint8)
    for _ in range(n):
        reach = np.minimum(reach @ step, 1)
    return reach.astype(bool)


def _has_single_recurrent_class(transition: np.ndarray) -> bool:
    """True when exactly one closed communicating class exists.

    Entrywise positivity of (I + P)^n certifies irreducibility outright;
    policies that never replenish the top of the state space induce chains
    with transient states, for which the stationary distribution is still
    unique provided all recurrent states communicate.
    """
    reach = _reachability(transition)
    if reach.all():
        return True
    # A state is recurrent iff everything it reaches can reach it back.
    recurrent = np.array(
        [bool(np.all(~reach[i] | reach[:, i])) for i in range(reach.shape[0])]
    )
    if not recurrent.any():
        return False
    seeds = np.flatnonzero(recurrent)
    first = seeds[0]
    return bool(np.all(reach[seeds, first] & reach[first, seeds]))


def stationary_distribution(chain: InducedChain) -> np.ndarray:
    """Unique stationary distribution of a chain with one recurrent class.

    Raises:
        ReducibleChainError: the reachability pattern of ``(I + P)^n`` shows
            more than one closed communicating class (or the linear solve is
            inconsistent with one), so no unique stationary distribution
            exists and the quantities built from it are undefined.
    """
    transition = chain.transition
    n = chain.n_states
    if not _has_single_recurrent_class(transition):
        raise ReducibleChainError(
            "(I + P)^n reachability shows multiple closed communicating "
            "classes: no unique stationary distribution exists, so the "
            "quantities built from it are undefined"
        )
    system = transition.T - np.eye(n)
    system[-1, :] = 1.0
    target = np.zeros(n)
    target[-1] = 1.0
    dist = np.linalg.solve(system, target)
    dist = np.clip(dist, 0.0, None)
    dist /= dist.sum()
    residual = float(np.abs(dist @ transition - dist).sum())
    if residual > _STATIONARY_RESIDUAL_TOL:
        raise ReducibleChainError(
            f"stationary solve left an l1 residual of {residual:.3e}"
        )
    return dist


def _fit_envelope(tv: np.ndarray) -> tuple[float, float]:
    """Smallest-beta geometric envelope whose constant stays within a cap.

    Feasibility of a candidate beta means ``max_t tv[t] / beta**t`` does not
    exceed ``tv[0] * 1e6``; the smallest feasible beta is bracketed by
    bisection to 1e-7.  If the profile is zero beyond step 0 every beta is
    feasible and the floor value is returned.
    """
    steps = np.arange(tv.size)
    if not np.any(tv[1:] > 0.0):
        b = float(tv[0]) if tv[0] > 0.0 else 1.0
        return b, _ENVELOPE_BETA_FLOOR
    cap = float(tv[0]) * _ENVELOPE_CAP_FACTOR
    positive = tv > 0.0
    log_tv = np.log(tv[positive])
    pos_steps = steps[positive]

    def constant_for(beta: float) -> float:
        # log-space ratio max; beta**t underflows long before this does
        peak = float(np.max(log_tv - pos_steps * math.log(beta)))
        return math.exp(peak) if peak < 700.0 else math.inf

    lo, hi = _ENVELOPE_BETA_FLOOR, 1.0 - 1e-9
    if constant_for(lo) <= cap:
        beta = lo
    else:
        while hi - lo > 1e-7:
            mid = 0.5 * (lo + hi)
            if constant_for(mid) <= cap:
                hi = mid
            else:
                lo = mid
        beta = hi
    return constant_for(beta), beta


def mixing_profile(chain: InducedChain, t_max: int) -> MixingProfile:
    """Exact TV mixing profile up to ``t_max`` plus a fitted envelope.

    The supremum over initial distributions is attained at a point mass, so
    each ``d(t)`` is the maximum over rows of half the l1 distance between
    the ``t``-step kernel power and the stationary distribution.
    """
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    dist = stationary_distribution(chain)
    n = chain.n_states
    power = np.eye(n)
    tv = np.empty(t_max + 1)
    for t in range(t_max + 1):
        tv[t] = 0.5 * float(np.max(np.abs(power - dist).sum(axis=1)))
        if t < t_max:
            power = power @ chain.transition
    envelope_b, envelope_beta = _fit_envelope(tv)
    return MixingProfile(tv, envelope_b, envelope_beta)


def cost_to_go_gap(
    chain: InducedChain, initial_dist: np.ndarray, discount: float, horizon: int | float
) -> float:
    """|k-step cost from ``initial_dist``  -  k-step cost at stationarity|."""
    dist = stationary_distribution(chain)
    if math.isinf(horizon):
        factor = 1.0 / (1.0 - discount)
    else:
        factor = (1.0 - discount ** int(horizon)) / (1.0 - discount)
    stationary_cost = factor * float(chain.cost_vec @ dist)
    return abs(finite_horizon_cost(chain, initial_dist, horizon, discount) - stationary_cost)


def verify_mixing_bound(chain: InducedChain, discount: float, k_max: int) -> MixingBoundReport:
    """Check the geometric cost-gap bound for every start state and horizon.

    For each point-mass start and each ``k <= k_max`` the cost gap must stay
    below both the stepwise bound ``2 * |c|_inf * sum_{t<k} discount^t d(t)``
    and the envelope bound ``2 * |c|_inf * b * (1-(discount*beta)^k) /
    (1-discount*beta)``.  Both are theorems, so any violation beyond float
    noise is reported as a bug with its witness.
    """
    profile = mixing_profile(chain, k_max)
    dist = stationary_distribution(chain)
    n = chain.n_states
    cost_inf = float(np.max(np.abs(chain.cost_vec)))
    stationary_cost = float(chain.cost_vec @ dist)

    # J[k, x]: k-step discounted cost from state x, built by propagating all
    # point masses at once.
    costs = np.zeros((k_max + 1, n))
    power = np.eye(n)
    disc = 1.0
    for k in range(1, k_max + 1):
        costs[k] = costs[k - 1] + disc * (power @ chain.cost_vec)
        power = power @ chain.transition
        disc *= discount

    stepwise = np.zeros(k_max + 1)
    geom = discount ** np.arange(k_max)
    stepwise[1:] = 2.0 * cost_inf * np.cumsum(geom * profile.tv_by_step[:-1])

    rate = discount * profile.envelope_beta
    ks = np.arange(k_max + 1)
    envelope = 2.0 * cost_inf * profile.envelope_b * (1.0 - rate**ks) / (1.0 - rate)

    atol = 1e-9 * max(1.0, cost_inf / (1.0 - discount))
    max_slack = -math.inf
    min_slack = math.inf
    for k in range(1, k_max + 1):
        factor = (1.0 - discount**k) / (1.0 - discount)
        gaps = np.abs(costs[k] - factor * stationary_cost)
        worst = int(np.argmax(gaps))
        if gaps[worst] > stepwise[k] + atol:
            raise MixingBoundError(
                f"stepwise cost-gap bound violated at state {worst}, horizon {k}: "
                f"gap {gaps[worst]:.6e} > bound {stepwise[k]:.6e}"
            )
        if gaps[worst] > envelope[k] + atol:
            raise MixingBoundError(
                f"envelope cost-gap bound violated at state {worst}, horizon {k}: "
                f"gap {gaps[worst]:.6e} > bound {envelope[k]:.6e}"
            )
        slack = envelope[k] - gaps
        max_slack = max(max_slack, float(slack.max()))
        min_slack = min(min_slack, float(slack.min()))
    return MixingBoundReport(k_max, discount, max_slack, min_slack)
