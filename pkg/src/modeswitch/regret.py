"""Tradeoff weight between false alarms and detection delay, and the
approximate-regret objective controlled by it."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SwitchingCostRates:
    """Stationary average stage costs for every (policy, active mode) pairing.

    ``post_in_pre`` is the average cost of running the post-change policy
    while the pre-change kernel is still active, and so on.  When stage costs
    are mode-dependent each average uses the cost expectation under the
    active mode's disturbance law.
    """

    post_in_pre: float
    pre_in_pre: float
    pre_in_post: float
    post_in_post: float
    change_rate: float

    def __post_init__(self):
        if not 0.0 < self.change_rate <= 1.0:
            raise ValueError(f"change_rate must lie in (0, 1], got {self.change_rate}")

    @property
    def false_alarm_gap(self) -> float:
        """Per-step cost of having switched too early (wrong policy, mode unchanged)."""
        return self.post_in_pre - self.pre_in_pre

    @property
    def delay_gap(self) -> float:
        """Per-step cost of switching too late (old policy, mode already changed)."""
        return self.pre_in_post - self.post_in_post


def false_alarm_weight(rates: SwitchingCostRates) -> float:
    """Weight on the false-alarm probability in the detection objective.

    Equals the false-alarm cost gap divided by the delay cost gap and by the
    change rate.  Both gaps must be strictly positive for the rescaling to be
    valid; the error names the offending side.
    """
    if rates.false_alarm_gap <= 0.0:
        raise ValueError(
            "numerator nonpositive: the false-alarm cost gap "
            f"(post-in-pre {rates.post_in_pre!r} minus pre-in-pre {rates.pre_in_pre!r}) "
            "must be strictly positive"
        )
    if rates.delay_gap <= 0.0:
        raise ValueError(
            "denominator nonpositive: the delay cost gap "
            f"(pre-in-post {rates.pre_in_post!r} minus post-in-post {rates.post_in_post!r}) "
            "must be strictly positive"
        )
    return rates.false_alarm_gap / (rates.delay_gap * rates.change_rate)


@dataclass(frozen=True)
class DetectionStats:
    """Aggregate detection behaviour of a switching rule."""

    mean_delay: float
    false_alarm_prob: float
    mean_lead: float

    def __post_init__(self):
        if self.mean_delay < 0.0 or self.mean_lead < 0.0:
            raise ValueError("mean delay and lead must be nonnegative")
        if not 0.0 <= self.false_alarm_prob <= 1.0:
            raise ValueError("false_alarm_prob must lie in [0, 1]")


def detection_objective(stats: DetectionStats, weight: float) -> float:
    """Expected delay plus ``weight`` times the false-alarm probability."""
    return stats.mean_delay + weight * stats.false_alarm_prob
