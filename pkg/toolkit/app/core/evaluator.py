"""
Return Evaluator
Computes G(τ), total and per attribute, for a reward spec over a trajectory
"""

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np

from app.core.exceptions import MissingPotential, NotEvaluable
from app.core.expressions import eval_expr
from app.core.spec_model import AccrualMode, RewardSpec
from app.core.trajectory import Trajectory
from app.utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass(frozen=True)
class DiscountMode:
    """Undiscounted, or discounted by gamma (None: take the spec's discount)"""

    discounted: bool = False
    gamma: Optional[float] = None

    @classmethod
    def undiscounted(cls) -> "DiscountMode":
        return cls(False, None)

    @classmethod
    def with_discount(cls, gamma: Optional[float] = None) -> "DiscountMode":
        return cls(True, gamma)

    def __str__(self) -> str:
        return f"discounted({self.gamma})" if self.discounted else "undiscounted"


UNDISCOUNTED = DiscountMode.undiscounted()


@dataclass(frozen=True)
class ReturnBreakdown:
    total: float
    per_attribute: Mapping[str, float]
    terminal_contribution: float
    step_count: int
    discount_mode: DiscountMode


def _as_column(values, n: int) -> np.ndarray:
    if np.ndim(values) == 0:
        return np.full(n, float(values))
    return np.asarray(values, dtype=float)


def eval_return(spec: RewardSpec, traj: Trajectory, mode: DiscountMode = UNDISCOUNTED) -> ReturnBreakdown:
    """
    Sum weighted attribute values over the trajectory's accrual points plus the
    terminal reward

    Per-step attributes accrue on every reward step or on the first reward step
    of each decision block; on_event attributes and terminal rules fire once
    when the terminal event matches. Discounting applies gamma per decision step.
    """
    episode = spec.episode
    if episode.reward_step_s is None:
        raise NotEvaluable(f"{spec.id}: reward step duration is not specified")
    if not math.isclose(traj.reward_step_s, episode.reward_step_s, rel_tol=1e-9, abs_tol=1e-12):
        raise NotEvaluable(
            f"{spec.id}: trajectory step {traj.reward_step_s} s differs from reward step {episode.reward_step_s} s"
        )

    if mode.discounted:
        gamma = mode.gamma if mode.gamma is not None else episode.discount
        if gamma is None:
            raise NotEvaluable(f"{spec.id}: discounted return needs a discount factor")
        mode = DiscountMode.with_discount(gamma)
    else:
        gamma = 1.0

    n = traj.step_count
    ratio = episode.decision_ratio
    block = np.arange(n) // ratio
    step_weights = np.power(gamma, block) if mode.discounted else np.ones(n)
    decision_points = np.arange(0, n, ratio)
    terminal_weight = gamma ** ((n - 1) // ratio) if mode.discounted and n else 1.0

    columns = traj.columns() if spec.per_step_attributes else {}
    terminal_env = traj.terminal_env() if traj.terminal else {}
    terminal_kind = traj.terminal.kind if traj.terminal else None

    per_attribute: Dict[str, float] = {}
    for attr in spec.per_step_attributes:
        if attr.accrual.mode is AccrualMode.ON_EVENT:
            if attr.accrual.event is terminal_kind:
                value = attr.weight * eval_expr(attr.expr, terminal_env) * terminal_weight
            else:
                value = 0.0
        else:
            values = _as_column(eval_expr(attr.expr, columns), n)
            if attr.accrual.mode is AccrualMode.PER_DECISION_STEP:
                values = values[decision_points]
                weights = step_weights[decision_points]
            else:
                weights = step_weights
            value = attr.weight * math.fsum(values * weights)
        per_attribute[attr.id] = per_attribute.get(attr.id, 0.0) + value

    terminal_contribution = 0.0
    rule = spec.terminal_rule(terminal_kind) if terminal_kind is not None else None
    if rule is not None:
        terminal_contribution = eval_expr(rule.expr, terminal_env) * terminal_weight

    total = math.fsum([*per_attribute.values(), terminal_contribution])
    logger.debug(f"G({spec.id}, {traj.kind.value}) = {total!r} over {n} steps, {mode}")
    return ReturnBreakdown(
        total=total,
        per_attribute=per_attribute,
        terminal_contribution=terminal_contribution,
        step_count=n,
        discount_mode=mode,
    )


def eval_shaped_return(
    spec: RewardSpec,
    traj: Trajectory,
    potential: Mapping[int, float],
    gamma: float,
    discount_shaping: bool = False,
) -> float:
    """
    Return plus potential-based shaping F(t) = γ·φ(t+1) − φ(t)

    States are indexed 0..n with n the terminal state. With γ < 1 the base
    return is discounted but the F(t) terms are summed as they are, so the
    shaping part is not γⁿ·φ(n) − φ(0). `discount_shaping` weights each term
    like the reward of its step; at one reward step per decision that sum
    telescopes to γⁿ·φ(n) − φ(0).
    """
    n = traj.step_count
    for index in range(n + 1):
        if index not in potential:
            raise MissingPotential(index)
    if gamma == 1:
        base = eval_return(spec, traj, UNDISCOUNTED).total
    else:
        base = eval_return(spec, traj, DiscountMode.with_discount(gamma)).total
    terms = np.array([gamma * potential[t + 1] - potential[t] for t in range(n)], dtype=float)
    if discount_shaping:
        terms = terms * np.power(gamma, np.arange(n) // spec.episode.decision_ratio)
    return base + math.fsum(terms)
