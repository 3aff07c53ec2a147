"""
Return Evaluator Tests
Undiscounted and discounted returns, accrual modes and potential shaping
"""

import math
from dataclasses import replace

import pytest

from app.core.evaluator import UNDISCOUNTED, DiscountMode, eval_return, eval_shaped_return
from app.core.exceptions import MissingFeature, MissingPotential, NotEvaluable
from app.core.expressions import Const, Ref
from app.core.spec_model import (
    PER_DECISION_STEP,
    AttributeDef,
    AttributeKind,
    OutcomeTag,
    TerminalKind,
    TerminalRule,
    on_event,
    scale_weights,
)
from app.core.trajectory import TerminalEvent, TrajectoryKind
from conftest import EVALUABLE_IDS, canonical_trajectories, constant_attribute, make_spec, make_trajectory


def total(entry_id, kind):
    spec, trajectories = canonical_trajectories(entry_id)
    return eval_return(spec, trajectories[kind]).total


class TestEvalReturn:
    """Test undiscounted returns"""

    def test_toromanoff_idle(self):
        """Ten idle seconds at 0.1 s per step"""
        assert total("tor20", TrajectoryKind.IDLE) == pytest.approx(25.0)

    def test_cai_crash_uses_written_formula(self):
        """Time, acceleration and the squared impact speed"""
        assert total("cai19", TrajectoryKind.CRASH) == pytest.approx(-2341.86, abs=0.005)

    def test_isele_returns(self):
        """Step penalty plus event rewards"""
        assert total("ise18", TrajectoryKind.CRASH) == pytest.approx(-10.1)
        assert total("ise18", TrajectoryKind.IDLE) == pytest.approx(-1.0)
        assert total("ise18", TrajectoryKind.SUCC) == pytest.approx(0.8)

    def test_zero_function(self, tiny_spec):
        """All-zero weights and no terminal rules give zero"""
        spec = scale_weights(tiny_spec, 0.0)
        traj = make_trajectory(spec, [3.0, 4.0, 5.0])
        assert eval_return(spec, traj).total == 0.0

    def test_per_step_sum(self, tiny_spec):
        """Speed accrues on every reward step"""
        result = eval_return(tiny_spec, make_trajectory(tiny_spec, [3.0, 4.0, 5.0]))
        assert result.total == 12.0
        assert result.per_attribute == {"speed": 12.0}
        assert result.step_count == 3
        assert result.discount_mode == UNDISCOUNTED

    def test_terminal_rule_fires_on_matching_event(self, tiny_spec, crash_terminal):
        """Terminal rewards apply once, only for their event"""
        spec = make_spec(terminal_rules=(TerminalRule(TerminalKind.COLLISION, Const(-100.0)),))
        crashed = eval_return(spec, make_trajectory(spec, [1.0, 1.0], terminal=crash_terminal))
        arrived = eval_return(spec, make_trajectory(spec, [1.0, 1.0], terminal=TerminalEvent(TerminalKind.GOAL, 1.0)))
        assert crashed.terminal_contribution == -100.0
        assert crashed.total == -98.0
        assert arrived.total == 2.0

    def test_on_event_attribute(self, crash_terminal):
        """on_event accrual reads the terminal environment"""
        attr = AttributeDef(
            "impact", -1.0, Ref("speed"), AttributeKind.OUTCOME, frozenset({OutcomeTag.COLLISION}),
            on_event(TerminalKind.COLLISION),
        )
        spec = make_spec(per_step_attributes=(attr,))
        assert eval_return(spec, make_trajectory(spec, [5.0, 5.0], terminal=crash_terminal)).total == -10.0

    def test_per_decision_step(self, tiny_spec):
        """Decision-step attributes accrue on the first step of each block"""
        episode = replace(tiny_spec.episode, reward_step_s=1.0, decision_step_s=2.0)
        attr = replace(constant_attribute("tick"), accrual=PER_DECISION_STEP)
        spec = make_spec(per_step_attributes=(attr,), episode=episode)
        assert eval_return(spec, make_trajectory(spec, [1.0] * 5)).total == 3.0

    @pytest.mark.parametrize("entry_id", EVALUABLE_IDS)
    def test_undiscounted_total_ignores_decision_split(self, entry_id):
        """Per-reward-step totals are the same whatever the decision step"""
        spec, trajectories = canonical_trajectories(entry_id)
        step = spec.episode.reward_step_s
        single = replace(spec, episode=replace(spec.episode, decision_step_s=step))
        grouped = replace(spec, episode=replace(spec.episode, decision_step_s=4 * step))
        for traj in trajectories.values():
            assert eval_return(single, traj).total == eval_return(grouped, traj).total == eval_return(spec, traj).total

    def test_breakdown_sums_to_total(self):
        """Total is the attribute sum plus the terminal contribution"""
        spec, trajectories = canonical_trajectories("wan20")
        result = eval_return(spec, trajectories[TrajectoryKind.IDLE])
        parts = math.fsum([*result.per_attribute.values(), result.terminal_contribution])
        assert result.total == pytest.approx(parts, rel=1e-9)

    def test_missing_feature(self, tiny_spec):
        """Features absent from the trajectory schema fail"""
        spec = make_spec(per_step_attributes=(replace(tiny_spec.per_step_attributes[0], expr=Ref("gap")),))
        traj = make_trajectory(tiny_spec, [1.0])
        with pytest.raises(MissingFeature):
            eval_return(spec, traj)

    def test_step_mismatch(self, tiny_spec):
        """Trajectory and spec must share a reward step"""
        other = make_spec(episode=replace(tiny_spec.episode, reward_step_s=0.5))
        with pytest.raises(NotEvaluable):
            eval_return(tiny_spec, make_trajectory(other, [1.0]))


class TestDiscounting:
    """Test discounted returns"""

    def test_discount_per_step(self, tiny_spec):
        """γ^k weights step k"""
        spec = make_spec(per_step_attributes=(constant_attribute("tick"),))
        traj = make_trajectory(spec, [1.0] * 3)
        assert eval_return(spec, traj, DiscountMode.with_discount(0.5)).total == 1.75

    def test_discount_from_spec(self, tiny_spec):
        """Without an explicit γ the spec's discount applies"""
        spec = make_spec(per_step_attributes=(constant_attribute("tick"),))
        result = eval_return(spec, make_trajectory(spec, [1.0] * 2), DiscountMode.with_discount())
        assert result.total == pytest.approx(1.99)
        assert result.discount_mode.gamma == 0.99

    def test_discount_at_decision_granularity(self, tiny_spec):
        """Reward steps inside one decision block share a discount"""
        episode = replace(tiny_spec.episode, reward_step_s=1.0, decision_step_s=2.0)
        spec = make_spec(per_step_attributes=(constant_attribute("tick"),), episode=episode)
        result = eval_return(spec, make_trajectory(spec, [1.0] * 4), DiscountMode.with_discount(0.5))
        assert result.total == 3.0

    def test_terminal_discount(self, tiny_spec, crash_terminal):
        """Terminal rewards take the last decision block's discount"""
        spec = make_spec(per_step_attributes=(), terminal_rules=(TerminalRule(TerminalKind.COLLISION, Const(-8.0)),))
        result = eval_return(spec, make_trajectory(spec, [1.0] * 4, terminal=crash_terminal), DiscountMode.with_discount(0.5))
        assert result.total == -1.0

    def test_discount_required(self, tiny_spec):
        """Discounted mode needs a discount factor"""
        spec = make_spec(episode=replace(tiny_spec.episode, discount=None))
        with pytest.raises(NotEvaluable):
            eval_return(spec, make_trajectory(spec, [1.0]), DiscountMode.with_discount())


class TestShapedReturn:
    """Test potential-based shaping"""

    def test_zero_potential(self, tiny_spec):
        """φ ≡ 0 leaves the return unchanged"""
        traj = make_trajectory(tiny_spec, [1.0, 2.0, 3.0])
        potential = {i: 0.0 for i in range(4)}
        assert eval_shaped_return(tiny_spec, traj, potential, 1.0) == eval_return(tiny_spec, traj).total

    def test_telescoping(self, tiny_spec):
        """γ = 1 with φ(terminal) = 0 shifts the return by -φ(start)"""
        traj = make_trajectory(tiny_spec, [1.0, 2.0, 3.0])
        potential = {0: 4.0, 1: -2.0, 2: 7.5, 3: 0.0}
        shaped = eval_shaped_return(tiny_spec, traj, potential, 1.0)
        assert shaped - eval_return(tiny_spec, traj).total == pytest.approx(-4.0)

    def test_matches_stepwise_sum(self, tiny_spec):
        """Agrees with an explicit per-step sum"""
        traj = make_trajectory(tiny_spec, [1.0, 2.0, 3.0, 4.0, 5.0])
        potential = {0: 0.3, 1: -1.2, 2: 2.5, 3: 0.7, 4: -0.4, 5: 1.1}
        expected = sum(speed + potential[t + 1] - potential[t] for t, speed in enumerate([1.0, 2.0, 3.0, 4.0, 5.0]))
        assert eval_shaped_return(tiny_spec, traj, potential, 1.0) == pytest.approx(expected)

    def test_discounted_shaping(self, tiny_spec):
        """γ < 1 uses the discounted return"""
        traj = make_trajectory(tiny_spec, [1.0, 1.0])
        potential = {0: 1.0, 1: 1.0, 2: 1.0}
        expected = (1.0 + 0.5) + (0.5 * 1.0 - 1.0) * 2
        assert eval_shaped_return(tiny_spec, traj, potential, 0.5) == pytest.approx(expected)

    def test_discounted_shaping_telescopes(self, tiny_spec):
        """Discounting the shaping terms leaves γⁿ·φ(n) − φ(0) on top of the discounted return"""
        traj = make_trajectory(tiny_spec, [1.0, 1.0, 1.0])
        potential = {0: 1.0, 1: 2.0, 2: 3.0, 3: 4.0}
        base = 1.0 + 0.5 + 0.25
        assert eval_shaped_return(tiny_spec, traj, potential, 0.5) == pytest.approx(base - 1.5)
        assert eval_shaped_return(tiny_spec, traj, potential, 0.5, discount_shaping=True) == pytest.approx(
            base + 0.5**3 * 4.0 - 1.0
        )

    def test_missing_potential(self, tiny_spec):
        """Every state index, terminal included, needs a potential"""
        traj = make_trajectory(tiny_spec, [1.0, 2.0])
        with pytest.raises(MissingPotential) as exc:
            eval_shaped_return(tiny_spec, traj, {0: 0.0, 1: 0.0}, 1.0)
        assert exc.value.index == 2
