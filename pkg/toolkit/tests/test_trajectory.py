"""
Trajectory Synthesis Tests
Canonical crash/idle/succ drives and minimal edits
"""

from dataclasses import replace

import numpy as np
import pytest

from app.core.exceptions import EditOutOfRange, MissingScenarioParameter, NotEvaluable
from app.core.spec_model import TerminalKind
from app.core.trajectory import (
    PATH_FRACTION,
    AddEvent,
    InjectOverlap,
    InsertLoop,
    RemoveEvent,
    ScenarioSpec,
    SetSpeed,
    TrajectoryKind,
    shuffle_events,
    step_count_for,
    synth_canonical,
    synth_custom,
)
from conftest import EVALUABLE_IDS, make_spec, make_trajectory


def canonical(corpus, entry_id, kind, **scenario_changes):
    entry = corpus.corpus_entry(entry_id)
    scenario = replace(entry.scenario, **scenario_changes) if scenario_changes else entry.scenario
    return synth_canonical(scenario, entry.spec, kind)


class TestSynthCanonical:
    """Test the three canonical drives"""

    def test_isele_success_steps(self, corpus):
        """4 s at 0.2 s per step"""
        traj = canonical(corpus, "ise18", TrajectoryKind.SUCC)
        assert traj.step_count == 20
        assert traj.terminal.kind is TerminalKind.GOAL
        assert traj.total_distance_km == pytest.approx(0.02, abs=1e-12)

    def test_idle_is_motionless(self, corpus):
        """Idle drives never move"""
        traj = canonical(corpus, "ise18", TrajectoryKind.IDLE)
        assert traj.step_count == 100
        assert not traj.speed_mps.any()
        assert traj.total_distance_km == 0.0
        assert traj.terminal.kind is TerminalKind.TIMEOUT

    def test_idle_cutoff(self, corpus):
        """Without a time limit the idle cutoff ends the drive"""
        traj = canonical(corpus, "tor20", TrajectoryKind.IDLE)
        assert traj.step_count == 100
        assert traj.terminal.kind is TerminalKind.ZERO_SPEED

    def test_cai_crash_speed(self, corpus):
        """Path length over task time gives the impact speed"""
        traj = canonical(corpus, "cai19", TrajectoryKind.CRASH)
        assert traj.terminal.kind is TerminalKind.COLLISION
        assert traj.terminal.speed_mps == pytest.approx(40 / 29.6)
        assert traj.terminal_env()["collision_speed"] == pytest.approx(1.3514, abs=1e-4)

    @pytest.mark.parametrize("entry_id", EVALUABLE_IDS)
    @pytest.mark.parametrize("kind", [TrajectoryKind.CRASH, TrajectoryKind.IDLE, TrajectoryKind.SUCC])
    def test_distance_consistency(self, corpus, entry_id, kind):
        """Progress sums to the drive's share of the path"""
        entry = corpus.corpus_entry(entry_id)
        traj = synth_canonical(entry.scenario, entry.spec, kind)
        expected = entry.scenario.path_length_km * PATH_FRACTION[kind]
        assert traj.total_distance_km == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_deterministic(self, corpus):
        """Same inputs give identical channels"""
        first = canonical(corpus, "min19", TrajectoryKind.SUCC)
        second = canonical(corpus, "min19", TrajectoryKind.SUCC)
        np.testing.assert_array_equal(first.speed_mps, second.speed_mps)
        np.testing.assert_array_equal(first.event_column("lane_change"), second.event_column("lane_change"))

    def test_events_per_km(self, corpus):
        """17 lane changes per km over 1 km"""
        traj = canonical(corpus, "min19", TrajectoryKind.SUCC)
        assert traj.event_column("lane_change").sum() == pytest.approx(17)
        assert traj.step_count == 1350

    def test_events_per_trip_on_crash(self, corpus):
        """Per-trip rates scale with the share of the trip driven"""
        traj = canonical(corpus, "cai19", TrajectoryKind.CRASH)
        assert traj.event_column("acceleration").sum() == pytest.approx(9.1)

    def test_on_crash_events_on_last_step(self, corpus):
        """Crash-only events sit just before impact"""
        crash = canonical(corpus, "dos17", TrajectoryKind.CRASH)
        succ = canonical(corpus, "dos17", TrajectoryKind.SUCC)
        assert crash.event_column("collision_damage")[-1] == 1.0
        assert succ.event_column("collision_damage").sum() == 0.0

    def test_overlap_window(self, corpus):
        """lia18 crash overlaps the opposite lane for its last second"""
        traj = canonical(corpus, "lia18", TrajectoryKind.CRASH)
        assert traj.overlap.sum() == 10
        assert traj.overlap[-10:].all()

    def test_speed_units(self, corpus):
        """Feature columns convert to the declared unit"""
        traj = canonical(corpus, "lia18", TrajectoryKind.SUCC)
        assert traj.columns()["speed"][0] == pytest.approx(60.0)

    def test_rounded_step_count_keeps_speed_consistent(self, corpus):
        """jar18 is not a whole number of steps, so speed follows the rounded count"""
        traj = canonical(corpus, "jar18", TrajectoryKind.SUCC)
        covered_m = traj.speed_mps[0] * traj.step_count * traj.reward_step_s
        assert covered_m == pytest.approx(9870.0, rel=1e-12)

    def test_continuing_task_not_evaluable(self, corpus):
        """hue19 has no terminal outcome"""
        with pytest.raises(NotEvaluable):
            canonical(corpus, "hue19", TrajectoryKind.CRASH)

    def test_missing_reward_step(self, corpus):
        """Undescribed step durations are not evaluable"""
        spec = make_spec(episode=replace(make_spec().episode, reward_step_s=None))
        with pytest.raises(NotEvaluable):
            synth_canonical(ScenarioSpec("s", path_length_km=1, speed_mps=10), spec, TrajectoryKind.SUCC)

    def test_idle_without_window(self, tiny_spec):
        """Idle needs a time limit or a cutoff"""
        spec = make_spec(episode=replace(tiny_spec.episode, time_limit_s=None))
        with pytest.raises(NotEvaluable):
            synth_canonical(ScenarioSpec("s", path_length_km=1, speed_mps=10), spec, TrajectoryKind.IDLE)

    def test_missing_parameter(self, corpus):
        """Parameter features need scenario values"""
        with pytest.raises(MissingScenarioParameter) as exc:
            canonical(corpus, "wan20", TrajectoryKind.SUCC, params={})
        assert exc.value.name in {"d_olat", "d_olon", "planning_steps", "v_ref"}

    def test_missing_speed(self, tiny_spec):
        """Moving drives need a speed or a task time"""
        with pytest.raises(MissingScenarioParameter):
            synth_canonical(ScenarioSpec("s", path_length_km=1), tiny_spec, TrajectoryKind.SUCC)

    def test_channels_read_only(self, corpus):
        """Trajectories are immutable"""
        traj = canonical(corpus, "ise18", TrajectoryKind.SUCC)
        with pytest.raises(ValueError):
            traj.speed_mps[0] = 0.0

    def test_per_step_views(self, tiny_spec):
        """Feature values at one step, or every step in order"""
        traj = make_trajectory(tiny_spec, [3.0, 4.0])
        assert traj.step_env(1) == {"speed": 4.0}
        assert traj.steps == [(0, {"speed": 3.0}), (1, {"speed": 4.0})]
        with pytest.raises(IndexError):
            traj.step_env(2)

    def test_step_count_rounding(self):
        """Nearest whole step and the exact quotient"""
        assert step_count_for(4.0, 0.2) == (20, pytest.approx(20.0))


class TestSynthCustom:
    """Test minimal edits"""

    def test_remove_one_lane_change(self, corpus):
        """Removing an event decrements its count and leaves the base alone"""
        base = canonical(corpus, "min19", TrajectoryKind.SUCC)
        edited = synth_custom(base, [RemoveEvent("lane_change")])
        assert edited.event_column("lane_change").sum() == pytest.approx(16)
        assert base.event_column("lane_change").sum() == pytest.approx(17)
        assert edited.kind is TrajectoryKind.CUSTOM

    def test_unedited_steps_unchanged(self, corpus):
        """Only the edited step differs"""
        base = canonical(corpus, "min19", TrajectoryKind.SUCC)
        edited = synth_custom(base, [AddEvent("overtake", 5)])
        diff = np.flatnonzero(edited.event_column("overtake") != base.event_column("overtake"))
        assert diff.tolist() == [5]
        np.testing.assert_array_equal(edited.speed_mps, base.speed_mps)

    def test_loop_conserves_distance(self, corpus):
        """Circular progress nets to zero"""
        base = canonical(corpus, "lia18", TrajectoryKind.SUCC)
        looped = synth_custom(base, [InsertLoop(0.1)])
        assert looped.step_count > base.step_count
        assert looped.total_distance_km == pytest.approx(base.total_distance_km, abs=1e-9)

    def test_inject_overlap(self, corpus):
        """1 s of opposite-lane overlap is 10 steps at 0.1 s"""
        base = canonical(corpus, "lia18", TrajectoryKind.CRASH, overlap_s=0.0)
        assert base.overlap.sum() == 0
        assert synth_custom(base, [InjectOverlap(1.0)]).overlap.sum() == 10

    def test_set_speed(self, corpus):
        """Speed overrides apply to a step range"""
        base = canonical(corpus, "ise18", TrajectoryKind.SUCC)
        edited = synth_custom(base, [SetSpeed(0.0, 0, 5)])
        assert not edited.speed_mps[:5].any()
        np.testing.assert_array_equal(edited.speed_mps[5:], base.speed_mps[5:])

    @pytest.mark.parametrize(
        "edit",
        [
            AddEvent("overtake", 10_000),
            RemoveEvent("honk"),
            RemoveEvent("lane_change", step=0, count=5),
            SetSpeed(1.0, 5, 2),
            InjectOverlap(10_000.0),
            InsertLoop(0.1, at=-1),
        ],
    )
    def test_out_of_range(self, corpus, edit):
        """Edits outside the trajectory are rejected"""
        base = canonical(corpus, "min19", TrajectoryKind.SUCC)
        with pytest.raises(EditOutOfRange):
            synth_custom(base, [edit])

    def test_loop_needs_motion(self, corpus):
        """Idle drives cannot circle"""
        base = canonical(corpus, "ise18", TrajectoryKind.IDLE)
        with pytest.raises(EditOutOfRange):
            synth_custom(base, [InsertLoop(0.1)])

    def test_shuffle_keeps_totals(self, corpus):
        """Shuffling moves events but keeps their counts"""
        base = canonical(corpus, "min19", TrajectoryKind.SUCC)
        shuffled = shuffle_events(base, np.random.default_rng(7))
        assert shuffled.event_column("overtake").sum() == pytest.approx(17)
