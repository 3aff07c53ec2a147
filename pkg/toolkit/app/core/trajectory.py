"""
Abstract Trajectory Synthesis
Scenario parameters, per-step channel streams and the canonical crash/idle/succ drives
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import EditOutOfRange, MissingScenarioParameter, NotEvaluable
from app.core.spec_model import FeatureSource, RewardSpec, SourceKind, TerminalKind
from app.utils.logger import AuditLogger

audit_logger = AuditLogger(__name__)

KMH_PER_MPS = 3.6


class TrajectoryKind(str, Enum):
    CRASH = "crash"
    IDLE = "idle"
    SUCC = "succ"
    CUSTOM = "custom"


CANONICAL_KINDS = (TrajectoryKind.CRASH, TrajectoryKind.IDLE, TrajectoryKind.SUCC)

# Share of the path covered by each canonical drive
PATH_FRACTION = {
    TrajectoryKind.CRASH: 0.5,
    TrajectoryKind.IDLE: 0.0,
    TrajectoryKind.SUCC: 1.0,
}


@dataclass(frozen=True)
class EventRate:
    """
    How often a scenario event happens

    per_km scales with distance travelled, per_trip with the share of the trip
    completed, per_drive counts once for any moving drive and on_crash only on
    the collision drive, just before impact.
    """

    kind: str
    per_km: float = 0.0
    per_trip: float = 0.0
    per_drive: float = 0.0
    on_crash: float = 0.0

    def count(self, traveled_km: float, fraction: float, crashed: bool) -> Tuple[float, float]:
        """(spread count, pre-collision count) for one drive"""
        moving = fraction > 0
        spread = self.per_km * traveled_km + self.per_trip * fraction + (self.per_drive if moving else 0.0)
        return spread, (self.on_crash if crashed else 0.0)


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    path_length_km: float = 0.0
    speed_mps: float = 0.0
    success_time_s: Optional[float] = None
    events: Tuple[EventRate, ...] = ()
    overlap_s: float = 0.0
    time_limit_s: Optional[float] = None
    idle_cutoff_s: Optional[float] = None
    params: Mapping[str, float] = field(default_factory=dict)

    def event(self, kind: str) -> Optional[EventRate]:
        return next((e for e in self.events if e.kind == kind), None)


@dataclass(frozen=True)
class TerminalEvent:
    kind: TerminalKind
    speed_mps: float = 0.0


def _frozen(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Per-step channels of one abstract drive

    Channels are stored per reward step: ego speed (m/s), distance progress (km),
    overlap indicator and event counts by kind. Feature values are resolved
    against the reward spec's schema on demand.
    """

    kind: TrajectoryKind
    reward_step_s: float
    path_length_km: float
    speed_mps: np.ndarray
    distance_km: np.ndarray
    overlap: np.ndarray
    events: Mapping[str, np.ndarray]
    params: Mapping[str, float]
    terminal: Optional[TerminalEvent]
    schema: Mapping[str, FeatureSource]

    def __post_init__(self):
        n = len(self.speed_mps)
        object.__setattr__(self, "speed_mps", _frozen(self.speed_mps))
        object.__setattr__(self, "distance_km", _frozen(self.distance_km))
        object.__setattr__(self, "overlap", _frozen(self.overlap))
        object.__setattr__(
            self, "events", MappingProxyType({k: _frozen(v) for k, v in sorted(self.events.items())})
        )
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        object.__setattr__(self, "schema", MappingProxyType(dict(self.schema)))
        lengths = {len(self.distance_km), len(self.overlap), *(len(v) for v in self.events.values())}
        if lengths - {n}:
            raise ValueError("trajectory channels must share one length")

    @property
    def step_count(self) -> int:
        return len(self.speed_mps)

    @property
    def total_distance_km(self) -> float:
        return math.fsum(self.distance_km)

    def event_column(self, kind: str) -> np.ndarray:
        column = self.events.get(kind)
        return column if column is not None else np.zeros(self.step_count)

    def _param(self, name: str) -> float:
        try:
            return self.params[name]
        except KeyError:
            raise MissingScenarioParameter(name) from None

    def columns(self) -> Dict[str, np.ndarray]:
        """Feature name → per-step values"""
        n = self.step_count
        resolved: Dict[str, np.ndarray] = {}
        for name, source in self.schema.items():
            if source.kind is SourceKind.SPEED:
                resolved[name] = self.speed_mps * (KMH_PER_MPS if source.arg == "kmh" else 1.0)
            elif source.kind is SourceKind.DISTANCE:
                resolved[name] = self.distance_km * (1000.0 if source.arg == "m" else 1.0)
            elif source.kind is SourceKind.EVENT:
                resolved[name] = self.event_column(source.arg)
            elif source.kind is SourceKind.OVERLAP:
                resolved[name] = self.overlap
            elif source.kind is SourceKind.PARAM:
                resolved[name] = np.full(n, self._param(source.arg))
            else:
                resolved[name] = np.zeros(n)
        return resolved

    def terminal_env(self) -> Dict[str, float]:
        """Feature name → value at the terminal transition"""
        speed = self.terminal.speed_mps if self.terminal else 0.0
        collided = self.terminal is not None and self.terminal.kind is TerminalKind.COLLISION
        env: Dict[str, float] = {}
        for name, source in self.schema.items():
            scale = KMH_PER_MPS if source.arg == "kmh" else 1.0
            if source.kind is SourceKind.SPEED:
                env[name] = speed * scale
            elif source.kind is SourceKind.COLLISION_SPEED:
                env[name] = speed * scale if collided else 0.0
            elif source.kind is SourceKind.PARAM:
                env[name] = self._param(source.arg)
            else:
                env[name] = 0.0
        return env

    def step_env(self, index: int) -> Dict[str, float]:
        if not 0 <= index < self.step_count:
            raise IndexError(index)
        return {name: float(column[index]) for name, column in self.columns().items()}

    @property
    def steps(self) -> List[Tuple[int, Dict[str, float]]]:
        columns = self.columns()
        return [
            (i, {name: float(column[i]) for name, column in columns.items()})
            for i in range(self.step_count)
        ]


def step_count_for(duration_s: float, reward_step_s: float) -> Tuple[int, float]:
    """Nearest whole step count and the exact quotient it was rounded from"""
    exact = duration_s / reward_step_s
    return int(round(exact)), exact


def _spread(count: float, n: int) -> np.ndarray:
    """Unit events at evenly spaced steps, any fractional remainder on the last step"""
    column = np.zeros(n)
    if count <= 0:
        return column
    whole = int(math.floor(count))
    if whole:
        indices = (np.arange(whole) * n) // whole
        np.add.at(column, indices, 1.0)
    column[-1] += count - whole
    return column


def _check_params(scn: ScenarioSpec, spec: RewardSpec) -> None:
    for source in spec.features.values():
        if source.kind is SourceKind.PARAM and source.arg not in scn.params:
            raise MissingScenarioParameter(source.arg)


def _idle_window(scn: ScenarioSpec, spec: RewardSpec) -> Tuple[float, TerminalKind]:
    if scn.time_limit_s is not None:
        return scn.time_limit_s, TerminalKind.TIMEOUT
    if spec.episode.has_time_limit:
        return spec.episode.time_limit_s, TerminalKind.TIMEOUT
    if scn.idle_cutoff_s is not None:
        return scn.idle_cutoff_s, TerminalKind.ZERO_SPEED
    raise NotEvaluable(f"{scn.id}: idle drive needs a time limit or an idle cutoff")


def synth_canonical(scn: ScenarioSpec, spec: RewardSpec, kind: TrajectoryKind) -> Trajectory:
    """Build the crash, idle or succ drive for a scenario at the spec's reward step"""
    kind = TrajectoryKind(kind)
    if kind is TrajectoryKind.CUSTOM:
        raise ValueError("custom trajectories come from synth_custom")
    if not spec.episode.episodic:
        raise NotEvaluable(f"{spec.id}: continuing task has no terminal outcome to compare")
    dt = spec.episode.reward_step_s
    if dt is None or dt <= 0:
        raise NotEvaluable(f"{spec.id}: reward step duration is not specified")
    _check_params(scn, spec)

    if kind is TrajectoryKind.IDLE:
        duration, terminal_kind = _idle_window(scn, spec)
        n, _ = step_count_for(duration, dt)
        zeros = np.zeros(n)
        return Trajectory(
            kind=kind,
            reward_step_s=dt,
            path_length_km=scn.path_length_km,
            speed_mps=zeros,
            distance_km=zeros,
            overlap=zeros,
            events={},
            params=scn.params,
            terminal=TerminalEvent(terminal_kind, 0.0),
            schema=spec.features,
        )

    fraction = PATH_FRACTION[kind]
    if scn.path_length_km <= 0:
        raise MissingScenarioParameter("path_length_km")
    path_m = scn.path_length_km * 1000.0
    if scn.speed_mps > 0:
        speed = scn.speed_mps
    elif scn.success_time_s:
        speed = path_m / scn.success_time_s
    else:
        raise MissingScenarioParameter("speed_mps")
    duration = scn.success_time_s * fraction if scn.success_time_s else path_m * fraction / speed

    n, exact = step_count_for(duration, dt)
    if n == 0:
        raise NotEvaluable(f"{scn.id}: {kind.value} drive is shorter than one reward step")
    if abs(exact - n) * dt > settings.STEP_GUARD_S:
        audit_logger.log_step_rounding(scn.id, kind.value, exact, n)
        # keep speed consistent with the distance actually covered
        speed = path_m * fraction / (n * dt)

    traveled_km = scn.path_length_km * fraction
    crashed = kind is TrajectoryKind.CRASH
    events: Dict[str, np.ndarray] = {}
    for rate in scn.events:
        spread, pre_collision = rate.count(traveled_km, fraction, crashed)
        column = _spread(spread, n)
        column[-1] += pre_collision
        events[rate.kind] = column

    overlap = np.zeros(n)
    if crashed and scn.overlap_s > 0:
        k = min(n, int(round(scn.overlap_s / dt)))
        overlap[n - k:] = 1.0

    terminal_kind = TerminalKind.COLLISION if crashed else TerminalKind.GOAL
    audit_logger.debug(f"Synthesized {scn.id} {kind.value}: {n} steps at {speed:.6g} m/s")
    return Trajectory(
        kind=kind,
        reward_step_s=dt,
        path_length_km=scn.path_length_km,
        speed_mps=np.full(n, speed),
        distance_km=np.full(n, traveled_km / n),
        overlap=overlap,
        events=events,
        params=scn.params,
        terminal=TerminalEvent(terminal_kind, speed),
        schema=spec.features,
    )


# Edits

class Edit:
    """One minimal modification applied by synth_custom"""

    def apply(self, traj: Trajectory) -> Trajectory:
        raise NotImplementedError


def _check_step(traj: Trajectory, step: int) -> None:
    if not 0 <= step < traj.step_count:
        raise EditOutOfRange(f"step {step} outside 0..{traj.step_count - 1}")


@dataclass(frozen=True)
class AddEvent(Edit):
    kind: str
    step: int
    count: float = 1.0

    def apply(self, traj: Trajectory) -> Trajectory:
        _check_step(traj, self.step)
        column = traj.event_column(self.kind).copy()
        column[self.step] += self.count
        return replace(traj, events={**traj.events, self.kind: column})


@dataclass(frozen=True)
class RemoveEvent(Edit):
    """Remove events of one kind, from the given step or the first step holding enough"""

    kind: str
    step: Optional[int] = None
    count: float = 1.0

    def apply(self, traj: Trajectory) -> Trajectory:
        if self.kind not in traj.events:
            raise EditOutOfRange(f"no '{self.kind}' events in trajectory")
        column = traj.events[self.kind].copy()
        if self.step is None:
            candidates = np.flatnonzero(column >= self.count)
            if not len(candidates):
                raise EditOutOfRange(f"no step holds {self.count} '{self.kind}' events")
            step = int(candidates[0])
        else:
            _check_step(traj, self.step)
            step = self.step
            if column[step] < self.count:
                raise EditOutOfRange(f"step {step} holds fewer than {self.count} '{self.kind}' events")
        column[step] -= self.count
        return replace(traj, events={**traj.events, self.kind: column})


@dataclass(frozen=True)
class SetSpeed(Edit):
    speed_mps: float
    start: int
    stop: int

    def apply(self, traj: Trajectory) -> Trajectory:
        if not 0 <= self.start < self.stop <= traj.step_count:
            raise EditOutOfRange(f"steps {self.start}..{self.stop} outside 0..{traj.step_count}")
        speed = traj.speed_mps.copy()
        speed[self.start:self.stop] = self.speed_mps
        return replace(traj, speed_mps=speed)


@dataclass(frozen=True)
class InjectOverlap(Edit):
    """Mark the last seconds before the terminal transition as lane overlap"""

    seconds: float

    def apply(self, traj: Trajectory) -> Trajectory:
        k = int(round(self.seconds / traj.reward_step_s))
        if k <= 0 or k > traj.step_count:
            raise EditOutOfRange(f"{self.seconds} s of overlap does not fit {traj.step_count} steps")
        overlap = traj.overlap.copy()
        overlap[traj.step_count - k:] = 1.0
        return replace(traj, overlap=overlap)


@dataclass(frozen=True)
class InsertLoop(Edit):
    """
    Circular progress: drive distance_km forward then back again at the
    trajectory's speed, inserted before step `at` (default: midway)
    """

    distance_km: float
    at: Optional[int] = None

    def apply(self, traj: Trajectory) -> Trajectory:
        at = traj.step_count // 2 if self.at is None else self.at
        if not 0 <= at <= traj.step_count or traj.step_count == 0:
            raise EditOutOfRange(f"loop position {at} outside 0..{traj.step_count}")
        speed = float(traj.speed_mps[min(at, traj.step_count - 1)])
        if speed <= 0 or self.distance_km <= 0:
            raise EditOutOfRange("a loop needs a moving trajectory and a positive distance")
        half = max(1, int(round(self.distance_km * 1000.0 / (speed * traj.reward_step_s))))
        delta = self.distance_km / half
        loop_distance = np.concatenate([np.full(half, delta), np.full(half, -delta)])

        def splice(column: np.ndarray, inserted: np.ndarray) -> np.ndarray:
            return np.concatenate([column[:at], inserted, column[at:]])

        zeros = np.zeros(2 * half)
        return replace(
            traj,
            speed_mps=splice(traj.speed_mps, np.full(2 * half, speed)),
            distance_km=splice(traj.distance_km, loop_distance),
            overlap=splice(traj.overlap, zeros),
            events={k: splice(v, zeros) for k, v in traj.events.items()},
        )


def synth_custom(base: Trajectory, edits: Sequence[Edit]) -> Trajectory:
    """Apply edits in order to a copy of base"""
    traj = base
    for edit in edits:
        traj = edit.apply(traj)
    return replace(traj, kind=TrajectoryKind.CUSTOM)


def shuffle_events(traj: Trajectory, rng: np.random.Generator) -> Trajectory:
    """Permute the step positions of every event kind independently"""
    return replace(traj, events={k: rng.permutation(v) for k, v in traj.events.items()})
