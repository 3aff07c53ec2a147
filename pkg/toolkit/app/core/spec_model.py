"""
Reward Specification Model
Domain types for reward functions, their episode configuration and validation
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

from app.core.expressions import Binary, BinaryOp, Call, Const, Expr, Function, constant_value, free_features, iter_nodes

STEP_EPSILON_S = 1e-9


class TerminalKind(str, Enum):
    COLLISION = "collision"
    GOAL = "goal"
    TIMEOUT = "timeout"
    LANE_DEPARTURE = "lane_departure"
    RED_LIGHT = "red_light"
    WRONG_LANE = "wrong_lane"
    ZERO_SPEED = "zero_speed"


class OutcomeTag(str, Enum):
    PROGRESS = "progress"
    TIME = "time"
    COLLISION = "collision"
    LAW = "law"
    FUEL = "fuel"
    WEAR = "wear"
    PASSENGER_EXPERIENCE = "passenger_experience"
    EXTERNAL_IMPACT = "external_impact"


class AttributeKind(str, Enum):
    OUTCOME = "outcome"
    SHAPING = "shaping"
    AMBIGUOUS = "ambiguous"


class DesignProvenance(str, Enum):
    PRINCIPLED = "principled"
    TRIAL_AND_ERROR = "trial_and_error"
    UNSTATED = "unstated"


class AccrualMode(str, Enum):
    PER_REWARD_STEP = "per_reward_step"
    PER_DECISION_STEP = "per_decision_step"
    ON_EVENT = "on_event"


@dataclass(frozen=True)
class Accrual:
    mode: AccrualMode
    event: Optional[TerminalKind] = None

    def __post_init__(self):
        if (self.mode is AccrualMode.ON_EVENT) != (self.event is not None):
            raise ValueError("on_event accrual needs exactly one terminal event kind")

    def __str__(self) -> str:
        if self.mode is AccrualMode.ON_EVENT:
            return f"on_event({self.event.value})"
        return self.mode.value


PER_REWARD_STEP = Accrual(AccrualMode.PER_REWARD_STEP)
PER_DECISION_STEP = Accrual(AccrualMode.PER_DECISION_STEP)


def on_event(kind: TerminalKind) -> Accrual:
    return Accrual(AccrualMode.ON_EVENT, kind)


class SourceKind(str, Enum):
    SPEED = "speed"
    DISTANCE = "distance"
    EVENT = "event"
    OVERLAP = "overlap"
    PARAM = "param"
    COLLISION_SPEED = "collision_speed"


SPEED_UNITS = ("mps", "kmh")
DISTANCE_UNITS = ("m", "km")


@dataclass(frozen=True)
class FeatureSource:
    """Where a feature's values come from when a trajectory is synthesized"""

    kind: SourceKind
    arg: Optional[str] = None

    def __post_init__(self):
        if self.kind in (SourceKind.SPEED, SourceKind.COLLISION_SPEED):
            if self.arg not in SPEED_UNITS:
                raise ValueError(f"{self.kind.value} needs a unit in {SPEED_UNITS}")
        elif self.kind is SourceKind.DISTANCE:
            if self.arg not in DISTANCE_UNITS:
                raise ValueError(f"distance needs a unit in {DISTANCE_UNITS}")
        elif self.kind in (SourceKind.EVENT, SourceKind.PARAM):
            if not self.arg:
                raise ValueError(f"{self.kind.value} needs a name")
        elif self.arg is not None:
            raise ValueError("overlap takes no argument")

    def __str__(self) -> str:
        return f"{self.kind.value}({self.arg or ''})"


@dataclass(frozen=True)
class AttributeDef:
    id: str
    weight: float
    expr: Expr
    kind: AttributeKind
    outcome_tags: FrozenSet[OutcomeTag] = frozenset()
    accrual: Accrual = PER_REWARD_STEP


@dataclass(frozen=True)
class TerminalRule:
    on: TerminalKind
    expr: Expr
    outcome_tags: FrozenSet[OutcomeTag] = frozenset()


@dataclass(frozen=True)
class EpisodeConfig:
    """
    Episode description

    None marks a detail the source never described. time_limit_s = inf records
    an explicit "no time limit".
    """

    reward_step_s: Optional[float] = None
    decision_step_s: Optional[float] = None
    discount: Optional[float] = None
    episodic: bool = True
    time_limit_s: Optional[float] = None
    termination_criteria: Optional[FrozenSet[TerminalKind]] = None

    @property
    def effective_decision_step_s(self) -> Optional[float]:
        return self.decision_step_s if self.decision_step_s is not None else self.reward_step_s

    @property
    def decision_ratio(self) -> int:
        """Reward steps per decision step"""
        if self.reward_step_s is None:
            return 1
        return max(1, int(round(self.effective_decision_step_s / self.reward_step_s)))

    @property
    def has_time_limit(self) -> bool:
        return self.time_limit_s is not None and math.isfinite(self.time_limit_s)


@dataclass(frozen=True)
class RewardSpec:
    id: str
    source: str
    features: Mapping[str, FeatureSource]
    per_step_attributes: Tuple[AttributeDef, ...]
    terminal_rules: Tuple[TerminalRule, ...]
    episode: EpisodeConfig
    design_provenance: Optional[DesignProvenance] = None
    declared_shaping_ids: FrozenSet[str] = frozenset()

    def attribute(self, attribute_id: str) -> AttributeDef:
        for attr in self.per_step_attributes:
            if attr.id == attribute_id:
                return attr
        raise KeyError(attribute_id)

    def terminal_rule(self, kind: TerminalKind) -> Optional[TerminalRule]:
        return next((rule for rule in self.terminal_rules if rule.on is kind), None)


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class ValidationFinding:
    severity: Severity
    code: str
    locator: str
    message: str = field(default="", compare=False)

    def __str__(self) -> str:
        text = f"{self.severity.value} {self.code} at {self.locator}"
        return f"{text}: {self.message}" if self.message else text


def _error(code: str, locator: str, message: str = "") -> ValidationFinding:
    return ValidationFinding(Severity.ERROR, code, locator, message)


def _warning(code: str, locator: str, message: str = "") -> ValidationFinding:
    return ValidationFinding(Severity.WARNING, code, locator, message)


def _expression_findings(expr: Expr, locator: str, features: Mapping[str, FeatureSource]) -> List[ValidationFinding]:
    findings = []
    for name in sorted(free_features(expr)):
        if name not in features:
            findings.append(_error("UnknownFeature", locator, f"'{name}' is not in the feature schema"))
    for node in iter_nodes(expr):
        if isinstance(node, Call) and node.fn is Function.CLIP:
            lo, hi = constant_value(node.args[1]), constant_value(node.args[2])
            if lo is not None and hi is not None and lo > hi:
                findings.append(_error("InvalidClipBounds", locator, f"clip lower bound {lo} exceeds {hi}"))
    return findings


def _is_multiple(value: float, step: float) -> bool:
    ratio = value / step
    return abs(ratio - round(ratio)) * step <= STEP_EPSILON_S


def validate_spec(spec: RewardSpec) -> List[ValidationFinding]:
    """Structural findings for a spec; empty iff every model invariant holds"""
    findings: List[ValidationFinding] = []

    seen: Dict[str, int] = {}
    for index, attr in enumerate(spec.per_step_attributes):
        locator = f"attribute {attr.id}"
        if attr.id in seen:
            findings.append(_error("DuplicateAttributeId", locator, f"also defined at position {seen[attr.id]}"))
        seen.setdefault(attr.id, index)
        if not isinstance(attr.weight, (int, float)) or not math.isfinite(attr.weight):
            findings.append(_error("NonFiniteWeight", locator))
        unknown = [t for t in attr.outcome_tags if not isinstance(t, OutcomeTag)]
        if unknown:
            findings.append(_error("UnknownOutcomeTag", locator, ", ".join(sorted(map(str, unknown)))))
        if attr.kind is AttributeKind.OUTCOME:
            if not attr.outcome_tags:
                findings.append(_error("MissingOutcomeTags", locator))
            if attr.id in spec.declared_shaping_ids:
                findings.append(_error("OutcomeDeclaredAsShaping", locator))
        findings.extend(_expression_findings(attr.expr, locator, spec.features))

    for attr_id in sorted(spec.declared_shaping_ids - set(seen)):
        findings.append(_warning("DeclaredShapingUnknown", f"declared_shaping {attr_id}"))

    rule_kinds = set()
    for rule in spec.terminal_rules:
        locator = f"terminal {rule.on.value}"
        if rule.on in rule_kinds:
            findings.append(_error("DuplicateTerminalRule", locator))
        rule_kinds.add(rule.on)
        unknown = [t for t in rule.outcome_tags if not isinstance(t, OutcomeTag)]
        if unknown:
            findings.append(_error("UnknownOutcomeTag", locator, ", ".join(sorted(map(str, unknown)))))
        findings.extend(_expression_findings(rule.expr, locator, spec.features))

    episode = spec.episode
    if episode.reward_step_s is not None and episode.reward_step_s <= 0:
        findings.append(_error("NonPositiveStep", "episode reward_step_s"))
    if episode.decision_step_s is not None and episode.decision_step_s <= 0:
        findings.append(_error("NonPositiveStep", "episode decision_step_s"))
    elif (
        episode.decision_step_s is not None
        and episode.reward_step_s is not None
        and episode.reward_step_s > 0
        and (
            episode.decision_step_s < episode.reward_step_s - STEP_EPSILON_S
            or not _is_multiple(episode.decision_step_s, episode.reward_step_s)
        )
    ):
        findings.append(
            _error(
                "StepMisalignment",
                "episode decision_step_s",
                f"{episode.decision_step_s} is not a multiple of {episode.reward_step_s}",
            )
        )
    if episode.discount is not None and not 0 < episode.discount <= 1:
        findings.append(_error("DiscountOutOfRange", "episode discount"))
    if episode.time_limit_s is not None and episode.time_limit_s <= 0:
        findings.append(_error("NonPositiveStep", "episode time_limit_s"))
    if not episode.episodic and episode.termination_criteria:
        findings.append(_error("ContinuingWithTermination", "episode termination"))

    return findings


def has_errors(findings: List[ValidationFinding]) -> bool:
    return any(f.severity is Severity.ERROR for f in findings)


def sub_spec(spec: RewardSpec, attribute_id: str) -> RewardSpec:
    """Projection keeping one attribute and no terminal rules"""
    return RewardSpec(
        id=f"{spec.id}_{attribute_id}",
        source=spec.source,
        features=spec.features,
        per_step_attributes=(spec.attribute(attribute_id),),
        terminal_rules=(),
        episode=spec.episode,
        design_provenance=spec.design_provenance,
        declared_shaping_ids=spec.declared_shaping_ids & {attribute_id},
    )


def terminal_sub_spec(spec: RewardSpec) -> RewardSpec:
    """Projection keeping only the terminal rules"""
    return RewardSpec(
        id=f"{spec.id}_terminal",
        source=spec.source,
        features=spec.features,
        per_step_attributes=(),
        terminal_rules=spec.terminal_rules,
        episode=spec.episode,
        design_provenance=spec.design_provenance,
        declared_shaping_ids=frozenset(),
    )


def scale_weights(spec: RewardSpec, factor: float) -> RewardSpec:
    """Copy with every attribute weight and terminal rule multiplied by factor"""
    return replace(
        spec,
        per_step_attributes=tuple(replace(a, weight=a.weight * factor) for a in spec.per_step_attributes),
        terminal_rules=tuple(
            replace(r, expr=Binary(BinaryOp.MUL, Const(factor), r.expr)) for r in spec.terminal_rules
        ),
    )
