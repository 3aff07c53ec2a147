"""
Reward Function Sanity Checks
The eight checks as pure functions returning structured results
"""

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from app.core.config import settings
from app.core.exceptions import (
    EditOutOfRange,
    ExprError,
    MissingPotential,
    MissingScenarioParameter,
    NotEvaluable,
    OrderingViolated,
)
from app.core.evaluator import eval_return
from app.core.spec_model import AttributeKind, DesignProvenance, OutcomeTag, RewardSpec
from app.core.trajectory import CANONICAL_KINDS, InsertLoop, ScenarioSpec, Trajectory, TrajectoryKind, synth_canonical, synth_custom
from app.utils.helpers import tolerance_for


class CheckId(IntEnum):
    UNSAFE_SHAPING = 1
    PREFERENCE_ORDERING = 2
    RISK_TOLERANCE = 3
    LEARNABLE_LOOPHOLE = 4
    MISSING_ATTRIBUTES = 5
    REDUNDANT_ATTRIBUTES = 6
    TRIAL_AND_ERROR = 7
    INCOMPLETE_SPECIFICATION = 8

    @property
    def title(self) -> str:
        return CHECK_TITLES[self]


CHECK_TITLES = {
    CheckId.UNSAFE_SHAPING: "Identify unsafe reward shaping",
    CheckId.PREFERENCE_ORDERING: "Compare preference orderings",
    CheckId.RISK_TOLERANCE: "Compare indifference points",
    CheckId.LEARNABLE_LOOPHOLE: "Search for learnable loopholes",
    CheckId.MISSING_ATTRIBUTES: "Find missing attributes",
    CheckId.REDUNDANT_ATTRIBUTES: "Find redundant attributes",
    CheckId.TRIAL_AND_ERROR: "Check for trial-and-error design",
    CheckId.INCOMPLETE_SPECIFICATION: "Check for incomplete specification",
}

# Checks whose failure is only ever a warning
WARNING_ONLY = frozenset(
    {
        CheckId.MISSING_ATTRIBUTES,
        CheckId.REDUNDANT_ATTRIBUTES,
        CheckId.TRIAL_AND_ERROR,
        CheckId.INCOMPLETE_SPECIFICATION,
    }
)


class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    WARNING = "warning"
    NOT_EVALUABLE = "not_evaluable"


@dataclass(frozen=True)
class CheckResult:
    check_id: CheckId
    status: CheckStatus
    details: Mapping[str, Any] = field(default_factory=dict)
    message: str = ""

    def __post_init__(self):
        if self.status is CheckStatus.FAIL and self.check_id in WARNING_ONLY:
            raise ValueError(f"check {int(self.check_id)} can only warn")


@dataclass(frozen=True)
class RiskBaseline:
    id: str
    label: str
    km_per_collision: float
    provenance: str

    def __post_init__(self):
        if not math.isfinite(self.km_per_collision) or self.km_per_collision <= 0:
            raise ValueError(f"baseline {self.id}: km_per_collision must be finite and positive")


def _strictly_less(a: float, b: float) -> bool:
    return b - a > tolerance_for(a, b, settings.ABS_TOL, settings.REL_TOL)


# Check 2

def preference_check(g_a: float, g_b: float, expected: str = "A<B") -> CheckResult:
    """Pass iff the first trajectory is strictly less preferred; ties fail"""
    normalized = expected.replace("≺", "<").replace(" ", "")
    if normalized == "B<A":
        g_a, g_b = g_b, g_a
    elif normalized != "A<B":
        raise ValueError(f"unsupported expectation '{expected}'")
    margin = g_b - g_a
    passed = _strictly_less(g_a, g_b)
    return CheckResult(
        CheckId.PREFERENCE_ORDERING,
        CheckStatus.PASS if passed else CheckStatus.FAIL,
        {"g_a": g_a, "g_b": g_b, "margin": margin},
        f"G(A) = {g_a:.6g} {'<' if passed else '>='} G(B) = {g_b:.6g} (margin {margin:.6g})",
    )


# Check 3

def indifference_point(g_a: float, g_b: float, g_c: float) -> float:
    """p solving G(B) = p·G(C) + (1 − p)·G(A)"""
    if not _strictly_less(g_a, g_b):
        raise OrderingViolated("G(A) < G(B)")
    if not _strictly_less(g_b, g_c):
        raise OrderingViolated("G(B) < G(C)")
    return (g_b - g_a) / (g_c - g_a)


def km_per_collision(p: float, path_length_km: float) -> float:
    """Kilometres driven per collision at indifference; +inf when p = 1"""
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if path_length_km <= 0:
        raise ValueError(f"path length must be positive, got {path_length_km}")
    if p == 1:
        return math.inf
    return (p / (1 - p) + 0.5) * path_length_km


@dataclass(frozen=True)
class RiskProfile:
    p: Optional[float]
    km_per_collision: Optional[float]
    clamped: bool = False


def risk_profile(g_crash: float, g_idle: float, g_succ: float, path_length_km: float) -> RiskProfile:
    """
    Indifference point and km per collision for one entry

    A function that does not prefer idling to crashing accepts any success
    probability, so p clamps to 0. When idling is not worse than success the
    point is undefined.
    """
    if not _strictly_less(g_crash, g_idle):
        return RiskProfile(0.0, km_per_collision(0.0, path_length_km), clamped=True)
    try:
        p = indifference_point(g_crash, g_idle, g_succ)
    except OrderingViolated:
        return RiskProfile(None, math.inf)
    return RiskProfile(p, km_per_collision(p, path_length_km))


def risk_tolerance_check(km: float, baseline: RiskBaseline) -> CheckResult:
    """Pass iff the tolerated km per collision reaches the baseline (inclusive)"""
    if km is None or not math.isfinite(km):
        return CheckResult(
            CheckId.RISK_TOLERANCE,
            CheckStatus.NOT_EVALUABLE,
            {"km_per_collision": km, "baseline": baseline.id},
            "indifference point is degenerate",
        )
    ratio = km / baseline.km_per_collision
    passed = km >= baseline.km_per_collision or math.isclose(km, baseline.km_per_collision, rel_tol=settings.REL_TOL)
    return CheckResult(
        CheckId.RISK_TOLERANCE,
        CheckStatus.PASS if passed else CheckStatus.FAIL,
        {"km_per_collision": km, "baseline": baseline.id, "baseline_km": baseline.km_per_collision, "ratio": ratio},
        f"{km:.4g} km per collision vs {baseline.label} at {baseline.km_per_collision:.6g} (ratio {ratio:.3g})",
    )


def default_baselines() -> Dict[str, RiskBaseline]:
    drunk = settings.DRUNK_TEEN_KM_PER_COLLISION
    baselines = {
        "drunk_teen_16_17": RiskBaseline(
            "drunk_teen_16_17",
            "legally drunk 16-17 year old",
            drunk,
            "1.02 km per collision tolerated 2000 times as often",
        ),
        "sober_teen_16_17": RiskBaseline(
            "sober_teen_16_17",
            "sober 16-17 year old",
            drunk * settings.SOBER_TEEN_RISK_FACTOR,
            f"drunk baseline at {settings.SOBER_TEEN_RISK_FACTOR:g}x lower risk",
        ),
    }
    if settings.ADULT_50_60_KM_PER_COLLISION:
        baselines["adult_50_60"] = RiskBaseline(
            "adult_50_60",
            "50-60 year old",
            settings.ADULT_50_60_KM_PER_COLLISION,
            "configured",
        )
    return baselines


def resolve_baselines(overrides: Iterable[RiskBaseline] = ()) -> Dict[str, RiskBaseline]:
    """Defaults with overrides replacing entries of the same id"""
    baselines = default_baselines()
    for baseline in overrides:
        baselines[baseline.id] = baseline
    return baselines


# Check 1

def shaping_lint(spec: RewardSpec) -> CheckResult:
    undeclared = sorted(
        a.id for a in spec.per_step_attributes
        if a.kind is AttributeKind.SHAPING and a.id not in spec.declared_shaping_ids
    )
    ambiguous = sorted(a.id for a in spec.per_step_attributes if a.kind is AttributeKind.AMBIGUOUS)
    details = {"undeclared_shaping": undeclared, "ambiguous": ambiguous}
    if undeclared:
        return CheckResult(
            CheckId.UNSAFE_SHAPING, CheckStatus.FAIL, details,
            f"undeclared shaping attributes: {', '.join(undeclared)}",
        )
    if ambiguous:
        return CheckResult(
            CheckId.UNSAFE_SHAPING, CheckStatus.WARNING, details,
            f"attributes that may be shaping: {', '.join(ambiguous)}",
        )
    return CheckResult(CheckId.UNSAFE_SHAPING, CheckStatus.PASS, details, "no undeclared shaping")


def potential_shaping_verify(
    samples: Sequence[Tuple[int, int, float]],
    potential: Mapping[int, float],
    gamma: float,
    tol: float,
) -> bool:
    """True iff every sampled shaping reward equals γ·φ(s′) − φ(s) within tol"""
    for s, s_next, value in samples:
        for index in (s, s_next):
            if index not in potential:
                raise MissingPotential(index)
        if abs(value - (gamma * potential[s_next] - potential[s])) > tol:
            return False
    return True


# Checks 5-8

def _covered_tags(spec: RewardSpec) -> set:
    covered = set()
    for attr in spec.per_step_attributes:
        if attr.kind is AttributeKind.OUTCOME:
            covered |= set(attr.outcome_tags)
    for rule in spec.terminal_rules:
        covered |= set(rule.outcome_tags)
    return covered


def attribute_coverage_lint(spec: RewardSpec, required: Iterable[OutcomeTag]) -> CheckResult:
    required = {OutcomeTag(t) for t in required}
    missing = sorted(t.value for t in required - _covered_tags(spec))
    if missing:
        return CheckResult(
            CheckId.MISSING_ATTRIBUTES, CheckStatus.WARNING, {"missing": missing},
            f"no attribute measures: {', '.join(missing)}",
        )
    return CheckResult(CheckId.MISSING_ATTRIBUTES, CheckStatus.PASS, {"missing": []}, "all required outcomes covered")


def redundancy_lint(spec: RewardSpec) -> CheckResult:
    tagged = [(a.id, set(a.outcome_tags)) for a in spec.per_step_attributes]
    tagged += [(f"terminal:{r.on.value}", set(r.outcome_tags)) for r in spec.terminal_rules]
    pairs = [
        {"first": first, "second": second, "shared": sorted(t.value for t in tags_a & tags_b)}
        for (first, tags_a), (second, tags_b) in itertools.combinations(tagged, 2)
        if tags_a & tags_b
    ]
    if pairs:
        listing = "; ".join(f"{p['first']}/{p['second']} ({', '.join(p['shared'])})" for p in pairs)
        return CheckResult(
            CheckId.REDUNDANT_ATTRIBUTES, CheckStatus.WARNING, {"pairs": pairs},
            f"attributes sharing outcomes: {listing}",
        )
    return CheckResult(CheckId.REDUNDANT_ATTRIBUTES, CheckStatus.PASS, {"pairs": []}, "no overlapping attributes")


def _tuned_by_trial_and_error(spec: RewardSpec) -> bool:
    return spec.design_provenance is DesignProvenance.TRIAL_AND_ERROR and not spec.declared_shaping_ids


def trial_and_error_lint(spec: RewardSpec) -> CheckResult:
    if _tuned_by_trial_and_error(spec):
        return CheckResult(
            CheckId.TRIAL_AND_ERROR, CheckStatus.WARNING, {"design_provenance": spec.design_provenance.value},
            "reward tuned by observing learned behaviour without separated shaping",
        )
    provenance = spec.design_provenance.value if spec.design_provenance else None
    return CheckResult(CheckId.TRIAL_AND_ERROR, CheckStatus.PASS, {"design_provenance": provenance}, "no trial-and-error tuning recorded")


def completeness_lint(spec: RewardSpec, include_trial_and_error: bool = True) -> CheckResult:
    episode = spec.episode
    absent = []
    if episode.discount is None:
        absent.append("discount")
    if episode.reward_step_s is None:
        absent.append("reward_step_s")
    if episode.termination_criteria is None:
        absent.append("termination_criteria")
    if episode.episodic and episode.time_limit_s is None:
        absent.append("time_limit_s")
    if spec.design_provenance is None:
        absent.append("design_provenance")
    items = list(absent)
    if include_trial_and_error and _tuned_by_trial_and_error(spec):
        items.append("trial_and_error_without_declared_shaping")
    if items:
        return CheckResult(
            CheckId.INCOMPLETE_SPECIFICATION, CheckStatus.WARNING, {"absent": absent, "items": items},
            f"specification does not describe: {', '.join(items)}",
        )
    return CheckResult(CheckId.INCOMPLETE_SPECIFICATION, CheckStatus.PASS, {"absent": [], "items": []}, "fully specified")


# Check 4

def loophole_check(spec: RewardSpec, traj_undesirable: Trajectory, traj_clean: Trajectory) -> CheckResult:
    """Fail iff the undesirable behaviour strictly earns more return"""
    g_bad = eval_return(spec, traj_undesirable).total
    g_clean = eval_return(spec, traj_clean).total
    exploitable = _strictly_less(g_clean, g_bad)
    return CheckResult(
        CheckId.LEARNABLE_LOOPHOLE,
        CheckStatus.FAIL if exploitable else CheckStatus.PASS,
        {"g_undesirable": g_bad, "g_clean": g_clean, "gain": g_bad - g_clean},
        f"undesirable {g_bad:.6g} vs clean {g_clean:.6g}",
    )


def loophole_probe(spec: RewardSpec, scenario: ScenarioSpec) -> Tuple[Trajectory, Trajectory]:
    """Successful drive with a circling detour, and the same drive without it"""
    clean = synth_canonical(scenario, spec, TrajectoryKind.SUCC)
    loop_km = scenario.path_length_km * settings.LOOPHOLE_PROBE_FRACTION
    return synth_custom(clean, [InsertLoop(loop_km)]), clean


def not_evaluable(check_id: CheckId, error: Exception) -> CheckResult:
    return CheckResult(check_id, CheckStatus.NOT_EVALUABLE, {"reason": str(error)}, str(error))


def run_lints(spec: RewardSpec, required: Iterable[OutcomeTag]) -> List[CheckResult]:
    """Checks 1 and 5-8"""
    return [
        shaping_lint(spec),
        attribute_coverage_lint(spec, required),
        redundancy_lint(spec),
        trial_and_error_lint(spec),
        completeness_lint(spec, include_trial_and_error=False),
    ]


@dataclass(frozen=True)
class CanonicalReturns:
    g_crash: float
    g_idle: float
    g_succ: float


def canonical_returns(spec: RewardSpec, scenario: ScenarioSpec) -> CanonicalReturns:
    values = {
        kind: eval_return(spec, synth_canonical(scenario, spec, kind)).total
        for kind in CANONICAL_KINDS
    }
    return CanonicalReturns(values[TrajectoryKind.CRASH], values[TrajectoryKind.IDLE], values[TrajectoryKind.SUCC])


def run_trajectory_checks(
    spec: RewardSpec,
    scenario: ScenarioSpec,
    baseline: RiskBaseline,
    selected: Iterable[CheckId] = (CheckId.PREFERENCE_ORDERING, CheckId.RISK_TOLERANCE, CheckId.LEARNABLE_LOOPHOLE),
    returns: Optional[CanonicalReturns] = None,
) -> List[CheckResult]:
    """Checks 2-4 over the scenario's canonical drives"""
    selected = sorted({CheckId(c) for c in selected})
    try:
        returns = returns or canonical_returns(spec, scenario)
    except (NotEvaluable, MissingScenarioParameter, ExprError) as e:
        return [not_evaluable(check_id, e) for check_id in selected]

    results = []
    for check_id in selected:
        if check_id is CheckId.PREFERENCE_ORDERING:
            results.append(preference_check(returns.g_crash, returns.g_idle))
        elif check_id is CheckId.RISK_TOLERANCE:
            try:
                profile = risk_profile(returns.g_crash, returns.g_idle, returns.g_succ, scenario.path_length_km)
            except ValueError as e:
                results.append(not_evaluable(check_id, e))
                continue
            result = risk_tolerance_check(profile.km_per_collision, baseline)
            details = {**result.details, "p": profile.p, "clamped": profile.clamped}
            results.append(CheckResult(result.check_id, result.status, details, result.message))
        elif check_id is CheckId.LEARNABLE_LOOPHOLE:
            try:
                results.append(loophole_check(spec, *loophole_probe(spec, scenario)))
            except (NotEvaluable, EditOutOfRange, ExprError) as e:
                results.append(not_evaluable(check_id, e))
        else:
            raise ValueError(f"check {int(check_id)} does not use trajectories")
    return results
