"""
Reward Function Corpus
Shipped encodings of ten published driving reward functions, their scenario
assumptions and the values stated for them, plus the audit that checks them
"""

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from app.core.checks import (
    CheckId,
    RiskBaseline,
    canonical_returns,
    not_evaluable,
    risk_profile,
    run_lints,
    run_trajectory_checks,
)
from app.core.config import settings
from app.core.exceptions import ExprError, MissingScenarioParameter, NotEvaluable, UnknownEntry
from app.core.spec_model import OutcomeTag, RewardSpec
from app.core.trajectory import ScenarioSpec
from app.services.baselines import baseline_registry, select_baseline
from app.services.report import (
    AuditReport,
    CheckRecord,
    ComparisonStatus,
    EntryAudit,
    FigureRow,
    ValueComparison,
)
from app.services.spec_lang import load_scenario, load_spec
from app.utils.helpers import matches_printed
from app.utils.logger import AuditLogger, log_performance

audit_logger = AuditLogger(__name__)

CORPUS_DIR = Path(__file__).resolve().parent.parent / "corpus"

RETURN_QUANTITIES = ("g_crash", "g_idle", "g_succ")


class Provenance(str, Enum):
    STATED = "stated"
    FORMULA_DERIVED = "formula_derived"


@dataclass(frozen=True)
class ExpectedValue:
    """A value published for an entry, or re-derived from its own formula"""

    quantity: str
    value: float
    provenance: Provenance
    decimals: int
    note: Optional[str] = None


@dataclass(frozen=True)
class Tolerances:
    oracle_rel_tol: float = settings.ORACLE_REL_TOL


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    title: str
    spec: RewardSpec
    scenarios: Tuple[ScenarioSpec, ...]
    expected: Tuple[ExpectedValue, ...]
    evaluable: bool
    aliases: Tuple[str, ...] = ()
    notes: Tuple[str, ...] = ()
    spec_path: Optional[Path] = None
    scenario_path: Optional[Path] = None

    @property
    def scenario(self) -> ScenarioSpec:
        return self.scenarios[0]

    @property
    def discrepancy_notes(self) -> Tuple[str, ...]:
        return tuple(dict.fromkeys(e.note for e in self.expected if e.note))

    def expected_for(self, quantity: str, provenance: Optional[Provenance] = None) -> Optional[ExpectedValue]:
        return next(
            (e for e in self.expected if e.quantity == quantity and (provenance is None or e.provenance is provenance)),
            None,
        )

    def reference(self, quantity: str) -> Optional[ExpectedValue]:
        """The value checks rely on: formula-derived when recorded, else stated"""
        return self.expected_for(quantity, Provenance.FORMULA_DERIVED) or self.expected_for(quantity)


def _stated(quantity: str, value: float, decimals: int, note: Optional[str] = None) -> ExpectedValue:
    return ExpectedValue(quantity, value, Provenance.STATED, decimals, note)


def _derived(quantity: str, value: float, decimals: int) -> ExpectedValue:
    return ExpectedValue(quantity, value, Provenance.FORMULA_DERIVED, decimals)


def _returns(crash: float, idle: float, succ: float, decimals: Tuple[int, int, int]) -> Tuple[ExpectedValue, ...]:
    return tuple(_stated(q, v, d) for q, v, d in zip(RETURN_QUANTITIES, (crash, idle, succ), decimals))


@dataclass(frozen=True)
class _EntryMetadata:
    title: str
    aliases: Tuple[str, ...]
    expected: Tuple[ExpectedValue, ...]
    evaluable: bool = True
    notes: Tuple[str, ...] = field(default_factory=tuple)


_CAI_CRASH_NOTE = (
    "stated G(crash) = -515.71 omits the squared collision speed; the written "
    "-1000 x (v^2 + 0.5) term gives -2341.86, the only value consistent with the "
    "stated p = 0.9617 and 1.02 km per collision"
)
_MIN_NOTE = (
    "stated returns (673.9, 1357.9) do not follow from the written attributes at "
    "30 steps per second; the formulas give (667.125, 1354.25) and the preference "
    "ordering is the same either way"
)

METADATA: Mapping[str, _EntryMetadata] = {
    "cai19": _EntryMetadata(
        "LeTS-Drive: Driving in a Crowd by Learning from Tree Search",
        (),
        (
            _stated("g_crash", -515.71, 2, _CAI_CRASH_NOTE),
            _derived("g_crash", -2341.86, 2),
            _stated("g_idle", -120.0, 0),
            _stated("g_succ", -31.42, 2),
            _stated("p", 0.9617, 4),
            _stated("km_per_collision", 1.02, 2),
        ),
    ),
    "chen19": _EntryMetadata(
        "Model-free Deep Reinforcement Learning for Urban Autonomous Driving",
        (),
        _returns(601.5, -50.0, 1225.0, (1, 1, 1)),
    ),
    "dos17": _EntryMetadata(
        "CARLA: An Open Urban Driving Simulator",
        ("dosovitskiy17",),
        _returns(501.0, 0.0, 1003.0, (2, 0, 0)),
        notes=(
            "0.1 s steps are inferred from other CARLA work",
            "the change-in-speed attribute is collapsed to 60 km/h gained over a drive",
        ),
    ),
    "hue19": _EntryMetadata(
        "Dynamic Input for Deep Reinforcement Learning in Autonomous Driving",
        ("huegle19",),
        (),
        evaluable=False,
        notes=("continuing task: a collision appears impossible and no terminal outcome exists",),
    ),
    "ise18": _EntryMetadata(
        "Navigating Occluded Intersections with Autonomous Vehicles using Deep Reinforcement Learning",
        ("isele18",),
        (
            *_returns(-10.1, -1.0, 0.8, (1, 0, 1)),
            _stated("p", 0.8349, 4),
            _stated("km_per_collision", 0.11, 2),
        ),
    ),
    "jar18": _EntryMetadata(
        "End-to-End Race Driving with Deep Reinforcement Learning",
        ("jaritz18",),
        _returns(532980.0, 0.0, 1065960.0, (0, 0, 0)),
        notes=(
            "racing game domain, not held to road safety standards",
            "9.87 km at 72.88 km/h is not a whole number of 1/30 s steps; speed is adjusted to the rounded count",
        ),
    ),
    "lia18": _EntryMetadata(
        "CIRL: Controllable Imitative Reinforcement Learning for Vision-based Self-driving",
        ("liang18",),
        _returns(16900.0, 0.0, 36000.0, (0, 0, 0)),
    ),
    "min19": _EntryMetadata(
        "Deep Distributional Reinforcement Learning Based High-Level Driving Policy Determination",
        (),
        (
            _stated("g_crash", 673.9, 1, _MIN_NOTE),
            _derived("g_crash", 667.125, 3),
            _stated("g_idle", 0.0, 0),
            _stated("g_succ", 1357.9, 1, _MIN_NOTE),
            _derived("g_succ", 1354.25, 2),
        ),
        notes=("time step duration was unknown to the authors; 30 steps per second is assumed",),
    ),
    "wan20": _EntryMetadata(
        "Learning hierarchical behavior and motion planning for autonomous driving",
        ("wang20",),
        _returns(174.8, -3711.2, 549.6, (1, 1, 1)),
    ),
    "tor20": _EntryMetadata(
        "End-to-End Model-Free Reinforcement Learning for Urban Driving using Implicit Affordances",
        ("toromanoff20",),
        _returns(599.0, 25.0, 1200.0, (0, 0, 0)),
        notes=("no terminal reward is given at zero-speed termination",),
    ),
}


class CorpusService:
    """Loads the shipped entries once and audits them"""

    def __init__(self, corpus_dir: Path = CORPUS_DIR):
        self.corpus_dir = Path(corpus_dir)
        self._entries: Optional[Dict[str, CorpusEntry]] = None
        self._lock = threading.Lock()

    def _load(self) -> Dict[str, CorpusEntry]:
        entries = {}
        for entry_id, meta in METADATA.items():
            spec_path = self.corpus_dir / f"{entry_id}.rspec"
            scenario_path = self.corpus_dir / f"{entry_id}.scn"
            entries[entry_id] = CorpusEntry(
                id=entry_id,
                title=meta.title,
                spec=load_spec(spec_path),
                scenarios=(load_scenario(scenario_path),),
                expected=meta.expected,
                evaluable=meta.evaluable,
                aliases=meta.aliases,
                notes=meta.notes,
                spec_path=spec_path,
                scenario_path=scenario_path,
            )
        audit_logger.info(f"Loaded {len(entries)} corpus entries from {self.corpus_dir}")
        return entries

    @property
    def entries(self) -> Dict[str, CorpusEntry]:
        with self._lock:
            if self._entries is None:
                self._entries = self._load()
            return self._entries

    def resolve_id(self, entry_id: str) -> str:
        key = entry_id.strip().lower()
        for known, entry in self.entries.items():
            if key == known or key in entry.aliases:
                return known
        raise UnknownEntry(entry_id)

    def corpus_list(self) -> List[Tuple[str, str, bool]]:
        return [(e.id, e.title, e.evaluable) for e in sorted(self.entries.values(), key=lambda e: e.id)]

    def corpus_entry(self, entry_id: str) -> CorpusEntry:
        return self.entries[self.resolve_id(entry_id)]

    def entry_for_spec(self, spec: RewardSpec) -> CorpusEntry:
        """Corpus entry whose id or alias matches a spec's id"""
        return self.corpus_entry(spec.id)

    def audit_entry(
        self,
        entry: CorpusEntry,
        baseline: RiskBaseline,
        tolerances: Tolerances = Tolerances(),
    ) -> EntryAudit:
        required = [OutcomeTag(t) for t in settings.REQUIRED_OUTCOME_TAGS]
        results = run_lints(entry.spec, required)

        try:
            returns = canonical_returns(entry.spec, entry.scenario)
        except (NotEvaluable, MissingScenarioParameter, ExprError) as e:
            returns = None
            results += [
                not_evaluable(c, e)
                for c in (CheckId.PREFERENCE_ORDERING, CheckId.RISK_TOLERANCE, CheckId.LEARNABLE_LOOPHOLE)
            ]
        else:
            results += run_trajectory_checks(entry.spec, entry.scenario, baseline, returns=returns)
        results.sort(key=lambda r: r.check_id)

        for result in results:
            audit_logger.log_check_result(entry.id, result.check_id.name, result.status.value, dict(result.details))

        audit = EntryAudit(
            entry_id=entry.id,
            title=entry.title,
            evaluable=returns is not None,
            checks=[CheckRecord.from_result(r) for r in results],
            discrepancy_notes=list(entry.discrepancy_notes),
            return_decimals={
                q: entry.reference(q).decimals for q in RETURN_QUANTITIES if entry.reference(q) is not None
            },
        )
        preference = next(r for r in results if r.check_id is CheckId.PREFERENCE_ORDERING)
        audit.preference_status = preference.status.value
        if returns is None:
            audit.comparisons = self._compare(entry, {}, tolerances)
            return audit

        profile = risk_profile(returns.g_crash, returns.g_idle, returns.g_succ, entry.scenario.path_length_km)
        audit.g_crash, audit.g_idle, audit.g_succ = returns.g_crash, returns.g_idle, returns.g_succ
        audit.p = profile.p
        audit.p_clamped = profile.clamped
        audit.km_per_collision = profile.km_per_collision
        computed = {
            "g_crash": returns.g_crash,
            "g_idle": returns.g_idle,
            "g_succ": returns.g_succ,
            "p": profile.p,
            "km_per_collision": profile.km_per_collision,
        }
        audit.comparisons = self._compare(entry, computed, tolerances)
        return audit

    def _compare(
        self,
        entry: CorpusEntry,
        computed: Mapping[str, Optional[float]],
        tolerances: Tolerances,
    ) -> List[ValueComparison]:
        comparisons = []
        for expected in entry.expected:
            actual = computed.get(expected.quantity)
            if actual is None or not math.isfinite(actual):
                status = ComparisonStatus.NOT_EVALUABLE
            elif matches_printed(actual, expected.value, expected.decimals) or (
                expected.provenance is Provenance.FORMULA_DERIVED
                and math.isclose(actual, expected.value, rel_tol=tolerances.oracle_rel_tol)
            ):
                status = ComparisonStatus.REPRODUCED
            elif expected.note:
                status = ComparisonStatus.DISCREPANCY
                derived = entry.expected_for(expected.quantity, Provenance.FORMULA_DERIVED)
                audit_logger.log_discrepancy(
                    entry.id, expected.quantity, expected.value, derived.value if derived else actual, expected.note
                )
            else:
                status = ComparisonStatus.MISMATCH
                audit_logger.warning(
                    f"{entry.id}.{expected.quantity}: computed {actual!r} does not reproduce "
                    f"{expected.provenance.value} {expected.value}"
                )
            comparisons.append(
                ValueComparison(
                    quantity=expected.quantity,
                    provenance=expected.provenance.value,
                    expected=expected.value,
                    decimals=expected.decimals,
                    actual=actual,
                    status=status,
                    note=expected.note,
                )
            )
        return comparisons

    @log_performance("corpus audit")
    def corpus_run(
        self,
        tolerances: Optional[Tolerances] = None,
        baseline: Optional[RiskBaseline] = None,
        baselines: Optional[Mapping[str, RiskBaseline]] = None,
    ) -> AuditReport:
        """Audit every entry, concurrently, and assemble an ordered report"""
        tolerances = tolerances or Tolerances()
        registry = dict(baselines) if baselines is not None else baseline_registry()
        baseline = baseline or select_baseline(registry)
        entries = sorted(self.entries.values(), key=lambda e: e.id)

        with ThreadPoolExecutor(max_workers=max(1, settings.AUDIT_WORKERS)) as pool:
            audits = list(pool.map(lambda e: self.audit_entry(e, baseline, tolerances), entries))

        figure_rows = [
            FigureRow(id=a.entry_id, label=a.title, km_per_collision=a.km_per_collision, evaluable=a.evaluable)
            for a in audits
        ]
        figure_rows += [
            FigureRow(id=b.id, label=b.label, km_per_collision=b.km_per_collision, evaluable=True, kind="baseline")
            for b in sorted(registry.values(), key=lambda b: b.km_per_collision)
        ]
        report = AuditReport.build(audits, figure_rows, baseline=baseline.id)
        audit_logger.info(
            f"Corpus audit finished: {report.summary.preference}, "
            f"{report.summary.unexplained_mismatches} unexplained mismatches"
        )
        return report


corpus_service = CorpusService()


def get_corpus_service() -> CorpusService:
    return corpus_service


def corpus_list() -> List[Tuple[str, str, bool]]:
    return corpus_service.corpus_list()


def corpus_entry(entry_id: str) -> CorpusEntry:
    return corpus_service.corpus_entry(entry_id)


def corpus_run(tolerances: Optional[Tolerances] = None, **kwargs) -> AuditReport:
    return corpus_service.corpus_run(tolerances, **kwargs)
