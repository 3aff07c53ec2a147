"""
Shared fixtures for the reward audit test suite
"""

from functools import lru_cache

import numpy as np
import pytest

from app.core.expressions import Const, Ref
from app.core.spec_model import (
    AttributeDef,
    AttributeKind,
    DesignProvenance,
    EpisodeConfig,
    FeatureSource,
    OutcomeTag,
    RewardSpec,
    SourceKind,
    TerminalKind,
)
from app.core.trajectory import CANONICAL_KINDS, TerminalEvent, Trajectory, TrajectoryKind, synth_canonical
from app.services.corpus import CorpusService, corpus_service

EVALUABLE_IDS = ("cai19", "chen19", "dos17", "ise18", "jar18", "lia18", "min19", "tor20", "wan20")

MINIMAL_RSPEC = """reward_spec tiny
features {
  speed = speed(mps)
}
attribute speed {
  weight = 1
  expr = speed
  kind = outcome
  tags = [progress]
}
"""


def make_spec(**overrides) -> RewardSpec:
    """Small valid spec: one speed attribute, fully described episode"""
    fields = dict(
        id="tiny",
        source="test",
        features={"speed": FeatureSource(SourceKind.SPEED, "mps")},
        per_step_attributes=(
            AttributeDef("speed", 1.0, Ref("speed"), AttributeKind.OUTCOME, frozenset({OutcomeTag.PROGRESS})),
        ),
        terminal_rules=(),
        episode=EpisodeConfig(
            reward_step_s=1.0,
            discount=0.99,
            time_limit_s=60.0,
            termination_criteria=frozenset({TerminalKind.COLLISION, TerminalKind.GOAL}),
        ),
        design_provenance=DesignProvenance.PRINCIPLED,
    )
    fields.update(overrides)
    return RewardSpec(**fields)


def make_trajectory(spec: RewardSpec, speeds, terminal=None, events=None) -> Trajectory:
    speeds = np.asarray(speeds, dtype=float)
    dt = spec.episode.reward_step_s
    return Trajectory(
        kind=TrajectoryKind.CUSTOM,
        reward_step_s=dt,
        path_length_km=float(np.sum(speeds) * dt / 1000.0),
        speed_mps=speeds,
        distance_km=speeds * dt / 1000.0,
        overlap=np.zeros(len(speeds)),
        events=events or {},
        params={},
        terminal=terminal,
        schema=spec.features,
    )


def constant_attribute(attribute_id: str, weight: float = 1.0, **kwargs) -> AttributeDef:
    kwargs.setdefault("kind", AttributeKind.OUTCOME)
    kwargs.setdefault("outcome_tags", frozenset({OutcomeTag.TIME}))
    return AttributeDef(attribute_id, weight, Const(1.0), **kwargs)


@lru_cache(maxsize=None)
def canonical_trajectories(entry_id: str):
    """(spec, {kind: trajectory}) for a corpus entry, built once per session"""
    entry = corpus_service.corpus_entry(entry_id)
    return entry.spec, {
        kind: synth_canonical(entry.scenario, entry.spec, kind)
        for kind in CANONICAL_KINDS
    }


@pytest.fixture
def corpus() -> CorpusService:
    return corpus_service


@pytest.fixture(scope="session")
def corpus_report():
    return corpus_service.corpus_run()


@pytest.fixture
def tiny_spec() -> RewardSpec:
    return make_spec()


@pytest.fixture
def crash_terminal():
    return TerminalEvent(TerminalKind.COLLISION, 10.0)


@pytest.fixture
def write_doc(tmp_path):
    def write(name: str, text: str):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write
