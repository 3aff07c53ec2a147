"""
Risk Baseline Registry
Built-in human baselines merged with override documents
"""

from pathlib import Path
from typing import Dict, Optional, Union

from app.core.checks import RiskBaseline, resolve_baselines
from app.core.config import settings
from app.services.spec_lang import load_baselines
from app.utils.logger import setup_logger

logger = setup_logger(__name__)


def baseline_registry(path: Optional[Union[str, Path]] = None) -> Dict[str, RiskBaseline]:
    """
    Defaults, then the REWARD_AUDIT_BASELINES document, then `path`;
    later sources replace baselines with the same id
    """
    overrides = []
    for source in (settings.REWARD_AUDIT_BASELINES, path):
        if source:
            loaded = load_baselines(source)
            logger.info(f"Loaded {len(loaded)} baseline overrides from {source}")
            overrides.extend(loaded)
    return resolve_baselines(overrides)


def select_baseline(registry: Dict[str, RiskBaseline], name: Optional[str] = None) -> RiskBaseline:
    name = name or settings.DEFAULT_BASELINE
    try:
        return registry[name]
    except KeyError:
        raise KeyError(f"unknown baseline '{name}' (known: {', '.join(sorted(registry))})") from None
