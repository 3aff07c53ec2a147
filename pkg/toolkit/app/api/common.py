"""
Shared CLI helpers
"""

from pathlib import Path
from typing import Iterable, List, NoReturn

import click

from app.api.exit_codes import ExitCodes
from app.core.checks import CheckResult, CheckStatus
from app.core.exceptions import RewardAuditError, SpecError
from app.core.spec_model import RewardSpec
from app.core.trajectory import ScenarioSpec
from app.services.spec_lang import load_scenario, load_spec
from app.utils.logger import setup_logger

logger = setup_logger(__name__)


def input_error(ctx: click.Context, message: str) -> NoReturn:
    click.echo(f"error: {message}", err=True)
    ctx.exit(ExitCodes.INPUT_ERROR)


def read_spec(ctx: click.Context, path: Path) -> RewardSpec:
    try:
        return load_spec(path)
    except SpecError as e:
        input_error(ctx, f"{path}:{e}")
    except (OSError, RewardAuditError) as e:
        input_error(ctx, f"{path}: {e}")


def read_scenario(ctx: click.Context, path: Path) -> ScenarioSpec:
    try:
        return load_scenario(path)
    except SpecError as e:
        input_error(ctx, f"{path}:{e}")
    except (OSError, RewardAuditError) as e:
        input_error(ctx, f"{path}: {e}")


def exit_code_for(results: Iterable[CheckResult], strict: bool, extra_warnings: int = 0) -> int:
    results: List[CheckResult] = list(results)
    if any(r.status is CheckStatus.FAIL for r in results):
        return ExitCodes.FINDINGS
    soft = extra_warnings + sum(r.status in (CheckStatus.WARNING, CheckStatus.NOT_EVALUABLE) for r in results)
    if strict and soft:
        return ExitCodes.FINDINGS
    return ExitCodes.SUCCESS
