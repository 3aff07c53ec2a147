"""
Check command: trajectory checks 2-4 against a scenario
"""

from pathlib import Path
from typing import List, Optional

import click

from app.api.common import exit_code_for, input_error, read_scenario, read_spec
from app.core.checks import CheckId, canonical_returns, run_trajectory_checks
from app.core.exceptions import ExprError, MissingScenarioParameter, NotEvaluable, RewardAuditError, SpecError, UnknownEntry
from app.services.baselines import baseline_registry, select_baseline
from app.services.corpus import get_corpus_service
from app.services.report import render_checks
from app.utils.helpers import format_number
from app.utils.logger import AuditLogger

audit_logger = AuditLogger(__name__)

TRAJECTORY_CHECKS = (CheckId.PREFERENCE_ORDERING, CheckId.RISK_TOLERANCE, CheckId.LEARNABLE_LOOPHOLE)


def parse_checks(ctx: click.Context, text: str) -> List[CheckId]:
    selected = []
    for part in text.split(","):
        try:
            check_id = CheckId(int(part))
        except ValueError:
            input_error(ctx, f"--checks: '{part}' is not a check number")
        if check_id not in TRAJECTORY_CHECKS:
            input_error(ctx, f"--checks: check {int(check_id)} does not use trajectories (choose from 2, 3, 4)")
        selected.append(check_id)
    return selected


@click.command("check")
@click.argument("spec_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--scenario", "scenario_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Scenario document")
@click.option("--canonical", is_flag=True, help="Use the corpus scenario matching the spec id")
@click.option("--checks", "checks", default="2,3,4", show_default=True, help="Comma-separated subset of 2,3,4")
@click.option("--baseline", "baseline_name", default=None, help="Risk baseline id for check 3")
@click.option("--baselines", "baselines_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Baseline override document")
@click.option("--strict", is_flag=True, help="Treat warnings and not-evaluable checks as failures")
@click.pass_context
def check(
    ctx: click.Context,
    spec_file: Path,
    scenario_file: Optional[Path],
    canonical: bool,
    checks: str,
    baseline_name: Optional[str],
    baselines_file: Optional[Path],
    strict: bool,
):
    """Run checks 2-4 on the crash, idle and succ drives of a scenario."""
    if bool(scenario_file) == canonical:
        input_error(ctx, "give exactly one of --scenario FILE or --canonical")
    selected = parse_checks(ctx, checks)
    spec = read_spec(ctx, spec_file)

    if canonical:
        try:
            scenario = get_corpus_service().entry_for_spec(spec).scenario
        except UnknownEntry:
            input_error(ctx, f"no corpus scenario for spec '{spec.id}'")
    else:
        scenario = read_scenario(ctx, scenario_file)

    try:
        baseline = select_baseline(baseline_registry(baselines_file), baseline_name)
    except SpecError as e:
        input_error(ctx, f"baselines: {e}")
    except (KeyError, OSError, RewardAuditError) as e:
        input_error(ctx, str(e).strip("'\""))

    try:
        returns = canonical_returns(spec, scenario)
    except (NotEvaluable, MissingScenarioParameter, ExprError) as e:
        returns = None
        returns_line = f"returns not evaluable: {e}"
    else:
        returns_line = (
            f"G(crash) = {format_number(returns.g_crash)}, G(idle) = {format_number(returns.g_idle)}, "
            f"G(succ) = {format_number(returns.g_succ)}"
        )

    try:
        results = run_trajectory_checks(spec, scenario, baseline, selected, returns=returns)
    except RewardAuditError as e:
        input_error(ctx, str(e))
    for result in results:
        audit_logger.log_check_result(spec.id, result.check_id.name, result.status.value, dict(result.details))

    click.echo(returns_line)
    for result in results:
        if result.check_id is CheckId.RISK_TOLERANCE and result.details.get("p") is not None:
            click.echo(f"p = {result.details['p']:.4f}, km per collision = {result.details['km_per_collision']:.2f}")

    click.echo(render_checks(f"Check {spec.id} on scenario {scenario.id}", results), nl=False)
    ctx.exit(exit_code_for(results, strict))
