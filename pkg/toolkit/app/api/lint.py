"""
Lint command: structural checks that need no trajectories
"""

from pathlib import Path
from typing import Optional

import click

from app.api.common import exit_code_for, input_error, read_spec
from app.core.checks import run_lints
from app.core.config import settings
from app.core.spec_model import OutcomeTag, Severity, validate_spec
from app.services.report import render_checks
from app.utils.logger import AuditLogger

audit_logger = AuditLogger(__name__)


def parse_tags(ctx: click.Context, text: Optional[str]):
    names = settings.REQUIRED_OUTCOME_TAGS if text is None else [t for t in text.split(",") if t.strip()]
    try:
        return [OutcomeTag(name.strip()) for name in names]
    except ValueError as e:
        input_error(ctx, f"--require: {e}")


@click.command("lint")
@click.argument("spec_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--strict", is_flag=True, help="Treat warnings as failures")
@click.option("--require", "require", default=None, metavar="TAGS", help="Comma-separated outcome tags that must be covered")
@click.pass_context
def lint(ctx: click.Context, spec_file: Path, strict: bool, require: Optional[str]):
    """Run checks 1 and 5-8 on a reward spec."""
    spec = read_spec(ctx, spec_file)
    required = parse_tags(ctx, require)
    warnings = [f for f in validate_spec(spec) if f.severity is Severity.WARNING]
    results = run_lints(spec, required)
    for result in results:
        audit_logger.log_check_result(spec.id, result.check_id.name, result.status.value, dict(result.details))

    click.echo(render_checks(f"Lint {spec.id}", results), nl=False)
    for finding in warnings:
        click.echo(f"warning: {finding}")
    ctx.exit(exit_code_for(results, strict, extra_warnings=len(warnings)))
