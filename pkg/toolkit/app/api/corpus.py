"""
Corpus commands: list, show and audit the shipped reward functions
"""

from pathlib import Path
from typing import Optional

import click

from app.api.common import input_error
from app.api.exit_codes import ExitCodes
from app.core.exceptions import RewardAuditError, SpecError, UnknownEntry
from app.services.baselines import baseline_registry, select_baseline
from app.services.corpus import get_corpus_service
from app.services.report import ReportFormat, emit_report
from app.services.spec_lang import render_scenario, render_spec
from app.utils.helpers import format_fixed


@click.group("corpus")
def corpus():
    """Shipped encodings of ten published reward functions."""


@corpus.command("list")
def list_entries():
    """List corpus entries."""
    for entry_id, title, evaluable in get_corpus_service().corpus_list():
        click.echo(f"{entry_id}\t{'evaluable' if evaluable else 'not evaluable'}\t{title}")


@corpus.command("show")
@click.argument("entry_id")
@click.pass_context
def show(ctx: click.Context, entry_id: str):
    """Print an entry's spec, scenario, expected values and notes."""
    try:
        entry = get_corpus_service().corpus_entry(entry_id)
    except UnknownEntry as e:
        input_error(ctx, str(e))

    click.echo(f"# {entry.id}: {entry.title}")
    if entry.aliases:
        click.echo(f"# aliases: {', '.join(entry.aliases)}")
    click.echo(render_spec(entry.spec).decode("utf-8"))
    click.echo(render_scenario(entry.scenario).decode("utf-8"))
    click.echo("expected values:")
    for expected in entry.expected:
        click.echo(
            f"  {expected.quantity} = {format_fixed(expected.value, expected.decimals)} ({expected.provenance.value})"
        )
    for note in entry.discrepancy_notes:
        click.echo(f"discrepancy: {note}")
    for note in entry.notes:
        click.echo(f"note: {note}")


@corpus.command("run")
@click.option("--out", "out", type=click.Path(dir_okay=False, writable=True, path_type=Path), help="Write the report here instead of stdout")
@click.option(
    "--format",
    "fmt",
    type=click.Choice([f.value for f in ReportFormat]),
    default=ReportFormat.TEXT.value,
    show_default=True,
)
@click.option("--baseline", "baseline_name", default=None, help="Risk baseline id for check 3")
@click.option("--baselines", "baselines_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Baseline override document")
@click.pass_context
def run(ctx: click.Context, out: Optional[Path], fmt: str, baseline_name: Optional[str], baselines_file: Optional[Path]):
    """Audit every entry and emit the report."""
    try:
        registry = baseline_registry(baselines_file)
        baseline = select_baseline(registry, baseline_name)
    except SpecError as e:
        input_error(ctx, f"baselines: {e}")
    except (KeyError, OSError, RewardAuditError) as e:
        input_error(ctx, str(e).strip("'\""))

    report = get_corpus_service().corpus_run(baseline=baseline, baselines=registry)
    data = emit_report(report, ReportFormat(fmt))
    if out:
        out.write_bytes(data)
    else:
        stream = click.get_binary_stream("stdout")
        stream.write(data)
        stream.flush()
    ctx.exit(ExitCodes.SUCCESS if report.all_values_explained else ExitCodes.FINDINGS)
