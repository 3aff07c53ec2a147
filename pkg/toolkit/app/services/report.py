"""
Audit Report Models and Emission
Report records plus the text, markdown, CSV and JSON-lines renderings
"""

import io
from collections import Counter
from enum import Enum
from typing import Any, Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, Field, model_validator
from rich.console import Console
from rich.table import Table

from app.core.checks import CHECK_TITLES, CheckId, CheckResult
from app.core.config import settings
from app.utils.helpers import format_fixed

CSV_COLUMNS = [
    "entry_id",
    "g_crash",
    "g_idle",
    "g_succ",
    "preference_status",
    "p",
    "km_per_collision",
    "evaluable",
]

TEXT_WIDTH = 110


class ReportFormat(str, Enum):
    TEXT = "text"
    MARKDOWN = "md"
    CSV = "csv"
    JSONL = "jsonl"


class ComparisonStatus(str, Enum):
    REPRODUCED = "reproduced"
    DISCREPANCY = "discrepancy"
    MISMATCH = "mismatch"
    NOT_EVALUABLE = "not_evaluable"


class CheckRecord(BaseModel):
    check_id: int
    title: str
    status: str
    message: str = ""
    details: Dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def from_result(cls, result: CheckResult) -> "CheckRecord":
        return cls(
            check_id=int(result.check_id),
            title=result.check_id.title,
            status=result.status.value,
            message=result.message,
            details=dict(result.details),
        )


class ValueComparison(BaseModel):
    """One expected corpus value against what the toolkit computes"""

    quantity: str
    provenance: str
    expected: float
    decimals: int
    actual: Optional[float] = None
    status: ComparisonStatus
    note: Optional[str] = None


class EntryAudit(BaseModel):
    entry_id: str
    title: str
    evaluable: bool
    g_crash: Optional[float] = None
    g_idle: Optional[float] = None
    g_succ: Optional[float] = None
    return_decimals: Dict[str, int] = Field(default_factory=dict)
    p: Optional[float] = None
    p_clamped: bool = False
    km_per_collision: Optional[float] = None
    preference_status: str = "not_evaluable"
    checks: List[CheckRecord] = Field(default_factory=list)
    comparisons: List[ValueComparison] = Field(default_factory=list)
    discrepancy_notes: List[str] = Field(default_factory=list)

    def check(self, check_id: CheckId) -> Optional[CheckRecord]:
        return next((c for c in self.checks if c.check_id == int(check_id)), None)

    def _return_text(self, quantity: str) -> str:
        return format_fixed(getattr(self, quantity), self.return_decimals.get(quantity, 2))

    def row(self) -> Dict[str, str]:
        """Printed CSV/markdown row"""
        return {
            "entry_id": self.entry_id,
            "g_crash": self._return_text("g_crash"),
            "g_idle": self._return_text("g_idle"),
            "g_succ": self._return_text("g_succ"),
            "preference_status": self.preference_status,
            "p": format_fixed(self.p, settings.P_DECIMALS),
            "km_per_collision": format_fixed(self.km_per_collision, settings.KM_DECIMALS),
            "evaluable": "true" if self.evaluable else "false",
        }


class ReportRow(BaseModel):
    """JSON-lines record, keyed like the CSV columns"""

    entry_id: str
    g_crash: Optional[float]
    g_idle: Optional[float]
    g_succ: Optional[float]
    preference_status: str
    p: Optional[float]
    km_per_collision: Optional[float]
    evaluable: bool

    @classmethod
    def from_printed(cls, row: Dict[str, str]) -> "ReportRow":
        number = lambda key: float(row[key]) if row[key] else None  # noqa: E731
        return cls(
            entry_id=row["entry_id"],
            g_crash=number("g_crash"),
            g_idle=number("g_idle"),
            g_succ=number("g_succ"),
            preference_status=row["preference_status"],
            p=number("p"),
            km_per_collision=number("km_per_collision"),
            evaluable=row["evaluable"] == "true",
        )


class FigureRow(BaseModel):
    """Plot-ready km-per-collision point"""

    id: str
    label: str
    km_per_collision: Optional[float]
    evaluable: bool
    kind: str = "reward_function"


class AuditSummary(BaseModel):
    preference: Dict[str, int] = Field(default_factory=dict)
    checks: Dict[str, Dict[str, int]] = Field(default_factory=dict)
    unexplained_mismatches: int = 0


def tally(entries: List[EntryAudit]) -> AuditSummary:
    per_check: Dict[str, Counter] = {}
    for entry in entries:
        for record in entry.checks:
            per_check.setdefault(str(record.check_id), Counter())[record.status] += 1
    return AuditSummary(
        preference=dict(sorted(Counter(e.preference_status for e in entries).items())),
        checks={k: dict(sorted(v.items())) for k, v in sorted(per_check.items(), key=lambda kv: int(kv[0]))},
        unexplained_mismatches=sum(
            1 for e in entries for c in e.comparisons if c.status is ComparisonStatus.MISMATCH
        ),
    )


class AuditReport(BaseModel):
    tool_version: str = settings.VERSION
    corpus_version: str = settings.CORPUS_VERSION
    baseline: str = ""
    entries: List[EntryAudit] = Field(default_factory=list)
    summary: AuditSummary = Field(default_factory=AuditSummary)
    figure_rows: List[FigureRow] = Field(default_factory=list)

    @model_validator(mode="after")
    def _summary_matches_entries(self) -> "AuditReport":
        if self.summary != tally(self.entries):
            raise ValueError("summary counts differ from the entry statuses")
        return self

    @classmethod
    def build(cls, entries: List[EntryAudit], figure_rows: List[FigureRow], baseline: str = "") -> "AuditReport":
        entries = sorted(entries, key=lambda e: e.entry_id)
        return cls(baseline=baseline, entries=entries, summary=tally(entries), figure_rows=figure_rows)

    @property
    def all_values_explained(self) -> bool:
        return self.summary.unexplained_mismatches == 0


# Emission

def _emit_csv(report: AuditReport) -> bytes:
    frame = pd.DataFrame([e.row() for e in report.entries], columns=CSV_COLUMNS, dtype=str)
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


def _emit_jsonl(report: AuditReport) -> bytes:
    lines = [ReportRow.from_printed(e.row()).model_dump_json() for e in report.entries]
    return "".join(line + "\n" for line in lines).encode("utf-8")


def _md_cell(text: Any) -> str:
    return str(text).replace("|", "\\|").replace("\n", " ")


def _emit_markdown(report: AuditReport) -> bytes:
    lines = [
        "# Reward function audit",
        "",
        f"Toolkit {report.tool_version}, corpus {report.corpus_version}, risk baseline {report.baseline or 'none'}.",
        "",
        "| Preference ordering | Entries |",
        "|---|---|",
        *(f"| {status} | {count} |" for status, count in report.summary.preference.items()),
    ]
    for entry in report.entries:
        row = entry.row()
        lines += [
            "",
            f"## {entry.entry_id}: {_md_cell(entry.title)}",
            "",
            f"G(crash) = {row['g_crash'] or 'n/a'}, G(idle) = {row['g_idle'] or 'n/a'}, "
            f"G(succ) = {row['g_succ'] or 'n/a'}; p = {row['p'] or 'n/a'}; "
            f"km per collision = {row['km_per_collision'] or 'n/a'}",
            "",
            "| # | Sanity check | Status | Details |",
            "|---|---|---|---|",
        ]
        for check_id in CheckId:
            record = entry.check(check_id)
            status = record.status if record else "not_run"
            message = record.message if record else ""
            lines.append(f"| {int(check_id)} | {CHECK_TITLES[check_id]} | {status} | {_md_cell(message)} |")
        for note in entry.discrepancy_notes:
            lines.append("")
            lines.append(f"> Discrepancy: {_md_cell(note)}")
    if report.figure_rows:
        lines += ["", "## Km per collision at indifference", "", "| Id | Label | Km per collision | Kind |", "|---|---|---|---|"]
        for fig in report.figure_rows:
            km = format_fixed(fig.km_per_collision, settings.KM_DECIMALS) or "n/a"
            lines.append(f"| {fig.id} | {_md_cell(fig.label)} | {km} | {fig.kind} |")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _text_console(buffer: io.StringIO) -> Console:
    return Console(
        file=buffer,
        width=TEXT_WIDTH,
        color_system=None,
        force_terminal=False,
        highlight=False,
        emoji=False,
        soft_wrap=False,
    )


def _emit_text(report: AuditReport) -> bytes:
    buffer = io.StringIO()
    console = _text_console(buffer)
    console.print(f"{settings.APP_NAME} {report.tool_version} (corpus {report.corpus_version})")

    table = Table(title="Corpus audit", title_justify="left")
    for column in CSV_COLUMNS:
        table.add_column(column, justify="left" if column in ("entry_id", "preference_status") else "right")
    for entry in report.entries:
        table.add_row(*entry.row().values())
    console.print(table)

    summary = ", ".join(f"{count} {status}" for status, count in report.summary.preference.items())
    console.print(f"Preference ordering: {summary or 'no entries'}")
    console.print(f"Risk baseline: {report.baseline or 'none'}")
    for entry in report.entries:
        for note in entry.discrepancy_notes:
            console.print(f"{entry.entry_id}: {note}")
    if report.summary.unexplained_mismatches:
        console.print(f"Unexplained mismatches against stated values: {report.summary.unexplained_mismatches}")
    return buffer.getvalue().encode("utf-8")


def render_checks(title: str, results: List[CheckResult]) -> str:
    """Rich table of check outcomes for the lint and check commands"""
    buffer = io.StringIO()
    console = _text_console(buffer)
    table = Table(title=title, title_justify="left")
    table.add_column("#", justify="right")
    table.add_column("Sanity check")
    table.add_column("Status")
    table.add_column("Details", overflow="fold")
    for result in results:
        table.add_row(str(int(result.check_id)), result.check_id.title, result.status.value, result.message)
    console.print(table)
    return buffer.getvalue()


_EMITTERS = {
    ReportFormat.TEXT: _emit_text,
    ReportFormat.MARKDOWN: _emit_markdown,
    ReportFormat.CSV: _emit_csv,
    ReportFormat.JSONL: _emit_jsonl,
}


def emit_report(report: AuditReport, fmt: ReportFormat = ReportFormat.TEXT) -> bytes:
    """Deterministic bytes for a complete report, entries ordered by id"""
    return _EMITTERS[ReportFormat(fmt)](report)
