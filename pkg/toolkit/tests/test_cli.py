"""
Command-Line Tests
lint, check and corpus commands through the click runner
"""

import json

import pytest
from click.testing import CliRunner

from app.api.exit_codes import ExitCodes
from app.core.config import settings
from app.main import cli, run_cli
from app.services.corpus import CORPUS_DIR
from conftest import MINIMAL_RSPEC

ISELE_SPEC = str(CORPUS_DIR / "ise18.rspec")
ISELE_SCENARIO = str(CORPUS_DIR / "ise18.scn")


@pytest.fixture
def runner():
    return CliRunner()


class TestLint:
    """Test the lint command"""

    def test_warnings_pass_by_default(self, runner, write_doc):
        """Undescribed episode details only warn"""
        path = write_doc("tiny.rspec", MINIMAL_RSPEC)
        result = runner.invoke(cli, ["lint", str(path)])
        assert result.exit_code == ExitCodes.SUCCESS
        assert "Check for incomplete specification" in result.output

    def test_strict_turns_warnings_into_findings(self, runner, write_doc):
        """--strict exits 1 on warnings"""
        path = write_doc("tiny.rspec", MINIMAL_RSPEC)
        assert runner.invoke(cli, ["lint", "--strict", str(path)]).exit_code == ExitCodes.FINDINGS

    def test_undeclared_shaping_fails(self, runner):
        """hue19 penalises lane changes without declaring them shaping"""
        result = runner.invoke(cli, ["lint", str(CORPUS_DIR / "hue19.rspec")])
        assert result.exit_code == ExitCodes.FINDINGS
        assert "lane_change" in result.output

    def test_require_subset(self, runner, write_doc):
        """Only the named tags are required"""
        path = write_doc("tiny.rspec", MINIMAL_RSPEC)
        result = runner.invoke(cli, ["lint", "--require", "progress", str(path)])
        assert "no attribute measures" not in result.output

    def test_unknown_tag(self, runner, write_doc):
        """Unknown tags are input errors"""
        path = write_doc("tiny.rspec", MINIMAL_RSPEC)
        result = runner.invoke(cli, ["lint", "--require", "comfort", str(path)])
        assert result.exit_code == ExitCodes.INPUT_ERROR

    def test_syntax_error(self, runner, write_doc):
        """Malformed documents exit 2 with a located message"""
        path = write_doc("bad.rspec", "reward_spec bad\nattribute {\n")
        result = runner.invoke(cli, ["lint", str(path)])
        assert result.exit_code == ExitCodes.INPUT_ERROR
        assert "error:" in result.output

    def test_missing_file(self, runner, tmp_path):
        """Nonexistent paths are usage errors"""
        result = runner.invoke(cli, ["lint", str(tmp_path / "absent.rspec")])
        assert result.exit_code == ExitCodes.INPUT_ERROR


class TestCheck:
    """Test the check command"""

    def test_isele_canonical(self, runner):
        """Risk fails against the default baseline"""
        result = runner.invoke(cli, ["check", ISELE_SPEC, "--canonical"])
        assert result.exit_code == ExitCodes.FINDINGS
        assert "G(crash) = -10.1, G(idle) = -1, G(succ) = 0.8" in result.output
        assert "p = 0.8349" in result.output

    def test_preference_only(self, runner):
        """A passing subset exits 0"""
        result = runner.invoke(cli, ["check", ISELE_SPEC, "--scenario", ISELE_SCENARIO, "--checks", "2"])
        assert result.exit_code == ExitCodes.SUCCESS
        assert "Compare preference orderings" in result.output
        assert "Compare indifference points" not in result.output

    def test_scenario_xor_canonical(self, runner):
        """Both or neither scenario source is an input error"""
        both = runner.invoke(cli, ["check", ISELE_SPEC, "--canonical", "--scenario", ISELE_SCENARIO])
        neither = runner.invoke(cli, ["check", ISELE_SPEC])
        assert both.exit_code == neither.exit_code == ExitCodes.INPUT_ERROR

    def test_lint_ids_rejected(self, runner):
        """Checks outside 2-4 are input errors"""
        result = runner.invoke(cli, ["check", ISELE_SPEC, "--canonical", "--checks", "2,6"])
        assert result.exit_code == ExitCodes.INPUT_ERROR

    def test_no_corpus_match(self, runner, write_doc):
        """--canonical needs a corpus entry with the spec's id"""
        path = write_doc("tiny.rspec", MINIMAL_RSPEC)
        assert runner.invoke(cli, ["check", str(path), "--canonical"]).exit_code == ExitCodes.INPUT_ERROR

    def test_unknown_baseline(self, runner):
        """Baselines are looked up by id"""
        result = runner.invoke(cli, ["check", ISELE_SPEC, "--canonical", "--baseline", "pilot"])
        assert result.exit_code == ExitCodes.INPUT_ERROR
        assert "drunk_teen_16_17" in result.output

    def test_continuing_task_strict(self, runner):
        """Not evaluable is a finding only under --strict"""
        args = ["check", str(CORPUS_DIR / "hue19.rspec"), "--scenario", str(CORPUS_DIR / "hue19.scn")]
        relaxed = runner.invoke(cli, args)
        assert relaxed.exit_code == ExitCodes.SUCCESS
        assert "returns not evaluable" in relaxed.output
        assert runner.invoke(cli, args + ["--strict"]).exit_code == ExitCodes.FINDINGS

    def test_expression_error_on_idle_drive(self, runner, write_doc):
        """A division by zero on the idle drive is reported, not raised"""
        text = MINIMAL_RSPEC.replace("expr = speed", "expr = 1 / speed") + "episode {\n  reward_step_s = 1\n}\n"
        path = write_doc("inverse.rspec", text)
        args = ["check", str(path), "--scenario", ISELE_SCENARIO, "--checks", "2,3"]
        result = runner.invoke(cli, args)
        assert result.exit_code == ExitCodes.SUCCESS
        assert "returns not evaluable: division by zero" in result.output
        assert run_cli(args + ["--strict"]) == ExitCodes.FINDINGS

    def test_baselines_from_environment(self, runner, write_doc, monkeypatch):
        """Baselines named only in REWARD_AUDIT_BASELINES can be selected"""
        doc = write_doc("env.baselines", 'baselines env\nbaseline fleet {\n  km_per_collision = 0.01\n  label = "fleet"\n}\n')
        monkeypatch.setattr(settings, "REWARD_AUDIT_BASELINES", str(doc))
        result = runner.invoke(cli, ["check", ISELE_SPEC, "--canonical", "--checks", "3", "--baseline", "fleet"])
        assert result.exit_code == ExitCodes.SUCCESS


class TestCorpusCommands:
    """Test the corpus command group"""

    def test_list(self, runner):
        """Ten lines, hue19 not evaluable"""
        result = runner.invoke(cli, ["corpus", "list"])
        lines = result.output.splitlines()
        assert len(lines) == 10
        assert "hue19\tnot evaluable\t" in result.output

    def test_show(self, runner):
        """Entry header, rendered documents and expected values"""
        result = runner.invoke(cli, ["corpus", "show", "isele18"])
        assert result.exit_code == ExitCodes.SUCCESS
        assert result.output.startswith("# ise18: ")
        assert "reward_spec ise18" in result.output
        assert "scenario ise18" in result.output
        assert "p = 0.8349 (stated)" in result.output

    def test_show_unknown(self, runner):
        """Unknown entries are input errors"""
        assert runner.invoke(cli, ["corpus", "show", "smith21"]).exit_code == ExitCodes.INPUT_ERROR

    def test_run_csv(self, runner):
        """Ten rows, nine with a risk figure"""
        result = runner.invoke(cli, ["corpus", "run", "--format", "csv"])
        assert result.exit_code == ExitCodes.SUCCESS
        rows = result.output.splitlines()[1:]
        assert len(rows) == 10
        assert sum(1 for row in rows if row.split(",")[6]) == 9

    def test_run_to_file(self, runner, tmp_path):
        """--out writes the report instead of printing it"""
        out = tmp_path / "audit.jsonl"
        result = runner.invoke(cli, ["corpus", "run", "--format", "jsonl", "--out", str(out)])
        assert result.exit_code == ExitCodes.SUCCESS
        assert result.output == ""
        assert len([json.loads(line) for line in out.read_text().splitlines()]) == 10

    def test_unknown_format(self, runner):
        """Formats are a fixed choice"""
        assert runner.invoke(cli, ["corpus", "run", "--format", "xml"]).exit_code == ExitCodes.INPUT_ERROR


class TestRunCli:
    """Test the process entry point"""

    def test_success(self, capsys):
        """Exit codes are returned, not raised"""
        assert run_cli(["corpus", "list"]) == ExitCodes.SUCCESS
        assert "ise18" in capsys.readouterr().out

    def test_usage_error(self, capsys):
        """Unknown commands are input errors"""
        assert run_cli(["audit"]) == ExitCodes.INPUT_ERROR
        assert "No such command" in capsys.readouterr().err

    def test_findings(self):
        """Command exit codes pass through"""
        assert run_cli(["check", ISELE_SPEC, "--canonical"]) == ExitCodes.FINDINGS

    def test_exit_code_descriptions(self):
        """Every exit code has a description"""
        assert ExitCodes.get_description(ExitCodes.INPUT_ERROR).startswith("Unreadable")
        assert ExitCodes.get_description(7) == "Unknown exit code: 7"

    def test_version(self, runner):
        """--version prints the toolkit version"""
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert "version" in result.output
