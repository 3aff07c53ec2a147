"""
Reward Audit Toolkit
Command-line entry point
"""

import sys
from typing import Optional, Sequence

import click

from app.api.check import check
from app.api.corpus import corpus
from app.api.exit_codes import ExitCodes
from app.api.lint import lint
from app.core.config import settings
from app.utils.logger import setup_logger

logger = setup_logger(__name__)


@click.group()
@click.version_option(settings.VERSION, prog_name=settings.APP_NAME)
def cli():
    """Sanity checks for reinforcement-learning reward functions."""


cli.add_command(lint)
cli.add_command(check)
cli.add_command(corpus)


def run_cli(args: Optional[Sequence[str]] = None) -> int:
    """Run a command and return its exit code"""
    try:
        result = cli.main(args=list(args) if args is not None else None, prog_name="reward-audit", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return ExitCodes.FINDINGS
    except click.ClickException as e:
        e.show()
        return ExitCodes.INPUT_ERROR if isinstance(e, click.UsageError) else e.exit_code
    code = result if isinstance(result, int) else ExitCodes.SUCCESS
    logger.debug(f"exit {code}: {ExitCodes.get_description(code)}")
    return code


if __name__ == "__main__":
    sys.exit(run_cli())
