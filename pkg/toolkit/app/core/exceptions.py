"""
Reward Audit Exceptions
Error hierarchy shared by the parser, synthesizer, evaluator and checks
"""

from typing import Iterable, Optional, Sequence, Tuple


class RewardAuditError(Exception):
    """Base class for every error raised by the toolkit"""


# Expressions

class ExprError(RewardAuditError):
    """Expression could not be evaluated"""


class MissingFeature(ExprError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"feature '{name}' is not present in the environment")


class DivisionByZero(ExprError):
    def __init__(self, location: Optional[Tuple[int, int]] = None):
        self.location = location
        where = f" at line {location[0]}, col {location[1]}" if location else ""
        super().__init__(f"division by zero{where}")


class InvalidClipBounds(ExprError):
    def __init__(self, lo: float, hi: float):
        self.lo = lo
        self.hi = hi
        super().__init__(f"clip bounds out of order: lo={lo} > hi={hi}")


# Documents

class SpecError(RewardAuditError):
    """Problem in a .rspec/.scn document, with a source position when known"""

    def __init__(self, message: str, line: Optional[int] = None, col: Optional[int] = None):
        self.line = line
        self.col = col
        self.message = message
        prefix = f"{line}:{col}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class SpecSyntaxError(SpecError):
    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        col: Optional[int] = None,
        expected: Iterable[str] = (),
    ):
        self.expected = tuple(sorted(expected))
        if self.expected:
            message = f"{message} (expected one of: {', '.join(self.expected)})"
        super().__init__(message, line, col)


class UnknownFeature(SpecError):
    def __init__(self, name: str, line: Optional[int] = None, col: Optional[int] = None):
        self.name = name
        super().__init__(f"expression references undeclared feature '{name}'", line, col)


class UnknownKey(SpecError):
    def __init__(self, key: str, block: str, line: Optional[int] = None, col: Optional[int] = None):
        self.key = key
        self.block = block
        super().__init__(f"unknown key '{key}' in {block}", line, col)


class SpecValidationError(SpecError):
    """Document parsed but violates a model invariant"""

    def __init__(self, findings: Sequence, line: Optional[int] = None, col: Optional[int] = None):
        self.findings = list(findings)
        summary = "; ".join(str(f) for f in self.findings) or "invalid document"
        super().__init__(summary, line, col)


# Trajectories and evaluation

class NotEvaluable(RewardAuditError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class MissingScenarioParameter(RewardAuditError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"scenario does not define '{name}'")


class EditOutOfRange(RewardAuditError):
    pass


class MissingPotential(RewardAuditError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"potential undefined at state index {index}")


# Checks and corpus

class OrderingViolated(RewardAuditError):
    def __init__(self, which: str):
        self.which = which
        super().__init__(f"ordering violated: {which}")


class UnknownEntry(RewardAuditError):
    def __init__(self, entry_id: str):
        self.entry_id = entry_id
        super().__init__(f"unknown corpus entry '{entry_id}'")
