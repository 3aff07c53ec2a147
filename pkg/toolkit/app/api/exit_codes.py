"""
Reward Audit Exit Codes
Process exit codes shared by every command
"""


class ExitCodes:
    """
    0: every check passed (warnings allowed unless --strict)
    1: a check failed, a warning was promoted by --strict, or a corpus value
       was not reproduced
    2: the input could not be parsed or validated, or the command line was wrong
    """

    SUCCESS = 0
    FINDINGS = 1
    INPUT_ERROR = 2

    @classmethod
    def get_description(cls, code: int) -> str:
        descriptions = {
            cls.SUCCESS: "Success - no failing checks",
            cls.FINDINGS: "Failing checks or strict-mode warnings",
            cls.INPUT_ERROR: "Unreadable, unparseable or invalid input",
        }
        return descriptions.get(code, f"Unknown exit code: {code}")
