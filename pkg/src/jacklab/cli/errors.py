class TopologyError(ValueError):
    """A scenario refers to devices, shields or taps it does not declare, or declares them inconsistently."""


class AssertionFailed(Exception):
    def __init__(self, report) -> None:
        failed = [c.key for c in report.checks if not c.passed]
        reason = report.error or f"failed checks: {', '.join(failed) or 'none'}"
        super().__init__(f"scenario {report.name} failed ({reason})")
        self.report = report
