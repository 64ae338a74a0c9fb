from typing import Iterator, Optional, Tuple

from .checks.base import BaseCheck, CheckContext, CheckLevel, InequalityReport
from .config import Config

__all__ = ["LemmaChecker"]


class LemmaChecker:
    def __init__(self, context: Optional[CheckContext] = None, config: Optional[Config] = None):
        """Initialize the lemma checker.

        Optionally, supply the context of the run (samples, configs, seed,
        workers and a coefficient name restricting the hypothesis suite)
        and a Config with a custom selection of checks.
        """
        self.context = CheckContext() if context is None else context
        self.config = Config() if config is None else config

    def reports(
        self, level=CheckLevel.ERROR, ignore_checks=None, suites=None
    ) -> Iterator[Tuple[BaseCheck, InequalityReport]]:
        """Iterates and applies checks, returning every report."""
        for check in self.checks(level=level, ignore_checks=ignore_checks, suites=suites):
            for report in check.get_reports(self.context):
                yield check, report

    def errors(
        self, level=CheckLevel.ERROR, ignore_checks=None, suites=None
    ) -> Iterator[Tuple[BaseCheck, InequalityReport]]:
        """Iterates and applies checks, returning any failing reports.

        By default, checks of WARNING and INFO level are ignored.

        :return: Tuple of the applied check and the failing report.
        """
        for check, report in self.reports(level, ignore_checks, suites):
            if not report.ok:
                yield check, report

    def checks(self, level=CheckLevel.ERROR, ignore_checks=None, suites=None) -> Iterator[BaseCheck]:
        """Iterates over all configured checks

        :return: implementations of BaseChecks
        """
        for check in self.config.iter_checks(
            level=level, ignore_checks=ignore_checks, suites=suites
        ):
            yield check
