from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

__all__ = [
    "CheckLevel",
    "CheckContext",
    "InequalityReport",
    "merge_reports",
    "BaseCheck",
    "SuiteCheck",
]


class CheckLevel(IntEnum):
    ERROR = 40
    WARNING = 30
    INFO = 20

    @classmethod
    def get(cls, value):
        """Get a CheckLevel from a CheckLevel, str or int."""
        if isinstance(value, cls):
            return value
        elif isinstance(value, str):
            return cls[value.upper()]
        else:
            return cls(value)


@dataclass
class InequalityReport:
    """Outcome of evaluating one inequality on a batch of sampled points.

    ``worst_slack`` is the smallest relative slack (rhs - lhs) / (|rhs| + atol)
    seen; it is negative exactly when a violation occurred.
    """

    inequality_id: str
    samples: int = 0
    violations: int = 0
    worst_slack: float = float("inf")
    worst_point: Dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    @classmethod
    def from_sides(
        cls,
        inequality_id: str,
        lhs,
        rhs,
        points: Dict[str, np.ndarray],
        atol: float = 1e-12,
        rtol: float = 1e-9,
    ) -> "InequalityReport":
        """Tally ``lhs <= rhs`` elementwise, allowing atol + rtol * |rhs|."""
        lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        excess = lhs - rhs
        with np.errstate(invalid="ignore"):
            violated = excess > atol + rtol * np.abs(rhs)
        # a NaN side is always a violation
        violated |= np.isnan(excess)
        with np.errstate(invalid="ignore", divide="ignore"):
            slack = -excess / (np.abs(rhs) + atol)
        slack = np.where(np.isnan(slack), np.inf, slack)
        slack = np.where(np.isnan(excess), -np.inf, slack)
        worst = int(np.argmin(slack)) if slack.size else 0
        worst_point = {
            key: float(np.broadcast_to(value, lhs.shape).flat[worst])
            for key, value in points.items()
        }
        if slack.size:
            worst_point.update(lhs=float(lhs.flat[worst]), rhs=float(rhs.flat[worst]))
        return cls(
            inequality_id=inequality_id,
            samples=int(lhs.size),
            violations=int(np.count_nonzero(violated)),
            worst_slack=float(slack.flat[worst]) if slack.size else float("inf"),
            worst_point=worst_point,
        )

    def merge(self, other: "InequalityReport") -> "InequalityReport":
        if other.inequality_id != self.inequality_id:
            raise ValueError("cannot merge reports of different inequalities")
        if other.worst_slack < self.worst_slack:
            worst_slack, worst_point = other.worst_slack, other.worst_point
        else:
            worst_slack, worst_point = self.worst_slack, self.worst_point
        return InequalityReport(
            self.inequality_id,
            self.samples + other.samples,
            self.violations + other.violations,
            worst_slack,
            worst_point,
        )

    def as_dict(self) -> dict:
        return {
            "inequality_id": self.inequality_id,
            "samples": self.samples,
            "violations": self.violations,
            "worst_slack": self.worst_slack,
            "worst_point": dict(self.worst_point),
        }


def merge_reports(reports: Iterable[InequalityReport]) -> InequalityReport:
    """Merge shards of the same inequality by summation."""
    merged = None
    for report in reports:
        merged = report if merged is None else merged.merge(report)
    if merged is None:
        raise ValueError("nothing to merge")
    return merged


@dataclass
class CheckContext:
    """Run parameters shared by all checks of one ``check-lemmas`` call.

    ``samples`` counts sampled points; ``configs`` counts whole randomized
    problems (Gronwall coefficient profiles), which are far more expensive.
    """

    samples: int = 10_000
    configs: int = 200
    seed: int = 0
    workers: int = 1
    coeff: Optional[str] = None


class BaseCheck(ABC):
    """Base class for all checks.

    A Check certifies one property of the numerical machinery. Use
    `get_invalid()` to obtain the reports in which the property failed.
    """

    def __init__(self, suite: str, level=CheckLevel.ERROR, error_code=0):
        self.suite = suite
        self.error_code = int(error_code)
        self.level = CheckLevel.get(level)

    @abstractmethod
    def get_reports(self, context: CheckContext) -> List[InequalityReport]:
        """Run the check and return every report, failing or not."""
        pass

    def get_invalid(self, context: CheckContext) -> List[InequalityReport]:
        """Return the reports with at least one violation.

        :param context: CheckContext
        :return: list of InequalityReport or an empty list if the check passed
        """
        return [report for report in self.get_reports(context) if not report.ok]

    def description(self) -> str:
        return "Property violated in suite '%s'" % self.suite

    def __repr__(self) -> str:
        return "<%s: %s %04d>" % (self.__class__.__name__, self.suite, self.error_code)


class SuiteCheck(BaseCheck):
    """Wrap a callable ``run(context) -> list of reports``.

    When ``inequality_id`` is given only that report is kept.
    """

    def __init__(
        self,
        run: Callable[[CheckContext], List[InequalityReport]],
        message: str,
        inequality_id: Optional[str] = None,
        **kwargs,
    ):
        super().__init__(**kwargs)
        self.run = run
        self.message = message
        self.inequality_id = inequality_id

    def get_reports(self, context):
        reports = self.run(context)
        if self.inequality_id is not None:
            reports = [r for r in reports if r.inequality_id == self.inequality_id]
        return reports

    def description(self):
        return self.message
