from unittest import mock

import pytest

from fw_srde.checks.base import CheckContext, InequalityReport, SuiteCheck
from fw_srde.config import Config
from fw_srde.lemma_checks import LemmaChecker


@pytest.fixture
def fake_config():
    passing = SuiteCheck(
        run=lambda context: [InequalityReport("a", samples=context.samples)],
        message="passes",
        suite="metrics",
        error_code=1,
    )
    failing = SuiteCheck(
        run=lambda context: [
            InequalityReport("b", samples=context.samples, violations=1, worst_slack=-1.0),
            InequalityReport("c", samples=context.samples),
        ],
        message="fails",
        suite="gronwall",
        error_code=2,
        level="warning",
    )
    return Config(checks=[passing, failing])


def test_default_context():
    checker = LemmaChecker()
    assert checker.context == CheckContext()
    assert len(list(checker.checks(level="info"))) == len(checker.config.checks)


def test_reports(fake_config):
    checker = LemmaChecker(CheckContext(samples=7), fake_config)
    reports = list(checker.reports(level="info"))
    assert [(check.error_code, r.inequality_id) for check, r in reports] == [
        (1, "a"),
        (2, "b"),
        (2, "c"),
    ]
    assert all(r.samples == 7 for _, r in reports)


def test_errors(fake_config):
    checker = LemmaChecker(config=fake_config)
    assert list(checker.errors()) == []
    ((check, report),) = checker.errors(level="warning")
    assert check.error_code == 2
    assert report.inequality_id == "b"


def test_errors_by_suite(fake_config):
    checker = LemmaChecker(config=fake_config)
    assert list(checker.errors(level="info", suites=["metrics"])) == []


def test_checks_are_run_lazily(fake_config):
    checker = LemmaChecker(config=fake_config)
    with mock.patch.object(SuiteCheck, "get_reports", return_value=[]) as get_reports:
        list(checker.errors(level="info"))
    assert get_reports.call_count == 2
    get_reports.assert_called_with(checker.context)
