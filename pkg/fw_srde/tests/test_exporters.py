import json

import numpy as np
import pytest

from fw_srde.checks.base import CheckLevel, InequalityReport
from fw_srde.config import Config
from fw_srde.exceptions import DomainError, ShapeError
from fw_srde.exporters import (
    check_overview,
    check_results,
    export_to_file,
    format_check_results,
    generate_csv_table,
    generate_rst_table,
    load_control,
    print_errors,
    read_control_csv,
    table_to_csv,
    to_json,
    to_plain,
    write_control_csv,
    write_trajectory_csv,
)
from fw_srde.grid import GridSpec, Trajectory

from . import factories


@pytest.fixture
def fake_checks():
    class FakeCheck:
        def __init__(self, level, error_code, suite, inequality_id=None):
            self.level = level
            self.error_code = error_code
            self.suite = suite
            self.inequality_id = inequality_id

        def description(self):
            return f"This sample message has code {self.error_code} and level {self.level.name}"

    fake_checks = [
        FakeCheck(level=CheckLevel.WARNING, error_code=2, suite="gronwall", inequality_id="G1"),
        FakeCheck(level=CheckLevel.ERROR, error_code=1234, suite="metrics"),
        FakeCheck(level=CheckLevel.INFO, error_code=12, suite="heat_kernel", inequality_id="vi"),
    ]

    return fake_checks


@pytest.fixture
def small_grid():
    return GridSpec(T=1.0, n_t=2, half_width=1.0, n_x=4)


def test_check_overview(fake_checks):
    rows = check_overview(fake_checks)
    assert [row["error_code"] for row in rows] == ["0002", "0012", "1234"]
    assert [row["inequality_id"] for row in rows] == ["G1", "vi", "all"]
    assert rows[1] == {
        "error_code": "0012",
        "level": "INFO",
        "suite": "heat_kernel",
        "inequality_id": "vi",
        "description": "This sample message has code 12 and level INFO",
    }


def test_generate_rst_table(fake_checks):
    correct_rst_result = (
        ".. list-table:: Inequality checks\n"
        + "   :widths: 8 10 12 20 50\n   :header-rows: 1\n\n"
        + "   * - Code\n"
        + "     - Level\n"
        + "     - Suite\n"
        + "     - Inequality\n"
        + "     - Description\n"
        + "   * - 0002\n"
        + "     - WARNING\n"
        + "     - gronwall\n"
        + "     - G1\n"
        + "     - This sample message has code 2 and level WARNING\n"
        + "   * - 0012\n"
        + "     - INFO\n"
        + "     - heat_kernel\n"
        + "     - vi\n"
        + "     - This sample message has code 12 and level INFO\n"
        + "   * - 1234\n"
        + "     - ERROR\n"
        + "     - metrics\n"
        + "     - all\n"
        + "     - This sample message has code 1234 and level ERROR"
    )
    rst_result = generate_rst_table(fake_checks)
    assert rst_result == correct_rst_result


def test_generate_csv_table(fake_checks):
    correct_csv_result = (
        '"error_code","level","suite","inequality_id","description"\r\n'
        + '"0002","WARNING","gronwall","G1","This sample message has code 2 and level WARNING"\r\n'
        + '"0012","INFO","heat_kernel","vi","This sample message has code 12 and level INFO"\r\n'
        + '"1234","ERROR","metrics","all","This sample message has code 1234 and level ERROR"\r\n'
    )
    csv_result = generate_csv_table(fake_checks)
    assert csv_result == correct_csv_result


def test_overview_of_the_registry():
    rows = check_overview(Config().checks)
    codes = [row["error_code"] for row in rows]
    assert codes == sorted(codes)
    assert len(set(codes)) == len(codes)
    assert generate_csv_table(Config().checks).count("\r\n") == len(rows) + 1


def test_format_check_results(fake_checks):
    report = InequalityReport("vi", samples=100, violations=3, worst_slack=-0.25)
    assert format_check_results(fake_checks[0], report) == (
        "W0002 (vi: 3/100, worst slack -0.25) "
        "This sample message has code 2 and level WARNING"
    )


def test_print_and_export_errors(fake_checks, capsys, tmp_path):
    errors = [(fake_checks[0], InequalityReport("vi", samples=10, violations=1, worst_slack=-1.0))]
    print_errors(errors)
    expected = format_check_results(*errors[0])
    assert capsys.readouterr().out == expected + "\n"
    path = tmp_path / "errors.txt"
    export_to_file(errors, path)
    assert path.read_text() == expected + "\n"


def test_check_results(fake_checks):
    (row,) = check_results([(fake_checks[2], InequalityReport("mass", samples=4))])
    assert row["error_code"] == "0012"
    assert row["level"] == "INFO"
    assert row["suite"] == "heat_kernel"
    assert row["samples"] == 4
    assert row["ok"] is True


def test_to_plain():
    plain = to_plain(
        {"a": np.float64(1.0 / 3.0), "b": [np.nan, np.inf], "c": np.arange(2), 1: np.bool_(True)}
    )
    assert plain == {"a": 0.333333333333, "b": [None, None], "c": [0, 1], "1": True}


def test_to_json_puts_config_first():
    text = to_json({"value": 1.5}, {"command": "simulate"}, timestamp=False)
    document = json.loads(text)
    assert list(document) == ["config", "value"]
    assert document["config"] == {"command": "simulate"}


def test_to_json_timestamp():
    document = json.loads(to_json({}, {}))
    assert list(document) == ["config", "timestamp"]
    assert document["timestamp"].endswith("+00:00")


def test_table_to_csv():
    rows = [{"eps": 0.1, "p": np.nan}, {"eps": 0.01, "p": 2e-5}]
    assert table_to_csv(rows) == "eps,p\r\n0.1,\r\n0.01,2e-05\r\n"
    assert table_to_csv([]) == ""


def test_write_trajectory_csv(tmp_path, small_grid):
    values = np.arange(12, dtype=float).reshape(3, 4)
    path = tmp_path / "trajectory.csv"
    write_trajectory_csv(Trajectory(small_grid, values), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_index,x_index,t,x,value"
    assert len(lines) == 13
    assert lines[-1] == "2,3,1.0,0.5,11.0"


def test_control_csv_round_trip(tmp_path, grid):
    control = factories.ControlFieldFactory(grid=grid)
    path = tmp_path / "control.csv"
    write_control_csv(control, path)
    restored = read_control_csv(path, grid)
    np.testing.assert_allclose(restored.values, control.values, rtol=1e-11)


def test_read_control_csv_sparse(tmp_path, small_grid):
    path = tmp_path / "control.csv"
    path.write_text("t_index,x_index,value\n1,2,0.5\n")
    control = read_control_csv(path, small_grid)
    assert control.values[1, 2] == 0.5
    assert np.count_nonzero(control.values) == 1


@pytest.mark.parametrize(
    "content,error",
    [
        ("t,x,value\n0,0,1\n", DomainError),
        ("t_index,x_index,value\n0,0,one\n", DomainError),
        ("t_index,x_index,value\n2,0,1\n", ShapeError),
    ],
    ids=["columns", "parse", "outside"],
)
def test_read_control_csv_errors(tmp_path, small_grid, content, error):
    path = tmp_path / "control.csv"
    path.write_text(content)
    with pytest.raises(error):
        read_control_csv(path, small_grid)


def test_load_control(tmp_path, small_grid):
    assert load_control("unit", small_grid).energy == pytest.approx(1.0)
    with pytest.raises(FileNotFoundError):
        load_control(str(tmp_path / "missing.csv"), small_grid)
