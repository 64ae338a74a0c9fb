import csv
import json
import math
from datetime import datetime, timezone
from io import StringIO
from typing import Dict, Iterable, List, Mapping

import numpy as np

from .checks.base import BaseCheck, InequalityReport
from .exceptions import DomainError, ShapeError
from .grid import CONTROL_PROFILES, ControlField, GridSpec, Trajectory, named_control

SIGNIFICANT_DIGITS = 12


# check result export functions
def print_errors(errors):
    """Simply prints all failing reports to stdout

    :param errors: iterator of (BaseCheck, InequalityReport)
    """
    for error in errors:
        print(format_check_results(*error))


def export_to_file(errors, file):
    """Write failing reports to a new file, separated with newlines.

    :param errors: iterator of (BaseCheck, InequalityReport)
    :param file:
    :return: None
    """
    with open(file, "w") as f:
        for error in errors:
            f.write(format_check_results(*error) + "\n")


def format_check_results(check: BaseCheck, report: InequalityReport):
    OUTPUT_FORMAT = (
        "{level}{error_code:04d} ({inequality_id}: {violations}/{samples}, "
        "worst slack {worst_slack:.3g}) {description!s}"
    )
    return OUTPUT_FORMAT.format(
        level=check.level.name[:1],
        error_code=check.error_code,
        inequality_id=report.inequality_id,
        violations=report.violations,
        samples=report.samples,
        worst_slack=report.worst_slack,
        description=check.description(),
    )


def check_results(pairs: Iterable) -> List[dict]:
    """JSON-ready rows of (check, report) pairs."""
    return [
        {
            "error_code": str(check.error_code).zfill(4),
            "level": check.level.name,
            "suite": check.suite,
            "description": check.description(),
            **report.as_dict(),
            "ok": report.ok,
        }
        for check, report in pairs
    ]


# check overview export functions
OVERVIEW_COLUMNS = (
    ("error_code", "Code", 8),
    ("level", "Level", 10),
    ("suite", "Suite", 12),
    ("inequality_id", "Inequality", 20),
    ("description", "Description", 50),
)


def check_overview(checks) -> List[Dict[str, str]]:
    """One row per check, ordered by error code; codes are zero-padded."""
    return [
        {
            "error_code": str(check.error_code).zfill(4),
            "level": check.level.name,
            "suite": check.suite,
            "inequality_id": getattr(check, "inequality_id", None) or "all",
            "description": check.description(),
        }
        for check in sorted(checks, key=lambda check: check.error_code)
    ]


def generate_rst_table(checks) -> str:
    """A list-table of the checks for the documentation."""
    widths = " ".join(str(width) for _, _, width in OVERVIEW_COLUMNS)
    lines = [
        ".. list-table:: Inequality checks",
        f"   :widths: {widths}",
        "   :header-rows: 1",
        "",
    ]
    titles = [title for _, title, _ in OVERVIEW_COLUMNS]
    for cells in [titles] + [list(row.values()) for row in check_overview(checks)]:
        lines.append(f"   * - {cells[0]}")
        lines.extend(f"     - {cell}" for cell in cells[1:])
    return "\n".join(lines)


def generate_csv_table(checks) -> str:
    """The checks as CSV, one row per check."""
    output_buffer = StringIO()
    writer = csv.DictWriter(
        output_buffer,
        fieldnames=[key for key, _, _ in OVERVIEW_COLUMNS],
        quoting=csv.QUOTE_NONNUMERIC,
    )
    writer.writeheader()
    writer.writerows(check_overview(checks))
    return output_buffer.getvalue()


# result serialization
def to_plain(value):
    """Round floats to 12 significant digits; NaN and infinities become None."""
    if isinstance(value, Mapping):
        return {str(key): to_plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{SIGNIFICANT_DIGITS}g}")
    return value


def to_json(payload: dict, config: dict, timestamp: bool = True) -> str:
    """Serialize a report with its resolved configuration and a timestamp."""
    document = {"config": config, **payload}
    if timestamp:
        document["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return json.dumps(to_plain(document), indent=2, allow_nan=False)


def _format(value) -> str:
    plain = to_plain(value)
    return "" if plain is None else str(plain)


def table_to_csv(rows: List[Dict]) -> str:
    """CSV of a list of flat dicts, columns in first-row order."""
    output_buffer = StringIO()
    if not rows:
        return ""
    writer = csv.DictWriter(output_buffer, fieldnames=list(rows[0]))
    writer.writeheader()
    for row in rows:
        writer.writerow({key: _format(value) for key, value in row.items()})
    return output_buffer.getvalue()


def write_trajectory_csv(trajectory: Trajectory, file):
    """Long format: t_index, x_index, t, x, value."""
    grid = trajectory.grid
    with open(file, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t_index", "x_index", "t", "x", "value"])
        for k, t in enumerate(grid.times):
            for j, x in enumerate(grid.x):
                writer.writerow(
                    [k, j, _format(t), _format(x), _format(trajectory.values[k, j])]
                )


def write_control_csv(control: ControlField, file):
    """The (t_index, x_index, value) format read by ``read_control_csv``."""
    with open(file, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t_index", "x_index", "value"])
        for (k, j), value in np.ndenumerate(control.values):
            writer.writerow([k, j, _format(value)])


def read_control_csv(file, grid: GridSpec) -> ControlField:
    """Read (t_index, x_index, value) rows; cells not listed are zero."""
    values = np.zeros((grid.n_t, grid.n_x))
    with open(file, newline="") as f:
        reader = csv.DictReader(f)
        missing = {"t_index", "x_index", "value"} - set(reader.fieldnames or ())
        if missing:
            raise DomainError(f"control file {file} lacks columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                k, j, value = int(row["t_index"]), int(row["x_index"]), float(row["value"])
            except ValueError:
                raise DomainError(f"{file}:{line}: cannot parse {row}")
            if not (0 <= k < grid.n_t and 0 <= j < grid.n_x):
                raise ShapeError(f"{file}:{line}: cell ({k}, {j}) outside the grid")
            values[k, j] = value
    return ControlField(grid, values)


def load_control(name: str, grid: GridSpec) -> ControlField:
    """A named built-in control or a CSV control file."""
    if name in CONTROL_PROFILES:
        return named_control(name, grid)
    return read_control_csv(name, grid)
