import csv
from pathlib import Path

import numpy as np
import pytest

from featcross.tabular import FeatureSchema, FieldDef, Kind, table_from_records

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"


@pytest.fixture
def tiny_schema():
    return FeatureSchema((FieldDef("age", Kind.NUMERICAL), FieldDef("job", Kind.CATEGORICAL)), "y")


@pytest.fixture
def mixed_table():
    """400 rows, two categorical and two numerical columns, with a few holes."""
    rng = np.random.default_rng(7)
    n = 400
    schema = FeatureSchema((
        FieldDef("color", Kind.CATEGORICAL),
        FieldDef("size", Kind.NUMERICAL),
        FieldDef("shape", Kind.CATEGORICAL),
        FieldDef("weight", Kind.NUMERICAL),
    ), "y")
    color = rng.choice(["red", "green", "blue"], n).tolist()
    shape = rng.choice(["box", "ball"], n).tolist()
    size = rng.normal(10, 3, n)
    weight = rng.gamma(2, 2, n)
    y = ((np.array(color) == "red") ^ (size > 10)).astype(int)
    y = np.where(rng.random(n) < 0.1, 1 - y, y)
    rows = [[c, s, sh, w] for c, s, sh, w in zip(color, size, shape, weight)]
    rows[3][0] = None
    rows[5][1] = None
    rows[8][3] = None
    return table_from_records(rows, schema, y)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


ACCEPTANCE = {}


@pytest.fixture
def verdict(request):
    """Record one summary line for an acceptance criterion; printed at the end of the run."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
