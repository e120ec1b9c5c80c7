from pathlib import Path

import pytest

from impute_forge.dataset import (
    MissingnessSpec,
    inject_missingness,
    load_csv,
    load_schema,
)
from impute_forge.synthetic import travel_like

from .helpers import make_dataset

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def adult():
    return load_csv(DATA / "adult" / "adult.csv", load_schema(DATA / "adult" / "schema.json"))


@pytest.fixture(scope="session")
def travel():
    """Churn table with 60 missing FrequentFlyer cells per class."""
    from impute_forge.dataset import per_class_totals_to_counts

    d = travel_like()
    counts = per_class_totals_to_counts(d, "FrequentFlyer", {"0": 60, "1": 60})
    return inject_missingness(d, MissingnessSpec("FrequentFlyer", counts, seed=0))


@pytest.fixture
def tiny():
    return make_dataset(
        {
            "age": [25, 32, 47, 51, 38, 29, 60, 44],
            "flyer": ["Yes", "No", None, "Yes", "No", "Yes", None, "No"],
            "income": ["Low", "High", "High", "Low", "Low", "High", "Low", "High"],
            "y": ["1", "0", "0", "1", "0", "0", "1", "0"],
        },
        {"age": "numerical"},
        "y",
    )


@pytest.fixture(scope="session")
def adult_matrix(adult):
    from impute_forge.association import association_matrix

    return association_matrix(adult)


# -- acceptance summary ----------------------------------------------------------

ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
