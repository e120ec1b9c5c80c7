"""Deterministic stand-in for the tour-and-travel churn table.

The generated table has the same columns, value vocabularies, size and
class balance as the public churn dataset (954 rows, about 24% churners),
with FrequentFlyer driven mostly by income class and churn so that its
association profile has a clear elbow. It has no missing cells; callers
inject missingness explicitly.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .dataset import ColumnKind, ColumnRole, ColumnSchema, Dataset, load_csv, load_schema

TRAVEL_ENV = "IMPUTE_FORGE_TRAVEL_CSV"
DATA_DIR = Path(__file__).resolve().parents[2] / "data"

TRAVEL_SCHEMA = (
    ColumnSchema("Age", ColumnKind.NUMERICAL, "the age of customer"),
    ColumnSchema("FrequentFlyer", ColumnKind.CATEGORICAL, "whether customer takes frequent flights"),
    ColumnSchema("AnnualIncomeClass", ColumnKind.CATEGORICAL, "class of annual income of user"),
    ColumnSchema("ServicesOpted", ColumnKind.NUMERICAL, "number of times services opted during recent years"),
    ColumnSchema("AccountSyncedToSocialMedia", ColumnKind.CATEGORICAL,
                 "whether company account of user synchronised to their social media"),
    ColumnSchema("BookedHotelOrNot", ColumnKind.CATEGORICAL, "whether customer booked hotels using company services"),
    ColumnSchema("Target", ColumnKind.CATEGORICAL,
                 "whether customer churns or doesnt churn for tour and travels company", ColumnRole.TARGET),
)

# display names used in the churn prompts
TRAVEL_GROUP_DISPLAYS = {"1": "Churn", "0": "Doesnt churn"}


def travel_like(n_rows: int = 954, churn_rate: float = 0.235, seed: int = 2024) -> Dataset:
    """Generate the churn-shaped table; identical output for identical arguments."""
    rng = np.random.default_rng(seed)
    n_pos = int(round(n_rows * churn_rate))
    target = np.array(["1"] * n_pos + ["0"] * (n_rows - n_pos), dtype=object)
    rng.shuffle(target)
    churn = target == "1"

    income = rng.choice(["Low Income", "Middle Income", "High Income"], size=n_rows, p=[0.42, 0.43, 0.15])
    # high earners fly more; churners slightly more
    p_fly = np.select([income == "High Income", income == "Middle Income"], [0.8, 0.2], 0.3)
    p_fly = np.clip(p_fly + 0.3 * churn, 0, 1)
    flyer = np.where(rng.random(n_rows) < p_fly, "Yes", "No").astype(object)

    age = rng.integers(27, 39, size=n_rows) + np.where(flyer == "Yes", rng.integers(0, 4, size=n_rows), 0)
    age = np.clip(age, 27, 38).astype(np.float64)
    services = rng.integers(1, 7, size=n_rows).astype(np.float64)
    synced = np.where(rng.random(n_rows) < 0.38 + 0.08 * churn, "Yes", "No").astype(object)
    hotel = np.where(rng.random(n_rows) < 0.40 - 0.12 * churn, "Yes", "No").astype(object)

    columns = (age, flyer, income.astype(object), services, synced, hotel, target)
    mask = np.zeros((n_rows, len(TRAVEL_SCHEMA)), dtype=bool)
    return Dataset(TRAVEL_SCHEMA, columns, mask, np.arange(n_rows), f"travel_like(seed={seed})")


def travel_csv_path() -> Path | None:
    """Location of the real churn CSV if one is available locally."""
    env = os.environ.get(TRAVEL_ENV)
    for candidate in ([Path(env)] if env else []) + [DATA_DIR / "travel" / "travel.csv"]:
        if candidate.is_file():
            return candidate
    return None


def load_travel(allow_synthetic: bool = True) -> Dataset:
    """The real churn table when present, else the synthetic stand-in."""
    path = travel_csv_path()
    if path is not None:
        return load_csv(path, load_schema(DATA_DIR / "travel" / "schema.json"))
    if not allow_synthetic:
        raise FileNotFoundError(f"churn CSV not found; set {TRAVEL_ENV} or place it at data/travel/travel.csv")
    return travel_like()
