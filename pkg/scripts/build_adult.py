"""Rebuild data/adult/adult.csv from the UCI adult.data and adult.test files.

The output matches the widely mirrored 48,842-row "adult.csv": train and
test concatenated, cells trimmed, the trailing "." removed from test labels,
and "?" kept as the missing marker.

Usage: python scripts/build_adult.py ADULT_DATA ADULT_TEST [OUT]

Both inputs are also shipped inside the ``responsibly`` wheel on PyPI
(``responsibly/dataset/adult/adult.data`` and ``adult.test``).
"""

import csv
import sys
from pathlib import Path

HEADER = ["age", "workclass", "fnlwgt", "education", "educational-num", "marital-status",
          "occupation", "relationship", "race", "gender", "capital-gain", "capital-loss",
          "hours-per-week", "native-country", "income"]


def read_uci(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(HEADER):
                continue
            cells[-1] = cells[-1].rstrip(".")
            rows.append(cells)
    return rows


def main(argv):
    if len(argv) < 2:
        sys.exit(__doc__)
    out = Path(argv[2]) if len(argv) > 2 else Path(__file__).resolve().parents[1] / "data/adult/adult.csv"
    rows = read_uci(argv[0]) + read_uci(argv[1])
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main(sys.argv[1:])
