"""Convert the UCI Adult files (adult.data / adult.test) into header CSVs plus a schema.

Usage: python scripts/prepare_adult.py data/adult/raw data/adult
"""

import csv
import json
import sys
from pathlib import Path

COLUMNS = [
    ("age", "numerical"),
    ("workclass", "categorical"),
    ("fnlwgt", "numerical"),
    ("education", "categorical"),
    ("education-num", "numerical"),
    ("marital-status", "categorical"),
    ("occupation", "categorical"),
    ("relationship", "categorical"),
    ("race", "categorical"),
    ("sex", "categorical"),
    ("capital-gain", "numerical"),
    ("capital-loss", "numerical"),
    ("hours-per-week", "numerical"),
    ("native-country", "categorical"),
]
LABEL = "income"


def convert(src, dst):
    with open(src) as fin, open(dst, "w", newline="") as fout:
        out = csv.writer(fout)
        out.writerow([c for c, _ in COLUMNS] + [LABEL])
        n = 0
        for line in fin:
            cells = [c.strip() for c in line.strip().split(",")]
            if len(cells) != len(COLUMNS) + 1:
                continue  # blank lines and the "|1x3 Cross validator" banner
            values = ["" if c == "?" else c for c in cells[:-1]]
            out.writerow(values + [1 if cells[-1].rstrip(".") == ">50K" else 0])
            n += 1
    return n


def main(raw_dir, out_dir):
    raw_dir, out_dir = Path(raw_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_train = convert(raw_dir / "adult.data", out_dir / "train.csv")
    n_test = convert(raw_dir / "adult.test", out_dir / "test.csv")
    schema = {"fields": [{"name": c, "kind": k} for c, k in COLUMNS], "label": LABEL}
    (out_dir / "schema.json").write_text(json.dumps(schema, indent=2) + "\n")
    print(f"train={n_train} test={n_test}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
