"""Convert UCI bank-additional-full.csv (semicolon separated) into a seeded
2:1 train/test split of header CSVs plus a schema.

Usage: python scripts/prepare_bank.py path/to/bank-additional-full.csv data/bank [seed]
"""

import csv
import json
import sys
from pathlib import Path

import numpy as np

NUMERICAL = {
    "age", "duration", "campaign", "pdays", "previous", "emp.var.rate", "cons.price.idx",
    "cons.conf.idx", "euribor3m", "nr.employed",
}
LABEL = "y"


def main(src, out_dir, seed=0):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(src, newline="") as fh:
        reader = csv.reader(fh, delimiter=";")
        header = [h.strip() for h in next(reader)]
        rows = [r for r in reader if r]
    if LABEL not in header:
        raise SystemExit(f"{src}: no {LABEL!r} column")
    li = header.index(LABEL)
    features = [h for h in header if h != LABEL]
    out_rows = []
    for r in rows:
        label = {"yes": 1, "no": 0}[r[li].strip()]
        out_rows.append([r[i].strip() for i, h in enumerate(header) if h != LABEL] + [label])
    perm = np.random.default_rng(int(seed)).permutation(len(out_rows))
    n_test = len(out_rows) // 3
    parts = {"test.csv": perm[:n_test], "train.csv": perm[n_test:]}
    for name, idx in parts.items():
        with open(out_dir / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(features + [LABEL])
            w.writerows(out_rows[i] for i in sorted(idx))
    schema = {
        "fields": [{"name": h, "kind": "numerical" if h in NUMERICAL else "categorical"} for h in features],
        "label": LABEL,
    }
    (out_dir / "schema.json").write_text(json.dumps(schema, indent=2) + "\n")
    print(f"train={len(parts['train.csv'])} test={len(parts['test.csv'])}")


if __name__ == "__main__":
    main(*sys.argv[1:4])
