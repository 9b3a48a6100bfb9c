"""``featcross`` command line.

Exit codes: 0 success (any labelled search stop counts), 2 config or schema
problems, 3 I/O problems (unreadable input, unwritable output, corrupt model).
"""

import argparse
import csv
import json
import logging
import os
import signal
import sys

from . import producer
from .cin import MODES, run_experiments
from .config import RunConfig
from .estimator import CrossFeatureClassifier, prepare, tune_base
from .exceptions import ArtifactError, ConfigError, DegenerateColumn, FeatcrossError, NonBinaryLabel, SchemaError
from .lr import evaluate
from .tabular import FeatureSchema, load_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

log = logging.getLogger("featcross")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _read_schema(path):
    try:
        return FeatureSchema.from_json(path)
    except OSError as exc:
        raise CliError(f"cannot read schema {path}: {exc.strerror or exc}", EXIT_CONFIG) from None


def _read_config(path):
    if path is None:
        return RunConfig()
    try:
        return RunConfig.from_json(path)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror or exc}", EXIT_CONFIG) from None


def _load_model(path):
    try:
        return producer.load(path)
    except OSError as exc:
        raise CliError(f"cannot read model {path}: {exc.strerror or exc}", EXIT_IO) from None
    except ArtifactError as exc:
        raise CliError(f"{path}: {exc}", EXIT_IO) from None


def _load_table(path, schema, require_label):
    try:
        return load_csv(path, schema, require_label=require_label)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None


class _NDJSON:
    def __init__(self, path):
        self.fh = open(path, "w", encoding="utf-8") if path else None

    def write(self, record):
        if self.fh is not None:
            self.fh.write(json.dumps(record, sort_keys=True) + "\n")
            self.fh.flush()

    def close(self):
        if self.fh is not None:
            self.fh.close()


def cmd_fit(args):
    schema = _read_schema(args.schema)
    cfg = _read_config(args.config)
    table = _load_table(args.train, schema, True)
    try:
        logfile = _NDJSON(args.log)
    except OSError as exc:
        raise CliError(f"cannot open log {args.log}: {exc.strerror or exc}", EXIT_IO) from None

    def progress(rec):
        logfile.write({"event": "iteration", **rec.to_dict()})

    est = CrossFeatureClassifier.from_config(cfg, workers=args.workers, progress=progress)
    interrupts = []

    def on_sigint(signum, frame):
        if interrupts:
            raise KeyboardInterrupt
        interrupts.append(signum)
        log.warning("interrupt received; finishing with the last adopted solution")
        est.interrupt()

    previous = signal.signal(signal.SIGINT, on_sigint)
    try:
        est.fit(table)
    finally:
        signal.signal(signal.SIGINT, previous)
    meta = est.artifact_.metadata
    logfile.write({"event": "stop", "stop_reason": meta["stop_reason"], "base_auc": meta["base_auc"],
                   "solution_auc": meta["solution_auc"], "crosses": meta["crosses"],
                   "hyper": meta["hyper"]})
    logfile.close()
    try:
        producer.save(est.artifact_, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc.strerror or exc}", EXIT_IO) from None
    print(json.dumps({"stop_reason": meta["stop_reason"], "base_auc": meta["base_auc"],
                      "solution_auc": meta["solution_auc"], "crosses": meta["crosses"]}))
    return EXIT_OK


def cmd_transform(args):
    art = _load_model(args.model)
    table = _load_table(args.input, art.schema, False)
    codes = art.encode(table)
    names = art.metadata.get("base_fields")
    header = [c.name(names) if names else "+".join(map(str, c.constituents)) for c in art.feature_set.members]
    with _open_out(args.output) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(codes.tolist())
    return EXIT_OK


def cmd_predict(args):
    art = _load_model(args.model)
    try:
        producer.score_csv(art, args.input, args.output)
    except OSError as exc:
        raise CliError(f"{exc.filename}: {exc.strerror or exc}", EXIT_IO) from None
    return EXIT_OK


def cmd_eval(args):
    art = _load_model(args.model)
    table = _load_table(args.input, art.schema, True)
    metric = evaluate(art.model, art.encode(table), table.labels)
    print(json.dumps({"rows": table.n_rows, "auc": metric.auc, "logloss": metric.logloss,
                      "degenerate_labels": bool(metric.degenerate_labels)}))
    return EXIT_OK


def cmd_tune(args):
    schema = _read_schema(args.schema)
    cfg = _read_config(args.config)
    table = _load_table(args.train, schema, True)
    prep = prepare(table, cfg)
    best, scores = tune_base(prep, cfg, args.workers)
    doc = {"best": best.to_dict(), "grid": [{**h.to_dict(), "auc": a} for h, a in scores]}
    if args.output:
        with _open_out(args.output) as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
    print(json.dumps({"best": doc["best"], "auc": max(a for _, a in scores)}))
    return EXIT_OK


def cmd_cin_check(args):
    rows = run_experiments(args.d_rows, args.m, args.n, args.modes, range(args.seed, args.seed + args.seeds),
                           args.restarts)
    out = sys.stdout
    out.write("mode\tD\tm\tn\tseed\tresidual\tcertificate\n")
    for mode, d, m, n, seed, res, cert in rows:
        out.write(f"{mode}\t{d}\t{m}\t{n}\t{seed}\t{res:.6e}\t{json.dumps(cert, sort_keys=True)}\n")
    return EXIT_OK


def cmd_bench(args):
    art = _load_model(args.model)
    table = _load_table(args.input, art.schema, False)
    rows = table.rows()
    if args.rows:
        rows = (rows * (args.rows // max(1, len(rows)) + 1))[:args.rows]
    try:
        report = producer.bench_latency(producer.Producer(art), rows, args.repetitions)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    print(json.dumps(report.to_dict()))
    return EXIT_OK


class _open_out:
    def __init__(self, path):
        self.path = path

    def __enter__(self):
        try:
            self.fh = open(self.path, "w", newline="", encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot write {self.path}: {exc.strerror or exc}", EXIT_IO) from None
        return self.fh

    def __exit__(self, *exc):
        self.fh.close()


def build_parser():
    p = argparse.ArgumentParser(prog="featcross", description="Learn cross features for logistic regression.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def workers(sp):
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker threads for candidate training and tuning (default: logical cores)")

    f = sub.add_parser("fit", help="learn cross features and write a model artifact")
    f.add_argument("--train", required=True, help="training CSV with header and label column")
    f.add_argument("--schema", required=True, help="schema JSON {fields:[{name,kind}], label}")
    f.add_argument("--config", help="run configuration JSON")
    f.add_argument("--out", required=True, help="artifact path to write")
    f.add_argument("--log", help="NDJSON progress log path")
    workers(f)
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("transform", help="write per-row bucket ids as integer CSV")
    t.add_argument("--model", required=True)
    t.add_argument("--input", required=True)
    t.add_argument("--output", required=True)
    t.set_defaults(func=cmd_transform)

    pr = sub.add_parser("predict", help="write one probability per input row")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", required=True)
    pr.add_argument("--output", required=True)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="print AUC and logloss on a labelled CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--input", required=True)
    e.set_defaults(func=cmd_eval)

    tu = sub.add_parser("tune", help="grid-tune LR hyper-parameters on the base fields")
    tu.add_argument("--train", required=True)
    tu.add_argument("--schema", required=True)
    tu.add_argument("--config")
    tu.add_argument("--output", help="write every grid point and its AUC as JSON")
    workers(tu)
    tu.set_defaults(func=cmd_tune)

    c = sub.add_parser("cin-check", help="ALS residuals for representable vs adversarial C (TSV)")
    c.add_argument("--d-rows", type=int, default=4)
    c.add_argument("--m", type=int, default=3)
    c.add_argument("--n", type=int, default=3)
    c.add_argument("--modes", nargs="+", choices=MODES, default=["representable", "adversarial"])
    c.add_argument("--seeds", type=int, default=1, help="number of seeds per mode")
    c.add_argument("--seed", type=int, default=0, help="first seed")
    c.add_argument("--restarts", type=int, default=20)
    c.set_defaults(func=cmd_cin_check)

    b = sub.add_parser("bench-latency", help="per-row transform+predict latency percentiles")
    b.add_argument("--model", required=True)
    b.add_argument("--input", required=True, help="CSV of raw rows (label column optional)")
    b.add_argument("--rows", type=int, default=0, help="cycle the input up to this many rows")
    b.add_argument("--repetitions", type=int, default=1)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"featcross: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, SchemaError, NonBinaryLabel, DegenerateColumn) as exc:
        print(f"featcross: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArtifactError as exc:
        print(f"featcross: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"featcross: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FeatcrossError, ValueError) as exc:
        print(f"featcross: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
