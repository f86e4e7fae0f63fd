"""Command-line front end.

    amafed run --config exp.yaml [--seed N] [--override key=value ...] [--output DIR]
    amafed partition --config exp.yaml [--output DIR]
    amafed compare A/result.json B/result.json [--output DIR]
    amafed report A/result.json

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from amafed.config import ConfigError, ExperimentConfig, apply_overrides, load_config
from amafed.dataio import DataError, partition_manifest
from amafed.federation import (
    ExperimentResult,
    compare_runs,
    load_data,
    prepare_clients,
    run_experiment,
)
from amafed.metrics import ecdf
from amafed.model import NumericError, TrainingError

logger = logging.getLogger("amafed")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on its own; raise instead so main() owns exit codes.
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = list(getattr(args, "override", None) or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "output", None):
        overrides.append(f"output.dir={json.dumps(args.output)}")
    return apply_overrides(cfg, overrides) if overrides else cfg


# --- run --------------------------------------------------------------------


def rounds_rows(result: ExperimentResult):
    for report in result.rounds:
        for c in report.clients:
            v = c.val_metrics
            yield [
                report.round, c.client_id, c.weight, c.f1, c.f2,
                v.accuracy, v.precision, v.recall, v.f1, v.fpr,
                c.fleet_metrics["f1"],
            ]


ROUNDS_HEADER = ["round", "client_id", "w", "f1", "f2", "acc", "prec", "rec",
                 "f1score", "fpr", "fleet_f1"]
WEIGHTS_HEADER = ["round", "client_id", "f1", "f2", "u", "w_init", "w_refined", "w_final"]


def weights_rows(result: ExperimentResult):
    for report in result.rounds:
        for c in report.clients:
            yield [report.round, c.client_id, c.f1, c.f2, c.u, c.w_init, c.w_refined, c.weight]


def write_run_outputs(result: ExperimentResult, out: Path, timing: bool = False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = result.to_dict(params_ref="params.json")
    write_atomic(out / "result.json", json.dumps(doc, indent=1) + "\n")
    write_atomic(out / "params.json", json.dumps(result.final_params.to_dict()))
    write_atomic(out / "rounds.csv", _csv_text(ROUNDS_HEADER, rounds_rows(result)))
    write_atomic(out / "weights.csv", _csv_text(WEIGHTS_HEADER, weights_rows(result)))
    last = result.rounds[-1]
    write_atomic(out / "ecdf.csv", _csv_text(["x", "fraction"], ecdf(last.fleet_f1)))
    write_atomic(
        out / "fleet.csv",
        _csv_text(["client_id", "f1"], [[c.client_id, c.fleet_metrics["f1"]] for c in last.clients]),
    )
    if timing:
        rows = [[r.round, r.wall_time] for r in result.rounds]
        write_atomic(out / "timing.csv", _csv_text(["round", "wall_time_s"], rows))


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    result = run_experiment(cfg, workers=args.workers)
    out = Path(cfg.output.dir)
    write_run_outputs(result, out, timing=args.timing)
    last = result.rounds[-1]
    print(
        f"{cfg.federation.mode}: {len(result.rounds)} rounds, final fleet mean F1 "
        f"{last.fleet['mean']:.4f} (min {last.fleet['min']:.4f}), "
        f"rounds to target {result.rounds_to_target or 'not reached'} -> {out}"
    )
    return EXIT_OK


# --- partition --------------------------------------------------------------


def cmd_partition(args) -> int:
    cfg = _resolve_config(args)
    clients, _ = prepare_clients(load_data(cfg), cfg)
    splits = [c.split for c in clients]
    out = Path(cfg.output.dir)
    write_atomic(out / "partition.json", json.dumps(partition_manifest(splits), indent=1) + "\n")
    names = list(splits[0].train.class_names)
    rows = []
    for s in splits:
        hist = s.train.class_histogram() + s.val.class_histogram()
        rows.append([s.client_id, len(s.train), len(s.val), *hist.tolist()])
    write_atomic(
        out / "partition_histogram.csv",
        _csv_text(["client_id", "n_train", "n_val", *names], rows),
    )
    print(f"{len(splits)} clients -> {out}")
    return EXIT_OK


# --- compare / report -------------------------------------------------------


def _read_result(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "rounds" not in doc or not doc["rounds"]:
        raise UsageError(f"{path} does not look like a result.json")
    return doc


def cmd_compare(args) -> int:
    a, b = _read_result(args.result_a), _read_result(args.result_b)
    try:
        table = compare_runs(a, b)
    except ValueError as exc:
        raise UsageError(f"cannot compare: {exc}") from exc
    out = Path(args.output or ".")
    header = list(table["rows"][0])
    write_atomic(out / "comparison.csv", _csv_text(header, [list(r.values()) for r in table["rows"]]))
    ecdf_rows = [["a", x, f] for x, f in table["ecdf_a"]]
    ecdf_rows += [["b", x, f] for x, f in table["ecdf_b"]]
    write_atomic(out / "comparison_ecdf.csv", _csv_text(["run", "x", "fraction"], ecdf_rows))
    final = table["rows"][-1]
    print(
        f"final round {final['round']}: mean F1 delta {final['delta_mean']:+.4f}, "
        f"worst-client delta {final['delta_min']:+.4f} -> {out}"
    )
    return EXIT_OK


def format_report(doc: dict) -> str:
    cfg = doc.get("config", {})
    fed = cfg.get("federation", {})
    lines = [
        f"mode {fed.get('mode', '?')}, seed {cfg.get('seed', '?')}, "
        f"{len(doc['rounds'])} rounds, rounds to target "
        f"{doc.get('rounds_to_target') or 'not reached'}",
        f"{'round':>5} {'mean F1':>8} {'min F1':>8} {'p5 F1':>8} {'global loss':>12}",
    ]
    for r in doc["rounds"]:
        f = r["fleet"]
        lines.append(
            f"{r['round']:>5} {f['mean']:>8.4f} {f['min']:>8.4f} {f['p5']:>8.4f} "
            f"{r['global_loss']:>12.4f}"
        )
    last = doc["rounds"][-1]
    lines.append(f"{'client':>6} {'weight':>8} {'fleet F1':>9}")
    for c in last["clients"]:
        lines.append(f"{c['client_id']:>6} {c['w_final']:>8.4f} {c['fleet_metrics']['f1']:>9.4f}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    print(format_report(_read_result(args.result)))
    return EXIT_OK


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="amafed", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-round progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def experiment_args(p):
        p.add_argument("--config", help="YAML experiment config (defaults if omitted)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="dotted config override, repeatable")
        p.add_argument("--output", help="output directory (overrides output.dir)")

    run = sub.add_parser("run", help="run a federated experiment")
    experiment_args(run)
    run.add_argument("--workers", type=int, default=1,
                     help="client threads per round; does not change results")
    run.add_argument("--timing", action="store_true", help="also write timing.csv")
    run.set_defaults(func=cmd_run)

    part = sub.add_parser("partition", help="write the client partition manifest")
    experiment_args(part)
    part.set_defaults(func=cmd_partition)

    cmp_ = sub.add_parser("compare", help="per-round deltas between two results")
    cmp_.add_argument("result_a")
    cmp_.add_argument("result_b")
    cmp_.add_argument("--output", help="directory for comparison CSVs (default: .)")
    cmp_.set_defaults(func=cmd_compare)

    rep = sub.add_parser("report", help="pretty-print a result.json")
    rep.add_argument("result")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "workers", 1) < 1:
        print("amafed: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"amafed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, TrainingError, NumericError, OSError, ValueError) as exc:
        print(f"amafed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
