"""Batch command-line interface.

Commands: ``select``, ``distmat``, ``gw``, ``eval``, ``synth``. Every JSON
report carries a ``config`` object holding the full effective parameter
set; passing that report back through ``--config`` repeats the run. Timing
and timestamps live under the report's ``run`` key, which is the only part
that differs between repeated runs.

Exit codes: 0 success, 2 invalid arguments, 3 data errors, 4 solver
non-convergence (outputs are still written and flagged), 1 anything else.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import datetime
import json
import logging
import os
import sys
import time
from pathlib import Path

import otfs
from otfs.dataset import Dataset, load_csv, make_planted, save_csv, synth_noise_features
from otfs.distmat import (
    OtConfig,
    class_distance_matrix,
    mean_scale,
    relative_change_matrix,
    write_matrix_csv,
)
from otfs.errors import DataError, InvalidArgumentError
from otfs.evaluation import accuracy_curve, gwd_accuracy_table
from otfs.gw_select import config_hash, gw_between, sample_rows
from otfs.ot_core import GwConfig, pairwise_distances
from otfs.select import SelectionConfig, select

EXIT_OK, EXIT_ERROR, EXIT_ARGS, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3, 4

log = logging.getLogger("otfs")


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _ArgumentError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, data_required: bool = True):
    g = p.add_argument_group("common")
    g.add_argument("--data", required=False, help="input CSV file")
    g.add_argument("--label", help="label column name or zero-based index")
    g.add_argument("--no-header", action="store_true", help="the CSV has no header row")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker cap")
    g.add_argument("--out-dir", default=".", help="directory for output files")
    g.add_argument("--config", help="flat key = value file, or JSON (a report's config works)")
    p.set_defaults(_data_required=data_required)


def _ot_args(p):
    g = p.add_argument_group("class distance matrices")
    g.add_argument("--mode", choices=("exact", "sliced"), default="exact")
    g.add_argument("--cap", type=int, default=256, help="per-class row cap for exact W1")
    g.add_argument("--n-projections", type=int, default=64)
    g.add_argument("--standardize", action="store_true", help="standardize columns first")


def _gw_args(p):
    g = p.add_argument_group("Gromov-Wasserstein")
    g.add_argument("--gw-p", type=float, default=GwConfig.p)
    g.add_argument("--gw-q", type=float, default=GwConfig.q)
    g.add_argument("--epsilon", type=float, default=GwConfig.epsilon)
    g.add_argument("--gw-tol", type=float, default=GwConfig.tol)
    g.add_argument("--max-outer-iter", type=int, default=GwConfig.max_outer_iter)
    g.add_argument("--max-sinkhorn-iter", type=int, default=GwConfig.max_sinkhorn_iter)
    g.add_argument("--no-normalize", action="store_true", help="keep raw metric scales")
    g.add_argument("--gw-cap", type=int, default=300, help="rows sampled for GW")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otfs", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"otfs {otfs.__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("select", help="select m features")
    _common(p)
    p.add_argument("--criterion", default="frobenius_supervised",
                   choices=("frobenius", "frobenius_supervised", "gw", "gw_unsupervised",
                            "two-stage", "two_stage", "variance_ratio"))
    p.add_argument("--strategy", default="greedy", choices=("rank", "greedy", "random_search"))
    p.add_argument("-m", type=int, required=False, default=None, help="subset size")
    p.add_argument("--n-trials", type=int, default=1000)
    p.add_argument("--lam", type=float, default=1.0, help="redundancy weight (two_stage)")
    _ot_args(p)
    _gw_args(p)

    p = sub.add_parser("distmat", help="class distance matrices")
    _common(p)
    p.add_argument("--features", default=None,
                   help="feature sets: ';' between sets, ',' within (indices or names); "
                        "default every single feature")
    p.add_argument("--scaled", action="store_true", help="also write mean-scaled matrices")
    p.add_argument("--relative-to", default=None, help="base set for relative-change matrices")
    _ot_args(p)

    p = sub.add_parser("gw", help="Gromov-Wasserstein criterion")
    _common(p)
    p.add_argument("--sets", default=None, help="sets compared to the full matrix; default all features")
    p.add_argument("--redundancy", default=None,
                   help="'SET@f' items separated by ';': redundancy of f within SET")
    p.add_argument("--floor", type=float, default=1e-9)
    _gw_args(p)

    p = sub.add_parser("eval", help="accuracy curves")
    _common(p)
    p.add_argument("--methods", default="frobenius_supervised/greedy",
                   help="comma-separated criterion[/strategy] items")
    p.add_argument("--sizes", default="1", help="'a,b,c' or 'start:stop:step' (stop inclusive)")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--n-trials", type=int, default=1000)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--gwd-subsets", default=None, help="also tabulate GWD vs accuracy for these sets")
    _ot_args(p)
    _gw_args(p)

    p = sub.add_parser("synth", help="synthetic planted or noise-augmented data")
    _common(p, data_required=False)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--delta", type=float, default=3.0)
    p.add_argument("--relevant", type=int, default=1)
    p.add_argument("--noise", type=int, default=9)
    p.add_argument("--duplicates", type=int, default=0)
    p.add_argument("--name", default="synth", help="output file stem")
    return parser


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def load_config(path) -> dict:
    """Flat ``key = value`` file or JSON object; a report's ``config`` is unwrapped."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such config file: {path}")
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except ValueError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
        if isinstance(data.get("config"), dict):
            data = data["config"]
    else:
        data = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidArgumentError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            data[key] = _parse_value(value)
    return {k.replace("-", "_"): v for k, v in data.items()}


def _parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = load_config(args.config)
        cfg.pop("config", None)
        command = cfg.pop("command", args.command)
        if command != args.command:
            raise InvalidArgumentError(f"config is for '{command}', not '{args.command}'")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {unknown}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    if args._data_required and not args.data:
        raise InvalidArgumentError("--data is required")
    if args.threads < 1:
        raise InvalidArgumentError("--threads must be at least 1")
    return args


def _echo(args) -> dict:
    """Effective configuration, loadable again through ``--config``."""
    skip = {"config", "_data_required"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


@contextlib.contextmanager
def _atomic(path: Path):
    """Write to ``path.partial`` and rename into place on success."""
    partial = path.with_name(path.name + ".partial")
    try:
        yield partial
    except BaseException:
        partial.unlink(missing_ok=True)
        raise
    os.replace(partial, path)


def _write_json(path: Path, obj) -> None:
    with _atomic(path) as tmp:
        tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load(args) -> Dataset:
    label = args.label
    if isinstance(label, str) and label.isdigit():
        label = int(label)
    ds = load_csv(args.data, has_header=not args.no_header, label_column=label)
    log.info("loaded %s: n=%d d=%d classes=%d", args.data, ds.n, ds.d, ds.n_classes)
    return ds


def _feature(ds: Dataset, token: str) -> int:
    token = token.strip()
    if token in ds.feature_names:
        return ds.feature_names.index(token)
    try:
        j = int(token)
    except ValueError:
        raise InvalidArgumentError(f"unknown feature {token!r}") from None
    if not 0 <= j < ds.d:
        raise InvalidArgumentError(f"feature index {j} out of range [0, {ds.d})")
    return j


def parse_sets(ds: Dataset, text: str) -> list[list[int]]:
    sets = []
    for item in str(text).split(";"):
        if not item.strip():
            continue
        feats = [_feature(ds, t) for t in item.split(",")]
        if len(set(feats)) != len(feats):
            raise InvalidArgumentError(f"repeated feature in set {item!r}")
        sets.append(feats)
    if not sets:
        raise InvalidArgumentError(f"no feature sets in {text!r}")
    return sets


def parse_sizes(text: str) -> list[int]:
    text = str(text)
    try:
        if ":" in text:
            parts = [int(s) for s in text.split(":")]
            if len(parts) != 3 or parts[2] < 1:
                raise InvalidArgumentError(f"sizes range must be start:stop:step, got {text!r}")
            sizes = list(range(parts[0], parts[1] + 1, parts[2]))
        else:
            sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InvalidArgumentError(f"bad sizes {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise InvalidArgumentError(f"sizes must be positive integers, got {text!r}")
    return sizes


def _ot_config(args) -> OtConfig:
    return OtConfig(args.mode, args.cap, args.n_projections, args.seed, args.standardize)


def _gw_config(args) -> GwConfig:
    return GwConfig(
        p=args.gw_p,
        q=args.gw_q,
        epsilon=args.epsilon,
        max_outer_iter=args.max_outer_iter,
        max_sinkhorn_iter=args.max_sinkhorn_iter,
        tol=args.gw_tol,
        normalize_metrics=not args.no_normalize,
        seed=args.seed,
    )


def _selection_config(args, criterion, strategy, m) -> SelectionConfig:
    return SelectionConfig(
        criterion=criterion,
        m=m,
        strategy=strategy,
        n_trials=args.n_trials,
        lam=args.lam,
        seed=args.seed,
        standardize=args.standardize,
        ot=_ot_config(args),
        gw=_gw_config(args),
        gw_cap=args.gw_cap,
        n_jobs=args.threads,
    )


def _report(args, result: dict, started: float, converged: bool = True) -> dict:
    return {
        "command": args.command,
        "version": otfs.__version__,
        "config": _echo(args),
        "converged": converged,
        "result": result,
        "run": {
            "wall_time_s": time.perf_counter() - started,
            "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
    }


def _set_label(feats) -> str:
    return "-".join(str(j) for j in feats)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_select(args, out: Path) -> int:
    started = time.perf_counter()
    if args.m is None:
        raise InvalidArgumentError("-m is required")
    ds = _load(args)
    strategy = args.strategy
    cfg = _selection_config(args, args.criterion, strategy, args.m)
    res = select(ds, cfg)
    log.info("selected %s", list(res.chosen))
    payload = res.to_dict()
    payload["selection"] = payload.pop("config")
    _write_json(out / "select_report.json", _report(args, payload, started, res.converged))
    return EXIT_OK if res.converged else EXIT_CONVERGENCE


def cmd_distmat(args, out: Path) -> int:
    started = time.perf_counter()
    ds = _load(args)
    sets = parse_sets(ds, args.features) if args.features else [[j] for j in range(ds.d)]
    cfg = _ot_config(args)
    base = None
    if args.relative_to:
        (base_set,) = parse_sets(ds, args.relative_to)[:1] or [None]
        base = class_distance_matrix(ds, base_set, cfg)
    records = []
    for T in sets:
        M = class_distance_matrix(ds, T, cfg)
        label = _set_label(T)
        files = {"raw": f"distmat_{label}.csv"}
        with _atomic(out / files["raw"]) as tmp:
            write_matrix_csv(M.D, M.class_names, tmp)
        record = M.to_dict()
        record["feature_names"] = [ds.feature_names[j] for j in T]
        if args.scaled:
            S = mean_scale(M)
            files["scaled"] = f"distmat_{label}_scaled.csv"
            with _atomic(out / files["scaled"]) as tmp:
                write_matrix_csv(S.D, S.class_names, tmp)
            record["scaled_entries"] = S.D.tolist()
        if base is not None:
            R = relative_change_matrix(base, M)
            files["relative"] = f"relchange_{label}_vs_{_set_label(base.feature_set)}.csv"
            with _atomic(out / files["relative"]) as tmp:
                write_matrix_csv(R, M.class_names, tmp)
            record["relative_change"] = R.tolist()
        record["files"] = files
        records.append(record)
        log.info("matrix for %s written", T)
    _write_json(out / "distmat_report.json", _report(args, {"matrices": records}, started))
    return EXIT_OK


def _parse_redundancy(ds, text) -> list[tuple[list[int], int]]:
    items = []
    for item in str(text).split(";"):
        if not item.strip():
            continue
        if "@" not in item:
            raise InvalidArgumentError(f"redundancy item {item!r} must look like 'SET@feature'")
        left, right = item.split("@", 1)
        (T,) = parse_sets(ds, left)
        f = _feature(ds, right)
        if f not in T:
            raise InvalidArgumentError(f"feature {f} is not in {T}")
        if len(T) < 2:
            raise InvalidArgumentError(f"redundancy needs a set of at least two features, got {T}")
        items.append((T, f))
    return items


def cmd_gw(args, out: Path) -> int:
    started = time.perf_counter()
    ds = _load(args)
    cfg = _gw_config(args)
    sets = parse_sets(ds, args.sets) if args.sets else [list(range(ds.d))]
    redundancy = _parse_redundancy(ds, args.redundancy) if args.redundancy else []
    if not args.floor > 0:
        raise InvalidArgumentError("--floor must be positive")
    rows = sample_rows(ds, args.gw_cap, cfg.seed)
    full = pairwise_distances(ds.X[rows])
    records = []
    for T in sets:
        r = gw_between(ds, T, None, cfg, args.gw_cap, rows, full)
        records.append({"kind": "gw_to_full", **r.to_dict()})
        log.info("gw %s -> full: %.6g", T, r.gwd)
    for T, f in redundancy:
        rest = [j for j in T if j != f]
        r = gw_between(ds, rest, T, cfg, args.gw_cap, rows)
        rec = {"kind": "redundancy", "feature": f, **r.to_dict()}
        rec["redundancy"] = 1.0 / max(r.gwd, args.floor)
        records.append(rec)
        log.info("redundancy of %d in %s: %.6g", f, T, rec["redundancy"])
    converged = all(r["converged"] for r in records)
    with _atomic(out / "gw.jsonl") as tmp:
        with tmp.open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    result = {"records": len(records), "config_hash": config_hash(cfg), "gw_config": cfg.to_dict()}
    _write_json(out / "gw_report.json", _report(args, result, started, converged))
    return EXIT_OK if converged else EXIT_CONVERGENCE


def _parse_methods(args) -> list[tuple[str, SelectionConfig]]:
    methods = []
    for item in str(args.methods).split(","):
        item = item.strip()
        if not item:
            continue
        criterion, _, strategy = item.partition("/")
        if not strategy:
            strategy = "rank" if criterion == "variance_ratio" else "greedy"
        methods.append((item, _selection_config(args, criterion, strategy, 1)))
    if not methods:
        raise InvalidArgumentError("no methods given")
    return methods


def cmd_eval(args, out: Path) -> int:
    started = time.perf_counter()
    methods = _parse_methods(args)
    sizes = parse_sizes(args.sizes)
    ds = _load(args)
    curve = accuracy_curve(
        ds,
        [m for _, m in methods],
        sizes,
        n_repeats=args.repeats,
        k=args.k,
        seed=args.seed,
        train_fraction=args.train_fraction,
        names=[name for name, _ in methods],
    )
    converged = curve.converged
    with _atomic(out / "curve.csv") as tmp:
        with tmp.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "size", "repeat", "accuracy"])
            for m, size, r, acc in curve.long_rows():
                w.writerow([m, size, r, format(acc, ".17g")])
    result = {"summary": curve.summary(), "seeds": curve.seeds, "n_repeats": curve.n_repeats}
    if args.gwd_subsets:
        table = gwd_accuracy_table(
            ds, parse_sets(ds, args.gwd_subsets), _gw_config(args), args.k, args.seed,
            args.gw_cap, train_fraction=args.train_fraction,
        )
        converged &= table.converged
        with _atomic(out / "gwd_table.csv") as tmp:
            with tmp.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["subset", "gwd", "accuracy", "inv_gwd"])
                for row in table.rows:
                    w.writerow([_set_label(row["subset"])] + [format(row[c], ".17g") for c in ("gwd", "accuracy", "inv_gwd")])
        result["gwd_table"] = {"rows": table.rows, "spearman": table.spearman}
    _write_json(out / "eval_summary.json", _report(args, result, started, converged))
    return EXIT_OK if converged else EXIT_CONVERGENCE


def cmd_synth(args, out: Path) -> int:
    started = time.perf_counter()
    if args.data:
        ds = _load(args)
        if args.noise < 1:
            raise InvalidArgumentError("--noise must be at least 1 when augmenting --data")
        ds = synth_noise_features(ds, args.noise, args.seed)
        manifest = {"generator": "noise_augmented", "source": str(args.data), "count": args.noise, "seed": args.seed}
    else:
        if args.n < 1 or args.classes < 1 or args.delta < 0:
            raise InvalidArgumentError("need n >= 1, classes >= 1 and delta >= 0")
        ds, m = make_planted(
            n=args.n,
            n_classes=args.classes,
            delta=args.delta,
            n_relevant=args.relevant,
            n_noise=args.noise,
            n_duplicates=args.duplicates,
            seed=args.seed,
        )
        manifest = m.to_dict()
    manifest["feature_names"] = list(ds.feature_names)
    csv_path = out / f"{args.name}.csv"
    with _atomic(csv_path) as tmp:
        save_csv(ds, tmp)
    manifest["file"] = csv_path.name
    _write_json(out / f"{args.name}_manifest.json", _report(args, manifest, started))
    log.info("wrote %s (n=%d d=%d)", csv_path, ds.n, ds.d)
    return EXIT_OK


COMMANDS = {
    "select": cmd_select,
    "distmat": cmd_distmat,
    "gw": cmd_gw,
    "eval": cmd_eval,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="otfs: %(message)s", stream=sys.stderr)
    try:
        args = _parse(argv)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out)
    except SystemExit as exc:  # --help, --version
        return int(exc.code or 0)
    except _ArgumentError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ARGS
    except InvalidArgumentError as exc:
        print(f"otfs: invalid argument: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except DataError as exc:
        print(f"otfs: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"otfs: unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
