"""Command-line entry point: ``lshmem {ingest,validate,train,rerun}``.

Every run writes ``manifest.json`` into its output directory, on success and
on failure. The manifest holds the fully resolved configuration, so
``lshmem rerun manifest.json --out other/`` repeats the run exactly.

Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .allocation import BudgetError
from .model import SCHEMES, ConfigError, ModelConfig, save_checkpoint, train, write_log
from .semantics import (
    DatasetFormatError,
    OccurrenceIndex,
    SubsampleSpec,
    ValueRegistry,
    read_table,
    subsample,
)
from .synthetic import PlantedCtrSpec, planted_splits
from . import verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
DEFAULT_TRIALS = {"1": 10_000, "2": 10_000, "bands": 10_000, "3": 500}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(float(t)) for t in str(text).split(",") if t.strip()]


def _as_list(value, conv):
    return conv(value) if isinstance(value, str) else list(value)


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    table = read_table(args.data)
    index = OccurrenceIndex.from_table(table)
    n = table.n_rows
    if args.n_samples_explicit and args.n_samples > n:
        raise UsageError(f"--n-samples {args.n_samples} exceeds the {n} rows of {args.data}")
    n_s = min(n, args.n_samples)
    sub = subsample(index, SubsampleSpec(n_s, args.seed)) if n_s < n else index
    features = table.registry.feature_of()
    cardinality = np.bincount(features, minlength=table.cats.shape[1]).tolist() if len(features) else []
    summary = {
        "rows": n,
        "values": table.n_values,
        "n_samples": n_s,
        "feature_cardinalities": cardinality,
        "nonzeros": sub.nnz,
    }
    os.makedirs(args.out, exist_ok=True)
    index_path = os.path.join(args.out, "index.jsonl")
    summary_path = os.path.join(args.out, "summary.json")
    sub.to_jsonl(index_path)
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    args._artifacts += [index_path, summary_path]
    print(f"rows={n} values={table.n_values} n_samples={n_s} nonzeros={sub.nnz}")
    print("per-feature cardinality:", " ".join(str(c) for c in cardinality))
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def _grid(args):
    points, bad = [], []
    for n_h in args.n_h:
        for d in args.d:
            for phi in args.phi:
                p = verify.GridPoint(phi, d, args.m, n_h)
                try:
                    p.snap()
                    points.append(p)
                except verify.UnrealizableError as exc:
                    bad.append(str(exc))
    return points, bad


def _write_reports(args, name, records, rows, meta):
    os.makedirs(args.out, exist_ok=True)
    jpath = os.path.join(args.out, f"{name}.json")
    cpath = os.path.join(args.out, f"{name}.csv")
    verify.write_json(jpath, name, records, meta)
    verify.write_csv(cpath, rows)
    args._artifacts += [jpath, cpath]


def cmd_validate(args) -> int:
    if args.theorem == "3":
        return _validate3(args)
    points, bad = _grid(args)
    for msg in bad:
        print("unrealizable:", msg)
    samples = verify.simulate_grid(points, args.trials, args.seed, args.threads)
    if args.theorem in ("1", "2"):
        make = verify.theorem1_report if args.theorem == "1" else verify.theorem2_report
        reports = [make(s) for s in samples]
        _write_reports(args, f"theorem{args.theorem}", [r.to_dict() for r in reports],
                       [r.to_row() for r in reports], {"unrealizable": bad, "seed": args.seed})
        for r in reports:
            p = r.point
            print(f"phi={p['phi']:<5} d={p['d']:<4} n_h={p['n_h']} mean={r.empirical_mean:.5f} "
                  f"gamma={r.analytic_mean:.5f} var_ratio={r.empirical_var / r.analytic_var if r.analytic_var else float('nan'):.3f} "
                  f"{r.status}")
        ok = all(r.passed for r in reports)
    else:
        rows = [verify.band_row(s) for s in samples]
        ratios = verify.width_ratios(rows)
        monotone = _bands_monotone(rows)
        _write_reports(args, "bands", rows, rows,
                       {"unrealizable": bad, "seed": args.seed, "ratios": ratios, "monotone": monotone})
        for r in ratios:
            print(f"n_h={r['n_h']} phi={r['phi']:<5} d={r['d']:<4} f_ratio={r['f_ratio']:.3f} cs_ratio={r['cs_ratio']:.3f}")
        print("band width decreasing in d at every phi:", monotone)
        ok = monotone
    ok = ok and not bad
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def _bands_monotone(rows) -> bool:
    series: dict[tuple, list] = {}
    for r in sorted(rows, key=lambda r: (r["n_h"], r["phi"], r["d"])):
        series.setdefault((r["n_h"], r["phi"]), []).append((r["f_width"], r["cs_width"]))
    return all(
        all(a[0] > b[0] and a[1] > b[1] for a, b in zip(s, s[1:])) for s in series.values()
    )


def _validate3(args) -> int:
    reports, scaling = [], []
    for n_s in args.n_s:
        ratio, r1, r2 = verify.variance_scaling(args.J, args.s, args.n, n_s, args.epsilon, args.trials, args.seed)
        reports += [r1, r2]
        scaling.append({"n_s": n_s, "ratio": ratio, "ok": bool(1.6 <= ratio <= 2.4)})
    meta = {"seed": args.seed, "scaling": scaling}
    _write_reports(args, "theorem3", [r.to_dict() for r in reports], [r.to_row() for r in reports], meta)
    for r in reports:
        p = r.point
        print(f"n_s={p['n_s']:<6} mean={r.empirical_mean:.5f} J={r.analytic_mean:.5f} var={r.empirical_var:.3e} "
              f"fail={r.tails[0]['empirical']:.3f} delta={r.tails[0]['bound']:.3f} {r.status}")
    for s in scaling:
        print(f"var(n_s={s['n_s']}) / var(2 n_s) = {s['ratio']:.3f}")
    ok = all(r.passed for r in reports) and all(s["ok"] for s in scaling)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _schemes(args) -> list[str]:
    names = _as_list(args.compare, lambda t: [s.strip() for s in t.split(",") if s.strip()]) if args.compare else [args.scheme]
    for s in names:
        if s not in SCHEMES:
            raise UsageError(f"unknown scheme {s!r}; choose from {', '.join(SCHEMES)}")
    return names


def _align(index: OccurrenceIndex, registry: ValueRegistry) -> OccurrenceIndex:
    if registry.keys[: index.n_values] != index.registry.keys:
        raise UsageError("--index was built from a different dataset")
    pad = len(registry) - index.n_values
    offsets = np.concatenate([index.offsets, np.full(pad, index.offsets[-1], dtype=np.int64)])
    return OccurrenceIndex(offsets, index.ids, index.n_rows, registry)


def _load_data(args):
    if args.synthetic:
        spec = PlantedCtrSpec(
            n_rows=args.n_rows, n_values=args.n_values, n_clusters=args.n_clusters, seed=args.seed
        )
        train_t, test_t = planted_splits(spec, args.n_test)
        return train_t, test_t, None
    if not args.train or not args.test:
        raise UsageError("give --synthetic or both --train and --test")
    train_t = read_table(args.train)
    test_t = read_table(args.test, registry=train_t.registry)
    index = None
    if args.index:
        index = _align(OccurrenceIndex.from_jsonl(args.index), train_t.registry)
    return train_t, test_t, index


def _config(args, scheme: str) -> ModelConfig:
    budget = {} if scheme == "full" else ({"m": args.m} if args.m is not None else {"alpha": args.alpha})
    return ModelConfig(
        scheme=scheme, d=args.d, n_h=args.n_h, tau=args.tau, n_samples=args.n_samples,
        bottom=tuple(_as_list(args.bottom, _ints)), top=tuple(_as_list(args.top, _ints)),
        lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, seed=args.seed, **budget,
    )


def cmd_train(args) -> int:
    schemes = _schemes(args)
    if args.m is not None and args.alpha is not None:
        raise UsageError("--m and --alpha are mutually exclusive")
    if not args.compare and args.scheme == "full" and (args.m is not None or args.alpha is not None):
        raise UsageError("--scheme full takes no budget (--alpha/--m)")
    configs = {s: _config(args, s) for s in schemes}
    train_t, test_t, index = _load_data(args)
    if index is None and "lma" in schemes:
        index = OccurrenceIndex.from_table(train_t)
    os.makedirs(args.out, exist_ok=True)
    final = {}
    for name, cfg in configs.items():
        res = train(cfg, train_t, test_t, index=index, timing=args.timing)
        log_path = os.path.join(args.out, f"metrics_{name}.jsonl")
        write_log(res.log, log_path)
        ckpt = save_checkpoint(res.model, cfg, os.path.join(args.out, f"checkpoint_{name}"))
        args._artifacts += [log_path, *ckpt.values()]
        final[name] = {**res.log[-1], "config": asdict(cfg)}
        last = res.log[-1]
        auc = "n/a" if last["auc"] is None else f"{last['auc']:.4f}"
        print(f"{name:<5} auc={auc} loss={last['loss']:.4f} acc={last['accuracy']:.4f} "
              f"params_memory={last['params_memory']} params_total={last['params_total']}")
    if len(configs) > 1:
        path = os.path.join(args.out, "comparison.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(final, fh, sort_keys=True, indent=1)
            fh.write("\n")
        args._artifacts.append(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# rerun
# ---------------------------------------------------------------------------


def cmd_rerun(args) -> int:
    """Run the manifest's command again; the new run writes its own manifest under ``--out``."""
    try:
        with open(args.manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, ValueError) as exc:
        print(f"lshmem: cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_IO
    config = dict(manifest["config"])
    config["out"] = args.out
    config["threads"] = args.threads if args.threads is not None else config.get("threads", 1)
    inner = argparse.Namespace(**config)
    if inner.command not in COMMANDS or inner.command == "rerun":
        print(f"lshmem: manifest holds an unknown command {inner.command!r}", file=sys.stderr)
        return EXIT_USAGE
    inner.func = COMMANDS[inner.command]
    return run(inner)


COMMANDS = {"ingest": cmd_ingest, "validate": cmd_validate, "train": cmd_train, "rerun": cmd_rerun}


# ---------------------------------------------------------------------------
# parser and driver
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, out_default: str) -> None:
    p.add_argument("--seed", type=int, default=42, help="master seed for all randomness")
    p.add_argument("--threads", type=int, default=1, help="worker cap; 1 is bitwise reproducible")
    p.add_argument("--config", help="JSON file setting any flag; command-line flags win")
    p.add_argument("--out", default=out_default, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lshmem", description="LSH-based embedding memory allocation")
    parser.add_argument("--version", action="version", version=f"lshmem {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build the occurrence index of a dataset")
    p.add_argument("data")
    p.add_argument("--n-samples", type=int, default=None,
                   help="rows kept in the subsample (default 125000, capped at the row count)")
    _common(p, "lshmem-ingest")

    p = sub.add_parser("validate", help="Monte Carlo checks of the theorems")
    p.add_argument("theorem", choices=["1", "2", "3", "bands"])
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--phi", type=_floats, default=[0.1, 0.3, 0.5, 0.7, 0.9])
    p.add_argument("--d", type=_ints, default=[16, 64, 256])
    p.add_argument("--m", type=int, default=10**6)
    p.add_argument("--n-h", type=_ints, default=[1, 4])
    p.add_argument("--J", type=float, default=0.4)
    p.add_argument("--s", type=float, default=0.05)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--n-s", type=_ints, default=[1000, 10000])
    p.add_argument("--epsilon", type=float, default=0.15)
    _common(p, "lshmem-validate")

    p = sub.add_parser("train", help="train the click model under one or more schemes")
    p.add_argument("--scheme", choices=SCHEMES, default="lma")
    p.add_argument("--compare", default=None, help="comma-separated schemes, e.g. full,hash,qr,lma")
    p.add_argument("--synthetic", action="store_true", help="use the planted-cluster generator")
    p.add_argument("--train", default=None)
    p.add_argument("--test", default=None)
    p.add_argument("--index", default=None, help="occurrence index from 'lshmem ingest'")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--n-h", type=int, default=4)
    p.add_argument("--tau", type=int, default=5)
    p.add_argument("--n-samples", type=int, default=125_000)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--bottom", type=_ints, default=[16, 16])
    p.add_argument("--top", type=_ints, default=[64, 32, 1])
    p.add_argument("--n-rows", type=int, default=200_000)
    p.add_argument("--n-test", type=int, default=50_000)
    p.add_argument("--n-values", type=int, default=10_000)
    p.add_argument("--n-clusters", type=int, default=100)
    p.add_argument("--timing", action="store_true", help="fill wall_ms in the metric logs")
    _common(p, "lshmem-train")

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None)
    return parser


def parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path, encoding="utf-8") as fh:
            cfg = json.load(fh)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(k.replace("-", "_") for k in cfg if k.replace("-", "_") not in known)
        if unknown:
            parser.error(f"unknown keys in {cfg_path}: {', '.join(unknown)}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    args.func = COMMANDS[args.command]
    if args.command == "validate" and args.trials is None:
        args.trials = DEFAULT_TRIALS[args.theorem]
    if args.command == "train" and args.m is None and args.alpha is None:
        if args.compare or args.scheme != "full":
            args.alpha = 16.0
    if args.command == "ingest":
        # the default is a cap on the row count, an explicit value is a requirement
        args.n_samples_explicit = args.n_samples is not None
        if args.n_samples is None:
            args.n_samples = 125_000
    return args


def _resolved(args) -> dict:
    return {k: v for k, v in vars(args).items() if not k.startswith("_") and k not in ("func", "config")}


def run(args) -> int:
    """Execute one command and write its manifest, whatever the outcome."""
    t0 = time.perf_counter()
    args._artifacts = []
    manifest = {"command": args.command, "config": _resolved(args), "seed": getattr(args, "seed", None),
                "version": __version__, "artifacts": args._artifacts}
    code = EXIT_IO
    try:
        code = args.func(args)
    except (UsageError, ConfigError, BudgetError) as exc:
        print(f"lshmem: usage error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except (OSError, DatasetFormatError) as exc:
        print(f"lshmem: I/O error: {exc}", file=sys.stderr)
        code = EXIT_IO
    finally:
        manifest["exit_code"] = code
        manifest["wall_time_s"] = round(time.perf_counter() - t0, 3)
        out = getattr(args, "out", None)
        if out:
            try:
                os.makedirs(out, exist_ok=True)
                with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
                    json.dump(manifest, fh, sort_keys=True, indent=1)
                    fh.write("\n")
            except OSError as exc:
                print(f"lshmem: could not write manifest: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = parse(argv)
    if args.command == "rerun":
        return cmd_rerun(args)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
