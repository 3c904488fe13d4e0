"""radcount command line.

Exit codes: 0 success, 2 invalid input or configuration, 3 fixture mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .baselines import FAMILIES, GRIDS, FittedModel, fit_family, grid_search_model
from .core import DatasetManifest, ManifestEntry, RadarCube, load_cube, read_manifest, save_cube, write_manifest
from .features import extract_features, read_features_csv, write_features_csv
from .metrics import evaluate
from .preprocess import PreprocessConfig, clip_and_normalize, dataset_percentile_bounds, preprocess_pipeline
from .rulecc import RuleCCConfig, explain_sequence, predict_sequence
from .synth import PRESET_ENV, generate_dataset
from .tuner import GridSpec, tune

EXIT_OK, EXIT_INVALID, EXIT_FIXTURE = 0, 2, 3
SECTIONS = ("preprocess", "rulecc", "grid")
STD_SOURCES = ("weighted", "normalized", "none")


def _dump(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def load_config(path) -> dict:
    """Config file sections: preprocess, rulecc, grid.

    A file without any section key is taken as a single bare section, so
    ``--config rulecc.json`` works for ``count`` as well.
    """
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    if any(k in doc for k in SECTIONS):
        return doc
    return {name: doc for name in SECTIONS}


def _preprocess_cfg(conf: dict) -> PreprocessConfig:
    d = conf.get("preprocess") or {}
    return PreprocessConfig.from_dict({k: d[k] for k in ("lo_pct", "hi_pct", "sigmoid") if k in d})


def _rulecc_cfg(conf: dict) -> RuleCCConfig:
    d = conf.get("rulecc") or {}
    known = set(RuleCCConfig().to_dict())
    return RuleCCConfig.from_dict({k: v for k, v in d.items() if k in known})


def _grid(conf: dict) -> GridSpec:
    d = conf.get("grid") or {}
    if "window_sizes" in d or "tau_range" in d or "tau_points" in d:
        return GridSpec(tuple(d.get("window_sizes", GridSpec.window_sizes)),
                        tuple(d.get("tau_range", GridSpec.tau_range)),
                        int(d.get("tau_points", GridSpec.tau_points)))
    return GridSpec()


def _prepare(cube: RadarCube, cfg: PreprocessConfig, source: str, bounds=None) -> RadarCube:
    if source == "none":
        return cube
    if source == "normalized":
        return clip_and_normalize(cube, cfg, bounds)
    return preprocess_pipeline(cube, cfg, bounds)


def _manifest_cubes(manifest: DatasetManifest, cfg: PreprocessConfig, source: str, global_pct: bool):
    raw = [s.cube for s in manifest.samples()]
    bounds = dataset_percentile_bounds(raw, cfg.lo_pct, cfg.hi_pct) if global_pct else None
    return [_prepare(c, cfg, source, bounds) for c in raw]


# ---------------------------------------------------------------- subcommands

def cmd_synth(args, conf) -> int:
    env = args.preset
    if env != "A" and env not in PRESET_ENV:
        raise ValueError(f"unknown preset {env!r}, expected 'A' or one of {sorted(PRESET_ENV)}")
    m = generate_dataset(env, args.per_class, args.seed, args.out, frames=args.frames)
    print(f"wrote {len(m)} cubes to {args.out}")
    return EXIT_OK


def cmd_preprocess(args, conf) -> int:
    cfg = _preprocess_cfg(conf)
    src = Path(args.inp)
    if src.suffix == ".jsonl":
        manifest = read_manifest(src)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        cubes = _manifest_cubes(manifest, cfg, "weighted", args.global_percentiles)
        entries = []
        for e, cube in zip(manifest, cubes):
            name = f"{e.id}.radc"
            save_cube(cube, out / name)
            entries.append(ManifestEntry(name, e.label, e.environment, e.activity, e.split))
        write_manifest(entries, out / "manifest.jsonl")
        print(f"wrote {len(entries)} preprocessed cubes to {out}")
    else:
        if args.global_percentiles:
            raise ValueError("--global-percentiles needs a manifest input")
        save_cube(preprocess_pipeline(load_cube(src), cfg), args.out)
    return EXIT_OK


def cmd_extract(args, conf) -> int:
    manifest = read_manifest(args.manifest)
    cubes = _manifest_cubes(manifest, _preprocess_cfg(conf), args.std_source, args.global_percentiles)
    write_features_csv(args.out, [extract_features(c) for c in cubes], manifest.labels,
                       [e.environment for e in manifest], [e.split for e in manifest])
    return EXIT_OK


def cmd_count(args, conf) -> int:
    cfg = _rulecc_cfg(conf)
    pcfg = _preprocess_cfg(conf)
    if args.manifest:
        manifest = read_manifest(args.manifest)
        cubes = _manifest_cubes(manifest, pcfg, args.std_source, args.global_percentiles)
        out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
        try:
            w = csv.writer(out, lineterminator="\n")
            w.writerow(["id", "label", "split", "prediction"])
            for e, c in zip(manifest, cubes):
                w.writerow([e.id, e.label, e.split, predict_sequence(c, cfg)])
        finally:
            if args.out:
                out.close()
        return EXIT_OK
    if not args.inp:
        raise ValueError("count needs --in CUBE or --manifest M")
    cube = _prepare(load_cube(args.inp), pcfg, args.std_source)
    doc = explain_sequence(cube, cfg) if args.explain else {"count": predict_sequence(cube, cfg)}
    _dump(doc, args.out)
    return EXIT_OK


def cmd_train(args, conf) -> int:
    X, y, _, splits = read_features_csv(args.features)
    splits = np.array(splits)
    tr, va = splits == "train", splits == "val"
    if not tr.any():
        raise ValueError(f"{args.features}: no rows with split 'train'")
    if va.any():
        _, report = grid_search_model((X[tr], y[tr]), (X[va], y[va]), args.family, seed=args.seed)
        params = report.best_params
        fit = tr | va
    else:
        # no validation rows: fall back to the first grid candidate
        report, params, fit = None, dict(GRIDS[args.family][0]), tr
    model = fit_family(args.family, params, X[fit], y[fit], seed=args.seed)
    model.save(args.out)
    _dump({"family": args.family, "params": params, "n_fit": int(fit.sum()),
           "search": None if report is None else report.to_dict()})
    return EXIT_OK


def cmd_predict(args, conf) -> int:
    model = FittedModel.load(args.model)
    X, y, _, splits = read_features_csv(args.features)
    keep = [i for i, s in enumerate(splits) if args.split == "all" or s == args.split]
    preds = model.predict(X[keep]) if keep else np.zeros(0)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["row", "label", "split", "prediction"])
        for i, p in zip(keep, preds):
            w.writerow([i, int(y[i]), splits[i], repr(float(p))])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_evaluate(args, conf) -> int:
    preds, labels = [], []
    with open(args.pred, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            try:
                preds.append(float(rec["prediction"]))
                labels.append(int(rec["label"]))
            except KeyError as exc:
                raise ValueError(f"{args.pred}: missing column {exc}") from exc
    if not preds:
        raise ValueError(f"{args.pred}: no predictions")
    report = evaluate(preds, labels, two_stage=args.two_stage)
    print(report.confusion.format(), file=sys.stderr)
    _dump(report.to_dict(), args.out)
    return EXIT_OK


def cmd_tune(args, conf) -> int:
    manifest = read_manifest(args.manifest)
    if args.split != "all":
        manifest = manifest.split(args.split)
    if any(e.split == "test" for e in manifest):
        raise ValueError("refusing to tune on entries marked test")
    if not len(manifest):
        raise ValueError(f"{args.manifest}: no entries in split {args.split!r}")
    cubes = _manifest_cubes(manifest, _preprocess_cfg(conf), args.std_source, args.global_percentiles)
    result = tune(cubes, manifest.labels.tolist(), _grid(conf), base=_rulecc_cfg(conf), threads=args.threads)
    result.write_json(args.out, {"split": args.split, "n_samples": len(cubes)})
    if args.csv:
        result.write_csv(args.csv)
    print(f"best window={result.best_config.window_sizes[0]} tau={result.best_config.tau!r} "
          f"composite={result.best_score:.4f}")
    return EXIT_OK


def cmd_experiment(args, conf) -> int:
    if bool(args.plan) == bool(args.synthetic):
        raise ValueError("experiment needs exactly one of --plan or --synthetic")
    if args.plan:
        plan = harness.ExperimentPlan.load(args.plan)
        # flags given on the command line win over the plan file
        if "seed" in args.explicit:
            plan.seed = args.seed
        if "threads" in args.explicit:
            plan.threads = args.threads
    else:
        plan = harness.synthetic_plan(args.synthetic, seed=args.seed, per_class=args.per_class,
                                      threads=args.threads)
    if "preprocess" in conf:
        plan.preprocess = _preprocess_cfg(conf)
    if "grid" in conf:
        plan.grid = _grid(conf)
    result = harness.run_experiment(plan)
    for family, by in result.reports.items():
        for test, rep in by.items():
            print(harness.report_line(family, test, rep))
    for family, err in result.failures.items():
        print(f"FAILED {family}: {err}", file=sys.stderr)
    sys.stdout.write(result.note)
    print(f"outputs in {plan.out_dir}")
    return EXIT_OK


def cmd_verify(args, conf) -> int:
    checks = harness.verify_published_fixtures()
    for c in checks:
        print(c.line())
    bad = sum(not c.passed for c in checks)
    print(f"{len(checks) - bad}/{len(checks)} fixture comparisons passed")
    return EXIT_OK if bad == 0 else EXIT_FIXTURE


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (default 1)")
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON config with preprocess/rulecc/grid sections")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="radcount", description=__doc__, parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    def pre_opts(sp):
        sp.add_argument("--std-source", choices=STD_SOURCES, default="weighted",
                        help="cube fed downstream: sigmoid-weighted (default), clipped+normalized, or as stored")
        sp.add_argument("--global-percentiles", action="store_true",
                        help="clip with bounds pooled over the whole manifest")

    sp = add("synth", cmd_synth, "generate a seeded synthetic dataset")
    sp.add_argument("--preset", required=True, help="layout preset, or A for all four A layouts")
    sp.add_argument("--per-class", type=int, default=25)
    sp.add_argument("--frames", type=int, default=60)
    sp.add_argument("--out", required=True)

    sp = add("preprocess", cmd_preprocess, "clip, normalize and weight a cube or a manifest")
    sp.add_argument("--in", dest="inp", required=True, help="cube .radc or manifest .jsonl")
    sp.add_argument("--out", required=True, help="output cube, or output directory for a manifest")
    sp.add_argument("--global-percentiles", action="store_true")

    sp = add("extract-features", cmd_extract, "18 summary features per cube to CSV")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    pre_opts(sp)

    sp = add("count", cmd_count, "rule-based people count")
    sp.add_argument("--in", dest="inp", help="single cube")
    sp.add_argument("--manifest", help="count every cube of a manifest (CSV output)")
    sp.add_argument("--explain", action="store_true", help="per-window records")
    sp.add_argument("--out")
    pre_opts(sp)

    sp = add("train", cmd_train, "grid-search and fit a baseline from a features CSV")
    sp.add_argument("--family", choices=FAMILIES, required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--out", required=True)

    sp = add("predict", cmd_predict, "apply a saved model to a features CSV")
    sp.add_argument("--model", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--split", default="test", help="rows to predict, or 'all'")
    sp.add_argument("--out")

    sp = add("evaluate", cmd_evaluate, "metrics for a predictions CSV (columns prediction, label)")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--out")
    sp.add_argument("--two-stage", action="store_true", help="round to one decimal before rounding to a class")

    sp = add("tune", cmd_tune, "window x threshold grid search for rule-CC")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--split", default="train", help="entries to tune on, or 'all' (never test)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--csv")
    pre_opts(sp)

    sp = add("experiment", cmd_experiment, "train on A, score every test set, write drop table")
    sp.add_argument("--plan", help="plan JSON (train, val, tests, out_dir, families, ...)")
    sp.add_argument("--synthetic", metavar="DIR", help="generate A/B data in DIR and run on it")
    sp.add_argument("--per-class", type=int, default=25)

    add("verify-fixtures", cmd_verify, "check metric arithmetic on the published confusion matrices")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.explicit = {name for name in ("seed", "threads", "config", "verbose") if hasattr(args, name)}
    for name, default in (("seed", 0), ("threads", 1), ("config", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = load_config(args.config)
        return args.func(args, conf)
    except (ValueError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"radcount {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
