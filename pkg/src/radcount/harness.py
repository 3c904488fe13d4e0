"""Experiment orchestration: train on one environment, score every test set.

Rule-CC is tuned on the train split only. The learning baselines pick their
hyperparameters on val and are then refit on train+val. Test manifests never
reach tuning or fitting.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import FAMILIES as LEARNERS
from .baselines import grid_search_model, fit_family
from .core import DatasetManifest, read_manifest
from .features import extract_features
from .metrics import (CompositeWeights, ConfusionMatrix4, EvalReport, accuracy_exact, binary_collapse_exact,
                      evaluate)
from .preprocess import PreprocessConfig, preprocess_pipeline
from .rulecc import RuleCCConfig, predict_sequence
from .tuner import GridSpec, tune

log = logging.getLogger(__name__)

FAMILIES = ("rule_cc",) + LEARNERS
TUNING_SPLIT = "train"
FIXTURE_TOL = Fraction(5, 100_000)


class PlanError(ValueError):
    """Invalid experiment plan (bad family, overlapping manifests, ...)."""


@dataclass
class ExperimentPlan:
    train: Path
    val: Path
    tests: dict  # name -> manifest path, first entry is the drop-table reference
    out_dir: Path
    families: tuple = FAMILIES
    rulecc: Optional[RuleCCConfig] = None  # None: tune on the train split
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.train, self.val, self.out_dir = Path(self.train), Path(self.val), Path(self.out_dir)
        self.tests = {str(k): Path(v) for k, v in self.tests.items()}
        self.families = tuple(self.families)

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "ExperimentPlan":
        def p(v):
            v = Path(v)
            return v if v.is_absolute() else base / v

        rc = d.get("rulecc")
        grid = d.get("grid") or {}
        return cls(
            train=p(d["train"]), val=p(d["val"]),
            tests={k: p(v) for k, v in d["tests"].items()},
            out_dir=p(d.get("out_dir", "experiment")),
            families=tuple(d.get("families", FAMILIES)),
            rulecc=None if rc in (None, "tune") else RuleCCConfig.from_dict(rc),
            preprocess=PreprocessConfig.from_dict(d.get("preprocess") or {}),
            grid=GridSpec(tuple(grid.get("window_sizes", GridSpec.window_sizes)),
                          tuple(grid.get("tau_range", GridSpec.tau_range)),
                          int(grid.get("tau_points", GridSpec.tau_points))),
            seed=int(d.get("seed", 0)),
            threads=int(d.get("threads", 1)),
        )

    @classmethod
    def load(cls, path) -> "ExperimentPlan":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), path.parent)


@dataclass
class ExperimentResult:
    reports: dict  # family -> test name -> EvalReport
    failures: dict  # family -> error message
    drop_table: list
    rulecc_config: Optional[RuleCCConfig]
    note: str


def _check_plan(plan: ExperimentPlan) -> tuple[DatasetManifest, DatasetManifest, dict]:
    if not plan.tests:
        raise PlanError("plan needs at least one test manifest")
    unknown = [f for f in plan.families if f not in FAMILIES]
    if unknown:
        raise PlanError(f"unknown model families {unknown}, expected a subset of {FAMILIES}")
    for path in [plan.train, plan.val, *plan.tests.values()]:
        if not path.exists():
            raise FileNotFoundError(f"manifest not found: {path}")
    train, val = read_manifest(plan.train), read_manifest(plan.val)
    tests = {name: read_manifest(p) for name, p in plan.tests.items()}
    named = [("train", train), ("val", val)] + [(f"test:{n}", m) for n, m in tests.items()]
    for i, (na, ma) in enumerate(named):
        for nb, mb in named[i + 1:]:
            shared = ma.ids() & mb.ids()
            if shared:
                raise PlanError(f"manifests {na} and {nb} share sample ids, e.g. {sorted(shared)[0]}")
    for name, m in (("train", train), ("val", val)):
        marked = [e.id for e in m if e.split == "test"]
        if marked:
            raise PlanError(f"{name} manifest contains entries marked test, e.g. {marked[0]}")
    return train, val, tests


def _prepare(manifest: DatasetManifest, cfg: PreprocessConfig) -> tuple[list, np.ndarray, np.ndarray]:
    cubes = [preprocess_pipeline(s.cube, cfg) for s in manifest.samples()]
    feats = np.array([extract_features(c) for c in cubes]).reshape(len(cubes), -1)
    return cubes, feats, manifest.labels


def drop_table(reports: dict, tests: list) -> list:
    """accuracy(reference) - accuracy(other) per family, reference = first test."""
    if len(tests) < 2:
        return []
    ref = tests[0]
    rows = []
    for family, by_test in reports.items():
        if ref not in by_test:
            continue
        for other in tests[1:]:
            if other not in by_test:
                continue
            a, b = by_test[ref].accuracy, by_test[other].accuracy
            rows.append({"family": family, "reference": ref, "target": other,
                         "accuracy_reference": a, "accuracy_target": b, "drop": a - b})
    return rows


def qualitative_note(rows: list) -> str:
    by = {(r["family"], r["target"]): r["drop"] for r in rows}
    targets = sorted({r["target"] for r in rows})
    lines = []
    for t in targets:
        if ("rule_cc", t) not in by:
            lines.append(f"{t}: no rule_cc drop to compare against")
            continue
        base = by[("rule_cc", t)]
        learners = [(f, d) for (f, tt), d in sorted(by.items()) if tt == t and f != "rule_cc"]
        if not learners:
            lines.append(f"{t}: no learning model drops to compare against")
            continue
        bigger = [f for f, d in learners if d > base]
        verdict = "all" if len(bigger) == len(learners) else f"{len(bigger)} of {len(learners)}"
        detail = ", ".join(f"{f} {d:+.4f}" for f, d in learners)
        lines.append(f"{t}: rule_cc drop {base:+.4f}; learning drops {detail}; "
                     f"{verdict} learning models drop more than rule_cc")
    return "\n".join(lines) + "\n" if lines else "no cross-environment comparison (single test set)\n"


REPORT_FIELDS = ("accuracy", "r_nonzero", "mae", "rmse", "f1_macro", "f1_minority", "recall_minority",
                 "composite")


def _write_outputs(plan: ExperimentPlan, result: ExperimentResult, extra: dict) -> None:
    out = plan.out_dir
    out.mkdir(parents=True, exist_ok=True)
    header = {
        "seed": plan.seed,
        "families": list(plan.families),
        "tests": list(plan.tests),
        "rulecc_tuning": ("fixed config" if plan.rulecc is not None
                          else f"tuned on the {TUNING_SPLIT} split only"),
        "baseline_fitting": "grid search on val, refit on train+val",
        "preprocess": plan.preprocess.to_dict(),
    }
    doc = {
        "header": header,
        "reports": {f: {t: r.to_dict() for t, r in by.items()} for f, by in result.reports.items()},
        "failures": result.failures,
        "rulecc_config": None if result.rulecc_config is None else result.rulecc_config.to_dict(),
        "drop_table": result.drop_table,
        **extra,
    }
    with open(out / "reports.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "reports.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family", "test", *REPORT_FIELDS])
        for f, by in result.reports.items():
            for t, r in by.items():
                w.writerow([f, t, *(repr(float(getattr(r, k))) for k in REPORT_FIELDS)])
    cols = ["family", "reference", "target", "accuracy_reference", "accuracy_target", "drop"]
    with open(out / "drop_table.json", "w", encoding="utf-8") as fh:
        json.dump(result.drop_table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "drop_table.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in result.drop_table:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
    (out / "qualitative.txt").write_text(result.note, encoding="utf-8")


def run_experiment(plan: ExperimentPlan, weights: CompositeWeights = CompositeWeights()) -> ExperimentResult:
    """Run every family of ``plan`` and write reports into ``plan.out_dir``.

    A family that fails to fit is recorded under ``failures``; the rest still run.
    """
    train_m, val_m, test_ms = _check_plan(plan)
    train = _prepare(train_m, plan.preprocess)
    val = _prepare(val_m, plan.preprocess)
    tests = {name: _prepare(m, plan.preprocess) for name, m in test_ms.items()}
    fit_ids = train_m.ids() | val_m.ids()
    assert not any(fit_ids & m.ids() for m in test_ms.values()), "test samples reached fitting"

    extra: dict = {"search": {}}
    models_dir = plan.out_dir / "models"

    def run_rule_cc():
        cfg = plan.rulecc
        if cfg is None:
            result = tune(train[0], train[2], plan.grid, weights, threads=plan.threads)
            cfg = result.best_config
            plan.out_dir.mkdir(parents=True, exist_ok=True)
            result.write_json(plan.out_dir / "tune.json", {"split": TUNING_SPLIT, "n_samples": len(train[0])})
            result.write_csv(plan.out_dir / "tune.csv")
        reps = {name: evaluate([predict_sequence(c, cfg) for c in cubes], y, weights)
                for name, (cubes, _, y) in tests.items()}
        return reps, cfg

    def run_learner(family):
        _, report = grid_search_model((train[1], train[2]), (val[1], val[2]), family, seed=plan.seed)
        model = fit_family(family, report.best_params, np.vstack([train[1], val[1]]),
                           np.concatenate([train[2], val[2]]), seed=plan.seed)
        models_dir.mkdir(parents=True, exist_ok=True)
        model.save(models_dir / f"{family}.json")
        extra["search"][family] = report.to_dict()
        reps = {name: evaluate(model.predict(X), y, weights) for name, (_, X, y) in tests.items()}
        return reps, None

    def run_family(family):
        try:
            return family, (run_rule_cc() if family == "rule_cc" else run_learner(family)), None
        except Exception as exc:  # surfaced per family, the others keep going
            log.error("family %s failed: %s", family, exc)
            return family, None, f"{type(exc).__name__}: {exc}"

    if plan.threads > 1:
        with ThreadPoolExecutor(plan.threads) as ex:
            outcomes = list(ex.map(run_family, plan.families))
    else:
        outcomes = [run_family(f) for f in plan.families]

    reports, failures, rc_cfg = {}, {}, None
    for family, res, err in outcomes:
        if err is not None:
            failures[family] = err
            continue
        reports[family], cfg = res
        rc_cfg = cfg if family == "rule_cc" else rc_cfg
    extra["search"] = {f: extra["search"][f] for f in sorted(extra["search"])}
    rows = drop_table(reports, list(plan.tests))
    result = ExperimentResult(reports, failures, rows, rc_cfg, qualitative_note(rows))
    _write_outputs(plan, result, extra)
    return result


def synthetic_plan(out_dir, seed: int = 0, per_class: int = 25, families: tuple = FAMILIES,
                   threads: int = 1) -> ExperimentPlan:
    """Generate A (train/val/test) and B (test) datasets and plan A -> B."""
    from .synth import generate_dataset

    out = Path(out_dir)
    generate_dataset("A", per_class, seed, out / "data" / "A")
    generate_dataset("B_complex", per_class, seed, out / "data" / "B")
    a = out / "data" / "A"
    return ExperimentPlan(
        train=a / "manifest_train.jsonl", val=a / "manifest_val.jsonl",
        tests={"envA_test": a / "manifest_test.jsonl", "envB_test": out / "data" / "B" / "manifest_test.jsonl"},
        out_dir=out / "results", families=families, seed=seed, threads=threads,
    )


# ---------------------------------------------------------------- published fixtures

@dataclass(frozen=True)
class FixtureCheck:
    model: str
    env: str
    metric: str
    computed: Fraction
    published: Fraction

    @property
    def passed(self) -> bool:
        return abs(self.computed - self.published) <= FIXTURE_TOL

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.model:<14} {self.env} {self.metric:<15} "
                f"computed={float(self.computed):.6f} published={float(self.published)}")


def load_fixtures() -> dict:
    with resources.files("radcount").joinpath("fixtures/published_confusion.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def verify_published_fixtures(fixtures: Optional[dict] = None) -> list[FixtureCheck]:
    """Recompute accuracy and binary accuracy of every shipped confusion matrix.

    Comparison is exact: |computed - published| <= 5e-5 over rationals, since
    several published values sit right on that boundary.
    """
    fixtures = load_fixtures() if fixtures is None else fixtures
    checks = []
    for model, envs in fixtures["models"].items():
        for env, rec in envs.items():
            cm = ConfusionMatrix4(rec["confusion"])
            checks.append(FixtureCheck(model, env, "accuracy", accuracy_exact(cm), Fraction(rec["accuracy"])))
            checks.append(FixtureCheck(model, env, "binary_accuracy", binary_collapse_exact(cm),
                                       Fraction(rec["binary_accuracy"])))
    return checks


def report_line(family: str, test: str, r: EvalReport) -> str:
    return f"{family:<8} {test:<10} acc={r.accuracy:.4f} bin={r.r_nonzero:.4f} mae={r.mae:.4f}"
