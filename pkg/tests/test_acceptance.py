"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -s`` to see the lines
as they happen; they are also collected in the terminal summary.
"""

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from radcount import cli
from radcount.core import RadarCube
from radcount.harness import load_fixtures, run_experiment, synthetic_plan, verify_published_fixtures
from radcount.metrics import (CompositeWeights, ConfusionMatrix4, accuracy_exact, binary_collapse_exact,
                              report_from_confusion)
from radcount.preprocess import SigmoidWeightConfig, sigmoid_weight_map
from radcount.rulecc import component_metrics, dilate4, erode4, label_components_4
from radcount.tuner import GridSpec, tau_grid, tune

from test_baselines import knn_instance, oracle_kkt_gap, oracle_knn, svr_problem
from test_rulecc import oracle_components, oracle_dilate, oracle_erode

TOL = Fraction(5, 100_000)

PUBLISHED = {
    # (model, env): (accuracy, binary accuracy)
    ("rule_cc", "A"): ("0.4885", "0.9552"), ("random_forest", "A"): ("0.8260", "0.9990"),
    ("knn", "A"): ("0.8385", "0.9979"), ("svm", "A"): ("0.7771", "0.9979"),
    ("cnn_lstm", "A"): ("0.9833", "0.9990"),
    ("rule_cc", "B"): ("0.4919", "0.9563"), ("random_forest", "B"): ("0.6294", "0.9869"),
    ("knn", "B"): ("0.6312", "0.9888"), ("svm", "B"): ("0.6469", "0.9888"),
    ("cnn_lstm", "B"): ("0.6200", "0.9850"),
}


def test_criterion_1_published_metric_reproduction(criterion):
    with criterion(1, "published accuracies from the ten confusion matrices", budget_s=1.0) as v:
        fx = load_fixtures()["models"]
        assert len(PUBLISHED) == 10
        worst = Fraction(0)
        for (model, env), (acc, binary) in PUBLISHED.items():
            cm = ConfusionMatrix4(fx[model][env]["confusion"])
            for got, want in ((accuracy_exact(cm), acc), (binary_collapse_exact(cm), binary)):
                gap = abs(got - Fraction(want))
                worst = max(worst, gap)
                assert gap <= TOL, f"{model} {env}: {float(got):.6f} vs {want}"
        checks = verify_published_fixtures()
        assert len(checks) == 20 and all(c.passed for c in checks)
        v.detail = f"20/20 within 5e-5 (largest gap {float(worst):.1e}, compared as exact rationals)"


def test_criterion_2_morphology_and_labeling_oracles(criterion):
    with criterion(2, "erode4/dilate4/label_components_4 vs definitional oracles", budget_s=10.0) as v:
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            m = (rng.random((12, 91)) < rng.uniform(0.05, 0.85)).astype(np.uint8)
            assert np.array_equal(erode4(m, 1).astype(np.uint8), oracle_erode(m))
            assert np.array_equal(dilate4(m, 1).astype(np.uint8), oracle_dilate(m))
            comps = [sorted(c.pixels) for c in label_components_4(m)]
            assert comps == oracle_components(m)
        rect = np.zeros((12, 91), dtype=np.uint8)
        rect[4:8, 30:33] = 1  # 4 rows x 3 cols
        survivors = np.argwhere(erode4(rect, 1))
        assert len(survivors) == 2
        v.detail = "1000 masks exact; 4x3 rectangle keeps 2 pixels"


def test_criterion_3_unit_identities(criterion):
    with criterion(3, "sigmoid centre, compactness, composite identities") as v:
        for tau in (0.01, 0.3, 2.5):
            w = sigmoid_weight_map(np.array([tau]), SigmoidWeightConfig(tau_w=tau, s=0.07))
            assert abs(w[0] - 0.5) <= 1e-12
        _, _, single = component_metrics([(0, 0)])
        _, _, square = component_metrics([(0, 0), (0, 1), (1, 0), (1, 1)])
        assert abs(single - math.pi / 4) <= 1e-12 and abs(square - math.pi / 4) <= 1e-12
        w = CompositeWeights()
        assert w.w_acc + w.w_f1macro + w.w_f1min + w.w_recmin + w.w_nonzero == 1.0
        perfect = report_from_confusion(ConfusionMatrix4(np.diag([5, 3, 2, 7])))
        assert perfect.composite == 1.0
        v.detail = "all exact to 1e-12"


def test_criterion_4_grid_shape(criterion):
    with criterion(4, "tuner grid is 6 windows x 50 thresholds") as v:
        taus = tau_grid()
        assert len(taus) == 50 and taus[0] == 0.005 and taus[49] == 0.08
        cube = RadarCube(np.random.default_rng(0).random((60, 12, 91)) * 0.05)
        res = tune([cube], [0], GridSpec())
        assert len(res.table) == 300
        assert len({(r["window"], r["tau"]) for r in res.table}) == 300
        v.detail = "300 distinct cells, tau_0=0.005, tau_49=0.08"


def test_criterion_5_baseline_oracles(criterion):
    from radcount.baselines import knn_fit, knn_predict, regularized_covariance, rf_fit, rf_predict, svr_fit

    with criterion(5, "KNN / RF / SVR oracle equivalence") as v:
        for metric, seed in (("euclidean", 11), ("manhattan", 12), ("mahalanobis", 13)):
            rng = np.random.default_rng(seed)
            for _ in range(500):
                X, y, q, k = knn_instance(rng)
                solve = None
                if metric == "mahalanobis":
                    sigma = regularized_covariance(X)
                    solve = lambda d, s=sigma: np.linalg.solve(s, d)  # noqa: E731
                got = knn_predict(knn_fit(X, y, k, metric), q)
                assert abs(got - oracle_knn(X, y, q, k, metric, solve)) <= 1e-12
        rng = np.random.default_rng(5)
        X, Q = rng.normal(size=(50, 18)), rng.normal(size=(200, 18))
        y = rng.integers(0, 4, 50)
        assert np.array_equal(knn_predict(knn_fit(X, y, 5, "mahalanobis", cov=np.eye(18)), Q),
                              knn_predict(knn_fit(X, y, 5, "euclidean"), Q))
        X = rng.normal(size=(120, 18))
        y = rng.integers(0, 4, 120).astype(float)
        assert len(np.unique(X, axis=0)) == 120
        forest = rf_fit(X, y, n_estimators=1, max_depth=None, bootstrap=False)
        assert np.array_equal(rf_predict(forest, X), y)
        worst = 0.0
        for seed in range(20):
            X, y = svr_problem(seed)
            kernel = "rbf" if seed % 2 else "linear"
            m = svr_fit(X, y, kernel)
            gap = oracle_kkt_gap(X, y, m.alpha, m.alpha_star, kernel, m.gamma, m.C, m.epsilon)
            assert gap <= 1e-3 + 1e-9
            worst = max(worst, gap)
        v.detail = f"knn 3x500 exact, RF zero training error, SVR max KKT violation {worst:.1e}"


@pytest.mark.slow
def test_criterion_6_synthetic_end_to_end(criterion, tmp_path):
    with criterion(6, "synthetic A->B experiment", budget_s=300.0) as v:
        runs = []
        for tag in ("run1", "run2"):
            res = run_experiment(synthetic_plan(tmp_path / tag, seed=0, per_class=25))
            assert not res.failures, res.failures
            runs.append(res)
        res = runs[0]
        rc = res.reports["rule_cc"]
        assert rc["envA_test"].r_nonzero >= 0.90, f"rule_cc A binary {rc['envA_test'].r_nonzero:.3f}"
        assert rc["envB_test"].r_nonzero >= 0.90, f"rule_cc B binary {rc['envB_test'].r_nonzero:.3f}"
        for fam in ("knn", "rf", "svm"):
            acc = res.reports[fam]["envA_test"].accuracy
            assert acc >= 0.70, f"{fam} A accuracy {acc:.3f}"
        for name in ("drop_table.json", "drop_table.csv"):
            a = (tmp_path / "run1" / "results" / name).read_bytes()
            b = (tmp_path / "run2" / "results" / name).read_bytes()
            assert a == b, f"{name} differs between runs"
        rows = json.loads((tmp_path / "run1" / "results" / "drop_table.json").read_text())
        assert {r["family"] for r in rows} == {"rule_cc", "knn", "rf", "svm"}
        assert (tmp_path / "run1" / "results" / "qualitative.txt").read_text().strip()
        accs = ", ".join(f"{f} {res.reports[f]['envA_test'].accuracy:.2f}" for f in ("knn", "rf", "svm"))
        v.detail = (f"rule_cc binary A {rc['envA_test'].r_nonzero:.3f} B {rc['envB_test'].r_nonzero:.3f}; "
                    f"A accuracy {accs}; drop table byte-identical")


def _cli_round(root, seed=3):
    """Run every subcommand once into ``root``; returns files to compare."""
    def run(*argv):
        assert cli.main([str(a) for a in argv]) == 0, argv

    a = root / "A"
    run("synth", "--preset", "A", "--per-class", 2, "--seed", seed, "--out", a)
    man = a / "manifest.jsonl"
    cube = sorted(a.glob("*.radc"))[0]
    run("preprocess", "--in", cube, "--out", root / "pre.radc")
    run("preprocess", "--in", man, "--out", root / "pre")
    run("extract-features", "--manifest", man, "--out", root / "f.csv")
    run("count", "--in", cube, "--explain", "--out", root / "count.json")
    run("count", "--manifest", man, "--out", root / "count.csv")
    run("train", "--family", "rf", "--features", root / "f.csv", "--out", root / "rf.json", "--seed", seed)
    run("predict", "--model", root / "rf.json", "--features", root / "f.csv", "--split", "all",
        "--out", root / "pred.csv")
    run("evaluate", "--pred", root / "pred.csv", "--out", root / "eval.json")
    grid = root / "grid.json"
    grid.write_text('{"grid": {"window_sizes": [20, 30], "tau_points": 4}}')
    run("tune", "--manifest", man, "--config", grid, "--out", root / "tune.json", "--csv", root / "tune.csv")
    plan = {"train": str(a / "manifest_train.jsonl"), "val": str(a / "manifest_val.jsonl"),
            "tests": {"envA_test": str(a / "manifest_test.jsonl")}, "out_dir": str(root / "exp"),
            "grid": {"window_sizes": [20], "tau_points": 3}, "seed": seed}
    (root / "plan.json").write_text(json.dumps(plan))
    run("experiment", "--plan", root / "plan.json")
    run("verify-fixtures")
    return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file()
                  and p.name not in ("plan.json", "grid.json"))


def test_criterion_7_command_determinism(criterion, tmp_path, capsys):
    with criterion(7, "every command is bitwise reproducible") as v:
        files_a = _cli_round(tmp_path / "a")
        out_a = capsys.readouterr().out.replace(str(tmp_path / "a"), "<root>")
        files_b = _cli_round(tmp_path / "b")
        out_b = capsys.readouterr().out.replace(str(tmp_path / "b"), "<root>")
        assert files_a == files_b
        differing = [str(p) for p in files_a if (tmp_path / "a" / p).read_bytes() != (tmp_path / "b" / p).read_bytes()]
        assert not differing, f"differing outputs: {differing}"
        assert out_a == out_b
        v.detail = f"{len(files_a)} output files and stdout identical across runs"
