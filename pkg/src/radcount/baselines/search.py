"""Model families, validation grid search and versioned JSON model files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..metrics import mae
from .forest import Node, RegressionTree, RfModel, rf_fit, rf_predict
from .knn import KnnModel, knn_fit, knn_predict
from .svr import SvrModel, svr_fit, svr_predict

FAMILIES = ("knn", "rf", "svm")
MODEL_FORMAT = "radcount-model"
MODEL_VERSION = 1

GRIDS = {
    "knn": [{"metric": m, "k": k} for m in ("euclidean", "manhattan", "mahalanobis") for k in (3, 5)],
    "rf": [{"n_estimators": n, "max_depth": d} for n in (50, 100) for d in (20, None)],
    "svm": [{"kernel": "linear"}, {"kernel": "rbf"}],
}


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        return cls(X.mean(axis=0), np.maximum(X.std(axis=0), 1e-12))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std


def uses_standardizer(family: str, params: dict, standardize: bool = True) -> bool:
    if not standardize:
        return False
    if family == "knn":
        return params.get("metric") != "mahalanobis"
    return family == "svm"


@dataclass
class FittedModel:
    family: str
    params: dict
    model: Any
    standardizer: Optional[Standardizer] = None

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.standardizer is not None:
            X = self.standardizer.transform(X)
        if self.family == "knn":
            return knn_predict(self.model, X)
        if self.family == "rf":
            return rf_predict(self.model, X)
        return svr_predict(self.model, X)

    def to_dict(self) -> dict:
        d = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "family": self.family,
             "params": self.params, "standardizer": None}
        if self.standardizer is not None:
            d["standardizer"] = {"mean": self.standardizer.mean.tolist(), "std": self.standardizer.std.tolist()}
        m = self.model
        if self.family == "knn":
            d["knn"] = {"k": m.k, "metric": m.metric, "train_features": m.train_features.tolist(),
                        "train_labels": m.train_labels.tolist(),
                        "inv_cov": None if m.inv_cov is None else m.inv_cov.tolist()}
        elif self.family == "rf":
            d["rf"] = {"n_estimators": m.n_estimators, "max_depth": m.max_depth, "seed": m.seed,
                       "max_features": m.max_features, "min_leaf": m.min_leaf, "bootstrap": m.bootstrap,
                       "trees": [t.root.to_dict() for t in m.trees]}
        else:
            d["svm"] = {"kernel": m.kernel, "C": m.C, "epsilon": m.epsilon, "gamma": m.gamma,
                        "support_vectors": m.support_vectors.tolist(), "dual_coef": m.dual_coef.tolist(),
                        "bias": m.bias, "n_iter": m.n_iter, "kkt_violation": m.kkt_violation}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a radcount model file")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        family = d["family"]
        std = None
        if d.get("standardizer"):
            std = Standardizer(np.array(d["standardizer"]["mean"]), np.array(d["standardizer"]["std"]))
        if family == "knn":
            k = d["knn"]
            model = KnnModel(k["k"], k["metric"], np.array(k["train_features"], dtype=np.float64),
                             np.array(k["train_labels"], dtype=np.float64),
                             None if k["inv_cov"] is None else np.array(k["inv_cov"], dtype=np.float64))
        elif family == "rf":
            r = d["rf"]
            trees = []
            for t in r["trees"]:
                tree = RegressionTree(r["max_depth"], r["max_features"], r["min_leaf"])
                tree.root = Node.from_dict(t)
                trees.append(tree)
            model = RfModel(trees, r["n_estimators"], r["max_depth"], r["seed"], r["max_features"],
                            r["min_leaf"], r["bootstrap"])
        elif family == "svm":
            s = d["svm"]
            sv = np.array(s["support_vectors"], dtype=np.float64)
            model = SvrModel(s["kernel"], s["C"], s["epsilon"], s["gamma"], sv.reshape(len(sv), -1),
                             np.array(s["dual_coef"], dtype=np.float64), s["bias"], s["n_iter"],
                             s["kkt_violation"])
        else:
            raise ValueError(f"unknown family {family!r}")
        return cls(family, d["params"], model, std)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FittedModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_family(family: str, params: dict, X, y, seed: int = 0, standardize: bool = True,
               svr_epsilon: float = 0.1, svr_C: float = 1.0) -> FittedModel:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}, expected one of {FAMILIES}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    std = Standardizer.fit(X) if uses_standardizer(family, params, standardize) else None
    Xt = std.transform(X) if std is not None else X
    if family == "knn":
        model = knn_fit(Xt, y, params["k"], params["metric"])
    elif family == "rf":
        model = rf_fit(Xt, y, params["n_estimators"], params["max_depth"], seed=seed)
    else:
        model = svr_fit(Xt, y, params["kernel"], C=params.get("C", svr_C),
                        epsilon=params.get("epsilon", svr_epsilon), gamma=params.get("gamma"))
    return FittedModel(family, dict(params), model, std)


@dataclass
class SearchReport:
    family: str
    rows: list = field(default_factory=list)  # {"params", "val_mae"}
    best_index: int = 0

    @property
    def best_params(self) -> dict:
        return self.rows[self.best_index]["params"]

    def to_dict(self) -> dict:
        return {"family": self.family, "best_index": self.best_index, "candidates": self.rows}


def grid_search_model(train, val, family: str, seed: int = 0, grid: Optional[list] = None,
                      standardize: bool = True) -> tuple[FittedModel, SearchReport]:
    """Fit every grid candidate on ``train``; keep the lowest validation MAE.

    Ties go to the earliest candidate in grid order.
    """
    Xtr, ytr = train
    Xva, yva = val
    grid = GRIDS[family] if grid is None else grid
    if not grid:
        raise ValueError("empty grid")
    report = SearchReport(family)
    best_model, best_score = None, np.inf
    for i, params in enumerate(grid):
        fitted = fit_family(family, params, Xtr, ytr, seed=seed, standardize=standardize)
        score = mae(fitted.predict(Xva), yva)
        report.rows.append({"params": dict(params), "val_mae": score})
        if score < best_score:
            best_model, best_score, report.best_index = fitted, score, i
    return best_model, report
