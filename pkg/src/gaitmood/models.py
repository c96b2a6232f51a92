"""The three classifiers: majority baseline, L2 logistic regression, random forest.

All three share the same contract: ``fit(X, y)`` with string labels,
``predict`` returning labels, and ``predict_proba`` returning rows that sum
to one with columns ordered by the sorted class list. ``predict`` is always
the argmax of ``predict_proba``, so tie-breaking (lexicographically smallest
label) is consistent everywhere.

Logistic regression minimizes

    mean negative log-likelihood + (l2_strength / n) * ||w||^2 / 2

per one-vs-rest class, intercept unpenalized, on inputs standardized with
training statistics. The solver is damped Newton with backtracking; it stops
when the full gradient norm drops below ``tol``.

The random forest grows ``n_trees`` CARTs on bootstrap resamples with exact
gini split search over floor(sqrt(d)) features per node (see
``_forest_core``). Tree ``t`` draws from a splitmix64 stream seeded with
``mix64(rng_seed, t)``, so forests are reproducible and trees independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import _forest_core
from .errors import ConfigError, DataError, DegenerateDataError
from .rng import mix64

MODEL_KINDS = ("baseline", "logreg", "forest")

PERSISTENCE_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    """Classifier configuration; defaults follow the study setup."""

    kind: str
    rng_seed: int = 0
    # forest
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    # logreg
    l2_strength: float = 1.0
    tol: float = 1e-6
    max_iter: int = 1000
    standardize: bool = True

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.l2_strength < 0:
            raise ConfigError(f"l2_strength must be >= 0, got {self.l2_strength}")
        if self.min_samples_leaf < 1:
            raise ConfigError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")

    def with_seed(self, rng_seed: int) -> "ModelSpec":
        return ModelSpec(**{**asdict(self), "rng_seed": int(rng_seed)})


def _check_training_input(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError(f"X {X.shape} and y {y.shape} are inconsistent")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature value in training data")
    return X, y


def _class_codes(y: np.ndarray) -> tuple[list[str], np.ndarray]:
    classes = sorted({str(v) for v in y})
    lookup = {c: i for i, c in enumerate(classes)}
    codes = np.array([lookup[str(v)] for v in y], dtype=np.int64)
    return classes, codes


class MajorityBaseline:
    """Predicts the training majority class; probabilities are the class priors."""

    kind = "baseline"

    def __init__(self, spec: ModelSpec | None = None):
        self.spec = spec or ModelSpec("baseline")
        self.classes_: list[str] = []
        self.priors_: np.ndarray | None = None

    def fit(self, X, y) -> "MajorityBaseline":
        X, y = _check_training_input(X, y)
        if y.shape[0] < 1:
            raise DataError("baseline needs at least one sample")
        self.classes_, codes = _class_codes(y)
        counts = np.bincount(codes, minlength=len(self.classes_))
        self.priors_ = counts / counts.sum()
        self.n_features_ = X.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_predict_input(X)
        return np.tile(self.priors_, (X.shape[0], 1))

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return np.array(self.classes_, dtype=object)[np.argmax(proba, axis=1)]

    def _check_predict_input(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise DataError(f"expected {self.n_features_} features, got shape {X.shape}")
        return X


class LogisticRegressionOVR:
    """One-vs-rest L2-regularized logistic regression fit by damped Newton."""

    kind = "logreg"

    def __init__(self, spec: ModelSpec | None = None):
        self.spec = spec or ModelSpec("logreg")
        self.classes_: list[str] = []

    def fit(self, X, y) -> "LogisticRegressionOVR":
        X, y = _check_training_input(X, y)
        if X.shape[0] < 2:
            raise DataError("logreg needs at least two samples")
        self.classes_, codes = _class_codes(y)
        if len(self.classes_) < 2:
            raise DegenerateDataError("logreg needs at least two distinct labels")
        self.n_features_ = X.shape[1]
        if self.spec.standardize:
            self.center_ = X.mean(axis=0)
            scale = X.std(axis=0)
            scale[scale == 0.0] = 1.0
            self.scale_ = scale
        else:
            self.center_ = np.zeros(self.n_features_)
            self.scale_ = np.ones(self.n_features_)
        Xs = (X - self.center_) / self.scale_
        k = len(self.classes_)
        self.weights_ = np.zeros((k, self.n_features_))
        self.intercepts_ = np.zeros(k)
        self.grad_norms_ = np.zeros(k)
        self.objective_histories_: list[list[float]] = []
        for c in range(k):
            target = (codes == c).astype(np.float64)
            w, b, gnorm, history = self._fit_binary(Xs, target)
            self.weights_[c] = w
            self.intercepts_[c] = b
            self.grad_norms_[c] = gnorm
            self.objective_histories_.append(history)
        return self

    def _objective_grad(self, Xs, target, w, b):
        n = Xs.shape[0]
        lam = self.spec.l2_strength
        s = Xs @ w + b
        p = expit(s)
        # log(1 + exp(s)) - y*s, computed stably
        nll = np.mean(np.logaddexp(0.0, s) - target * s)
        obj = nll + 0.5 * lam / n * float(w @ w)
        resid = p - target
        grad_w = Xs.T @ resid / n + (lam / n) * w
        grad_b = float(resid.mean())
        return obj, grad_w, grad_b, p

    def _fit_binary(self, Xs, target):
        n, d = Xs.shape
        lam = self.spec.l2_strength
        w = np.zeros(d)
        b = 0.0
        obj, grad_w, grad_b, p = self._objective_grad(Xs, target, w, b)
        history = [obj]
        for _ in range(self.spec.max_iter):
            gnorm = float(np.sqrt(grad_w @ grad_w + grad_b * grad_b))
            if gnorm <= self.spec.tol:
                break
            weights = p * (1.0 - p)
            Xw = Xs * weights[:, None]
            H = np.empty((d + 1, d + 1))
            H[:d, :d] = Xs.T @ Xw / n
            H[:d, :d].flat[:: d + 1] += lam / n
            H[:d, d] = Xw.sum(axis=0) / n
            H[d, :d] = H[:d, d]
            H[d, d] = weights.sum() / n
            g = np.concatenate([grad_w, [grad_b]])
            try:
                step = np.linalg.solve(H + 1e-12 * np.eye(d + 1), -g)
            except np.linalg.LinAlgError:
                step = -g
            # backtracking line search keeps the objective monotone
            t = 1.0
            for _ in range(50):
                w_new = w + t * step[:d]
                b_new = b + t * step[d]
                obj_new, grad_w_new, grad_b_new, p_new = self._objective_grad(Xs, target, w_new, b_new)
                if obj_new <= obj + 1e-4 * t * float(g @ step):
                    break
                t *= 0.5
            w, b, obj, grad_w, grad_b, p = w_new, b_new, obj_new, grad_w_new, grad_b_new, p_new
            history.append(obj)
        gnorm = float(np.sqrt(grad_w @ grad_w + grad_b * grad_b))
        return w, b, gnorm, history

    def decision_scores(self, X) -> np.ndarray:
        X = self._check_predict_input(X)
        Xs = (X - self.center_) / self.scale_
        return Xs @ self.weights_.T + self.intercepts_

    def predict_proba(self, X) -> np.ndarray:
        scores = expit(self.decision_scores(X))
        return scores / scores.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return np.array(self.classes_, dtype=object)[np.argmax(proba, axis=1)]

    def _check_predict_input(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise DataError(f"expected {self.n_features_} features, got shape {X.shape}")
        return X


class RandomForest:
    """Bootstrap ensemble of gini CARTs; predicts by majority vote over trees."""

    kind = "forest"

    def __init__(self, spec: ModelSpec | None = None):
        self.spec = spec or ModelSpec("forest")
        self.classes_: list[str] = []

    def fit(self, X, y) -> "RandomForest":
        X, y = _check_training_input(X, y)
        if X.shape[0] < 2:
            raise DataError("forest needs at least two samples")
        self.classes_, codes = _class_codes(y)
        if len(self.classes_) < 2:
            raise DegenerateDataError("forest needs at least two distinct labels")
        n, d = X.shape
        self.n_features_ = d
        mtry = max(1, int(np.floor(np.sqrt(d))))
        max_depth = -1 if self.spec.max_depth is None else int(self.spec.max_depth)
        k = len(self.classes_)
        features, thresholds, lefts, rights, leaves = [], [], [], [], []
        importance_sum = np.zeros(d)
        offsets = [0]
        for t in range(self.spec.n_trees):
            seed = np.uint64(mix64(self.spec.rng_seed, t))
            fe, th, le, ri, lf, imp, n_nodes = _forest_core.grow_tree(
                X, codes, k, seed, mtry, max_depth, self.spec.min_samples_leaf
            )
            base = offsets[-1]
            # child pointers become global node ids once trees are concatenated
            features.append(fe)
            thresholds.append(th)
            lefts.append(np.where(le >= 0, le + base, le))
            rights.append(np.where(ri >= 0, ri + base, ri))
            leaves.append(lf)
            importance_sum += imp
            offsets.append(base + n_nodes)
        self.tree_feature_ = np.concatenate(features)
        self.tree_threshold_ = np.concatenate(thresholds)
        self.tree_left_ = np.concatenate(lefts)
        self.tree_right_ = np.concatenate(rights)
        self.tree_leaf_ = np.concatenate(leaves)
        self.tree_offsets_ = np.array(offsets, dtype=np.int64)
        mean_imp = importance_sum / self.spec.n_trees
        total = mean_imp.sum()
        self.feature_importances_ = mean_imp / total if total > 0 else mean_imp
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_predict_input(X)
        votes = _forest_core.forest_votes(
            X, self.tree_feature_, self.tree_threshold_, self.tree_left_,
            self.tree_right_, self.tree_leaf_, self.tree_offsets_, len(self.classes_),
        )
        return votes / self.spec.n_trees

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return np.array(self.classes_, dtype=object)[np.argmax(proba, axis=1)]

    def _check_predict_input(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise DataError(f"expected {self.n_features_} features, got shape {X.shape}")
        return X


_MODEL_CLASSES = {
    "baseline": MajorityBaseline,
    "logreg": LogisticRegressionOVR,
    "forest": RandomForest,
}


def train(spec: ModelSpec, X: np.ndarray, y: np.ndarray):
    """Fit the classifier described by ``spec``."""
    model = _MODEL_CLASSES[spec.kind](spec)
    return model.fit(X, y)


def save_model(model, path: Path | str) -> None:
    """Serialize a fitted model to versioned JSON; loading restores identical predictions."""
    state = {
        "version": PERSISTENCE_VERSION,
        "kind": model.kind,
        "spec": asdict(model.spec),
        "classes": model.classes_,
        "n_features": model.n_features_,
    }
    if model.kind == "baseline":
        state["priors"] = model.priors_.tolist()
    elif model.kind == "logreg":
        state["center"] = model.center_.tolist()
        state["scale"] = model.scale_.tolist()
        state["weights"] = model.weights_.tolist()
        state["intercepts"] = model.intercepts_.tolist()
        state["grad_norms"] = model.grad_norms_.tolist()
    elif model.kind == "forest":
        state["tree_feature"] = model.tree_feature_.tolist()
        state["tree_threshold"] = model.tree_threshold_.tolist()
        state["tree_left"] = model.tree_left_.tolist()
        state["tree_right"] = model.tree_right_.tolist()
        state["tree_leaf"] = model.tree_leaf_.tolist()
        state["tree_offsets"] = model.tree_offsets_.tolist()
        state["feature_importances"] = model.feature_importances_.tolist()
    Path(path).write_text(json.dumps(state))


def load_model(path: Path | str):
    """Restore a model written by :func:`save_model`."""
    state = json.loads(Path(path).read_text())
    if state.get("version") != PERSISTENCE_VERSION:
        raise DataError(f"unsupported model file version {state.get('version')!r}")
    spec = ModelSpec(**state["spec"])
    model = _MODEL_CLASSES[state["kind"]](spec)
    model.classes_ = list(state["classes"])
    model.n_features_ = int(state["n_features"])
    if spec.kind == "baseline":
        model.priors_ = np.array(state["priors"])
    elif spec.kind == "logreg":
        model.center_ = np.array(state["center"])
        model.scale_ = np.array(state["scale"])
        model.weights_ = np.array(state["weights"])
        model.intercepts_ = np.array(state["intercepts"])
        model.grad_norms_ = np.array(state["grad_norms"])
    elif spec.kind == "forest":
        model.tree_feature_ = np.array(state["tree_feature"], dtype=np.int64)
        model.tree_threshold_ = np.array(state["tree_threshold"], dtype=np.float64)
        model.tree_left_ = np.array(state["tree_left"], dtype=np.int64)
        model.tree_right_ = np.array(state["tree_right"], dtype=np.int64)
        model.tree_leaf_ = np.array(state["tree_leaf"], dtype=np.int64)
        model.tree_offsets_ = np.array(state["tree_offsets"], dtype=np.int64)
        model.feature_importances_ = np.array(state["feature_importances"])
    return model
