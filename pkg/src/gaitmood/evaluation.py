"""Metrics, evaluation protocols, user lift, and feature-importance reporting.

Protocols
---------
``cv``        stratified k-fold cross-validation repeated r times per user
              (personal models). Per repeat the windows are shuffled with a
              seed derived from (master_seed, participant, repeat) and dealt
              per class round-robin into folds, so per-fold class counts stay
              within one sample of proportional.
``block_cv``  each class's windows are split, in temporal order, into
              folds/2 contiguous blocks; every fold holds out one
              single-class block and trains on everything else. Defeats
              neighborhood bias from overlapping windows. Binary tasks only.
``louo``      leave-one-user-out within a condition.

Every model in a run is evaluated on byte-identical fold assignments, so the
user lift (model accuracy minus majority-baseline accuracy) is fold-paired.
Training seeds derive from (master_seed, participant, protocol, repeat,
fold, model kind) through :func:`gaitmood.rng.mix64`; results are therefore
identical no matter how the per-user work is scheduled.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConfigError, DegenerateDataError, ProtocolError
from .features import FeatureTable
from .models import ModelSpec, train
from .rng import generator, mix64

PROTOCOLS = ("cv", "block_cv", "louo")
TASKS = {"happy_vs_sad": ("happy", "sad"), "happy_sad_neutral": ("happy", "neutral", "sad")}


@dataclass(frozen=True)
class EvalConfig:
    """Cross-validation and permutation-test settings."""

    folds: int = 10
    repeats: int = 10
    stratified: bool = True
    master_seed: int = 0
    permutations: int = 10000

    def __post_init__(self) -> None:
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if self.permutations < 1000:
            raise ConfigError(f"permutations must be >= 1000, got {self.permutations}")


# ---------------------------------------------------------------------------
# metrics


def accuracy(y_true, y_pred) -> float:
    """Fraction of exact matches."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ConfigError(f"accuracy needs equal-length non-empty inputs, got {y_true.shape} vs {y_pred.shape}")
    return float(np.mean(y_true == y_pred))


def macro_f1(y_true, y_pred, classes: Iterable[str]) -> float:
    """Unweighted mean of per-class F1; a class with no true and no predicted positives scores 0."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise ConfigError("macro_f1 needs non-empty inputs")
    classes = list(classes)
    if not set(np.unique(y_true)) <= set(classes):
        raise ConfigError("classes must cover all labels in y_true")
    scores = []
    for c in classes:
        tp = float(np.sum((y_pred == c) & (y_true == c)))
        fp = float(np.sum((y_pred == c) & (y_true != c)))
        fn = float(np.sum((y_pred != c) & (y_true == c)))
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2 * tp / denom)
    return float(np.mean(scores))


def roc_auc(y_true, scores, positive) -> float:
    """Mann-Whitney AUC, P(score+ > score-) + P(tie)/2, via midranks."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    pos = y_true == positive
    n_pos = int(pos.sum())
    n_neg = int(pos.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataError("ROC AUC is undefined when y_true has a single class")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def user_lift(model_accuracy: float, baseline_accuracy: float) -> float:
    """Personal-model accuracy minus personal-baseline accuracy; may be negative."""
    return model_accuracy - baseline_accuracy


# ---------------------------------------------------------------------------
# results


@dataclass
class MetricSummary:
    mean: float
    std: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}


@dataclass
class UserResult:
    """Per-user, per-protocol outcome over every evaluated model."""

    participant_id: str
    condition: int
    protocol: str
    n_windows: int
    class_counts: dict[str, int]
    metrics: dict[str, dict[str, MetricSummary]]   # kind -> metric -> summary
    lifts: dict[str, float]                        # kind (non-baseline) -> mean lift
    importances: dict[str, list[float]] = field(default_factory=dict)
    fold_details: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        doc = {
            "participant": self.participant_id,
            "condition": self.condition,
            "protocol": self.protocol,
            "n_windows": self.n_windows,
            "class_counts": dict(sorted(self.class_counts.items())),
            "metrics": {
                kind: {name: s.to_dict() for name, s in sorted(per.items())}
                for kind, per in sorted(self.metrics.items())
            },
            "lift": dict(sorted(self.lifts.items())),
        }
        if self.importances:
            doc["importances"] = {k: list(v) for k, v in sorted(self.importances.items())}
        if self.fold_details:
            doc["fold_details"] = self.fold_details
        return doc


@dataclass
class ConditionReport:
    """Unweighted across-user aggregate for one condition."""

    condition: int
    protocol: str
    n_users: int
    models: dict[str, dict[str, MetricSummary]]
    mean_lift: dict[str, float]
    p_value: dict[str, float | None]
    user_lifts: dict[str, list[tuple[str, float]]]

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "protocol": self.protocol,
            "n_users": self.n_users,
            "models": {
                kind: {name: s.to_dict() for name, s in sorted(per.items())}
                for kind, per in sorted(self.models.items())
            },
            "mean_lift": dict(sorted(self.mean_lift.items())),
            "p_value": dict(sorted(self.p_value.items())),
            "user_lifts": {k: [[p, v] for p, v in lifts] for k, lifts in sorted(self.user_lifts.items())},
        }


@dataclass
class StudyReport:
    task: str
    protocol: str
    feature_set: str
    config: EvalConfig
    users: list[UserResult]
    conditions: list[ConditionReport]

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "task": self.task,
            "protocol": self.protocol,
            "feature_set": self.feature_set,
            "config": {
                "folds": self.config.folds,
                "repeats": self.config.repeats,
                "stratified": self.config.stratified,
                "master_seed": self.config.master_seed,
                "permutations": self.config.permutations,
            },
            "users": [u.to_dict() for u in self.users],
            "conditions": [c.to_dict() for c in self.conditions],
        }


# ---------------------------------------------------------------------------
# fold construction


def stratified_fold_ids(labels: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Shuffle, then deal each class round-robin: per-fold class counts stay within +-1."""
    n = labels.shape[0]
    fold_ids = np.empty(n, dtype=np.int64)
    perm = rng.permutation(n)
    permuted_labels = labels[perm]
    for c in sorted(set(labels.tolist())):
        members = perm[permuted_labels == c]
        fold_ids[members] = np.arange(members.size) % folds
    return fold_ids


def contiguous_blocks(n: int, blocks: int) -> list[tuple[int, int]]:
    """Balanced contiguous partition of range(n): the first n % blocks get the extra sample."""
    base, extra = divmod(n, blocks)
    out = []
    start = 0
    for b in range(blocks):
        size = base + (1 if b < extra else 0)
        out.append((start, start + size))
        start += size
    return out


def _summaries(values: dict[str, dict[str, list[float]]]) -> dict[str, dict[str, MetricSummary]]:
    # metrics with no defined evaluations (e.g. AUC on single-class folds) are omitted
    return {
        kind: {name: MetricSummary(float(np.mean(v)), float(np.std(v))) for name, v in per.items() if v}
        for kind, per in values.items()
    }


def _evaluate_folds(
    X: np.ndarray,
    y: np.ndarray,
    fold_masks: list[tuple[np.ndarray, dict]],
    specs: list[ModelSpec],
    seed_for: callable,
    classes: list[str],
) -> tuple[dict, dict, dict, list[dict]]:
    """Train/test every spec on every fold; returns raw metric lists, lifts, importances, details."""
    binary = len(classes) == 2
    positive = classes[-1]
    raw: dict[str, dict[str, list[float]]] = {
        s.kind: {"accuracy": [], "macro_f1": [], **({"roc_auc": []} if binary else {})} for s in specs
    }
    importance_acc: dict[str, list[np.ndarray]] = {}
    details: list[dict] = []
    for fold_index, (test_mask, info) in enumerate(fold_masks):
        train_mask = ~test_mask
        X_train, y_train = X[train_mask], y[train_mask]
        X_test, y_test = X[test_mask], y[test_mask]
        fold_acc: dict[str, float] = {}
        for spec in specs:
            model = train(spec.with_seed(seed_for(fold_index, info, spec.kind)), X_train, y_train)
            y_pred = model.predict(X_test)
            acc = accuracy(y_test, y_pred)
            raw[spec.kind]["accuracy"].append(acc)
            raw[spec.kind]["macro_f1"].append(macro_f1(y_test, y_pred, classes))
            if binary and "roc_auc" in raw[spec.kind]:
                proba = model.predict_proba(X_test)
                scores = proba[:, model.classes_.index(positive)]
                try:
                    raw[spec.kind]["roc_auc"].append(roc_auc(y_test, scores, positive))
                except DegenerateDataError:
                    pass  # single-class test fold (block protocol): AUC undefined, skipped
            fold_acc[spec.kind] = acc
            if spec.kind == "forest":
                importance_acc.setdefault("forest", []).append(model.feature_importances_)
        if info:
            details.append({**info, "accuracy": dict(sorted(fold_acc.items()))})
    lifts = {}
    if any(s.kind == "baseline" for s in specs):
        base_mean = float(np.mean(raw["baseline"]["accuracy"]))
        for spec in specs:
            if spec.kind != "baseline":
                lifts[spec.kind] = user_lift(float(np.mean(raw[spec.kind]["accuracy"])), base_mean)
    importances = {
        kind: np.mean(np.stack(vecs), axis=0).tolist() for kind, vecs in importance_acc.items()
    }
    return raw, lifts, importances, details


def _ensure_baseline(specs: list[ModelSpec]) -> list[ModelSpec]:
    if not any(s.kind == "baseline" for s in specs):
        specs = [ModelSpec("baseline"), *specs]
    return specs


def stratified_repeated_cv(
    table: FeatureTable, specs: list[ModelSpec], config: EvalConfig, participant_id: str
) -> UserResult:
    """Personal-model protocol: stratified ``folds``-fold CV repeated ``repeats`` times."""
    sub = table.for_participant(participant_id)
    if len(sub) == 0:
        raise ProtocolError(f"no windows for participant {participant_id}")
    specs = _ensure_baseline(specs)
    y = sub.labels
    classes = sorted(set(y.tolist()))
    counts = {c: int(np.sum(y == c)) for c in classes}
    if min(counts.values()) < config.folds:
        raise ProtocolError(
            f"participant {participant_id}: every class needs >= {config.folds} windows, got {counts}"
        )
    raw_all: dict[str, dict[str, list[float]]] = {}
    lift_repeat: dict[str, list[float]] = {}
    imp_all: dict[str, list[list[float]]] = {}
    for repeat in range(config.repeats):
        rng = generator(config.master_seed, participant_id, "cv", repeat)
        fold_ids = stratified_fold_ids(y, config.folds, rng)
        fold_masks = [(fold_ids == f, {}) for f in range(config.folds)]

        def seed_for(fold_index, info, kind, _repeat=repeat):
            return mix64(config.master_seed, participant_id, "cv", _repeat, fold_index, kind)

        raw, lifts, importances, _ = _evaluate_folds(sub.X, y, fold_masks, specs, seed_for, classes)
        for kind, per in raw.items():
            for name, vals in per.items():
                raw_all.setdefault(kind, {}).setdefault(name, []).extend(vals)
        for kind, lift in lifts.items():
            lift_repeat.setdefault(kind, []).append(lift)
        for kind, vec in importances.items():
            imp_all.setdefault(kind, []).append(vec)
    mean_lifts = {k: float(np.mean(v)) for k, v in lift_repeat.items()}
    mean_imp = {k: np.mean(np.array(v), axis=0).tolist() for k, v in imp_all.items()}
    return UserResult(
        participant_id=participant_id,
        condition=int(sub.conditions[0]),
        protocol="cv",
        n_windows=len(sub),
        class_counts=counts,
        metrics=_summaries(raw_all),
        lifts=mean_lifts,
        importances=mean_imp,
    )


def block_cv(
    table: FeatureTable, specs: list[ModelSpec], config: EvalConfig, participant_id: str
) -> UserResult:
    """Emotion-block protocol: hold out one contiguous single-class block per fold."""
    sub = table.for_participant(participant_id)
    if len(sub) == 0:
        raise ProtocolError(f"no windows for participant {participant_id}")
    specs = _ensure_baseline(specs)
    y = sub.labels
    classes = sorted(set(y.tolist()))
    if len(classes) != 2:
        raise ProtocolError(f"block_cv is binary-only, got classes {classes}")
    blocks_per_class = config.folds // len(classes)
    counts = {c: int(np.sum(y == c)) for c in classes}
    if min(counts.values()) < max(5, blocks_per_class):
        raise ProtocolError(
            f"participant {participant_id}: every class needs >= 5 windows for block_cv, got {counts}"
        )
    fold_masks = []
    for c in classes:
        # row order is canonical, so per-class order is temporal
        class_rows = np.flatnonzero(y == c)
        for b, (lo, hi) in enumerate(contiguous_blocks(class_rows.size, blocks_per_class)):
            mask = np.zeros(len(sub), dtype=bool)
            mask[class_rows[lo:hi]] = True
            fold_masks.append((mask, {"test_class": c, "block": b, "n_test": int(hi - lo)}))

    def seed_for(fold_index, info, kind):
        return mix64(config.master_seed, participant_id, "block", info["test_class"], info["block"], kind)

    raw, lifts, importances, details = _evaluate_folds(sub.X, y, fold_masks, specs, seed_for, classes)
    return UserResult(
        participant_id=participant_id,
        condition=int(sub.conditions[0]),
        protocol="block_cv",
        n_windows=len(sub),
        class_counts=counts,
        metrics=_summaries(raw),
        lifts=lifts,
        importances=importances,
        fold_details=details,
    )


def louo_cv(table: FeatureTable, specs: list[ModelSpec], config: EvalConfig, condition: int) -> list[UserResult]:
    """Leave-one-user-out within one condition; one result per held-out user."""
    mask = table.conditions == condition
    cond = FeatureTable(
        table.feature_names, table.X[mask], table.labels[mask],
        table.participant_ids[mask], table.conditions[mask], table.window_indices[mask],
    )
    users = sorted(set(cond.participant_ids.tolist()))
    if len(users) < 2:
        raise ProtocolError(f"louo needs >= 2 users in condition {condition}, got {len(users)}")
    specs = _ensure_baseline(specs)
    classes = sorted(set(cond.labels.tolist()))
    results = []
    for held_out in users:
        test_mask = cond.participant_ids == held_out
        fold_masks = [(test_mask, {})]

        def seed_for(fold_index, info, kind, _user=held_out):
            return mix64(config.master_seed, "louo", condition, _user, kind)

        raw, lifts, importances, _ = _evaluate_folds(cond.X, cond.labels, fold_masks, specs, seed_for, classes)
        y_user = cond.labels[test_mask]
        results.append(
            UserResult(
                participant_id=held_out,
                condition=condition,
                protocol="louo",
                n_windows=int(test_mask.sum()),
                class_counts={c: int(np.sum(y_user == c)) for c in classes},
                metrics=_summaries(raw),
                lifts=lifts,
                importances=importances,
            )
        )
    return results


# ---------------------------------------------------------------------------
# user lift and aggregation


def permutation_test_mean_gt_zero(lifts, permutations: int = 10000, seed: int = 0) -> float:
    """Sign-flip test of mean(lifts) > 0: p = (1 + #{permuted mean >= observed}) / (B + 1).

    Lifts are sorted before the sign draws, so the p-value does not depend on
    input order.
    """
    lifts = np.sort(np.asarray(lifts, dtype=np.float64))
    n = lifts.size
    if n < 2:
        raise ProtocolError(f"permutation test needs >= 2 lifts, got {n}")
    observed = lifts.mean()
    rng = np.random.Generator(np.random.PCG64(seed))
    signs = rng.integers(0, 2, size=(permutations, n)).astype(np.float64) * 2.0 - 1.0
    permuted = (signs * lifts).mean(axis=1)
    return float((1 + np.sum(permuted >= observed)) / (permutations + 1))


def condition_report(
    users: list[UserResult], config: EvalConfig, condition: int, protocol: str
) -> ConditionReport:
    """Unweighted means across a condition's users, plus lift permutation p-values."""
    members = [u for u in users if u.condition == condition]
    kinds = sorted({k for u in members for k in u.metrics})
    models: dict[str, dict[str, MetricSummary]] = {}
    for kind in kinds:
        names = sorted({name for u in members for name in u.metrics.get(kind, {})})
        models[kind] = {
            name: MetricSummary(
                float(np.mean([u.metrics[kind][name].mean for u in members])),
                float(np.std([u.metrics[kind][name].mean for u in members])),
            )
            for name in names
        }
    mean_lift: dict[str, float] = {}
    p_value: dict[str, float | None] = {}
    user_lifts: dict[str, list[tuple[str, float]]] = {}
    for kind in kinds:
        if kind == "baseline":
            continue
        lifts = [(u.participant_id, u.lifts[kind]) for u in members if kind in u.lifts]
        if not lifts:
            continue
        values = [v for _, v in lifts]
        user_lifts[kind] = lifts
        mean_lift[kind] = float(np.mean(values))
        if len(values) >= 2:
            p_value[kind] = permutation_test_mean_gt_zero(
                values, config.permutations, mix64(config.master_seed, "lift", condition, kind)
            )
        else:
            p_value[kind] = None
    return ConditionReport(
        condition=condition,
        protocol=protocol,
        n_users=len(members),
        models=models,
        mean_lift=mean_lift,
        p_value=p_value,
        user_lifts=user_lifts,
    )


# ---------------------------------------------------------------------------
# study orchestration


def _user_job(args):
    protocol, table, specs, config, pid = args
    if protocol == "cv":
        return stratified_repeated_cv(table, specs, config, pid)
    return block_cv(table, specs, config, pid)


def evaluate_study(
    table: FeatureTable,
    specs: list[ModelSpec],
    config: EvalConfig,
    task: str = "happy_vs_sad",
    protocol: str = "cv",
    feature_set: str | None = None,
    jobs: int = 1,
) -> StudyReport:
    """Run one protocol over every participant and aggregate per condition."""
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {sorted(TASKS)}")
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    if protocol == "block_cv" and task != "happy_vs_sad":
        raise ConfigError("block_cv holds out single-emotion blocks and is binary-only; use task=happy_vs_sad")
    restricted = table.restrict_labels(TASKS[task])
    if feature_set is None:
        feature_set = {107: "acc_gyro_hr", 56: "acc_hr", 55: "acc_only"}.get(
            len(restricted.feature_names), "custom"
        )
    specs = _ensure_baseline(specs)
    if protocol == "louo":
        users: list[UserResult] = []
        for condition in sorted(set(restricted.conditions.tolist())):
            users.extend(louo_cv(restricted, specs, config, int(condition)))
    else:
        pids = sorted(set(restricted.participant_ids.tolist()))
        jobs_args = [
            (protocol, restricted.for_participant(pid), specs, config, pid) for pid in pids
        ]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                users = list(pool.map(_user_job, jobs_args))
        else:
            users = [_user_job(a) for a in jobs_args]
        users.sort(key=lambda u: u.participant_id)
    conditions = [
        condition_report(users, config, int(c), protocol)
        for c in sorted({u.condition for u in users})
    ]
    return StudyReport(
        task=task,
        protocol=protocol,
        feature_set=feature_set,
        config=config,
        users=users,
        conditions=conditions,
    )


# ---------------------------------------------------------------------------
# feature importances


@dataclass
class ImportanceReport:
    """Across-user distribution of per-user normalized forest importances."""

    feature_names: list[str]              # sorted by median, descending
    quantiles: np.ndarray                 # (d, 5): min, q25, median, q75, max
    top: list[str]                        # first `top_n` names
    per_user: dict[str, list[float]]      # participant -> normalized importances (report order)

    def to_dict(self) -> dict:
        return {
            "features": [
                {
                    "name": name,
                    "min": float(self.quantiles[i, 0]),
                    "q25": float(self.quantiles[i, 1]),
                    "median": float(self.quantiles[i, 2]),
                    "q75": float(self.quantiles[i, 3]),
                    "max": float(self.quantiles[i, 4]),
                    "top": name in self.top,
                }
                for i, name in enumerate(self.feature_names)
            ],
            "per_user": {k: list(v) for k, v in sorted(self.per_user.items())},
        }


def importance_report(
    per_user_importances: dict[str, np.ndarray | list[float]],
    feature_names: Iterable[str],
    top_n: int = 30,
) -> ImportanceReport:
    """Normalize each user's mean fold importances to max 1, then summarize across users.

    A value of 1.0 marks a user's single most important feature; the report
    is sorted by across-user median, descending.
    """
    if not per_user_importances:
        raise ProtocolError("importance report needs at least one user's forest importances")
    names = list(feature_names)
    normalized: dict[str, np.ndarray] = {}
    for pid, vec in per_user_importances.items():
        v = np.asarray(vec, dtype=np.float64)
        if v.shape != (len(names),):
            raise ConfigError(f"importance vector for {pid} has shape {v.shape}, expected ({len(names)},)")
        peak = v.max()
        normalized[pid] = v / peak if peak > 0 else v
    stacked = np.stack([normalized[pid] for pid in sorted(normalized)])  # (users, d)
    quantiles = np.percentile(stacked, [0, 25, 50, 75, 100], axis=0).T  # (d, 5)
    order = np.argsort(-quantiles[:, 2], kind="stable")
    sorted_names = [names[i] for i in order]
    return ImportanceReport(
        feature_names=sorted_names,
        quantiles=quantiles[order],
        top=sorted_names[: min(top_n, len(sorted_names))],
        per_user={pid: normalized[pid][order].tolist() for pid in sorted(normalized)},
    )
