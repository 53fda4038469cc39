"""Stacked ensemble, cross-validated evaluation, and result reporting.

The stack trains four base classifiers, builds their out-of-fold
probability predictions as meta-features, and fits a logistic meta
model on those.  Evaluation runs participant-grouped cross-validation
with all preprocessing fitted inside each training fold: scaling,
label completion, rebalancing, and hyperparameter search never see the
test rows.
"""

import hashlib
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .balance import (
    DEFAULT_ALPHA,
    DEFAULT_SMOTE_K,
    DEFAULT_SPREAD_K,
    label_spread,
    resample,
)
from .dataset import FEATURE_SETS, apply_scaler, confusion_median, fit_scaler
from .errors import (
    InvalidFeatureSet,
    MalformedLine,
    NoLabeledRows,
    SingleClassInput,
    TooFewGroups,
    TooFewSamples,
)
from .learners import LogisticRegression, build_model, load_model
from .learners.store import read_fields, write_fields

logger = logging.getLogger(__name__)

TASKS = ("correctness", "confusion")
BASE_ORDER = ("gbt", "svm", "lr", "rf")
METHOD_ORDER = ("gbt", "svm", "lr", "rf", "stack")
FEATURE_SET_TITLES = {"eeg": "EEG", "eeg_nlp": "EEG+NLP",
                      "eeg_nlp_con": "EEG+NLP+CON"}

DEFAULT_GRIDS = {
    "lr": {"l2": (0.1, 1.0, 10.0)},
    "rf": {"max_depth": (4, 8, 16)},
    "svm": {"penalty": (0.1, 1.0, 10.0)},
    "gbt": {"learning_rate": (0.05, 0.1), "max_depth": (2, 3)},
}

DEFAULT_OOF_FOLDS = 5
DEFAULT_INNER_FOLDS = 3
DEFAULT_OUTER_FOLDS = 10


def accuracy(y_true, y_pred):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    return float(np.mean(y_true == y_pred))


def f1_positive(y_true, y_pred):
    """F1 of the positive class; 0 when no positives exist anywhere."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2.0 * tp / denom


def round_robin_folds(n, n_folds, seed):
    """Shuffle row indices and deal them into n_folds groups.

    The assignment depends only on n and the seed, never on labels or
    features: a fold layout that peeked at y would let one row's label
    influence which model predicts it.
    """
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    if n < n_folds:
        raise TooFewSamples(f"{n} rows cannot fill {n_folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(perm[i::n_folds]) for i in range(n_folds)]


def grouped_kfold(groups, n_folds=DEFAULT_OUTER_FOLDS, seed=0):
    """Deal whole groups into folds; returns (train_idx, test_idx) pairs.

    Groups are shuffled by the seed and assigned round-robin, so fold
    sizes differ by at most one group and no group ever spans folds.
    """
    groups = list(groups)
    unique = sorted(set(groups))
    if len(unique) < n_folds:
        raise TooFewGroups(
            f"{len(unique)} groups cannot fill {n_folds} folds")
    perm = np.random.default_rng(seed).permutation(len(unique))
    fold_of_group = {}
    for j, gi in enumerate(perm):
        fold_of_group[unique[gi]] = j % n_folds
    row_fold = np.array([fold_of_group[g] for g in groups])
    out = []
    for f in range(n_folds):
        test = np.flatnonzero(row_fold == f)
        train = np.flatnonzero(row_fold != f)
        out.append((train, test))
    return out


class StackedEnsemble:
    """Four base classifiers blended by a logistic meta-model.

    Meta-features are strictly out-of-fold: the bases that predict a
    row never saw it during training.  After building those, the bases
    are refit on all rows for prediction time.

    The meta model sees four probability columns in [0, 1], so its
    ridge penalty must stay weak; at 1.0 the averaged-loss objective
    pins the weights near zero and the intercept alone decides, which
    turns the whole stack into a majority-class predictor on any
    imbalanced input.
    """

    kind = "stack"

    def __init__(self, base_params=None, n_oof_folds=DEFAULT_OOF_FOLDS,
                 seed=0, meta_l2=0.01):
        base_params = base_params or {}
        self.base_params = {m: dict(base_params.get(m, {}))
                            for m in BASE_ORDER}
        self.n_oof_folds = int(n_oof_folds)
        self.seed = int(seed)
        self.meta_l2 = float(meta_l2)
        self.bases = None
        self.meta = None
        self.oof = None

    def params(self):
        return {"base_params": {m: dict(p)
                                for m, p in self.base_params.items()},
                "n_oof_folds": self.n_oof_folds, "seed": self.seed,
                "meta_l2": self.meta_l2}

    def clone(self):
        return type(self)(**self.params())

    def _make_base(self, method):
        params = dict(self.base_params.get(method, {}))
        if method in ("rf", "svm") and "seed" not in params:
            idx = BASE_ORDER.index(method)
            params["seed"] = int(
                np.random.default_rng([self.seed, idx]).integers(2 ** 31 - 1))
        return build_model(method, **params)

    def fit(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y)
        n = len(y)
        folds = round_robin_folds(n, self.n_oof_folds, self.seed)
        oof = np.zeros((n, len(BASE_ORDER)))
        for fold in folds:
            train = np.setdiff1d(np.arange(n), fold)
            if len(np.unique(y[train])) < 2:
                raise SingleClassInput(
                    "an out-of-fold training split lost one class; "
                    "the data is too small or too skewed to stack")
            for bi, method in enumerate(BASE_ORDER):
                model = self._make_base(method).fit(x[train], y[train])
                oof[fold, bi] = model.predict_proba(x[fold])
        self.oof = oof
        self.meta = LogisticRegression(l2=self.meta_l2).fit(oof, y)
        self.bases = [self._make_base(m).fit(x, y) for m in BASE_ORDER]
        return self

    def base_features(self, x):
        return np.column_stack([b.predict_proba(x) for b in self.bases])

    def predict_proba(self, x):
        return self.meta.predict_proba(self.base_features(x))

    def predict(self, x):
        return (self.predict_proba(x) >= 0.5).astype(int)

    def save(self, path):
        fields = {"n_oof_folds": self.n_oof_folds, "seed": self.seed,
                  "meta_l2": self.meta_l2}
        for name, value in self.meta.to_fields().items():
            fields[f"meta.{name}"] = value
        for bi, (method, model) in enumerate(zip(BASE_ORDER, self.bases)):
            fields[f"base{bi}.method"] = method
            for name, value in model.to_fields().items():
                fields[f"base{bi}.{name}"] = value
        write_fields(path, self.kind, fields)

    @classmethod
    def load(cls, path):
        from .errors import ModelFormatError
        from .learners import MODEL_TYPES

        kind, fields = read_fields(path)
        if kind != cls.kind:
            raise ModelFormatError(f"{path}: expected a stack, got {kind!r}")
        model = cls(n_oof_folds=fields["n_oof_folds"], seed=fields["seed"],
                    meta_l2=fields["meta_l2"])
        model.meta = LogisticRegression.load_fields(
            _subfields(fields, "meta."))
        model.bases = []
        for bi in range(len(BASE_ORDER)):
            method = fields[f"base{bi}.method"]
            sub = _subfields(fields, f"base{bi}.")
            sub.pop("method")
            base = MODEL_TYPES[method].load_fields(sub)
            model.bases.append(base)
            model.base_params[method] = base.params()
        return model


def _subfields(fields, prefix):
    return {name[len(prefix):]: value for name, value in fields.items()
            if name.startswith(prefix)}


@dataclass(frozen=True)
class GridResult:
    best_params: dict
    scores: tuple  # ((params, mean_f1), ...) in declaration order


def grid_search(x, y, method, grid=None, inner_folds=DEFAULT_INNER_FOLDS,
                seed=0):
    """Exhaustive search maximizing mean F1 over internal folds.

    Ties keep the earliest combination in declaration order.  All
    combinations see the same folds; folds whose training part lost a
    class are dropped for everyone alike.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if grid is None:
        grid = DEFAULT_GRIDS[method]
    names = list(grid)
    combos = [dict(zip(names, values))
              for values in itertools.product(*(grid[n] for n in names))]

    folds = round_robin_folds(len(y), inner_folds, seed)
    rng = np.random.default_rng([seed, 1])
    fold_seeds = [int(s) for s in rng.integers(0, 2 ** 31 - 1, len(folds))]
    usable = []
    for fold, fseed in zip(folds, fold_seeds):
        train = np.setdiff1d(np.arange(len(y)), fold)
        if len(np.unique(y[train])) < 2 or len(fold) == 0:
            logger.info("grid search: dropping a degenerate inner fold")
            continue
        usable.append((train, fold, fseed))
    if not usable:
        raise SingleClassInput("every inner fold lost a class")

    best = None
    best_score = -1.0
    scores = []
    for combo in combos:
        f1s = []
        for train, fold, fseed in usable:
            params = dict(combo)
            if method in ("rf", "svm"):
                params.setdefault("seed", fseed)
            model = build_model(method, **params).fit(x[train], y[train])
            f1s.append(f1_positive(y[fold], model.predict(x[fold])))
        mean_f1 = float(np.mean(f1s))
        scores.append((combo, mean_f1))
        if mean_f1 > best_score:
            best_score = mean_f1
            best = combo
    return GridResult(best_params=best, scores=tuple(scores))


@dataclass(frozen=True)
class FoldScore:
    fold: int
    n_train: int
    n_test: int
    accuracy: float
    f1: float
    participants: tuple = ()   # test-side participant ids


@dataclass(frozen=True)
class TaskResult:
    task: str
    method: str
    feature_set: str
    seed: int
    folds: tuple

    @property
    def accuracies(self):
        return np.array([f.accuracy for f in self.folds])

    @property
    def f1s(self):
        return np.array([f.f1 for f in self.folds])

    def mean_std(self, metric):
        vals = self.accuracies if metric == "accuracy" else self.f1s
        return float(vals.mean()), float(vals.std())


def _fold_targets(ds, task, train_idx, test_idx, x_train,
                  spread_k=DEFAULT_SPREAD_K, spread_alpha=DEFAULT_ALPHA):
    """Train/test 0-1 targets for one fold, plus the scored test rows.

    Correctness: unknown train labels are completed by spreading over
    the standardized training features; unknown test labels are only
    excluded from scoring.  Confusion: the rating median of the
    training rows splits both parts; rating the median itself means
    not confused.
    """
    if task == "correctness":
        targets = ds.correct_targets()
        y_train = targets[train_idx]
        y_test = targets[test_idx]
        keep = y_test >= 0
        if (y_train < 0).any():
            if len(np.unique(y_train[y_train >= 0])) < 2:
                raise SingleClassInput(
                    "labeled training rows cover a single class; "
                    "spreading has nothing to separate")
            y_train = label_spread(x_train, y_train, k=spread_k,
                                   alpha=spread_alpha).labels
        return y_train, y_test, keep
    ratings = np.array([float(r.confusion_rating) for r in ds.rows])
    med = confusion_median(ratings[train_idx])
    y_train = (ratings[train_idx] > med).astype(int)
    y_test = (ratings[test_idx] > med).astype(int)
    return y_train, y_test, np.ones(len(test_idx), dtype=bool)


def evaluate_task(ds, task, method, feature_set="eeg_nlp",
                  n_folds=DEFAULT_OUTER_FOLDS, seed=0, grids=None,
                  n_oof_folds=DEFAULT_OOF_FOLDS, grouped=True,
                  smote_k=DEFAULT_SMOTE_K, spread_k=DEFAULT_SPREAD_K,
                  spread_alpha=DEFAULT_ALPHA):
    """Cross-validation of one method on one target task.

    Folds are grouped by participant unless ``grouped`` is false; the
    row-level variant exists to quantify how much within-subject
    leakage inflates the scores, not for reporting.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    if method not in METHOD_ORDER:
        raise ValueError(f"unknown method {method!r}; "
                         f"expected one of {METHOD_ORDER}")
    if feature_set not in FEATURE_SETS:
        raise InvalidFeatureSet(f"unknown feature set {feature_set!r}")
    if task == "confusion" and feature_set == "eeg_nlp_con":
        raise InvalidFeatureSet(
            "the rating column cannot be an input while predicting "
            "the label derived from it")
    grids = grids or {}

    if task == "confusion":
        rated = [i for i, r in enumerate(ds.rows)
                 if r.confusion_rating is not None]
        if len(rated) < len(ds):
            logger.info("confusion task: dropping %d unrated rows",
                        len(ds) - len(rated))
        ds = ds.subset(rated)

    groups = [r.participant_id for r in ds.rows]
    if grouped:
        folds = grouped_kfold(groups, n_folds, seed)
    else:
        all_idx = np.arange(len(ds))
        folds = [(np.setdiff1d(all_idx, test), test)
                 for test in round_robin_folds(len(ds), n_folds, seed)]
    x_all = ds.matrix(feature_set)

    fold_scores = []
    for fold_idx, (train_idx, test_idx) in enumerate(folds):
        fold_rng = np.random.default_rng([seed, fold_idx])
        smote_seed, grid_seed, model_seed, stack_seed = (
            int(s) for s in fold_rng.integers(0, 2 ** 31 - 1, 4))

        mean, scale = fit_scaler(x_all[train_idx])
        x_train = apply_scaler(x_all[train_idx], mean, scale)
        x_test = apply_scaler(x_all[test_idx], mean, scale)

        y_train, y_test, keep = _fold_targets(ds, task, train_idx,
                                              test_idx, x_train,
                                              spread_k=spread_k,
                                              spread_alpha=spread_alpha)
        if not keep.any():
            logger.info("fold %d: no labeled test rows, skipping", fold_idx)
            continue
        test_digest = hashlib.sha256(
            x_test.tobytes() + y_test.tobytes()).hexdigest()

        if task == "confusion":
            # imbalance correction belongs to the rating-derived task;
            # the correctness path balances itself through spreading
            x_rs, y_rs, _ = resample(x_train, y_train, k=smote_k,
                                     seed=smote_seed)
        else:
            x_rs, y_rs = x_train, y_train

        if method == "stack":
            tuned = {}
            for bi, base in enumerate(BASE_ORDER):
                result = grid_search(x_rs, y_rs, base, grids.get(base),
                                     seed=grid_seed + bi)
                tuned[base] = result.best_params
            model = StackedEnsemble(base_params=tuned,
                                    n_oof_folds=n_oof_folds,
                                    seed=stack_seed).fit(x_rs, y_rs)
        else:
            result = grid_search(x_rs, y_rs, method, grids.get(method),
                                 seed=grid_seed)
            params = dict(result.best_params)
            if method in ("rf", "svm"):
                params["seed"] = model_seed
            model = build_model(method, **params).fit(x_rs, y_rs)

        pred = model.predict(x_test[keep])
        recheck = hashlib.sha256(
            x_test.tobytes() + y_test.tobytes()).hexdigest()
        if recheck != test_digest:
            raise AssertionError("test fold mutated during training")
        fold_scores.append(FoldScore(
            fold=fold_idx, n_train=len(train_idx), n_test=int(keep.sum()),
            accuracy=accuracy(y_test[keep], pred),
            f1=f1_positive(y_test[keep], pred),
            participants=tuple(sorted({groups[i] for i in test_idx}))))

    if not fold_scores:
        raise NoLabeledRows("no fold produced any labeled test rows")
    return TaskResult(task=task, method=method, feature_set=feature_set,
                      seed=seed, folds=tuple(fold_scores))


def format_report(results):
    """Plain-text table: method x metric rows, feature-set columns."""
    by_key = {(r.task, r.method, r.feature_set): r for r in results}
    plus_minus = "\u00b1"
    lines = []
    for task in TASKS:
        if not any(k[0] == task for k in by_key):
            continue
        lines.append(f"task: {task}")
        header = ["method", "metric"] + [FEATURE_SET_TITLES[fs]
                                         for fs in FEATURE_SETS]
        rows = [header]
        for method in METHOD_ORDER:
            if not any(k[:2] == (task, method) for k in by_key):
                continue
            for metric in ("accuracy", "f1"):
                cells = [method, metric]
                for fs in FEATURE_SETS:
                    r = by_key.get((task, method, fs))
                    if r is None:
                        cells.append("\u2014")
                    else:
                        m, s = r.mean_std(metric)
                        cells.append(f"{m:.2f} {plus_minus} {s:.2f}")
                rows.append(cells)
        widths = [max(len(row[c]) for row in rows)
                  for c in range(len(header))]
        for row in rows:
            lines.append("  ".join(cell.ljust(w)
                                   for cell, w in zip(row, widths)).rstrip())
        lines.append("")
    return "\n".join(lines)


def write_results_csv(path, results):
    """One row per (task, method, feature set, metric), folds appended."""
    ordered = sorted(results, key=lambda r: (
        TASKS.index(r.task), METHOD_ORDER.index(r.method),
        FEATURE_SETS.index(r.feature_set)))
    lines = ["task,method,feature_set,metric,mean,std,fold_values"]
    for r in ordered:
        for metric, values in (("accuracy", r.accuracies), ("f1", r.f1s)):
            mean, std = r.mean_std(metric)
            folds = ",".join(repr(float(v)) for v in values)
            lines.append(f"{r.task},{r.method},{r.feature_set},{metric},"
                         f"{mean!r},{std!r},{folds}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class ResultSummary:
    """A results-file row group; enough to rebuild the report table."""
    task: str
    method: str
    feature_set: str
    stats: dict        # metric -> (mean, std)
    fold_values: dict  # metric -> tuple of per-fold values

    def mean_std(self, metric):
        return self.stats[metric]


def read_results_csv(path):
    """Inverse of write_results_csv, grouping metric rows per result."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(
            "task,method,feature_set,metric,mean,std"):
        raise MalformedLine(f"{path}: not a results file")
    grouped = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) < 7:
            raise MalformedLine(f"{path}:{lineno}: expected at least 7 fields")
        task, method, fs, metric = parts[:4]
        entry = grouped.setdefault((task, method, fs), ({}, {}))
        entry[0][metric] = (float(parts[4]), float(parts[5]))
        entry[1][metric] = tuple(float(v) for v in parts[6:])
    return [ResultSummary(task=k[0], method=k[1], feature_set=k[2],
                          stats=stats, fold_values=folds)
            for k, (stats, folds) in sorted(grouped.items())]


def load_stack(path):
    return StackedEnsemble.load(path)


def load_any_model(path):
    """Dispatch on the kind header: stack or one of the base models."""
    kind, _ = read_fields(path)
    if kind == StackedEnsemble.kind:
        return StackedEnsemble.load(path)
    return load_model(path)
