"""Random forest and gradient-boosted trees on the shared kernel.

Both models store their trees as flat node arrays with per-tree offsets,
which is what the prediction kernel and the text serializer consume.
"""

import numpy as np
from scipy.special import expit

from . import _kernels, store
from ._kernels import LEAF_FRACTION, LEAF_NEWTON
from .linear import check_binary

PROB_FLOOR = 1e-12


def _presort(x):
    # (d, n) row indices in ascending feature order; the stable kind
    # pins tie order to row index so refits are reproducible
    return np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T,
                                dtype=np.int64)


class _TreeBank:
    """Accumulates grown trees into the flat stacked representation."""

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.offsets = [0]

    def grow(self, x, order, counts, g, h, w, max_depth, min_leaf_w,
             max_features, lam, gamma, gain_eps, leaf_mode, seed):
        n_active = int(np.count_nonzero(counts > 0.0))
        cap = 2 * n_active + 1
        feat = np.empty(cap, np.int64)
        thr = np.empty(cap, np.float64)
        left = np.empty(cap, np.int64)
        right = np.empty(cap, np.int64)
        value = np.empty(cap, np.float64)
        n_nodes = _kernels.grow_tree(
            x, order, counts, g, h, w,
            max_depth, min_leaf_w, max_features, lam, gamma, gain_eps,
            leaf_mode, seed, feat, thr, left, right, value)
        self.feature.append(feat[:n_nodes].copy())
        self.threshold.append(thr[:n_nodes].copy())
        self.left.append(left[:n_nodes].copy())
        self.right.append(right[:n_nodes].copy())
        self.value.append(value[:n_nodes].copy())
        self.offsets.append(self.offsets[-1] + n_nodes)
        return self.value[-1], self.feature[-1], self.threshold[-1], \
            self.left[-1], self.right[-1]

    def pack(self):
        return (np.concatenate(self.feature),
                np.concatenate(self.threshold),
                np.concatenate(self.left),
                np.concatenate(self.right),
                np.concatenate(self.value),
                np.asarray(self.offsets, dtype=np.int64))


def _predict_packed(packed, x, average):
    feature, threshold, left, right, value, offsets = packed
    x = np.ascontiguousarray(x, dtype=float)
    return _kernels.predict_trees(x, feature, threshold, left, right,
                                  value, offsets, average)


class RandomForest:
    """Bagged Gini trees with per-node feature subsampling.

    Prediction is a soft vote: the mean over trees of each leaf's
    weighted positive fraction.  With bootstrap off, a single tree and
    all features considered, the model degenerates to one plain
    decision tree, and with max_depth 0 every tree predicts the class
    prior exactly.
    """

    kind = "forest"

    def __init__(self, n_trees=200, max_depth=8, min_leaf=2,
                 max_features="sqrt", bootstrap=True, seed=0):
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.min_leaf = int(min_leaf)
        self.max_features = max_features
        self.bootstrap = bool(bootstrap)
        self.seed = int(seed)
        self._packed = None

    def params(self):
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "min_leaf": self.min_leaf, "max_features": self.max_features,
                "bootstrap": self.bootstrap, "seed": self.seed}

    def clone(self):
        return type(self)(**self.params())

    def _n_features_per_node(self, d):
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(d)))
        if self.max_features == "all":
            return d
        return max(1, min(int(self.max_features), d))

    def fit(self, x, y):
        x = np.asfortranarray(x, dtype=float)
        y = check_binary(y)
        n, d = x.shape
        order = _presort(x)
        m = self._n_features_per_node(d)
        rng = np.random.default_rng(self.seed)
        # spurious splits of pure nodes otherwise appear from rounding
        # in the left/right partial sums
        gain_eps = 1e-12 * (1.0 + n)
        bank = _TreeBank()
        ones = np.ones(n)
        for _ in range(self.n_trees):
            if self.bootstrap:
                counts = np.bincount(rng.integers(0, n, size=n),
                                     minlength=n).astype(float)
            else:
                counts = ones
            tree_seed = int(rng.integers(0, 2 ** 31 - 1))
            bank.grow(x, order, counts, y * counts, counts, counts,
                      self.max_depth, float(self.min_leaf), m,
                      0.0, 0.0, gain_eps, LEAF_FRACTION, tree_seed)
        self._packed = bank.pack()
        return self

    def predict_proba(self, x):
        return _predict_packed(self._packed, x, average=True)

    def predict(self, x):
        return (self.predict_proba(x) >= 0.5).astype(int)

    def to_fields(self):
        feature, threshold, left, right, value, offsets = self._packed
        mf = self.max_features
        return {
            "n_trees": self.n_trees, "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "max_features": mf if isinstance(mf, str) else str(int(mf)),
            "bootstrap": self.bootstrap, "seed": self.seed,
            "feature": feature, "threshold": threshold,
            "left": left, "right": right, "value": value,
            "offsets": offsets,
        }

    def save(self, path):
        store.write_fields(path, self.kind, self.to_fields())

    @classmethod
    def load_fields(cls, fields):
        mf = fields["max_features"]
        if mf not in ("sqrt", "all"):
            mf = int(mf)
        model = cls(n_trees=fields["n_trees"], max_depth=fields["max_depth"],
                    min_leaf=fields["min_leaf"], max_features=mf,
                    bootstrap=bool(fields["bootstrap"]), seed=fields["seed"])
        model._packed = (fields["feature"], fields["threshold"],
                         fields["left"], fields["right"], fields["value"],
                         fields["offsets"])
        return model


class GradientBoosting:
    """Second-order boosting of shallow trees on the logistic loss.

    Round r fits a tree to the gradient/Hessian pairs of the current
    margin, takes the damped Newton leaf step -G/(H+lam) scaled by the
    learning rate, and adds it to the margin.  The fit starts from the
    prior log-odds, so a learning rate of 0 predicts the class prior.
    train_losses holds the mean logistic loss before boosting and after
    every round.
    """

    kind = "boost"

    def __init__(self, n_rounds=100, learning_rate=0.1, max_depth=3,
                 lam=1.0, gamma=0.0):
        self.n_rounds = int(n_rounds)
        self.learning_rate = float(learning_rate)
        self.max_depth = int(max_depth)
        self.lam = float(lam)
        self.gamma = float(gamma)
        self.base_score = 0.0
        self.train_losses = None
        self._packed = None

    def params(self):
        return {"n_rounds": self.n_rounds,
                "learning_rate": self.learning_rate,
                "max_depth": self.max_depth, "lam": self.lam,
                "gamma": self.gamma}

    def clone(self):
        return type(self)(**self.params())

    def fit(self, x, y):
        x = np.asfortranarray(x, dtype=float)
        y = check_binary(y)
        n = len(y)
        order = _presort(x)
        p0 = min(max(float(np.mean(y)), PROB_FLOOR), 1.0 - PROB_FLOOR)
        self.base_score = float(np.log(p0 / (1.0 - p0)))
        margin = np.full(n, self.base_score)
        counts = np.ones(n)
        losses = [self._loss(margin, y)]
        bank = _TreeBank()
        xc = np.ascontiguousarray(x)
        for _ in range(self.n_rounds):
            p = expit(margin)
            g = p - y
            h = p * (1.0 - p)
            value, feature, threshold, left, right = bank.grow(
                x, order, counts, g, h, counts,
                self.max_depth, 1.0, x.shape[1],
                self.lam, self.gamma, 0.0, LEAF_NEWTON, 0)
            value *= self.learning_rate
            one = np.asarray([0, len(feature)], dtype=np.int64)
            margin += _kernels.predict_trees(
                xc, feature, threshold, left, right, value, one, False)
            losses.append(self._loss(margin, y))
        self._packed = bank.pack()
        self.train_losses = np.asarray(losses)
        return self

    @staticmethod
    def _loss(margin, y):
        # mean of log(1 + e^m) - y*m, the logistic loss for 0/1 labels
        return float(np.mean(np.logaddexp(0.0, margin) - y * margin))

    def decision_function(self, x):
        return self.base_score + _predict_packed(self._packed, x,
                                                 average=False)

    def predict_proba(self, x):
        return expit(self.decision_function(x))

    def predict(self, x):
        return (self.predict_proba(x) >= 0.5).astype(int)

    def to_fields(self):
        feature, threshold, left, right, value, offsets = self._packed
        return {
            "n_rounds": self.n_rounds, "learning_rate": self.learning_rate,
            "max_depth": self.max_depth, "lam": self.lam,
            "gamma": self.gamma, "base_score": self.base_score,
            "train_losses": self.train_losses,
            "feature": feature, "threshold": threshold,
            "left": left, "right": right, "value": value,
            "offsets": offsets,
        }

    def save(self, path):
        store.write_fields(path, self.kind, self.to_fields())

    @classmethod
    def load_fields(cls, fields):
        model = cls(n_rounds=fields["n_rounds"],
                    learning_rate=fields["learning_rate"],
                    max_depth=fields["max_depth"], lam=fields["lam"],
                    gamma=fields["gamma"])
        model.base_score = fields["base_score"]
        model.train_losses = fields["train_losses"]
        model._packed = (fields["feature"], fields["threshold"],
                         fields["left"], fields["right"], fields["value"],
                         fields["offsets"])
        return model
