"""Logistic regression and a linear SVM with calibrated outputs."""

import numpy as np
from scipy.special import expit

from ..errors import SingleClassInput
from . import _kernels, store

ARMIJO_C = 1e-4
BACKTRACK = 0.5


def check_binary(y):
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClassInput(
            f"training labels contain only class {classes.tolist()}")
    if not set(classes.tolist()) <= {0, 1}:
        raise ValueError(f"labels must be 0/1, got {classes.tolist()}")
    return y.astype(float)


def _objective(x, ypm, w, b, l2):
    z = ypm * (x @ w + b)
    # log(1 + exp(-z)) without overflow
    return float(np.mean(np.logaddexp(0.0, -z)) + 0.5 * l2 * (w @ w))


def _gradient(x, ypm, w, b, l2):
    z = ypm * (x @ w + b)
    s = expit(-z)                     # d/dz log(1+e^-z) = -sigmoid(-z)
    gw = -(x.T @ (ypm * s)) / len(x) + l2 * w
    gb = -float(np.mean(ypm * s))
    return gw, gb


def train_logistic(x, ypm, l2, tol, max_iter):
    """Full-batch descent with an Armijo backtracking line search.

    The data term is a mean, so duplicating every row leaves the
    objective and the fitted weights unchanged; the ridge term applies
    to the weights only, never the bias.
    """
    w = np.zeros(x.shape[1])
    b = 0.0
    fval = _objective(x, ypm, w, b, l2)
    n_iter = 0
    converged = False
    for n_iter in range(1, max_iter + 1):
        gw, gb = _gradient(x, ypm, w, b, l2)
        gnorm2 = float(gw @ gw) + gb * gb
        if np.sqrt(gnorm2) < tol:
            converged = True
            n_iter -= 1
            break
        step = 1.0
        accepted = False
        while step > 1e-20:
            w_new = w - step * gw
            b_new = b - step * gb
            f_new = _objective(x, ypm, w_new, b_new, l2)
            if f_new <= fval - ARMIJO_C * step * gnorm2:
                accepted = True
                break
            step *= BACKTRACK
        if not accepted:
            # objective numerically flat along the gradient; stop here
            n_iter -= 1
            break
        w, b, fval = w_new, b_new, f_new
    return w, b, n_iter, converged


class LogisticRegression:
    """Ridge-penalized logistic regression, deterministic fit."""

    kind = "logistic"

    def __init__(self, l2=1.0, tol=1e-6, max_iter=500):
        self.l2 = float(l2)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.w = None
        self.b = 0.0
        self.n_iter = 0
        self.converged = False

    def params(self):
        return {"l2": self.l2, "tol": self.tol, "max_iter": self.max_iter}

    def clone(self):
        return type(self)(**self.params())

    def fit(self, x, y):
        x = np.asarray(x, dtype=float)
        y = check_binary(y)
        ypm = 2.0 * y - 1.0
        self.w, self.b, self.n_iter, self.converged = train_logistic(
            x, ypm, self.l2, self.tol, self.max_iter)
        return self

    def decision_function(self, x):
        return np.asarray(x, dtype=float) @ self.w + self.b

    def predict_proba(self, x):
        return expit(self.decision_function(x))

    def predict(self, x):
        return (self.predict_proba(x) >= 0.5).astype(int)

    def to_fields(self):
        return {
            "l2": self.l2, "tol": self.tol, "max_iter": self.max_iter,
            "n_iter": self.n_iter, "converged": self.converged,
            "w": self.w, "b": self.b,
        }

    def save(self, path):
        store.write_fields(path, self.kind, self.to_fields())

    @classmethod
    def load_fields(cls, fields):
        model = cls(l2=fields["l2"], tol=fields["tol"],
                    max_iter=fields["max_iter"])
        model.w = fields["w"]
        model.b = fields["b"]
        model.n_iter = fields["n_iter"]
        model.converged = bool(fields["converged"])
        return model


class PegasosSvm:
    """Linear SVM trained by averaged stochastic subgradient descent.

    The hinge weight lam is 1/(penalty * n), so larger penalty values
    regularize less, matching the usual soft-margin C.  Probabilities
    come from a sigmoid fitted to the training margins.
    """

    kind = "svm"

    def __init__(self, penalty=1.0, n_epochs=50, seed=0):
        self.penalty = float(penalty)
        self.n_epochs = int(n_epochs)
        self.seed = int(seed)
        self.w = None
        self.b = 0.0
        self.platt_a = 1.0
        self.platt_b = 0.0

    def params(self):
        return {"penalty": self.penalty, "n_epochs": self.n_epochs,
                "seed": self.seed}

    def clone(self):
        return type(self)(**self.params())

    def fit(self, x, y):
        x = np.ascontiguousarray(x, dtype=float)
        y = check_binary(y)
        ypm = 2.0 * y - 1.0
        lam = 1.0 / (self.penalty * len(x))
        self.w, self.b = _kernels.pegasos_train(
            x, ypm, lam, self.n_epochs, self.seed % (2 ** 31 - 1))
        margins = x @ self.w + self.b
        # near-unpenalized 1-D logistic fit on the margins; the tiny
        # ridge keeps separable data from driving the slope to infinity
        pw, pb, _, _ = train_logistic(
            margins[:, None], ypm, l2=1e-6, tol=1e-8, max_iter=500)
        self.platt_a = float(pw[0])
        self.platt_b = pb
        return self

    def decision_function(self, x):
        return np.asarray(x, dtype=float) @ self.w + self.b

    def predict_proba(self, x):
        return expit(self.platt_a * self.decision_function(x) + self.platt_b)

    def predict(self, x):
        return (self.predict_proba(x) >= 0.5).astype(int)

    def to_fields(self):
        return {
            "penalty": self.penalty, "n_epochs": self.n_epochs,
            "seed": self.seed, "w": self.w, "b": self.b,
            "platt_a": self.platt_a, "platt_b": self.platt_b,
        }

    def save(self, path):
        store.write_fields(path, self.kind, self.to_fields())

    @classmethod
    def load_fields(cls, fields):
        model = cls(penalty=fields["penalty"], n_epochs=fields["n_epochs"],
                    seed=fields["seed"])
        model.w = fields["w"]
        model.b = fields["b"]
        model.platt_a = fields["platt_a"]
        model.platt_b = fields["platt_b"]
        return model
