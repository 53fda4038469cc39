"""Binary classifiers used by the stacked ensemble.

All four are implemented here rather than imported from an ML library:
ridge logistic regression, a random forest, a linear SVM with sigmoid
calibration, and gradient-boosted trees.  The tree learners share one
compiled kernel.  Every model serializes to a versioned plain-text file
that reloads bit for bit.
"""

from ..errors import ModelFormatError
from .linear import LogisticRegression, PegasosSvm
from .store import read_fields
from .trees import GradientBoosting, RandomForest

# short method names used by the evaluation layer and the CLI
MODEL_TYPES = {
    "lr": LogisticRegression,
    "rf": RandomForest,
    "svm": PegasosSvm,
    "gbt": GradientBoosting,
}

_BY_KIND = {cls.kind: cls for cls in MODEL_TYPES.values()}


def build_model(method, **params):
    try:
        cls = MODEL_TYPES[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; "
                         f"expected one of {sorted(MODEL_TYPES)}") from None
    return cls(**params)


def load_model(path):
    kind, fields = read_fields(path)
    try:
        cls = _BY_KIND[kind]
    except KeyError:
        raise ModelFormatError(f"{path}: unknown model kind {kind!r}") \
            from None
    return cls.load_fields(fields)


__all__ = [
    "GradientBoosting",
    "LogisticRegression",
    "MODEL_TYPES",
    "PegasosSvm",
    "RandomForest",
    "build_model",
    "load_model",
]
