"""Class rebalancing and graph-based label completion.

Three tools that run between dataset assembly and model fitting:
synthetic minority oversampling, Tomek-link cleanup of the class
boundary, and label spreading over a sample-similarity graph for rows
whose outcome was never recorded.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import MinorityTooSmall, MissingClassInLabels, NoConvergence

logger = logging.getLogger(__name__)

DEFAULT_SMOTE_K = 5
DEFAULT_SPREAD_K = 7
DEFAULT_ALPHA = 0.2
DEFAULT_SPREAD_ITER = 30
DEFAULT_SPREAD_TOL = 1e-3


@dataclass(frozen=True)
class ResampleReport:
    """What oversampling and cleaning did to the class counts."""

    counts_before: dict
    counts_after: dict
    n_synthetic: int
    n_removed: int


@dataclass(frozen=True)
class SpreadResult:
    labels: np.ndarray
    scores: np.ndarray
    n_iter: int
    converged: bool


def _class_counts(y):
    values, counts = np.unique(y, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def _pairwise_sq_dists(a, b):
    # (n, m) matrix of squared Euclidean distances, expanded to avoid
    # the catastrophic cancellation of the dot-product identity
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _neighbor_order(x):
    """Row i holds the other indices sorted by distance to point i.

    Equal distances fall back to index order; the stable sort keeps the
    lower index first without a separate tiebreak pass.
    """
    d2 = _pairwise_sq_dists(x, x)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")


def smote(x, y, k=DEFAULT_SMOTE_K, target_ratio=1.0, seed=0):
    """Oversample the minority class with interpolated points.

    Each synthetic row is x_i + u * (x_nn - x_i) for a minority point
    x_i, one of its k nearest minority neighbors x_nn, and u drawn
    uniformly from [0, 1).  Base points are cycled round-robin so the
    synthetic mass covers the whole minority set; the neighbor choice
    and u are random.  Returns (x_out, y_out, report) with the
    synthetic rows appended after the originals.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    counts = _class_counts(y)
    classes = sorted(counts)
    if len(classes) < 2:
        raise MissingClassInLabels(
            f"need at least two classes to balance, got {classes}")
    minority = min(classes, key=lambda c: (counts[c], c))
    majority = max(classes, key=lambda c: (counts[c], -c))
    n_min = counts[minority]
    if n_min < 2:
        raise MinorityTooSmall(
            f"minority class {minority} has {n_min} row(s); "
            "interpolation needs at least 2")

    n_target = int(round(target_ratio * counts[majority]))
    n_syn = max(0, n_target - n_min)
    if n_syn == 0:
        report = ResampleReport(counts, dict(counts), 0, 0)
        return x.copy(), y.copy(), report

    k_eff = min(k, n_min - 1)
    if k_eff < k:
        logger.info("smote: k clamped from %d to %d (minority has %d rows)",
                    k, k_eff, n_min)

    min_idx = np.flatnonzero(y == minority)
    order = _neighbor_order(x[min_idx])[:, :k_eff]

    rng = np.random.default_rng(seed)
    synth = np.empty((n_syn, x.shape[1]))
    for j in range(n_syn):
        base = j % n_min
        nn = order[base, rng.integers(k_eff)]
        u = rng.random()
        synth[j] = x[min_idx[base]] + u * (x[min_idx[nn]] - x[min_idx[base]])

    x_out = np.vstack([x, synth])
    y_out = np.concatenate([y, np.full(n_syn, minority, dtype=y.dtype)])
    report = ResampleReport(counts, _class_counts(y_out), n_syn, 0)
    return x_out, y_out, report


def tomek_links(x, y):
    """Indices of rows that form cross-class mutual nearest neighbors.

    A pair (i, j) is a link when j is i's single nearest neighbor, i is
    j's, and their labels differ.  Returns the sorted array of indices
    belonging to any link.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if len(x) < 2:
        return np.empty(0, dtype=int)
    nn = _neighbor_order(x)[:, 0]
    members = set()
    for i, j in enumerate(nn):
        if i < j and nn[j] == i and y[i] != y[j]:
            members.add(i)
            members.add(int(j))
    return np.array(sorted(members), dtype=int)


def tomek_clean(x, y):
    """Drop the majority-class member of every Tomek link, one pass.

    Links are found on the input as given; removals do not trigger a
    re-scan.  When the class counts are exactly equal no class is the
    majority, so nothing is removed; this is the common case right
    after oversampling to parity.  Returns (x_out, y_out,
    removed_indices).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    counts = _class_counts(y)
    sizes = set(counts.values())
    if len(counts) < 2 or len(sizes) == 1:
        if len(sizes) == 1 and len(counts) == 2:
            logger.info("tomek: classes tied at %d rows each, no majority "
                        "to remove", sizes.pop())
        return x.copy(), y.copy(), np.empty(0, dtype=int)
    majority = max(sorted(counts), key=lambda c: (counts[c], -c))
    members = tomek_links(x, y)
    removed = members[y[members] == majority]
    keep = np.ones(len(y), dtype=bool)
    keep[removed] = False
    return x[keep], y[keep], removed


def resample(x, y, k=DEFAULT_SMOTE_K, target_ratio=1.0, seed=0):
    """Oversample then clean: smote followed by one Tomek pass."""
    x_s, y_s, report = smote(x, y, k=k, target_ratio=target_ratio, seed=seed)
    x_out, y_out, removed = tomek_clean(x_s, y_s)
    final = ResampleReport(report.counts_before, _class_counts(y_out),
                           report.n_synthetic, len(removed))
    return x_out, y_out, final


def _knn_affinity(x, k):
    d2 = _pairwise_sq_dists(x, x)
    np.fill_diagonal(d2, np.inf)
    k = min(k, len(x) - 1)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    w = np.zeros((len(x), len(x)))
    rows = np.repeat(np.arange(len(x)), k)
    w[rows, order.ravel()] = 1.0
    return np.maximum(w, w.T)  # i~j if either lists the other


def _rbf_affinity(x, gamma):
    w = np.exp(-gamma * _pairwise_sq_dists(x, x))
    np.fill_diagonal(w, 0.0)
    return w


def label_spread(x, y, k=DEFAULT_SPREAD_K, alpha=DEFAULT_ALPHA,
                 max_iter=DEFAULT_SPREAD_ITER, tol=DEFAULT_SPREAD_TOL,
                 kernel="knn", gamma=1.0):
    """Propagate labels to rows marked -1 over a similarity graph.

    Iterates F <- alpha * S * F + (1 - alpha) * Y on the symmetrically
    normalized affinity matrix S until the largest entry change drops
    below tol.  Labeled rows always keep their given labels in the
    output; only the -1 rows take the argmax of the propagated scores.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    labeled = y >= 0
    present = np.unique(y[labeled])
    if len(present) < 2:
        raise MissingClassInLabels(
            "label spreading needs at least two labeled classes, "
            f"got {present.tolist()}")
    n_classes = int(present.max()) + 1

    if kernel == "knn":
        w = _knn_affinity(x, k)
    elif kernel == "rbf":
        w = _rbf_affinity(x, gamma)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")

    deg = w.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)),
                        0.0)
    s = w * inv_sqrt[:, None] * inv_sqrt[None, :]

    y_hot = np.zeros((len(y), n_classes))
    y_hot[labeled, y[labeled]] = 1.0

    f = y_hot.copy()
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        f_next = alpha * (s @ f) + (1.0 - alpha) * y_hot
        delta = np.abs(f_next - f).max()
        f = f_next
        if delta < tol:
            converged = True
            break
    if not converged:
        import warnings

        warnings.warn(
            f"label spreading did not converge in {max_iter} iterations "
            f"(last change {delta:.2e}); using the final iterate",
            NoConvergence, stacklevel=2)

    out = f.argmax(axis=1)
    ties = (f == f.max(axis=1, keepdims=True)).sum(axis=1) > 1
    ambiguous = ties & ~labeled
    if ambiguous.any():
        logger.info("label spreading: %d row(s) tied across classes, "
                    "assigned the lowest class id", int(ambiguous.sum()))
    out[labeled] = y[labeled]
    return SpreadResult(labels=out.astype(int), scores=f,
                        n_iter=n_iter, converged=converged)
