"""Micro-benchmarks for the numeric kernels.

Each kernel is timed through the same entry point the pipeline uses,
on inputs that are a pure function of the requested size, so two runs
on one machine time exactly the same work. Wall times are medians
over several iterations because the median shrugs off the occasional
scheduler hiccup that would drag a mean.
"""

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .balance import label_spread
from .errors import UnknownKernel
from .learners import build_model
from .signal import FilterSpec, apply_bandpass
from .spectral import welch_psd

BENCH_HEADER = "kernel,size,median_s,iterations"
MIN_ITERATIONS = 5


@dataclass(frozen=True)
class BenchResult:
    kernel: str
    size: int
    median_s: float
    iterations: int

    def __post_init__(self):
        if self.iterations < MIN_ITERATIONS:
            raise ValueError(
                f"need at least {MIN_ITERATIONS} iterations")

    def csv_row(self):
        return f"{self.kernel},{self.size},{self.median_s!r},{self.iterations}"


def _rng(name, size):
    # inputs depend only on (kernel, size), never on the clock
    return np.random.default_rng([size, sum(map(ord, name))])


def _setup_filter(size):
    x = _rng("bandpass_filter", size).standard_normal((size, 4))
    return (x, FilterSpec(4.0, 80.0), 256.0)


def _setup_psd(size):
    x = _rng("welch_psd", size).standard_normal(size)
    return (x, 256.0)


def _setup_tree(size):
    rng = _rng("tree_splits", size)
    x = rng.standard_normal((size, 16))
    y = (x[:, 0] + 0.5 * rng.standard_normal(size) > 0).astype(int)
    return (x, y)


def _run_tree(x, y):
    build_model("rf", n_trees=1, bootstrap=False, max_features="all",
                seed=0).fit(x, y)


def _setup_spread(size):
    rng = _rng("label_spread", size)
    x = rng.standard_normal((size, 16))
    y = np.full(size, -1)
    labeled = rng.choice(size, size // 10, replace=False)
    y[labeled] = (x[labeled, 0] > 0).astype(int)
    y[0], y[1] = 0, 1   # guarantee both classes seeded
    return (x, y)


KERNELS = {
    "bandpass_filter": (_setup_filter, apply_bandpass, (4096, 16384)),
    "welch_psd": (_setup_psd, welch_psd, (4096, 16384)),
    "tree_splits": (_setup_tree, _run_tree, (512, 2048)),
    "label_spread": (_setup_spread,
                     lambda x, y: label_spread(x, y), (512, 2048)),
}


def bench_kernel(name, sizes=None, iterations=MIN_ITERATIONS):
    """Time one kernel at each size; returns a BenchResult per size."""
    if name not in KERNELS:
        raise UnknownKernel(
            f"unknown kernel {name!r}; have {', '.join(sorted(KERNELS))}")
    iterations = max(int(iterations), MIN_ITERATIONS)
    setup, run, default_sizes = KERNELS[name]
    results = []
    for size in sizes or default_sizes:
        args = setup(int(size))
        run(*args)   # warm-up pass, outside the timed region
        times = []
        for _ in range(iterations):
            t0 = time.perf_counter()
            run(*args)
            times.append(time.perf_counter() - t0)
        results.append(BenchResult(kernel=name, size=int(size),
                                   median_s=float(np.median(times)),
                                   iterations=iterations))
    return results


def append_results(path, results):
    """Append rows to the comma-separated log, creating it with a header."""
    path = Path(path)
    lines = [] if path.exists() else [BENCH_HEADER]
    lines.extend(r.csv_row() for r in results)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
