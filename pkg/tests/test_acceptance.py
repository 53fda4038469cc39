"""Go/no-go acceptance checks for the whole pipeline.

Ten checks, each printed as one PASS/FAIL line with its wall time
against a fixed budget. Every expected value here comes from an
independent source: closed-form filter magnitudes, brute-force
enumeration, explicit Python loops, or constructed fixtures, never
from the code under test.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import dataclasses
import functools
import hashlib
import itertools
import time

import numpy as np
import pytest

from eegnlp.balance import label_spread, smote, tomek_clean
from eegnlp.cli import main as cli_main
from eegnlp.dataset import (
    CONFUSED,
    CORRECT,
    INCORRECT,
    NOT_CONFUSED,
    Dataset,
    FeatureRow,
    known_unknown_matrix,
    read_dataset,
)
from eegnlp.ensemble import StackedEnsemble, evaluate_task
from eegnlp.learners import build_model
from eegnlp.learners.linear import _gradient, _objective
from eegnlp.signal import FilterSpec, apply_bandpass
from eegnlp.spectral import DEFAULT_BANDS, band_power, welch_psd
from eegnlp.syntax import (
    DependencySentence,
    DepToken,
    dependency_metrics,
    parse_bracketed_tree,
    subtree_count,
    tree_leaves,
)
from eegnlp.synth import SynthConfig, generate

FS = 256.0

POINT_GRIDS = {
    "lr": {"l2": (1.0,)},
    "rf": {"max_depth": (8.0,)},
    "svm": {"penalty": (1.0,)},
    "gbt": {"learning_rate": (0.1,)},
}


def criterion(number, budget_s, title):
    """Wrap a check so it reports one line and honors its time budget."""

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            t0 = time.perf_counter()
            ok = False
            try:
                fn(*args, **kwargs)
                elapsed = time.perf_counter() - t0
                assert elapsed < budget_s, (
                    f"criterion {number} took {elapsed:.1f}s, "
                    f"budget {budget_s:.0f}s")
                ok = True
            finally:
                elapsed = time.perf_counter() - t0
                print(f"[criterion {number:>2}] "
                      f"{'PASS' if ok else 'FAIL'} "
                      f"({elapsed:6.2f}s / {budget_s:3.0f}s) {title}")
        return wrapper
    return deco


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Pay one-time compilation costs outside any timed region."""
    rng = np.random.default_rng(0)
    x = rng.standard_normal((24, 4))
    y = (x[:, 0] > 0).astype(int)
    apply_bandpass(rng.standard_normal(600), FilterSpec(4.0, 80.0), FS)
    welch_psd(rng.standard_normal(512), FS)
    smote(x, y, k=2, seed=0)
    tomek_clean(x, y)
    semi = np.full(24, -1)
    semi[0], semi[1] = 0, 1
    label_spread(x, semi, k=3)
    for method, kw in (("lr", {}), ("svm", {}), ("rf", {"n_trees": 3}),
                       ("gbt", {"n_rounds": 3})):
        build_model(method, **kw).fit(x, y)


# ------------------------------------------------------------ criterion 1


@criterion(1, 1.0, "band powers calibrated on a sine and white noise")
def test_c01_spectral_calibration():
    t = np.arange(16384) / FS
    psd = welch_psd(np.sin(2.0 * np.pi * 10.0 * t), FS)
    powers = {b.name: band_power(psd, b) for b in DEFAULT_BANDS}
    total = float(np.trapezoid(psd.power, psd.freqs))
    # a unit sine carries power 0.5, all of it at 10 Hz (alpha)
    assert abs(powers["alpha"] - 0.5) <= 0.5 * 0.05
    for name in ("theta", "beta", "gamma"):
        assert powers[name] < 0.01 * total, name

    noise = np.random.default_rng(7).standard_normal(16384)
    npsd = welch_psd(noise, FS)
    total_noise = float(np.trapezoid(npsd.power, npsd.freqs))
    assert abs(total_noise - 1.0) <= 0.05


# ------------------------------------------------------------ criterion 2


@criterion(2, 1.0, "filter response vs closed-form magnitude")
def test_c02_filter_vs_analytic_oracle():
    spec = FilterSpec(4.0, 80.0, order=4, zero_phase=True)

    def oracle_gain_db(f_hz):
        # bilinear design with prewarping: the digital response at f
        # equals the analog band-pass prototype at 2*fs*tan(pi*f/fs);
        # the forward+backward pass squares the magnitude
        warp = lambda g: 2.0 * FS * np.tan(np.pi * g / FS)   # noqa: E731
        w, w_lo, w_hi = warp(f_hz), warp(spec.lo_hz), warp(spec.hi_hz)
        a = abs((w * w - w_lo * w_hi) / ((w_hi - w_lo) * w))
        return -20.0 * np.log10(1.0 + a ** (2 * spec.order))

    def measured_gain_db(f_hz):
        n = 16384
        x = np.sin(2.0 * np.pi * f_hz * np.arange(n) / FS)
        y = apply_bandpass(x, spec, FS)
        mid = slice(n // 4, 3 * n // 4)
        return 20.0 * np.log10(
            np.sqrt(np.mean(y[mid] ** 2)) / np.sqrt(np.mean(x[mid] ** 2)))

    assert abs(measured_gain_db(20.0) - oracle_gain_db(20.0)) <= 1.0
    assert -measured_gain_db(1.0) >= 40.0
    assert -measured_gain_db(100.0) >= 15.0


# ------------------------------------------------------------ criterion 3


def _random_tree(rng, depth=0):
    if depth >= 4 or rng.random() < 0.35:
        return None                       # preterminal marker
    return [_random_tree(rng, depth + 1)
            for _ in range(int(rng.integers(1, 4)))]


def _render_tree(node, counter):
    if node is None:
        i = counter[0]
        counter[0] += 1
        return f"(P{i} w{i})", 1, 1       # text, nodes, leaves
    parts, nodes, leaves = [], 1, 0
    for child in node:
        text, n, l = _render_tree(child, counter)
        parts.append(text)
        nodes += n
        leaves += l
    return "(N " + " ".join(parts) + ")", nodes, leaves


def _oracle_dep_metrics(heads):
    dists = [abs(i - h) for i, h in enumerate(heads, start=1) if h != 0]
    total = sum(dists)
    n = len(heads)
    return (total,
            total / n if n else 0.0,
            max(dists) if dists else 0,
            total / len(dists) if dists else 0.0)


def _dep_sentence(heads):
    return DependencySentence(tokens=tuple(
        DepToken(index=i, form=f"w{i}", head=h, deprel="dep")
        for i, h in enumerate(heads, start=1)))


@criterion(3, 5.0, "parse metrics vs brute-force enumeration")
def test_c03_nlp_metrics_vs_brute_force():
    rng = np.random.default_rng(13)
    checked = 0

    for _ in range(400):
        counter = [0]
        text, nodes, leaves = _render_tree([_random_tree(rng)], counter)
        tree = parse_bracketed_tree(text)
        assert subtree_count(tree) == nodes
        assert len(tree_leaves(tree)) == leaves
        checked += 1

    # every head assignment for up to four tokens (head 0 is root,
    # self-heads excluded), then longer random sentences
    for n in range(1, 5):
        choices = [[h for h in range(n + 1) if h != i]
                   for i in range(1, n + 1)]
        for heads in itertools.product(*choices):
            got = dependency_metrics(_dep_sentence(heads))
            assert got == _oracle_dep_metrics(heads), heads
            checked += 1

    for _ in range(400):
        n = int(rng.integers(5, 41))
        heads = tuple(int(rng.choice([h for h in range(n + 1) if h != i]))
                      for i in range(1, n + 1))
        got = dependency_metrics(_dep_sentence(heads))
        assert got == _oracle_dep_metrics(heads)
        checked += 1

    assert checked >= 1000


# ------------------------------------------------------------ criterion 4


def _tomek_oracle(x, y):
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    nn = d2.argmin(axis=1)
    counts = np.bincount(y, minlength=2)
    majority = int(counts.argmax())
    removals = set()
    for i, j in enumerate(nn):
        if nn[j] == i and y[i] != y[j]:
            for m in (i, int(j)):
                if y[m] == majority:
                    removals.add(m)
    return removals


def _is_segment_point(s, minority, eps=1e-9):
    ii, jj = np.triu_indices(len(minority), k=1)
    a, b = minority[ii], minority[jj]
    ab = b - a
    denom = (ab * ab).sum(axis=1)
    keep = denom > 0
    a, ab, denom = a[keep], ab[keep], denom[keep]
    lam = ((s - a) * ab).sum(axis=1) / denom
    resid = np.linalg.norm((s - a) - lam[:, None] * ab, axis=1)
    return bool(np.any((resid <= eps) & (lam >= -eps) & (lam <= 1 + eps)))


@criterion(4, 10.0, "resampling parity, convexity, and boundary cleanup")
def test_c04_resampling_properties():
    rng = np.random.default_rng(21)
    for _ in range(200):
        n_min = int(rng.integers(6, 15))
        n_maj = int(rng.integers(n_min + 1, 40))
        dims = int(rng.integers(2, 6))
        x = rng.standard_normal((n_min + n_maj, dims))
        y = np.concatenate([np.ones(n_min, int), np.zeros(n_maj, int)])
        order = rng.permutation(len(y))
        x, y = x[order], y[order]

        xs, ys, _ = smote(x, y, k=min(5, n_min - 1), target_ratio=1.0,
                          seed=int(rng.integers(2 ** 31)))
        counts = np.bincount(ys)
        assert counts[0] == counts[1]
        minority = x[y == 1]
        for s in xs[len(y):]:
            assert _is_segment_point(s, minority)

        _, _, removed = tomek_clean(x, y)
        assert all(y[i] == 0 for i in removed)   # majority rows only
        assert set(int(i) for i in removed) == _tomek_oracle(x, y)


# ------------------------------------------------------------ criterion 5


@criterion(5, 2.0, "semi-supervised spread across two clusters")
def test_c05_label_spreading_two_clusters():
    rng = np.random.default_rng(3)
    left = rng.normal(0.0, 0.5, (50, 2)) + [-3.0, 0.0]
    right = rng.normal(0.0, 0.5, (50, 2)) + [3.0, 0.0]
    x = np.vstack([left, right])
    truth = np.concatenate([np.zeros(50, int), np.ones(50, int)])
    y = np.full(100, -1)
    y[0], y[50] = 0, 1

    res = label_spread(x, y)
    assert res.labels[0] == 0 and res.labels[50] == 1
    assert (res.labels == truth).mean() >= 0.95


# ------------------------------------------------------------ criterion 6


@criterion(6, 10.0, "learner numerics: gradients and boosting loss")
def test_c06_learner_numerics():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((40, 6))
    ypm = np.where(rng.random(40) < 0.5, -1.0, 1.0)
    w = 0.5 * rng.standard_normal(6)
    b, l2, h = 0.3, 0.7, 1e-6

    gw, gb = _gradient(x, ypm, w, b, l2)
    for idx in range(6):
        e = np.zeros(6)
        e[idx] = h
        num = (_objective(x, ypm, w + e, b, l2)
               - _objective(x, ypm, w - e, b, l2)) / (2 * h)
        assert abs(num - gw[idx]) / max(abs(num), 1e-8) < 1e-5
    num_b = (_objective(x, ypm, w, b + h, l2)
             - _objective(x, ypm, w, b - h, l2)) / (2 * h)
    assert abs(num_b - gb) / max(abs(num_b), 1e-8) < 1e-5

    xg = rng.standard_normal((120, 5))
    yg = (xg[:, 0] + 0.8 * rng.standard_normal(120) > 0).astype(int)
    booster = build_model("gbt", n_rounds=100, learning_rate=0.1).fit(xg, yg)
    assert len(booster.train_losses) == 101
    assert np.all(np.diff(booster.train_losses) <= 1e-9)


# ------------------------------------------------------------ criterion 7


@criterion(7, 30.0, "row i's meta-features ignore row i's label")
def test_c07_out_of_fold_hygiene():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((60, 6))
    y = (x[:, 0] + 0.5 * rng.standard_normal(60) > 0).astype(int)
    params = {"rf": {"n_trees": 20}, "gbt": {"n_rounds": 20}}

    reference = StackedEnsemble(base_params=params, seed=4).fit(x, y)
    for i in (7, 23, 55):
        flipped = y.copy()
        flipped[i] ^= 1
        other = StackedEnsemble(base_params=params, seed=4).fit(x, flipped)
        assert np.array_equal(reference.oof[i], other.oof[i]), i
        # the flip must still reach folds that do train on row i
        assert not np.array_equal(reference.oof, other.oof)


# ------------------------------------------------------------ criterion 8


def _mean_f1(result):
    return float(np.mean([f.f1 for f in result.folds]))


def _permute_ratings(ds, seed=99):
    perm = np.random.default_rng(seed).permutation(len(ds.rows))
    rows = tuple(
        dataclasses.replace(r, confusion_rating=ds.rows[j].confusion_rating)
        for r, j in zip(ds.rows, perm))
    return dataclasses.replace(ds, rows=rows)


@criterion(8, 300.0, "planted effects recovered end to end")
def test_c08_end_to_end_synthetic(tmp_path):
    out = tmp_path / "study"
    for command in ("synth", "preprocess", "features", "assemble"):
        assert cli_main([command, "--out", str(out)]) == 0
    ds = read_dataset(out / "dataset.csv")

    scores = {}
    for task in ("correctness", "confusion"):
        for fs in ("eeg_nlp", "eeg"):
            result = evaluate_task(ds, task, "stack", fs, seed=11,
                                   grids=POINT_GRIDS)
            assert len(result.folds) == 10
            scores[(task, fs)] = _mean_f1(result)
    null_f1 = _mean_f1(evaluate_task(_permute_ratings(ds), "confusion",
                                     "stack", "eeg_nlp", seed=11,
                                     grids=POINT_GRIDS))

    print(f"    correctness EEG+NLP {scores[('correctness', 'eeg_nlp')]:.3f}"
          f" EEG {scores[('correctness', 'eeg')]:.3f}")
    print(f"    confusion   EEG+NLP {scores[('confusion', 'eeg_nlp')]:.3f}"
          f" EEG {scores[('confusion', 'eeg')]:.3f}")
    print(f"    permuted null {null_f1:.3f}")

    assert scores[("correctness", "eeg_nlp")] >= 0.85
    assert scores[("confusion", "eeg_nlp")] >= 0.85
    assert 0.50 - 0.08 <= null_f1 <= 0.50 + 0.08
    assert scores[("correctness", "eeg_nlp")] >= scores[("correctness", "eeg")]
    assert scores[("confusion", "eeg_nlp")] >= scores[("confusion", "eeg")]


# ------------------------------------------------------------ criterion 9


@criterion(9, 1.0, "contingency totals from constructed labels")
def test_c09_known_unknown_totals():
    counts = {
        (NOT_CONFUSED, CORRECT): 248,
        (NOT_CONFUSED, INCORRECT): 187,
        (CONFUSED, CORRECT): 206,
        (CONFUSED, INCORRECT): 47,
    }
    rows = []
    i = 0
    for (conf, corr), n in counts.items():
        for _ in range(n):
            rows.append(FeatureRow(
                participant_id=f"p{i % 7:02d}", passage_id="pass00",
                sentence_id=f"s{i:04d}", eeg=np.zeros(16), nlp=np.zeros(5),
                confusion_rating=None, confusion_label=conf,
                correct_label=corr))
            i += 1
    ds = Dataset(rows=tuple(rows), eeg_names=("e",) * 16,
                 nlp_names=("n",) * 5)

    m = known_unknown_matrix(ds)
    assert m.n_not_confused == 435
    assert m.n_confused == 253
    assert m.n_correct == 454
    assert m.n_incorrect == 234
    assert m.total == 688


# ------------------------------------------------------------ criterion 10


@criterion(10, 300.0, "byte-identical reports for identical runs")
def test_c10_evaluate_determinism(tmp_path):
    out = tmp_path / "det"
    small = ["--set", "synth.n_participants=4",
             "--set", "synth.passages_per_participant=3",
             "--set", "synth.shared_passages=1",
             "--set", "synth.sentences_min=4",
             "--set", "synth.sentences_max=5"]
    for command in ("synth", "preprocess", "features", "assemble"):
        assert cli_main([command, "--out", str(out)] + small) == 0

    eval_args = ["evaluate", "--out", str(out), "--seed", "3",
                 "--task", "confusion", "--features", "eeg+nlp",
                 "--method", "stack",
                 "--set", "eval.n_folds=4", "--set", "eval.oof_folds=3",
                 "--set", "grids.lr.l2=1.0",
                 "--set", "grids.rf.max_depth=8",
                 "--set", "grids.svm.penalty=1.0",
                 "--set", "grids.gbt.learning_rate=0.1",
                 "--set", "grids.gbt.max_depth=3"]
    tag = "confusion_stack_eeg_nlp"
    artifacts = [out / f"results_{tag}.csv", out / f"folds_{tag}.csv",
                 out / f"report_{tag}.txt"]

    assert cli_main(list(eval_args)) == 0
    first = [hashlib.sha256(p.read_bytes()).hexdigest() for p in artifacts]
    assert cli_main(list(eval_args)) == 0
    second = [hashlib.sha256(p.read_bytes()).hexdigest() for p in artifacts]
    assert first == second
