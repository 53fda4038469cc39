"""Command-line pipeline driver.

Commands compose left to right, each consuming the previous command's
artifacts from the output directory::

    synth -> preprocess -> features -> assemble -> train
                                               \\-> evaluate -> report

Every run echoes its effective configuration into the output
directory and appends a provenance line to ``run.log`` there. Report
artifacts carry no timestamps, so rerunning a command with the same
configuration and seed reproduces them byte for byte; the run log is
the one place wall-clock time is recorded.
"""

import argparse
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .balance import label_spread, resample
from .bench import KERNELS, append_results, bench_kernel
from .config import FEATURE_FLAGS, METHODS, TASKS, load_config
from .dataset import (
    apply_scaler,
    assemble,
    confusion_median,
    fit_scaler,
    load_feature_table,
    load_responses,
    read_dataset,
    read_manifest,
    write_dataset,
    write_feature_table,
)
from .ensemble import (
    BASE_ORDER,
    StackedEnsemble,
    evaluate_task,
    format_report,
    grid_search,
    read_results_csv,
    write_results_csv,
)
from .errors import (
    ConfigInvalid,
    IoFailure,
    MissingArtifact,
    PipelineError,
    SingleClassInput,
)
from .learners import build_model
from .signal import (
    TIME_COLUMN,
    FilterSpec,
    SegmentSpec,
    butterworth_bandpass,
    cut_segments,
    load_recording,
    suppress_eog,
    zscore_normalize,
)
from .spectral import extract_features
from .syntax import FEATURE_NAMES as NLP_FEATURE_NAMES
from .syntax import read_conllu_file, read_tree_file, sentence_features
from .synth import SynthConfig, generate

log = logging.getLogger(__name__)


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingArtifact(f"{path} not found; {hint}")
    return path


def _write_clean_recording(path, rec):
    t = np.arange(rec.n_samples) / rec.sample_rate_hz
    data = np.column_stack([t, rec.samples])
    header = ",".join((TIME_COLUMN, *rec.channel_names))
    fmt = ("%.8f",) + ("%.6f",) * len(rec.channel_names)
    np.savetxt(path, data, fmt=fmt, delimiter=",", header=header,
               comments="")


def _clean_dir(cfg) -> Path:
    return cfg.out_dir / "clean"


def _dataset_path(cfg) -> Path:
    return cfg.out_dir / "dataset.csv"


# --------------------------------------------------------------- commands


def cmd_synth(cfg, args):
    s = cfg["synth"]
    scfg = SynthConfig(
        n_participants=s["n_participants"],
        passages_per_participant=s["passages_per_participant"],
        shared_passages=s["shared_passages"],
        sentences_per_passage=(s["sentences_min"], s["sentences_max"]),
        sample_rate_hz=s["sample_rate_hz"],
        effect_size=s["effect_size"],
        label_noise=s["label_noise"],
        missing_correct_frac=s["missing_correct_frac"],
        seed=cfg.seed,
    )
    paths = generate(scfg, cfg.out_dir)
    log.info("synthetic study written under %s", cfg.out_dir)
    for name in ("raw_dir", "manifest", "trees", "conllu", "responses"):
        print(f"{name}: {paths[name]}")


def cmd_preprocess(cfg, args):
    raw_dir = _require(cfg.path("raw_dir"),
                       "run synth or point paths.raw_dir at recordings")
    recordings = sorted(raw_dir.glob("*.csv"))
    if not recordings:
        raise MissingArtifact(f"no recordings under {raw_dir}")
    sig = cfg["signal"]
    spec = FilterSpec(sig["band_lo_hz"], sig["band_hi_hz"],
                      order=sig["filter_order"])
    clean = _clean_dir(cfg)
    clean.mkdir(parents=True, exist_ok=True)
    for rec_path in recordings:
        rec = load_recording(rec_path)
        rec = zscore_normalize(rec)
        rec = butterworth_bandpass(rec, spec)
        rec, mask = suppress_eog(rec, threshold_uv=sig["eog_threshold"])
        log.info("%s: %.1f%% of samples EOG-suppressed",
                 rec.participant_id, 100.0 * mask.mean())
        _write_clean_recording(clean / rec_path.name, rec)
    print(f"clean recordings: {clean} ({len(recordings)} files)")


def cmd_features(cfg, args):
    clean = _require(_clean_dir(cfg), "run preprocess first")
    manifest = read_manifest(_require(cfg.path("manifest"),
                                      "run synth or provide a manifest"))
    trees = read_tree_file(_require(cfg.path("trees"),
                                    "run synth or provide parse trees"))
    deps = read_conllu_file(_require(cfg.path("conllu"),
                                     "run synth or provide dependencies"))
    sp = cfg["spectral"]

    per_sentence = {k: sentence_features(trees[k], deps[k]).vector()
                    for k in trees}
    eeg, nlp = {}, {}
    eeg_names = None
    for rec_path in sorted(clean.glob("*.csv")):
        rec = load_recording(rec_path)
        entries = [e for e in manifest
                   if e.participant_id == rec.participant_id]
        if not entries:
            log.info("%s: no manifest entries, skipped", rec.participant_id)
            continue
        specs = [SegmentSpec(e.passage_id, e.sentence_id,
                             e.t_start, e.t_end) for e in entries]
        for seg, e in zip(cut_segments(rec, specs), entries):
            bp = extract_features(seg, window_len=sp["window_len"],
                                  overlap_frac=sp["overlap_frac"])
            key = (e.participant_id, e.passage_id, e.sentence_id)
            eeg[key] = bp.vector()
            eeg_names = bp.names()
            nlp[key] = per_sentence[(e.passage_id, e.sentence_id)]
    if not eeg:
        raise MissingArtifact(
            f"no (recording, manifest) overlap under {clean}")
    write_feature_table(cfg.out_dir / "features_eeg.csv", eeg_names, eeg)
    write_feature_table(cfg.out_dir / "features_nlp.csv",
                        NLP_FEATURE_NAMES, nlp)
    print(f"feature rows: {len(eeg)}")


def cmd_assemble(cfg, args):
    eeg_names, eeg = load_feature_table(
        _require(cfg.out_dir / "features_eeg.csv", "run features first"))
    _, nlp = load_feature_table(
        _require(cfg.out_dir / "features_nlp.csv", "run features first"))
    responses = load_responses(
        _require(cfg.path("responses"),
                 "run synth or point paths.responses at the label sheet"))
    ds = assemble(eeg, eeg_names, nlp, responses)
    write_dataset(ds, _dataset_path(cfg))
    print(f"dataset rows: {len(ds)}")


def _train_seeds(seed):
    rng = np.random.default_rng([seed])
    return tuple(int(s) for s in rng.integers(0, 2 ** 31 - 1, 4))


def cmd_train(cfg, args):
    ds = read_dataset(_require(_dataset_path(cfg), "run assemble first"))
    task, method, feature_set = cfg.task, cfg.method, cfg.feature_set
    bal = cfg["balance"]
    grids = cfg.grids()
    smote_seed, grid_seed, model_seed, stack_seed = _train_seeds(cfg.seed)

    if task == "confusion":
        rated = [i for i, r in enumerate(ds.rows)
                 if r.confusion_rating is not None]
        ds = ds.subset(rated)
    x = ds.matrix(feature_set)
    mean, scale = fit_scaler(x)
    xs = apply_scaler(x, mean, scale)

    if task == "correctness":
        y = ds.correct_targets()
        if (y < 0).any():
            if len(np.unique(y[y >= 0])) < 2:
                raise SingleClassInput("labeled rows cover a single class")
            y = label_spread(xs, y, k=bal["spread_k"],
                             alpha=bal["spread_alpha"]).labels
        x_fit, y_fit = xs, y
    else:
        ratings = np.array([float(r.confusion_rating) for r in ds.rows])
        y = (ratings > confusion_median(ratings)).astype(int)
        x_fit, y_fit, _ = resample(xs, y, k=bal["smote_k"], seed=smote_seed)

    if method == "stack":
        tuned = {}
        for bi, base in enumerate(BASE_ORDER):
            tuned[base] = grid_search(x_fit, y_fit, base, grids.get(base),
                                      seed=grid_seed + bi).best_params
        model = StackedEnsemble(base_params=tuned,
                                n_oof_folds=cfg["eval"]["oof_folds"],
                                seed=stack_seed).fit(x_fit, y_fit)
    else:
        params = dict(grid_search(x_fit, y_fit, method, grids.get(method),
                                  seed=grid_seed).best_params)
        if method in ("rf", "svm"):
            params["seed"] = model_seed
        model = build_model(method, **params).fit(x_fit, y_fit)

    tag = f"{task}_{method}_{feature_set}"
    model_dir = cfg.out_dir / "models" / tag
    model_dir.mkdir(parents=True, exist_ok=True)
    model.save(model_dir / "model.txt")
    names = ds.feature_names(feature_set)
    scaler_lines = ["feature,mean,scale"]
    scaler_lines += [f"{n},{m!r},{s!r}"
                     for n, m, s in zip(names, mean, scale)]
    (model_dir / "scaler.csv").write_text("\n".join(scaler_lines) + "\n")
    (model_dir / "card.txt").write_text(
        f"task = {task}\nmethod = {method}\nfeature_set = {feature_set}\n"
        f"seed = {cfg.seed}\nconfig = {cfg.digest()}\n"
        f"rows = {len(y_fit)}\n")
    print(f"model: {model_dir}")


def cmd_evaluate(cfg, args):
    ds = read_dataset(_require(_dataset_path(cfg), "run assemble first"))
    ev, bal = cfg["eval"], cfg["balance"]
    result = evaluate_task(
        ds, cfg.task, cfg.method, cfg.feature_set,
        n_folds=ev["n_folds"], seed=cfg.seed, grids=cfg.grids(),
        n_oof_folds=ev["oof_folds"], grouped=ev["grouped"],
        smote_k=bal["smote_k"], spread_k=bal["spread_k"],
        spread_alpha=bal["spread_alpha"])

    tag = f"{cfg.task}_{cfg.method}_{cfg.feature_set}"
    write_results_csv(cfg.out_dir / f"results_{tag}.csv", [result])
    fold_lines = ["fold,n_train,n_test,accuracy,f1,participants"]
    for f in result.folds:
        fold_lines.append(
            f"{f.fold},{f.n_train},{f.n_test},{f.accuracy!r},{f.f1!r},"
            + ";".join(f.participants))
    (cfg.out_dir / f"folds_{tag}.csv").write_text(
        "\n".join(fold_lines) + "\n")
    text = format_report([result])
    (cfg.out_dir / f"report_{tag}.txt").write_text(text)
    print(text, end="")


def cmd_report(cfg, args):
    files = sorted(cfg.out_dir.glob("results_*.csv"))
    if not files:
        raise MissingArtifact(
            f"no results_*.csv under {cfg.out_dir}; run evaluate first")
    rows = [r for f in files for r in read_results_csv(f)]
    text = format_report(rows)
    (cfg.out_dir / "report.txt").write_text(text)
    print(text, end="")


def cmd_bench(cfg, args):
    names = args.kernel or sorted(KERNELS)
    results = []
    for name in names:
        results.extend(bench_kernel(name, iterations=args.iterations))
    append_results(cfg.out_dir / "bench.csv", results)
    for r in results:
        print(f"{r.kernel:>16}  n={r.size:<6}  median {r.median_s:.6f} s "
              f"over {r.iterations} runs")


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "features": cmd_features,
    "assemble": cmd_assemble,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "bench": cmd_bench,
}

_HELP = {
    "synth": "write a synthetic study with planted effects",
    "preprocess": "normalize, band-pass, and EOG-clean raw recordings",
    "features": "band powers per segment and per-sentence parse metrics",
    "assemble": "join features with responses into the analysis dataset",
    "train": "fit one model on the full dataset and store it",
    "evaluate": "grouped cross-validation; writes the report files",
    "report": "aggregate all evaluation results into one table",
    "bench": "time the numeric kernels at fixed input sizes",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="INI configuration file")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--task", choices=TASKS)
    common.add_argument("--features", choices=FEATURE_FLAGS)
    common.add_argument("--method", choices=METHODS)
    common.add_argument("--out", metavar="DIR",
                        help="output directory (default from config)")
    common.add_argument("--set", metavar="SECTION.KEY=VALUE",
                        action="append", default=[], dest="sets",
                        help="override one config entry; repeatable")

    parser = argparse.ArgumentParser(
        prog="eegnlp",
        description="listening-comprehension pipeline over EEG band powers "
                    "and sentence-complexity features")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")
    for name, text in _HELP.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "bench":
            p.add_argument("--kernel", action="append",
                           choices=sorted(KERNELS),
                           help="kernel to time; repeatable (default all)")
            p.add_argument("--iterations", type=int, default=5)
    return parser


def _fail(category, exc):
    msg = " ".join(str(exc).split()) or exc.__class__.__name__
    print(f"error: {category}: {msg}", file=sys.stderr)


def _append_run_log(cfg, command, status, category):
    line = (
        f"{time.strftime('%Y-%m-%dT%H:%M:%SZ', time.gmtime())}"
        f" command={command} status={status}"
        f" config={cfg.digest()} seed={cfg.seed}"
        f" pkg={__version__} python={platform.python_version()}"
        f" numpy={np.__version__} scipy={scipy.__version__}"
    )
    if category:
        line += f" error={category}"
    try:
        with open(cfg.out_dir / "run.log", "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
    except OSError:
        log.warning("could not append to run log under %s", cfg.out_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not logging.getLogger().handlers:
        logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                            format="%(levelname).1s %(name)s: %(message)s")
    cfg = None
    category = None
    try:
        cfg = load_config(args.config, args.sets, seed=args.seed,
                          task=args.task, features=args.features,
                          method=args.method, out=args.out)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        (cfg.out_dir / "effective.ini").write_text(cfg.effective_text())
        COMMANDS[args.command](cfg, args)
        return 0
    except ConfigInvalid as e:
        category = "config"
        _fail(category, e)
        return 2
    except MissingArtifact as e:
        category = "missing-artifact"
        _fail(category, e)
        return 3
    except (IoFailure, OSError) as e:
        category = "io"
        _fail(category, e)
        return 4
    except PipelineError as e:
        category = "internal"
        _fail(category, e)
        return 5
    except Exception as e:   # noqa: BLE001 - the exit code is the contract
        category = "internal"
        _fail(category, e)
        return 5
    finally:
        if cfg is not None:
            _append_run_log(cfg, args.command, category is None and "ok"
                            or "error", category)


if __name__ == "__main__":
    sys.exit(main())
