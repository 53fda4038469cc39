"""Declarative run configuration.

One INI file drives every command. Parsing is strict: a key or
section the schema does not declare is an error, not a warning,
because a silently ignored typo in an experiment definition is the
most expensive kind of bug this tool can produce. Values keep their
schema type, overrides go through the same validation as file values,
and the effective state can be serialized back out byte-stably so a
run directory always records exactly what produced it.
"""

import configparser
import hashlib
from pathlib import Path

from .errors import ConfigInvalid, IoFailure

TASKS = ("correctness", "confusion")
FEATURE_FLAGS = ("eeg", "eeg+nlp", "eeg+nlp+con")
METHODS = ("lr", "rf", "svm", "stack")

# the spellings differ at the boundary: flags read naturally on a
# command line, attribute-safe names travel through the dataset layer
_FEATURE_SET_BY_FLAG = {
    "eeg": "eeg",
    "eeg+nlp": "eeg_nlp",
    "eeg+nlp+con": "eeg_nlp_con",
}


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text):
    toks = [t.strip() for t in text.split(",") if t.strip()]
    if not toks:
        raise ValueError("empty list")
    return tuple(float(t) for t in toks)


def _render(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# section -> key -> (parse function, default). Paths left empty here
# are derived from out_dir at access time, so a fresh config composes
# synth -> evaluate with no editing.
SCHEMA = {
    "paths": {
        "out_dir": (str, "out"),
        "raw_dir": (str, ""),
        "manifest": (str, ""),
        "trees": (str, ""),
        "conllu": (str, ""),
        "responses": (str, ""),
    },
    "run": {
        "seed": (int, 0),
        "task": (str, "confusion"),
        "features": (str, "eeg+nlp"),
        "method": (str, "stack"),
    },
    "signal": {
        "band_lo_hz": (float, 4.0),
        "band_hi_hz": (float, 80.0),
        "filter_order": (int, 4),
        "eog_threshold": (float, 4.0),
    },
    "spectral": {
        "window_len": (int, 512),
        "overlap_frac": (float, 0.5),
    },
    "balance": {
        "smote_k": (int, 5),
        "spread_k": (int, 7),
        "spread_alpha": (float, 0.2),
    },
    "eval": {
        "n_folds": (int, 10),
        "oof_folds": (int, 5),
        "grouped": (_parse_bool, True),
    },
    "synth": {
        "n_participants": (int, 21),
        "passages_per_participant": (int, 5),
        "shared_passages": (int, 2),
        "sentences_min": (int, 9),
        "sentences_max": (int, 10),
        "sample_rate_hz": (int, 256),
        "effect_size": (float, 1.5),
        "label_noise": (float, 0.05),
        "missing_correct_frac": (float, 0.25),
    },
    "grids": {
        "lr.l2": (_parse_floats, (0.1, 1.0, 10.0)),
        "rf.max_depth": (_parse_floats, (4.0, 8.0, 16.0)),
        "svm.penalty": (_parse_floats, (0.1, 1.0, 10.0)),
        "gbt.learning_rate": (_parse_floats, (0.05, 0.1)),
        "gbt.max_depth": (_parse_floats, (2.0, 3.0)),
    },
}

_DERIVED_PATHS = {
    "raw_dir": "raw",
    "manifest": "segments.csv",
    "trees": "nlp/trees.txt",
    "conllu": "nlp/deps.conllu",
    "responses": "labels/responses.csv",
}


class PipelineConfig:
    """Typed view over the validated section/key/value tree."""

    def __init__(self, values):
        self._values = values

    def __getitem__(self, section):
        return self._values[section]

    # -- run selections -------------------------------------------------

    @property
    def seed(self):
        return self._values["run"]["seed"]

    @property
    def task(self):
        return self._values["run"]["task"]

    @property
    def features_flag(self):
        return self._values["run"]["features"]

    @property
    def feature_set(self):
        return _FEATURE_SET_BY_FLAG[self._values["run"]["features"]]

    @property
    def method(self):
        return self._values["run"]["method"]

    # -- paths ----------------------------------------------------------

    @property
    def out_dir(self) -> Path:
        return Path(self._values["paths"]["out_dir"])

    def path(self, name) -> Path:
        """A [paths] entry, falling back to its spot under out_dir."""
        raw = self._values["paths"][name]
        if raw:
            return Path(raw)
        return self.out_dir / _DERIVED_PATHS[name]

    # -- derived structures ----------------------------------------------

    def grids(self):
        """{method: {param: candidate tuple}} for the grid search."""
        out = {}
        for dotted, values in self._values["grids"].items():
            method, param = dotted.split(".", 1)
            out.setdefault(method, {})[param] = values
        return out

    def effective_text(self) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_render(self._values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.effective_text().encode()).hexdigest()[:12]


def _validate_semantics(values):
    run = values["run"]
    if run["task"] not in TASKS:
        raise ConfigInvalid(
            f"run.task must be one of {'|'.join(TASKS)}, got {run['task']!r}")
    if run["features"] not in FEATURE_FLAGS:
        raise ConfigInvalid(f"run.features must be one of "
                            f"{'|'.join(FEATURE_FLAGS)}, "
                            f"got {run['features']!r}")
    if run["method"] not in METHODS:
        raise ConfigInvalid(
            f"run.method must be one of {'|'.join(METHODS)}, "
            f"got {run['method']!r}")
    if run["task"] == "confusion" and run["features"] == "eeg+nlp+con":
        raise ConfigInvalid(
            "run.features=eeg+nlp+con feeds the rating in as an input, "
            "which is circular for run.task=confusion")
    if values["eval"]["n_folds"] < 2:
        raise ConfigInvalid("eval.n_folds must be at least 2")
    if values["eval"]["oof_folds"] < 2:
        raise ConfigInvalid("eval.oof_folds must be at least 2")
    if not values["paths"]["out_dir"]:
        raise ConfigInvalid("paths.out_dir must not be empty")


def _set_value(values, section, key, text, where):
    if section not in SCHEMA:
        raise ConfigInvalid(f"{where}: unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigInvalid(f"{where}: unknown key {section}.{key}")
    parse = SCHEMA[section][key][0]
    try:
        values[section][key] = parse(text)
    except ValueError as e:
        raise ConfigInvalid(
            f"{where}: bad value for {section}.{key}: {e}") from None


def load_config(path=None, sets=(), seed=None, task=None, features=None,
                method=None, out=None) -> PipelineConfig:
    """Defaults, then the file, then --set pairs, then the sugar flags.

    Later layers win. Every layer passes the same schema validation,
    so an override can never smuggle in a key the file could not.
    """
    values = {section: {k: default for k, (_, default) in keys.items()}
              for section, keys in SCHEMA.items()}

    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigInvalid(f"config file not found: {p}")
        try:
            text = p.read_text()
        except OSError as e:
            raise IoFailure(f"cannot read config file {p}: {e}") from None
        cp = configparser.ConfigParser(interpolation=None, strict=True)
        try:
            cp.read_string(text, source=str(p))
        except configparser.Error as e:
            raise ConfigInvalid(f"{p}: {e}") from None
        for section in cp.sections():
            for key, val in cp.items(section):
                _set_value(values, section, key, val, str(p))

    for entry in sets:
        target, sep, val = entry.partition("=")
        if not sep:
            raise ConfigInvalid(f"--set needs section.key=value, "
                                f"got {entry!r}")
        section, dot, key = target.strip().partition(".")
        if not dot:
            raise ConfigInvalid(f"--set needs section.key=value, "
                                f"got {entry!r}")
        _set_value(values, section, key.strip(), val.strip(), "--set")

    if seed is not None:
        values["run"]["seed"] = int(seed)
    if task is not None:
        values["run"]["task"] = task
    if features is not None:
        values["run"]["features"] = features
    if method is not None:
        values["run"]["method"] = method
    if out is not None:
        values["paths"]["out_dir"] = str(out)

    _validate_semantics(values)
    return PipelineConfig(values)
