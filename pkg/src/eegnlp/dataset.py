"""Joining the three data sources into one sentence-level table.

A row is one (participant, passage, sentence) triple carrying 16 band
power features, 5 syntactic features, the self-reported confusion
rating, and the two classification targets. Sources are inner-joined;
rows missing from any side are dropped and counted in the log.
"""

import logging
import statistics
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DuplicateKey,
    InvalidFeatureSet,
    MalformedLine,
    MissingLabels,
    NoLabeledRows,
    NoRatings,
)

log = logging.getLogger(__name__)

CONFUSED = "confused"
NOT_CONFUSED = "not_confused"
CORRECT = "correct"
INCORRECT = "incorrect"

FEATURE_SETS = ("eeg", "eeg_nlp", "eeg_nlp_con")

RESPONSE_HEADER = ["participant_id", "passage_id", "sentence_id",
                   "confusion_rating", "correct"]


@dataclass(frozen=True)
class ResponseRecord:
    confusion_rating: int = None   # 1..10 or None
    correct: int = None            # 1, 0, or None when unanswered


@dataclass(frozen=True)
class FeatureRow:
    participant_id: str
    passage_id: str
    sentence_id: str
    eeg: np.ndarray                # 16 band powers (log scale)
    nlp: np.ndarray                # 5 syntactic features
    confusion_rating: int = None
    confusion_label: str = None    # confused / not_confused
    correct_label: str = None      # correct / incorrect

    @property
    def key(self):
        return (self.participant_id, self.passage_id, self.sentence_id)


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    scale: np.ndarray
    names: tuple


@dataclass(frozen=True)
class Dataset:
    rows: tuple
    eeg_names: tuple
    nlp_names: tuple
    standardization: Standardization = None

    def __len__(self):
        return len(self.rows)

    def feature_names(self, feature_set: str = "eeg_nlp"):
        if feature_set == "eeg":
            return list(self.eeg_names)
        if feature_set == "eeg_nlp":
            return list(self.eeg_names) + list(self.nlp_names)
        if feature_set == "eeg_nlp_con":
            return list(self.eeg_names) + list(self.nlp_names) + ["confusion_rating"]
        raise InvalidFeatureSet(f"unknown feature set {feature_set!r}")

    def matrix(self, feature_set: str = "eeg_nlp") -> np.ndarray:
        """Stack the requested feature columns, one row per sentence."""
        if feature_set not in FEATURE_SETS:
            raise InvalidFeatureSet(f"unknown feature set {feature_set!r}")
        blocks = [np.stack([r.eeg for r in self.rows])]
        if feature_set in ("eeg_nlp", "eeg_nlp_con"):
            blocks.append(np.stack([r.nlp for r in self.rows]))
        if feature_set == "eeg_nlp_con":
            if any(r.confusion_rating is None for r in self.rows):
                raise MissingLabels(
                    "confusion_rating missing on some rows; cannot use it as a feature")
            blocks.append(np.array([[float(r.confusion_rating)]
                                    for r in self.rows]))
        return np.hstack(blocks)

    def participants(self):
        return sorted({r.participant_id for r in self.rows})

    def subset(self, indices) -> "Dataset":
        return replace(self, rows=tuple(self.rows[i] for i in indices))

    def correct_targets(self) -> np.ndarray:
        """1 correct, 0 incorrect, -1 unknown."""
        code = {CORRECT: 1, INCORRECT: 0, None: -1}
        return np.array([code[r.correct_label] for r in self.rows], dtype=np.int64)

    def confusion_targets(self) -> np.ndarray:
        code = {CONFUSED: 1, NOT_CONFUSED: 0, None: -1}
        return np.array([code[r.confusion_label] for r in self.rows], dtype=np.int64)


def assemble(eeg_features: dict, eeg_names, nlp_features: dict,
             responses: dict) -> Dataset:
    """Inner-join the three keyed sources on (participant, passage, sentence).

    ``eeg_features`` and ``nlp_features`` map the triple key to feature
    vectors; ``responses`` maps it to ResponseRecord. Only keys present
    in all three survive; drop counts per source are logged. Rows come
    out sorted by key, so assembly order does not depend on input order.
    """
    keys = set(responses)
    for name, source in (("eeg", eeg_features), ("nlp", nlp_features)):
        missing = keys - set(source)
        if missing:
            log.info("dropping %d response rows with no %s features",
                     len(missing), name)
        keys &= set(source)
    orphans = (set(eeg_features) | set(nlp_features)) - set(responses)
    if orphans:
        log.info("dropping %d feature rows with no response entry", len(orphans))

    rows = []
    for key in sorted(keys):
        resp = responses[key]
        rows.append(FeatureRow(
            participant_id=key[0],
            passage_id=key[1],
            sentence_id=key[2],
            eeg=np.asarray(eeg_features[key], dtype=np.float64),
            nlp=np.asarray(nlp_features[key], dtype=np.float64),
            confusion_rating=resp.confusion_rating,
            correct_label={1: CORRECT, 0: INCORRECT, None: None}[resp.correct],
        ))
    from .syntax import FEATURE_NAMES as NLP_NAMES
    return Dataset(rows=tuple(rows), eeg_names=tuple(eeg_names),
                   nlp_names=tuple(NLP_NAMES))


def confusion_median(ratings) -> float:
    """Median rating; the split point for the confusion labels."""
    ratings = [r for r in ratings if r is not None]
    if not ratings:
        raise NoRatings("no confusion ratings present")
    return float(statistics.median(ratings))


def apply_confusion_labels(ds: Dataset, median: float) -> Dataset:
    """Label rated rows: above the median is confused, at or below is not."""
    rows = []
    for r in ds.rows:
        if r.confusion_rating is None:
            rows.append(r)
        else:
            label = CONFUSED if r.confusion_rating > median else NOT_CONFUSED
            rows.append(replace(r, confusion_label=label))
    return replace(ds, rows=tuple(rows))


def derive_confusion_labels(ds: Dataset) -> Dataset:
    """Median split over all present ratings in the dataset."""
    return apply_confusion_labels(
        ds, confusion_median(r.confusion_rating for r in ds.rows))


@dataclass(frozen=True)
class KnownUnknownMatrix:
    """2x2 contingency of confusion labels against answer correctness."""

    confused_correct: int
    confused_incorrect: int
    not_confused_correct: int
    not_confused_incorrect: int

    @property
    def n_confused(self):
        return self.confused_correct + self.confused_incorrect

    @property
    def n_not_confused(self):
        return self.not_confused_correct + self.not_confused_incorrect

    @property
    def n_correct(self):
        return self.confused_correct + self.not_confused_correct

    @property
    def n_incorrect(self):
        return self.confused_incorrect + self.not_confused_incorrect

    @property
    def total(self):
        return self.n_confused + self.n_not_confused


def known_unknown_matrix(ds: Dataset) -> KnownUnknownMatrix:
    """Count rows carrying both labels into the 2x2 table."""
    cells = {(CONFUSED, CORRECT): 0, (CONFUSED, INCORRECT): 0,
             (NOT_CONFUSED, CORRECT): 0, (NOT_CONFUSED, INCORRECT): 0}
    for r in ds.rows:
        if r.confusion_label is not None and r.correct_label is not None:
            cells[(r.confusion_label, r.correct_label)] += 1
    matrix = KnownUnknownMatrix(
        confused_correct=cells[(CONFUSED, CORRECT)],
        confused_incorrect=cells[(CONFUSED, INCORRECT)],
        not_confused_correct=cells[(NOT_CONFUSED, CORRECT)],
        not_confused_incorrect=cells[(NOT_CONFUSED, INCORRECT)],
    )
    if matrix.total == 0:
        raise NoLabeledRows("no rows carry both labels")
    return matrix


# ------------------------------------------------------------ standardization

def fit_scaler(x: np.ndarray):
    """Column means and scales on training data; constant columns get
    scale 1 so they pass through centered instead of dividing by zero."""
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale <= 1e-12 * np.maximum(1.0, np.abs(mean)), 1.0, scale)
    return mean, scale


def apply_scaler(x, mean, scale):
    return (x - mean) / scale


def standardize_fit_transform(train: Dataset, apply_to: Dataset) -> Dataset:
    """Scale the 21 feature columns of ``apply_to`` with parameters
    fitted on ``train`` only; the fit is recorded on the result."""
    names = tuple(train.feature_names("eeg_nlp"))
    mean, scale = fit_scaler(train.matrix("eeg_nlp"))
    scaled = apply_scaler(apply_to.matrix("eeg_nlp"), mean, scale)
    n_eeg = len(train.eeg_names)
    rows = tuple(
        replace(r, eeg=scaled[i, :n_eeg], nlp=scaled[i, n_eeg:])
        for i, r in enumerate(apply_to.rows)
    )
    return replace(apply_to, rows=rows,
                   standardization=Standardization(mean, scale, names))


# ----------------------------------------------------------------- file I/O

def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_feature_table(path, names, table: dict):
    """CSV with key columns then one column per feature name."""
    lines = [",".join(["participant_id", "passage_id", "sentence_id", *names])]
    for key in sorted(table):
        vec = table[key]
        lines.append(",".join([*key, *(repr(float(v)) for v in vec)]))
    path.write_text("\n".join(lines) + "\n")


def load_feature_table(path):
    """Returns (feature names, dict key -> vector)."""
    lines = path.read_text().splitlines()
    if not lines:
        raise MalformedLine(f"{path}: empty feature table")
    header = lines[0].split(",")
    if header[:3] != ["participant_id", "passage_id", "sentence_id"]:
        raise MalformedLine(f"{path}: unexpected header {header[:3]}")
    names = header[3:]
    table = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise MalformedLine(f"{path}: row width {len(parts)} != header")
        key = tuple(parts[:3])
        if key in table:
            raise DuplicateKey(f"{path}: repeated key {key}")
        table[key] = np.array([float(v) for v in parts[3:]], dtype=np.float64)
    return names, table


def load_responses(path) -> dict:
    """Read the response sheet.

    Columns: participant_id, passage_id, sentence_id, confusion_rating
    (1..10 or empty), correct (1, 0, or empty when the sentence had no
    question attached).
    """
    lines = path.read_text().splitlines()
    if not lines or lines[0].split(",") != RESPONSE_HEADER:
        raise MalformedLine(f"{path}: expected header {','.join(RESPONSE_HEADER)}")
    out = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise MalformedLine(f"{path}:{lineno}: expected 5 fields")
        key = tuple(parts[:3])
        if key in out:
            raise DuplicateKey(f"{path}: repeated key {key}")
        rating = None
        if parts[3] != "":
            rating = int(parts[3])
            if not (1 <= rating <= 10):
                raise MalformedLine(f"{path}:{lineno}: rating {rating} outside 1..10")
        correct = None
        if parts[4] != "":
            if parts[4] not in ("0", "1"):
                raise MalformedLine(f"{path}:{lineno}: correct must be 0, 1, or empty")
            correct = int(parts[4])
        out[key] = ResponseRecord(confusion_rating=rating, correct=correct)
    return out


def write_dataset(ds: Dataset, path):
    """Persist the assembled table; empty cells mean a missing value."""
    header = ["participant_id", "passage_id", "sentence_id",
              *ds.eeg_names, *ds.nlp_names,
              "confusion_rating", "confusion_label", "correct_label"]
    lines = [",".join(header)]
    for r in ds.rows:
        cells = [r.participant_id, r.passage_id, r.sentence_id]
        cells += [repr(float(v)) for v in r.eeg]
        cells += [repr(float(v)) for v in r.nlp]
        cells += [_fmt(r.confusion_rating), _fmt(r.confusion_label),
                  _fmt(r.correct_label)]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    lines = path.read_text().splitlines()
    if not lines:
        raise MalformedLine(f"{path}: empty dataset file")
    header = lines[0].split(",")
    try:
        i_rating = header.index("confusion_rating")
    except ValueError:
        raise MalformedLine(f"{path}: no confusion_rating column") from None
    eeg_names = tuple(header[3:i_rating - 5])
    nlp_names = tuple(header[i_rating - 5:i_rating])
    rows = []
    seen = set()
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise MalformedLine(f"{path}: row width mismatch")
        key = tuple(parts[:3])
        if key in seen:
            raise DuplicateKey(f"{path}: repeated key {key}")
        seen.add(key)
        n_eeg = len(eeg_names)
        eeg = np.array([float(v) for v in parts[3:3 + n_eeg]])
        nlp = np.array([float(v) for v in parts[3 + n_eeg:3 + n_eeg + 5]])
        rating, conf, corr = parts[i_rating], parts[i_rating + 1], parts[i_rating + 2]
        rows.append(FeatureRow(
            participant_id=key[0], passage_id=key[1], sentence_id=key[2],
            eeg=eeg, nlp=nlp,
            confusion_rating=int(rating) if rating else None,
            confusion_label=conf or None,
            correct_label=corr or None,
        ))
    return Dataset(rows=tuple(rows), eeg_names=eeg_names, nlp_names=nlp_names)


SEGMENT_HEADER = ["participant_id", "passage_id", "sentence_id",
                  "t_start", "t_end"]


@dataclass(frozen=True)
class SegmentEntry:
    """One sentence window inside a participant's recording."""

    participant_id: str
    passage_id: str
    sentence_id: str
    t_start: float
    t_end: float


def write_manifest(path, entries):
    lines = [",".join(SEGMENT_HEADER)]
    for e in entries:
        lines.append(",".join([e.participant_id, e.passage_id, e.sentence_id,
                               repr(float(e.t_start)), repr(float(e.t_end))]))
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path):
    """Read the segment manifest written next to the raw recordings."""
    lines = path.read_text().splitlines()
    if not lines or lines[0].split(",") != SEGMENT_HEADER:
        raise MalformedLine(f"{path}: expected header {','.join(SEGMENT_HEADER)}")
    entries = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise MalformedLine(f"{path}:{lineno}: expected 5 fields")
        key = tuple(parts[:3])
        if key in seen:
            raise DuplicateKey(f"{path}: repeated key {key}")
        seen.add(key)
        try:
            t_start, t_end = float(parts[3]), float(parts[4])
        except ValueError:
            raise MalformedLine(f"{path}:{lineno}: bad segment times") from None
        if not t_start < t_end:
            raise MalformedLine(f"{path}:{lineno}: t_start must precede t_end")
        entries.append(SegmentEntry(*key, t_start, t_end))
    return entries
