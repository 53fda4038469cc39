"""Synthetic study generator with planted effects.

One latent difficulty value per sentence drives every modality: the
dependency arcs stretch, the parse gains nesting, Theta power rises
while Alpha falls, the confusion rating climbs, and answer accuracy
drops. A pipeline run on the emitted files should therefore recover
the difficulty ordering from the data alone, which is what the
end-to-end checks assert. Output is byte-stable for a given config.

The directory layout is::

    <out>/raw/<participant>.csv     one recording per participant
    <out>/segments.csv              sentence windows inside recordings
    <out>/nlp/trees.txt             bracketed constituency parses
    <out>/nlp/deps.conllu           dependency parses
    <out>/labels/responses.csv      ratings and correctness
    <out>/labels/truth.csv          latent difficulty per sentence
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .dataset import RESPONSE_HEADER, SegmentEntry, write_manifest
from .errors import ConfigInvalid
from .signal import DEFAULT_CHANNELS, TIME_COLUMN

log = logging.getLogger(__name__)

TRUTH_HEADER = ["participant_id", "passage_id", "sentence_id",
                "difficulty", "rating", "correct_true", "withheld"]

_WORDS = ("the", "a", "signal", "listener", "lecture", "phrase", "idea",
          "model", "sound", "story", "answer", "question", "tone",
          "speaker", "pause", "topic", "detail", "follows", "explains",
          "repeats", "holds", "misses", "shifts", "quickly", "almost",
          "rather", "clearly", "under", "between", "with")
_TAGS = ("DT", "NN", "VB", "JJ", "IN", "RB")
_PHRASES = ("NP", "VP", "PP", "ADJP", "ADVP")

# background spectrum, microvolts RMS per channel
_PINK_RMS = 10.0
_WHITE_RMS = 4.0

# band-limited bursts added inside each sentence window
_THETA_BASE = 11.0
_ALPHA_BASE = 11.0
_BETA_BASE = 4.0
_GAMMA_BASE = 2.5

# blink artifact shape on the frontal channels
_BLINK_UV = (300.0, 450.0)
_BLINK_WIDTH_S = 0.1
_BLINK_EVERY_S = 4.0

# logistic slopes per unit effect size
_RATING_SLOPE = 6.0
_CORRECT_SLOPE = 36.0
# rating noise standard deviation per unit label noise
_RATING_NOISE = 4.0


@dataclass(frozen=True)
class SynthConfig:
    n_participants: int = 21
    passages_per_participant: int = 5
    shared_passages: int = 2        # passages every participant hears
    sentences_per_passage: tuple = (9, 10)
    sample_rate_hz: int = 256
    effect_size: float = 1.5
    label_noise: float = 0.05
    missing_correct_frac: float = 0.25
    seed: int = 0


def _validate(cfg: SynthConfig):
    if cfg.n_participants < 1:
        raise ConfigInvalid("n_participants must be at least 1")
    if cfg.passages_per_participant < 1:
        raise ConfigInvalid("passages_per_participant must be at least 1")
    if not 0 <= cfg.shared_passages <= cfg.passages_per_participant:
        raise ConfigInvalid("shared_passages must lie in "
                            "[0, passages_per_participant]")
    try:
        lo, hi = cfg.sentences_per_passage
    except (TypeError, ValueError):
        raise ConfigInvalid("sentences_per_passage must be a "
                            "(min, max) pair") from None
    if not 1 <= lo <= hi:
        raise ConfigInvalid(f"bad sentences_per_passage range {lo}-{hi}")
    if cfg.sample_rate_hz < 128:
        raise ConfigInvalid("sample_rate_hz below 128 cannot carry the "
                            "Gamma band")
    if cfg.effect_size < 0:
        raise ConfigInvalid("effect_size must be nonnegative")
    if not 0.0 <= cfg.label_noise <= 0.5:
        raise ConfigInvalid("label_noise must lie in [0, 0.5]")
    if not 0.0 <= cfg.missing_correct_frac < 1.0:
        raise ConfigInvalid("missing_correct_frac must lie in [0, 1)")


@dataclass(frozen=True)
class _Sentence:
    sentence_id: str
    difficulty: float
    forms: tuple
    heads: tuple
    deprels: tuple
    tree: str
    n_samples: int


def _pick(rng, pool):
    return pool[int(rng.integers(len(pool)))]


def _make_tree(rng, forms, d, eff):
    """Flat preterminals wrapped by difficulty-scaled binary merges."""
    siblings = []
    for w in forms:
        tag = "." if w == "." else _pick(rng, _TAGS)
        siblings.append(f"({tag} {w})")
    n = len(siblings)
    depth_drive = min(1.0, 0.12 + 0.50 * min(eff, 2.0) * d)
    target = int(round((n - 2) * depth_drive))
    for _ in range(max(0, min(target, n - 2))):
        if len(siblings) < 3:
            break  # keep at least two children under the root
        at = int(rng.integers(len(siblings) - 1))
        label = _pick(rng, _PHRASES)
        siblings[at:at + 2] = [f"({label} {siblings[at]} {siblings[at + 1]})"]
    return "(S " + " ".join(siblings) + ")"


def _draw_sentence(rng, sentence_id, cfg) -> _Sentence:
    d = float(rng.random())
    n_words = 10 + int(rng.integers(0, 3))
    forms = tuple(_pick(rng, _WORDS) for _ in range(n_words)) + (".",)

    # heads always point left, so the block is acyclic by construction;
    # arc reach grows with difficulty
    coupling = min(1.0, 0.08 + 0.70 * min(cfg.effect_size, 2.0) * d)
    heads = [0]
    for i in range(2, n_words + 1):
        reach = (i - 2) * coupling
        heads.append(i - 1 - int(rng.random() * reach))
    heads.append(n_words)  # final period hangs off the previous token
    deprels = ("root",) + ("dep",) * (n_words - 1) + ("punct",)

    tree = _make_tree(rng, forms, d, cfg.effect_size)
    fs = cfg.sample_rate_hz
    n_samples = int(rng.integers(round(2.5 * fs), round(3.5 * fs) + 1))
    return _Sentence(sentence_id=sentence_id, difficulty=d, forms=forms,
                     heads=tuple(heads), deprels=deprels, tree=tree,
                     n_samples=n_samples)


def _draw_passage(rng, cfg):
    lo, hi = cfg.sentences_per_passage
    n_sent = int(rng.integers(lo, hi + 1))
    return tuple(_draw_sentence(rng, f"s{k:02d}", cfg)
                 for k in range(1, n_sent + 1))


def _conllu_block(passage_id, s: _Sentence) -> str:
    lines = [f"# passage_id = {passage_id}",
             f"# sentence_id = {s.sentence_id}"]
    for i, (form, head, rel) in enumerate(zip(s.forms, s.heads, s.deprels),
                                          start=1):
        lines.append("\t".join([str(i), form, form, "X", "_", "_",
                                str(head), rel, "_", "_"]))
    return "\n".join(lines)


def _pink_noise(rng, n, n_channels, fs):
    """Unit-RMS noise with a 1/f spectrum above 1 Hz."""
    white = rng.standard_normal((n, n_channels))
    spec = np.fft.rfft(white, axis=0)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    shape = 1.0 / np.sqrt(np.maximum(f, 1.0))
    shape[0] = 0.0
    x = np.fft.irfft(spec * shape[:, None], n, axis=0)
    sd = x.std(axis=0)
    return x / np.where(sd > 0, sd, 1.0)


def _ramp_envelope(n, fs):
    env = np.ones(n)
    r = min(int(round(0.1 * fs)), n // 2)
    if r > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(r) / r)
        env[:r] = ramp
        env[n - r:] = ramp[::-1]
    return env


def _sentence_bursts(rng, n, fs, d, eff):
    """Oscillatory content for one sentence window, all four channels."""
    t = np.arange(n) / fs
    env = _ramp_envelope(n, fs)
    # the neural response tracks difficulty through a wandering attention
    # level, so the band trend sees a noisy copy of d; the sentence text
    # encodes d exactly, which is what keeps the added features useful
    d_neural = float(np.clip(d + rng.normal(0.0, 0.06), 0.0, 1.0))
    contrast = 0.32 * min(eff, 3.0) * (2.0 * d_neural - 1.0)
    theta_amp = _THETA_BASE * max(1.0 + contrast, 0.05) * rng.uniform(0.88, 1.14)
    alpha_amp = _ALPHA_BASE * max(1.0 - contrast, 0.05) * rng.uniform(0.88, 1.14)

    out = np.zeros((n, 4))
    for base_amp, f_lo, f_hi in ((theta_amp, 4.5, 7.5),
                                 (alpha_amp, 8.5, 11.5),
                                 (_BETA_BASE, 15.0, 25.0),
                                 (_GAMMA_BASE, 35.0, 60.0)):
        freq = rng.uniform(f_lo, f_hi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        gains = rng.uniform(0.85, 1.15, size=4)
        wave = np.sin(2.0 * np.pi * freq * t + phase) * env
        out += base_amp * wave[:, None] * gains[None, :]
    return out


def _add_blinks(rng, x, fs):
    """Biphasic frontal deflections, large enough to trip the detector."""
    total_s = x.shape[0] / fs
    width = max(int(round(_BLINK_WIDTH_S * fs)), 4)
    n_blinks = int(round(total_s / _BLINK_EVERY_S * rng.uniform(0.8, 1.2)))
    shape = np.sin(2.0 * np.pi * np.arange(width) / width)
    for _ in range(n_blinks):
        at = int(rng.uniform(0, x.shape[0] - width))
        amp = rng.uniform(*_BLINK_UV)
        x[at:at + width, 1] += amp * shape        # AF7
        x[at:at + width, 2] += 0.9 * amp * shape  # AF8


def _participant_recording(rng, cfg, passage_list):
    """Raw samples plus the (start, length) window of every sentence.

    ``passage_list`` is a list of (passage_id, sentences) pairs in
    listening order. Returns (samples, windows) where windows aligns
    with the flattened sentence order.
    """
    fs = cfg.sample_rate_hz
    lead = fs
    gap = int(round(0.25 * fs))

    windows = []
    cursor = lead
    for _, sentences in passage_list:
        for s in sentences:
            windows.append((cursor, s.n_samples))
            cursor += s.n_samples + gap
        cursor += fs - gap  # one quiet second between passages
    total = cursor + lead

    t = np.arange(total) / fs
    x = np.zeros((total, 4))
    x += rng.uniform(600.0, 900.0, size=4)[None, :]
    drift_f = rng.uniform(0.1, 0.4, size=4)
    drift_ph = rng.uniform(0.0, 2.0 * np.pi, size=4)
    drift_amp = rng.uniform(15.0, 35.0, size=4)
    x += drift_amp * np.sin(2.0 * np.pi * drift_f * t[:, None] + drift_ph)
    x += _PINK_RMS * _pink_noise(rng, total, 4, fs)
    x += _WHITE_RMS * rng.standard_normal((total, 4))

    flat = [s for _, sentences in passage_list for s in sentences]
    for (start, n), s in zip(windows, flat):
        x[start:start + n] += _sentence_bursts(rng, n, fs, s.difficulty,
                                               cfg.effect_size)
    _add_blinks(rng, x, fs)
    return x, windows


def _write_recording(path, x, fs):
    t = np.arange(x.shape[0]) / fs
    data = np.column_stack([t, x])
    header = ",".join((TIME_COLUMN, *DEFAULT_CHANNELS))
    # 8 decimals keep multiples of 1/256 s exact in text form
    np.savetxt(path, data, fmt=("%.8f", "%.3f", "%.3f", "%.3f", "%.3f"),
               delimiter=",", header=header, comments="")


def generate(cfg: SynthConfig, out_dir) -> dict:
    """Write a complete synthetic study under ``out_dir``.

    Returns a dict of the emitted file paths: raw_dir, manifest,
    trees, conllu, responses, truth.
    """
    _validate(cfg)
    out = Path(out_dir)
    raw_dir = out / "raw"
    nlp_dir = out / "nlp"
    labels_dir = out / "labels"
    for p in (raw_dir, nlp_dir, labels_dir):
        p.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(cfg.seed)
    participants = [f"p{i:02d}" for i in range(cfg.n_participants)]

    # passage content first; shared passages are drawn once and reused
    passages = {}
    passage_ids = []
    shared_ids = [f"shared{k:02d}" for k in range(cfg.shared_passages)]
    for pid in shared_ids:
        passages[pid] = _draw_passage(rng, cfg)
        passage_ids.append(pid)
    order = {}
    n_solo = cfg.passages_per_participant - cfg.shared_passages
    for part in participants:
        solo_ids = [f"{part}_solo{k:02d}" for k in range(n_solo)]
        for pid in solo_ids:
            passages[pid] = _draw_passage(rng, cfg)
            passage_ids.append(pid)
        order[part] = shared_ids + solo_ids

    tree_lines = []
    conllu_blocks = []
    for pid in passage_ids:
        for s in passages[pid]:
            tree_lines.append(f"{pid}\t{s.sentence_id}\t{s.tree}")
            conllu_blocks.append(_conllu_block(pid, s))
    trees_path = nlp_dir / "trees.txt"
    conllu_path = nlp_dir / "deps.conllu"
    trees_path.write_text("\n".join(tree_lines) + "\n")
    conllu_path.write_text("\n\n".join(conllu_blocks) + "\n")

    fs = cfg.sample_rate_hz
    eff = cfg.effect_size
    manifest = []
    response_lines = [",".join(RESPONSE_HEADER)]
    truth_lines = [",".join(TRUTH_HEADER)]
    for part in participants:
        passage_list = [(pid, passages[pid]) for pid in order[part]]
        x, windows = _participant_recording(rng, cfg, passage_list)
        _write_recording(raw_dir / f"{part}.csv", x, fs)

        flat = [(pid, s) for pid, sentences in passage_list
                for s in sentences]
        for (start, n), (pid, s) in zip(windows, flat):
            t0 = start / fs
            t1 = (start + n) / fs
            manifest.append(SegmentEntry(part, pid, s.sentence_id, t0, t1))

            d = s.difficulty
            u = (_RATING_SLOPE * eff * (d - 0.5)
                 + rng.normal(0.0, _RATING_NOISE * cfg.label_noise))
            rating = 1 + int(round(9.0 * float(expit(u))))
            p_correct = float(expit(-_CORRECT_SLOPE * eff * (d - 0.5)))
            correct = 1 if rng.random() < p_correct else 0
            if rng.random() < cfg.label_noise:
                correct = 1 - correct
            withheld = rng.random() < cfg.missing_correct_frac

            response_lines.append(",".join([
                part, pid, s.sentence_id, str(rating),
                "" if withheld else str(correct)]))
            truth_lines.append(",".join([
                part, pid, s.sentence_id, f"{d:.6f}", str(rating),
                str(correct), "1" if withheld else "0"]))

    manifest_path = out / "segments.csv"
    write_manifest(manifest_path, manifest)
    responses_path = labels_dir / "responses.csv"
    responses_path.write_text("\n".join(response_lines) + "\n")
    truth_path = labels_dir / "truth.csv"
    truth_path.write_text("\n".join(truth_lines) + "\n")

    log.info("synthesized %d participants, %d passages, %d sentences",
             len(participants), len(passage_ids), len(manifest))
    return {"raw_dir": raw_dir, "manifest": manifest_path,
            "trees": trees_path, "conllu": conllu_path,
            "responses": responses_path, "truth": truth_path}


def read_truth(path) -> dict:
    """Ground-truth rows keyed by (participant, passage, sentence)."""
    lines = Path(path).read_text().splitlines()
    out = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        part, pid, sid, d, rating, correct, withheld = line.split(",")
        out[(part, pid, sid)] = {
            "difficulty": float(d), "rating": int(rating),
            "correct": int(correct), "withheld": withheld == "1"}
    return out
