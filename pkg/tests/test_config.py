"""Strict INI parsing, override precedence, effective-state echo."""

import pytest

from eegnlp.config import SCHEMA, load_config
from eegnlp.errors import ConfigInvalid


def test_defaults_load_without_a_file():
    cfg = load_config()
    assert cfg.seed == 0
    assert cfg.task == "confusion"
    assert cfg.features_flag == "eeg+nlp"
    assert cfg.feature_set == "eeg_nlp"
    assert cfg.method == "stack"
    assert cfg.out_dir.name == "out"


def test_derived_paths_follow_out_dir(tmp_path):
    cfg = load_config(out=str(tmp_path / "runA"))
    assert cfg.path("raw_dir") == tmp_path / "runA" / "raw"
    assert cfg.path("manifest") == tmp_path / "runA" / "segments.csv"
    assert cfg.path("responses") == tmp_path / "runA" / "labels" / "responses.csv"


def test_explicit_path_overrides_derivation(tmp_path):
    cfg = load_config(sets=("paths.responses=/elsewhere/r.csv",),
                      out=str(tmp_path))
    assert str(cfg.path("responses")) == "/elsewhere/r.csv"
    # the others still derive
    assert cfg.path("manifest") == tmp_path / "segments.csv"


class TestFileParsing:

    def test_values_take_schema_types(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[eval]\nn_folds = 5\ngrouped = false\n"
                       "[signal]\nband_lo_hz = 2.5\n")
        cfg = load_config(str(ini))
        assert cfg["eval"]["n_folds"] == 5
        assert cfg["eval"]["grouped"] is False
        assert cfg["signal"]["band_lo_hz"] == 2.5

    def test_unknown_section_is_named(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[spectrall]\nwindow_len = 256\n")
        with pytest.raises(ConfigInvalid, match="spectrall"):
            load_config(str(ini))

    def test_unknown_key_is_named(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[spectral]\nwindow_length = 256\n")
        with pytest.raises(ConfigInvalid, match="window_length"):
            load_config(str(ini))

    def test_bad_value_type_is_rejected(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[eval]\nn_folds = often\n")
        with pytest.raises(ConfigInvalid, match="n_folds"):
            load_config(str(ini))

    def test_missing_file_is_a_config_error(self, tmp_path):
        with pytest.raises(ConfigInvalid, match="no-such"):
            load_config(str(tmp_path / "no-such.ini"))


class TestOverridePrecedence:

    def test_set_overrides_file(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[run]\nseed = 3\n")
        cfg = load_config(str(ini), sets=("run.seed=7",))
        assert cfg.seed == 7

    def test_flag_overrides_set(self, tmp_path):
        cfg = load_config(sets=("run.seed=7",), seed=9, out=str(tmp_path))
        assert cfg.seed == 9

    def test_malformed_set_entry(self):
        with pytest.raises(ConfigInvalid, match="section.key=value"):
            load_config(sets=("run.seed",))
        with pytest.raises(ConfigInvalid):
            load_config(sets=("seed=7",))

    def test_unknown_set_key(self):
        with pytest.raises(ConfigInvalid, match="run.sead"):
            load_config(sets=("run.sead=7",))

    def test_grid_override_parses_float_list(self):
        cfg = load_config(sets=("grids.rf.max_depth=2,4",))
        assert cfg.grids()["rf"]["max_depth"] == (2.0, 4.0)


class TestSemantics:

    @pytest.mark.parametrize("entry", [
        "run.task=comprehension",
        "run.features=nlp",
        "run.method=xgb",
        "eval.n_folds=1",
        "eval.oof_folds=0",
        "paths.out_dir=",
    ])
    def test_invalid_values(self, entry):
        with pytest.raises(ConfigInvalid):
            load_config(sets=(entry,))

    def test_rating_input_on_confusion_task_is_circular(self):
        with pytest.raises(ConfigInvalid, match="circular"):
            load_config(task="confusion", features="eeg+nlp+con")

    def test_rating_input_allowed_for_correctness(self):
        cfg = load_config(task="correctness", features="eeg+nlp+con")
        assert cfg.feature_set == "eeg_nlp_con"


class TestEffectiveState:

    def test_round_trip_through_effective_text(self, tmp_path):
        cfg = load_config(sets=("eval.n_folds=6", "signal.eog_threshold=3.5"),
                          seed=4, out=str(tmp_path))
        echo = tmp_path / "echo.ini"
        echo.write_text(cfg.effective_text())
        again = load_config(str(echo))
        assert again.effective_text() == cfg.effective_text()
        assert again.digest() == cfg.digest()

    def test_digest_tracks_values(self):
        a = load_config()
        b = load_config(sets=("eval.n_folds=9",))
        assert a.digest() != b.digest()
        assert len(a.digest()) == 12

    def test_effective_text_covers_whole_schema(self):
        text = load_config().effective_text()
        for section, keys in SCHEMA.items():
            assert f"[{section}]" in text
            for key in keys:
                assert f"{key} = " in text
