import json

import pytest

from nirscope.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from nirscope.model import load_dataset
from nirscope.pipeline import REPORT_FILES
from nirscope.synth import parse_ground_truth

SMALL_RUN = [
    "--patients", "6", "--controls", "6", "--folds", "3",
    "--trials", "3", "--samples", "64", "--seed", "3",
]


def test_synth_writes_dataset_and_ground_truth(tmp_path):
    out = tmp_path / "ds"
    code = main(
        [
            "synth", "--patients", "2", "--controls", "2", "--seed", "5",
            "--effect-channels", "S7-D6", "S5-D6",
            "--amplitude-ratio", "0.5", "--peak-delay", "1.5",
            "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    ds = load_dataset(out)
    assert len(ds.recordings) == 4
    gt = parse_ground_truth((out / "ground_truth.json").read_text())
    assert gt.discriminative == (("S7-D6", "hbr"), ("S5-D6", "hbr"))


def test_stats_ttest_summary_matches_published_value(capsys):
    code = main(
        [
            "stats", "ttest",
            "--summary", "4336,1.40e-6,8.68e-6", "--summary", "5135,5.78e-7,6.28e-6",
        ]
    )
    assert code == EXIT_OK
    out = capsys.readouterr().out
    t_val = float(out.split("t = ")[1].split(",")[0])
    assert t_val == pytest.approx(5.374, abs=0.05)


def test_stats_anova_summary(capsys):
    code = main(
        ["stats", "anova", "--summary", "13,43.85,9.57", "--summary", "11,44.36,10.56"]
    )
    assert code == EXIT_OK
    out = capsys.readouterr().out
    f_val = float(out.split("F = ")[1].split(",")[0])
    assert f_val == pytest.approx(0.016, abs=0.01)


def test_stats_levene_from_csvs(tmp_path, capsys):
    import numpy as np

    rng = np.random.default_rng(0)
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    a.write_text("\n".join(str(v) for v in rng.normal(0, 1, 60)))
    b.write_text("\n".join(str(v) for v in rng.normal(0, 10, 60)))
    assert main(["stats", "levene", "--csv", str(a), str(b)]) == EXIT_OK
    out = capsys.readouterr().out
    assert float(out.split("p = ")[1]) < 0.05


def test_stats_rejects_mixed_inputs(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("1\n2\n")
    code = main(
        ["stats", "ttest", "--csv", str(f), "--summary", "5,0,1"]
    )
    assert code == EXIT_CONFIG


def test_run_writes_all_report_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--out", str(out)] + SMALL_RUN)
    assert code == EXIT_OK
    for name in REPORT_FILES:
        assert (out / name).is_file(), name
    stdout = capsys.readouterr().out
    assert "pooled accuracy" in stdout
    assert "top channels" in stdout


def test_run_twice_is_byte_identical(tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["run", "--out", str(out_a)] + SMALL_RUN) == EXIT_OK
    assert main(["run", "--out", str(out_b)] + SMALL_RUN) == EXIT_OK
    for name in REPORT_FILES:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_run_with_excessive_k_names_features_stage(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(
        ["run", "--out", str(out), "--select-k", "999999"] + SMALL_RUN
    )
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "features" in err
    # partial outputs removed
    assert not any((out / name).exists() for name in REPORT_FILES)


def test_missing_dataset_is_a_data_error(tmp_path, capsys):
    code = main(["train", "--dataset", str(tmp_path / "nope")])
    assert code == EXIT_DATA
    assert "data error" in capsys.readouterr().err


def test_preprocess_then_epoch_round_trip(tmp_path, capsys):
    ds_dir = tmp_path / "raw"
    main(
        ["synth", "--patients", "1", "--controls", "1", "--seed", "2", "--out", str(ds_dir)]
    )
    hemo_dir = tmp_path / "hemo"
    assert main(["preprocess", "--dataset", str(ds_dir), "--out", str(hemo_dir)]) == EXIT_OK
    loaded = load_dataset(hemo_dir)
    assert loaded.kind == "hemo"
    assert len(loaded.hemo) == 2
    steps = {s.name: dict(s.params) for s in loaded.hemo[0].provenance}
    assert set(steps) == {
        "intensity_to_od",
        "short_channel_regression",
        "mbll_invert",
        "motion_correction",
        "bandpass",
    }
    assert steps["motion_correction"]["order"] == "spline_then_wavelet"
    assert main(["epoch", "--dataset", str(hemo_dir)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "epochs total" in out


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 9, "patients": 6, "controls": 6, "folds": 3,
                               "trials_per_task": 3, "shap_samples": 64}))
    out = tmp_path / "run"
    code = main(["run", "--out", str(out), "--seed", "1", "--config", str(cfg)])
    assert code == EXIT_OK
    provenance = (out / "provenance.txt").read_text()
    assert '"seed": 9' in provenance


def test_config_rejects_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"not_a_key": 1}))
    code = main(["run", "--out", str(tmp_path / "r"), "--config", str(cfg)])
    assert code == EXIT_CONFIG
    assert "unknown config keys" in capsys.readouterr().err


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
