"""End-to-end command-line pipeline."""
import json

import pytest

from periflow.cli import ConfigError, load_config, main

FAST = [
    "--set", "epochs=2", "--set", "window_length=24", "--set", "hidden=8",
    "--set", "n_factors=2", "--set", "k_periods=2", "--set", "num_blocks=1",
    "--set", "train_stride=4", "--set", "gen_length=600",
    "--set", "gen_periods=12:3.0,4:1.0",
    "--set", "gen_anomalies=spike:520:2:8.0;level_shift:555:20:4.0",
]


def test_load_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nlr = 0.01\nepochs = 5\ngen_dims = 2\n")
    train_cfg, gen_cfg = load_config(cfg, overrides=["epochs=7"], seed=3)
    assert train_cfg.lr == 0.01 and train_cfg.epochs == 7 and train_cfg.seed == 3
    assert gen_cfg.gen_dims == 2


def test_load_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("not_a_key = 1\n")
    with pytest.raises(ConfigError, match="not_a_key"):
        load_config(cfg)


def test_load_config_reports_bad_value():
    with pytest.raises(ConfigError, match="epochs"):
        load_config(None, overrides=["epochs=soon"])


def test_gen_is_idempotent(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["gen", "--out", str(out1), "--seed", "5", *FAST]) == 0
    assert main(["gen", "--out", str(out2), "--seed", "5", *FAST]) == 0
    assert (out1 / "synthetic.csv").read_bytes() == (out2 / "synthetic.csv").read_bytes()
    assert (out1 / "resolved_config.txt").exists()


def test_full_pipeline(tmp_path, capsys):
    # 2k-point set end to end: gen -> train -> score -> eval
    data_dir = tmp_path / "data"
    assert main(["gen", "--out", str(data_dir), "--seed", "5", *FAST,
                 "--set", "gen_length=2000",
                 "--set", "gen_anomalies=spike:1520:2:8.0;level_shift:1555:20:4.0"
                 ]) == 0
    csv = data_dir / "synthetic.csv"
    input_bytes = csv.read_bytes()

    run1 = tmp_path / "run1"
    assert main(["train", "--data", str(csv), "--out", str(run1), "--seed", "5",
                 *FAST]) == 0
    out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert (run1 / "model.npz").exists() and (run1 / "history.csv").exists()
    assert out["global_period"] == 12

    score_dir = tmp_path / "scored"
    assert main(["score", "--checkpoint", str(run1 / "model.npz"),
                 "--data", str(csv), "--out", str(score_dir), *FAST]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert "auroc" in summary
    assert (score_dir / "scores.csv").exists()
    assert (score_dir / "period_weights.csv").exists()

    eval_dir = tmp_path / "eval"
    assert main(["eval", "--scores", str(score_dir / "scores.csv"),
                 "--data", str(csv), "--out", str(eval_dir)]) == 0
    ev = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert abs(ev["auroc"] - summary["auroc"]) < 1e-12
    loaded = json.loads((eval_dir / "summary.json").read_text())
    assert loaded["auroc"] == ev["auroc"]
    assert csv.read_bytes() == input_bytes  # inputs never mutated


def test_train_determinism_byte_identical_history(tmp_path, capsys):
    data_dir = tmp_path / "data"
    main(["gen", "--out", str(data_dir), "--seed", "9", *FAST])
    csv = data_dir / "synthetic.csv"
    r1, r2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["train", "--data", str(csv), "--out", str(r1), "--seed", "3",
                 *FAST]) == 0
    assert main(["train", "--data", str(csv), "--out", str(r2), "--seed", "3",
                 *FAST]) == 0
    assert (r1 / "history.csv").read_bytes() == (r2 / "history.csv").read_bytes()


def test_inspect_reports_global_period(tmp_path, capsys):
    data_dir = tmp_path / "data"
    main(["gen", "--out", str(data_dir), "--seed", "5", "--set", "gen_length=400",
          "--set", "gen_periods=20:3.0", "--set", "gen_noise_std=0.05"])
    assert main(["inspect", "--data", str(data_dir / "synthetic.csv")]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["global_period"] == 20
    assert 20 in report["top_periods"]
    strengths = [v for v in report["periodicity_strength"].values() if v is not None]
    assert all(s > 0.8 for s in strengths)


def test_missing_checkpoint_is_one_line_error(tmp_path, capsys):
    code = main(["score", "--checkpoint", str(tmp_path / "nope.npz"),
                 "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ") and err.count("\n") == 1


def test_bad_config_key_is_one_line_error(tmp_path, capsys):
    code = main(["gen", "--out", str(tmp_path), "--set", "mystery=1"])
    assert code == 1
    assert "mystery" in capsys.readouterr().err
