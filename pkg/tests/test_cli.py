"""End-to-end command-line behavior: pipeline, config resolution, exit codes."""

import numpy as np
import pytest

from tcnkit import load_checkpoint, load_feature_file, read_fseq, write_fseq
from tcnkit.cli import main
from tcnkit.seqdata import drop_unannotated


def _synth(out, videos=3, seed=1, extra=()):
    args = [
        "synth", "--out-dir", str(out), "--videos", str(videos), "--seed", str(seed),
        "--min-len", "10", "--max-len", "14", "--dim", "2", "--expressions", "2",
    ] + list(extra)
    assert main(args) == 0


def test_synth_writes_files_and_manifest(tmp_path):
    out = tmp_path / "data"
    _synth(out)
    files = sorted(out.glob("*.fseq"))
    assert [f.name for f in files] == ["vid0000.fseq", "vid0001.fseq", "vid0002.fseq"]
    manifest = (out / "manifest.tsv").read_text().splitlines()
    assert len(manifest) == 3
    assert manifest[0] == "vid0000.fseq\tvid0000\ttrain"
    for f in files:
        seq = load_feature_file(f)
        assert seq.features.shape[1] == 2
        assert seq.labels.shape[1] == 2

    again = tmp_path / "data2"
    _synth(again)
    for f in files:
        assert (again / f.name).read_bytes() == f.read_bytes()


def test_synth_gap_prob_produces_gaps(tmp_path):
    out = tmp_path / "gappy"
    _synth(out, extra=["--gap-prob", "0.5"])
    masks = [load_feature_file(f).annotated_mask for f in sorted(out.glob("*.fseq"))]
    assert any(not m.all() for m in masks)


def test_train_echoes_resolved_defaults(tmp_path, capsys):
    data = tmp_path / "data"
    _synth(data)
    out = tmp_path / "run"
    assert main(["train", "--data-dir", str(data), "--out-dir", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "command=train" in lines
    assert "lr=0.005" in lines
    assert "epochs=20" in lines
    assert "batch_size=32" in lines
    assert "positional_encoding=true" in lines
    assert "precision='standard'" not in lines  # strings echo unquoted
    assert "precision=standard" in lines
    assert (out / "checkpoint.tcnk").exists()
    log_lines = (out / "train_log.txt").read_text().splitlines()
    assert len(log_lines) == 20
    assert log_lines[0].startswith("epoch=1 loss=")


def test_train_rerun_is_byte_identical(tmp_path):
    data = tmp_path / "data"
    _synth(data)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main([
            "train", "--data-dir", str(data), "--out-dir", str(out),
            "--epochs", "2", "--seed", "5",
        ]) == 0
        outs.append(out)
    assert (outs[0] / "checkpoint.tcnk").read_bytes() == (outs[1] / "checkpoint.tcnk").read_bytes()


def test_positional_encoding_toggle_changes_input_dim(tmp_path):
    data = tmp_path / "data"
    _synth(data)
    with_pe = tmp_path / "pe"
    without = tmp_path / "nope"
    assert main(["train", "--data-dir", str(data), "--out-dir", str(with_pe),
                 "--epochs", "1"]) == 0
    assert main(["train", "--data-dir", str(data), "--out-dir", str(without),
                 "--epochs", "1", "--no-positional-encoding"]) == 0
    assert load_checkpoint(with_pe / "checkpoint.tcnk").config.input_dim == 2 + 16
    assert load_checkpoint(without / "checkpoint.tcnk").config.input_dim == 2


def test_predict_then_evaluate(tmp_path, capsys):
    data = tmp_path / "data"
    _synth(data)
    run = tmp_path / "run"
    assert main(["train", "--data-dir", str(data), "--out-dir", str(run),
                 "--epochs", "1"]) == 0
    preds = tmp_path / "preds"
    assert main(["predict", "--checkpoint", str(run / "checkpoint.tcnk"),
                 "--data-dir", str(data), "--out-dir", str(preds)]) == 0
    pred_files = sorted(preds.glob("*.fseq"))
    assert len(pred_files) == 3
    ts, features, values, mask, c = read_fseq(pred_files[0])
    assert features.shape[1] == 0  # predictions carry no feature payload
    assert c == 2 and values.shape[1] == 2
    gt = drop_unannotated(load_feature_file(sorted(data.glob("*.fseq"))[0]))
    np.testing.assert_array_equal(ts, gt.timestamp_indices)

    capsys.readouterr()
    assert main(["evaluate", "--predictions", str(preds),
                 "--data-dir", str(data)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert any(line.startswith("M_rho=") for line in out)
    assert sum(1 for line in out if "mean_rho=" in line) == 3


def test_evaluate_labels_against_themselves_scores_one(tmp_path, capsys):
    data = tmp_path / "data"
    _synth(data)
    preds = tmp_path / "selfpreds"
    preds.mkdir()
    for f in sorted(data.glob("*.fseq")):
        seq = drop_unannotated(load_feature_file(f))
        write_fseq(
            preds / f.name,
            seq.timestamp_indices,
            np.zeros((len(seq), 0), dtype=np.float32),
            seq.labels,
            np.ones(len(seq), dtype=bool),
        )
    assert main(["evaluate", "--predictions", str(preds), "--data-dir", str(data)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert "M_rho=1.000000 undefined=0" in out


def test_predict_clamp_flag(tmp_path):
    data = tmp_path / "data"
    _synth(data)
    run = tmp_path / "run"
    assert main(["train", "--data-dir", str(data), "--out-dir", str(run),
                 "--epochs", "1"]) == 0
    raw = tmp_path / "raw"
    clamped = tmp_path / "clamped"
    ckpt = str(run / "checkpoint.tcnk")
    assert main(["predict", "--checkpoint", ckpt, "--data-dir", str(data),
                 "--out-dir", str(raw)]) == 0
    assert main(["predict", "--checkpoint", ckpt, "--data-dir", str(data),
                 "--out-dir", str(clamped), "--clamp"]) == 0
    for f in sorted(raw.glob("*.fseq")):
        _, _, noclamp, _, _ = read_fseq(f)
        _, _, clip, _, _ = read_fseq(clamped / f.name)
        assert clip.min() >= 0.0 and clip.max() <= 1.0
        np.testing.assert_array_equal(np.clip(noclamp, 0.0, 1.0), clip)


def test_ensemble_cli(tmp_path, capsys):
    data = tmp_path / "data"
    _synth(data)
    pred_dirs = []
    for seed in ("1", "2"):
        run = tmp_path / f"run{seed}"
        assert main(["train", "--data-dir", str(data), "--out-dir", str(run),
                     "--epochs", "1", "--seed", seed]) == 0
        preds = tmp_path / f"preds{seed}"
        assert main(["predict", "--checkpoint", str(run / "checkpoint.tcnk"),
                     "--data-dir", str(data), "--out-dir", str(preds)]) == 0
        pred_dirs.append(preds)

    capsys.readouterr()
    mixed = tmp_path / "mixed"
    assert main(["ensemble", "--pred-a", str(pred_dirs[0]), "--pred-b",
                 str(pred_dirs[1]), "--out-dir", str(mixed)]) == 0
    header = capsys.readouterr().out.splitlines()
    assert "lambda=0.8" in header  # default weight in the run header

    copied = tmp_path / "copied"
    assert main(["ensemble", "--pred-a", str(pred_dirs[0]), "--pred-b",
                 str(pred_dirs[1]), "--lambda", "1.0", "--out-dir", str(copied)]) == 0
    for f in sorted(pred_dirs[0].glob("*.fseq")):
        assert (copied / f.name).read_bytes() == f.read_bytes()


def test_config_file_precedence(tmp_path, capsys):
    data = tmp_path / "data"
    _synth(data)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment line\nepochs = 3\nlr = 0.5\n\n")
    out = tmp_path / "out"
    assert main(["train", "--config", str(cfg), "--data-dir", str(data),
                 "--out-dir", str(out), "--lr", "0.25"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "epochs=3" in lines  # file beats default
    assert "lr=0.25" in lines  # flag beats file
    assert "batch_size=32" in lines  # default survives


def test_config_file_violations_reported_together(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mystery = 1\nepochs = soon\nanother_unknown = x\n")
    assert main(["train", "--config", str(cfg), "--data-dir", ".",
                 "--out-dir", "."]) == 1
    err = capsys.readouterr().err
    assert "mystery" in err
    assert "epochs" in err
    assert "another_unknown" in err


def test_range_violations_reported_together(tmp_path, capsys):
    assert main(["train", "--data-dir", ".", "--out-dir", ".",
                 "--epochs", "0", "--dropout", "1.5"]) == 1
    err = capsys.readouterr().err
    assert "epochs" in err and "dropout" in err


def test_exit_codes(tmp_path, capsys):
    # usage errors -> 1
    assert main([]) == 1
    assert main(["train"]) == 1  # data-dir missing
    assert main(["train", "--data-dir", ".", "--out-dir", ".",
                 "--precision", "half"]) == 1
    assert main(["frobnicate"]) == 1
    # data errors -> 2
    assert main(["train", "--data-dir", str(tmp_path / "nope"),
                 "--out-dir", str(tmp_path)]) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["train", "--data-dir", str(empty), "--out-dir", str(tmp_path)]) == 2
    capsys.readouterr()


@pytest.mark.filterwarnings("ignore:overflow encountered:RuntimeWarning")
@pytest.mark.filterwarnings("ignore:invalid value encountered:RuntimeWarning")
def test_divergence_exit_code(tmp_path, capsys):
    # lr=1e12 is meant to blow up; the overflow warnings are the mechanism
    data = tmp_path / "data"
    _synth(data)
    out = tmp_path / "boom"
    code = main(["train", "--data-dir", str(data), "--out-dir", str(out),
                 "--epochs", "3", "--lr", "1e12", "--batch-size", "1"])
    assert code == 3
    assert "divergence" in capsys.readouterr().err


def test_threads_do_not_change_results(tmp_path):
    data = tmp_path / "data"
    _synth(data, videos=4)
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"t{threads}"
        assert main(["train", "--data-dir", str(data), "--out-dir", str(out),
                     "--epochs", "2", "--threads", threads]) == 0
        outs.append(out / "checkpoint.tcnk")
    assert outs[0].read_bytes() == outs[1].read_bytes()


def test_help_exits_zero():
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
