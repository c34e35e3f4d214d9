import csv
import subprocess
import sys

import numpy as np
import pytest

from ergl.cli import main
from ergl.features import SAMPLE_RATE, AudioClip, write_wav


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def assert_one_line_error(code, err):
    assert code != 0
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("error: ")


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth-data", "--out-dir", str(root / "d"), "--clips-per-scene", "5", "--n-events", "3",
                 "--vocab-size", "5", "--duration", "0.4", "--seed", "2"]) == 0
    (root / "run.cfg").write_text(
        "profile = test\nepochs = 2\nn_events = 3\nu_layers = 1\n"
        "manifest = d/manifest.csv\nlabels = d/pseudo_labels.csv\nout_dir = out\n"
    )
    assert main(["train", "--config", str(root / "run.cfg")]) == 0
    return root


def test_synth_and_train_outputs(trained):
    assert (trained / "d" / "manifest.csv").exists()
    assert (trained / "out" / "model.ckpt").exists()
    rows = list(csv.reader(open(trained / "out" / "metrics.csv")))
    assert len(rows) == 3


def test_rank_events(capsys, trained):
    code, out, _ = run(capsys, "rank-events", "--labels", trained / "d" / "pseudo_labels.csv", "--n", 3)
    assert code == 0
    ids = [int(line.split(",")[0]) for line in out.splitlines()[2:]]
    assert ids == [0, 1, 2]
    code, out, _ = run(capsys, "rank-events", "--labels", trained / "d" / "pseudo_labels.csv", "--n", 2,
                       "--manifest", trained / "d" / "manifest.csv", "--seed", 1)
    assert code == 0 and "over 6 clips" in out


def test_evaluate_splits(capsys, trained):
    ckpt = trained / "out" / "model.ckpt"
    manifest = trained / "d" / "manifest.csv"
    for split in ("all", "train", "val"):
        code, out, _ = run(capsys, "evaluate", "--ckpt", ckpt, "--manifest", manifest, "--split", split)
        assert code == 0
        assert "class_average," in out and "overall," in out


def test_val_split_matches_training(capsys, trained):
    from ergl.pipeline import load_checkpoint

    code, out, _ = run(capsys, "evaluate", "--ckpt", trained / "out" / "model.ckpt",
                       "--manifest", trained / "d" / "manifest.csv", "--split", "val")
    macro = float(next(line for line in out.splitlines() if line.startswith("class_average")).split(",")[1])
    assert macro == pytest.approx(load_checkpoint(trained / "out" / "model.ckpt").best_val_acc, abs=5e-5)


def test_predict_and_extract(capsys, trained, tmp_path):
    wav = tmp_path / "tone.wav"
    write_wav(wav, AudioClip(0.3 * np.sin(2 * np.pi * 500 * np.arange(SAMPLE_RATE // 2) / SAMPLE_RATE)))
    code, out, _ = run(capsys, "predict", "--ckpt", trained / "out" / "model.ckpt", "--input", wav)
    assert code == 0 and out.startswith("scene: scene_0")
    code, out, _ = run(capsys, "extract-features", wav, "--out-dir", tmp_path / "feats")
    assert code == 0 and (tmp_path / "feats" / "tone.mel").exists()
    code, out, _ = run(capsys, "predict", "--ckpt", trained / "out" / "model.ckpt", "--input",
                       tmp_path / "feats" / "tone.mel")
    assert code == 0


def test_extract_features_from_manifest(capsys, tmp_path):
    for i, scene in enumerate(["park", "park", "metro"]):
        write_wav(tmp_path / f"w{i}.wav", AudioClip(np.full(800, 0.01 * (i + 1))))
    (tmp_path / "m.csv").write_text("clip_id,path,scene\n" + "".join(
        f"w{i},w{i}.wav,{s}\n" for i, s in enumerate(["park", "park", "metro"])))
    code, _, _ = run(capsys, "extract-features", "--manifest", tmp_path / "m.csv", "--out-dir", tmp_path / "o")
    assert code == 0
    lines = (tmp_path / "o" / "manifest.csv").read_text().splitlines()
    assert lines[1] == "w0,w0.mel,park"


def test_sweep_writes_one_log_per_setting(capsys, trained):
    code, out, _ = run(capsys, "train", "--config", trained / "run.cfg", "--n", 2, 3, "--u-layers", 1, 2,
                       "--epochs", 1, "--out-dir", trained / "sweep")
    assert code == 0
    for n in (2, 3):
        for u in (1, 2):
            assert (trained / "sweep" / f"n{n}_u{u}" / "metrics.csv").exists()
    assert len(out.strip().splitlines()) == 5


def test_gradcheck_command(capsys):
    code, out, _ = run(capsys, "gradcheck", "--seed", 0)
    assert code == 0
    assert out.splitlines()[-1].startswith("29/29 checks below 0.0001")


@pytest.mark.parametrize(
    "argv",
    [
        ["predict", "--ckpt", "missing.ckpt", "--input", "x.wav"],
        ["evaluate", "--ckpt", "missing.ckpt", "--manifest", "m.csv"],
        ["train", "--epochs", "1"],
        ["train", "--config", "missing.cfg"],
        ["rank-events", "--labels", "missing.csv", "--n", "3"],
        ["extract-features"],
        ["synth-data", "--n-scenes", "1"],
    ],
)
def test_errors_exit_nonzero_with_one_line(capsys, tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    code, _, err = run(capsys, *argv)
    assert_one_line_error(code, err)


def test_domain_errors_exit_nonzero(capsys, trained, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes((trained / "out" / "model.ckpt").read_bytes()[:100])
    code, _, err = run(capsys, "predict", "--ckpt", bad, "--input", trained / "d" / "features" / "scene_00_clip000.mel")
    assert_one_line_error(code, err)
    assert "truncated" in err or "checksum" in err
    (tmp_path / "m.csv").write_text("clip_id,path,scene\nscene_00_clip000,x.mel,harbour\n")
    code, _, err = run(capsys, "evaluate", "--ckpt", trained / "out" / "model.ckpt", "--manifest", tmp_path / "m.csv")
    assert_one_line_error(code, err)
    code, _, err = run(capsys, "rank-events", "--labels", trained / "d" / "pseudo_labels.csv", "--n", 99)
    assert_one_line_error(code, err)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ergl", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("extract-features", "rank-events", "train", "evaluate", "predict", "gradcheck", "synth-data"):
        assert name in proc.stdout


def test_seed_everywhere():
    from ergl.cli import build_parser

    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        assert any("--seed" in a.option_strings for a in p._actions), name
