import json
import subprocess
import sys

import numpy as np
import pytest

from plantmots import synth
from plantmots.cli import main
from plantmots.mots_io import Annotation, FrameSeries, load_sequence_file, save_sequence_file

SHORT = "forward:30:10, backward:30:10"


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    cfg = d / "synth.cfg"
    cfg.write_text(f"seed = 3\nmotion = {SHORT}\n")
    assert main(["synth", "--config", str(cfg), "--out", str(d)]) == 0
    return d


def _gt_ids(gt, pred):
    """Ground-truth plant -> set of predicted ids (predictions reuse GT masks)."""
    lookup = {(a.frame_id, a.rle): a.object_id for a in gt.annotations()}
    got = {}
    for a in pred.annotations():
        got.setdefault(lookup[a.frame_id, a.rle], set()).add(a.object_id)
    return got


def test_synth_writes_sequence_and_config(synth_dir, capsys):
    gt = load_sequence_file(synth_dir / "gt.txt")
    assert len(gt) == 60
    cfg = synth.SynthConfig.from_file(synth_dir / "config.json")
    assert cfg.seed == 3 and cfg.frames == 60


def test_synth_seed_override_and_masks(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--seed", "11", "--render-masks"]) == 0
    assert synth.SynthConfig.from_file(tmp_path / "config.json").seed == 11
    assert any((tmp_path / "masks").iterdir())


def test_synth_invalid_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("rows = 0\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err


def test_track_spray_once(synth_dir, tmp_path, capsys):
    out = tmp_path / "pred.txt"
    assert main(["track", "--input", str(synth_dir / "gt.txt"), "--output", str(out)]) == 0
    text = capsys.readouterr().out
    for col in ("segment-input", "tracking", "total", "ms/frame"):
        assert col in text
    ids = _gt_ids(load_sequence_file(synth_dir / "gt.txt"), load_sequence_file(out))
    assert all(len(v) == 1 for v in ids.values())
    assert len(set().union(*ids.values())) == len(ids)


def test_track_without_window_splits_reentries(tmp_path):
    d = tmp_path / "seq"
    assert main(["synth", "--out", str(d), "--seed", "0"]) == 0
    cfg = tmp_path / "t.cfg"
    cfg.write_text("s = 0\n")
    out = tmp_path / "pred.txt"
    assert main(["track", "--input", str(d / "gt.txt"), "--output", str(out), "--config", str(cfg)]) == 0
    ids = _gt_ids(load_sequence_file(d / "gt.txt"), load_sequence_file(out))
    assert any(len(v) > 1 for v in ids.values())


def test_track_from_mask_directory(tmp_path):
    d = tmp_path / "seq"
    assert main(["synth", "--out", str(d), "--config", str(_cfg(tmp_path, "motion = forward:5:10\n")),
                 "--render-masks"]) == 0
    out = tmp_path / "pred.txt"
    assert main(["track", "--input", str(d / "masks"), "--output", str(out)]) == 0
    ids = _gt_ids(load_sequence_file(d / "gt.txt"), load_sequence_file(out))
    assert ids and all(len(v) == 1 for v in ids.values())


def _cfg(tmp_path, text):
    p = tmp_path / "c.cfg"
    p.write_text(text)
    return p


def test_track_missing_input(tmp_path, capsys):
    out = tmp_path / "pred.txt"
    assert main(["track", "--input", str(tmp_path / "nope.txt"), "--output", str(out)]) == 1
    assert not out.exists()
    captured = capsys.readouterr()
    assert captured.out == "" and "nope.txt" in captured.err


def test_track_malformed_input_leaves_no_output(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("0 1 1 4 4 7\nrubbish\n")
    out = tmp_path / "pred.txt"
    assert main(["track", "--input", str(bad), "--output", str(out)]) == 1
    assert not out.exists() and list(tmp_path.iterdir()) == [bad]


def test_track_flag_overrides_config(tmp_path, synth_dir):
    out = tmp_path / "pred.txt"
    cfg = _cfg(tmp_path, "s = 0\nfd_length = 3\n")
    assert main(["track", "--input", str(synth_dir / "gt.txt"), "--output", str(out), "--config", str(cfg),
                 "--s", "6", "--feature-mode", "contour"]) == 0
    assert main(["track", "--input", str(synth_dir / "gt.txt"), "--output", str(out), "--config",
                 str(_cfg(tmp_path, "bogus = 1\n"))]) == 1


def test_eval_gt_against_itself(synth_dir, tmp_path, capsys):
    js = tmp_path / "r.json"
    gt = str(synth_dir / "gt.txt")
    assert main(["eval", "--gt", gt, "--pred", gt, "--json", str(js)]) == 0
    row = capsys.readouterr().out.splitlines()[1].split()
    assert row[1:] == ["100.000"] * 5
    data = json.loads(js.read_text())
    assert data["HOTA"] == 100.0 and len(data["per_threshold"]) == 19


def test_eval_empty_prediction(synth_dir, tmp_path, capsys):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert main(["eval", "--gt", str(synth_dir / "gt.txt"), "--pred", str(empty)]) == 0
    assert float(capsys.readouterr().out.splitlines()[1].split()[1]) == 0.0


def test_eval_id_flip_toy(tmp_path, capsys):
    a = np.zeros((10, 20), bool)
    a[2:8, 1:8] = True
    b = np.zeros((10, 20), bool)
    b[2:8, 11:18] = True
    gt = FrameSeries([(t, [Annotation.from_mask(t, 0, a), Annotation.from_mask(t, 1, b)]) for t in range(4)])
    pred = FrameSeries([(t, [Annotation.from_mask(t, 10 + t % 2, a), Annotation.from_mask(t, 11 - t % 2, b)])
                        for t in range(4)])
    save_sequence_file(gt, tmp_path / "gt.txt")
    save_sequence_file(pred, tmp_path / "pred.txt")
    assert main(["eval", "--gt", str(tmp_path / "gt.txt"), "--pred", str(tmp_path / "pred.txt")]) == 0
    hota, det, ass, re, pr = map(float, capsys.readouterr().out.splitlines()[1].split()[1:])
    assert (det, re, pr) == (100.0, 50.0, 50.0)
    assert ass == pytest.approx(100 / 3, abs=5e-4) and hota == pytest.approx(57.735, abs=5e-4)


def test_eval_frame_range_mismatch(tmp_path, capsys):
    m = np.ones((3, 3), bool)
    save_sequence_file(FrameSeries([(0, [Annotation.from_mask(0, 0, m)])]), tmp_path / "gt.txt")
    save_sequence_file(FrameSeries([(5, [Annotation.from_mask(5, 0, m)])]), tmp_path / "pred.txt")
    assert main(["eval", "--gt", str(tmp_path / "gt.txt"), "--pred", str(tmp_path / "pred.txt")]) == 1
    assert "error" in capsys.readouterr().err


def test_render(synth_dir, tmp_path):
    assert main(["render", "--annotations", str(synth_dir / "gt.txt"), "--out", str(tmp_path / "a")]) == 0
    assert main(["render", "--annotations", str(synth_dir / "gt.txt"), "--out", str(tmp_path / "b")]) == 0
    a = sorted((tmp_path / "a").iterdir())
    assert len(a) == 60
    assert all(x.read_bytes() == (tmp_path / "b" / x.name).read_bytes() for x in a)


def test_render_empty_and_bad_images(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert main(["render", "--annotations", str(empty), "--out", str(tmp_path / "o")]) == 0
    assert list((tmp_path / "o").iterdir()) == []
    assert main(["render", "--annotations", str(empty), "--images", str(tmp_path / "missing"),
                 "--out", str(tmp_path / "o2")]) == 1


def test_console_script_usage_error():
    r = subprocess.run([sys.executable, "-m", "plantmots.cli", "eval"], capture_output=True, text=True)
    assert r.returncode == 1 and r.stdout == "" and "--gt" in r.stderr


def test_module_entry_point(synth_dir):
    gt = str(synth_dir / "gt.txt")
    r = subprocess.run([sys.executable, "-m", "plantmots.cli", "eval", "--gt", gt, "--pred", gt],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "100.000" in r.stdout and r.stderr == ""
