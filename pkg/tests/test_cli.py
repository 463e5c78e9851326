import json
import subprocess
import sys

import numpy as np
import pytest

from kinepose import posefile
from kinepose.cli import main
from kinepose.config import ModelConfig, TrainConfig
from kinepose.kinematics import PoseSequence
from kinepose.trainer import Trainer, save_checkpoint


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def spec_file(tmp_path):
    return write_json(tmp_path / "spec.json", {"n_sequences": 1, "frames": 8, "keypoints": 3, "seed": 4})


def untrained_checkpoint(path, **model):
    m = dict(T=4, N=1, K=3, D=2, C=8, n_levels=1, heads=2)
    m.update(model)
    cfg = TrainConfig(total_epochs=2, warmup_epochs=1, model=ModelConfig(**m))
    save_checkpoint(Trainer(cfg).checkpoint(), path)
    return str(path)


# generate


def test_generate_minimal(tmp_path, spec_file, capsys):
    out = tmp_path / "data"
    assert main(["generate", spec_file, str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "seq0000.clean.pose", "seq0000.corrupted.pose"]
    assert "1 sequence pairs" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["spec"]["seed"] == 4


def test_generate_is_idempotent(tmp_path, spec_file):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["generate", spec_file, str(a)])
    main(["generate", spec_file, str(b)])
    for name in ("seq0000.clean.pose", "seq0000.corrupted.pose", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_generate_invalid_field(tmp_path, capsys):
    bad = write_json(tmp_path / "bad.json", {"frames": 8, "dropout": 2.0})
    assert main(["generate", bad, str(tmp_path / "x")]) == 2
    assert "dropout" in capsys.readouterr().err


def test_generate_unwritable_path(tmp_path, spec_file):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["generate", spec_file, str(blocker / "sub")]) == 1


# refine


def test_refine_untrained_identity(tmp_path, spec_file):
    data = tmp_path / "data"
    main(["generate", spec_file, str(data)])
    ckpt = untrained_checkpoint(tmp_path / "c.npz")
    out = tmp_path / "out.pose"
    src = data / "seq0000.clean.pose"
    assert main(["refine", ckpt, str(src), str(out), "--stride", "1"]) == 0
    a, b = posefile.load(src), posefile.load(out)
    np.testing.assert_allclose(b.coords, a.coords, atol=1e-6)
    np.testing.assert_array_equal(b.visibility, a.visibility)
    assert b.joint_names == a.joint_names
    manifest = json.loads((tmp_path / "out.pose.manifest.json").read_text())
    assert manifest["config"]["model"]["N"] == 1


def test_refine_too_short(tmp_path, capsys):
    seq = PoseSequence(np.zeros((3, 3, 2)))
    posefile.save(seq, tmp_path / "s.pose")
    ckpt = untrained_checkpoint(tmp_path / "c.npz")
    assert main(["refine", ckpt, str(tmp_path / "s.pose"), str(tmp_path / "o.pose")]) == 2
    assert "shorter" in capsys.readouterr().err


def test_refine_layout_mismatch_names_both(tmp_path, capsys):
    posefile.save(PoseSequence(np.zeros((6, 5, 2))), tmp_path / "s.pose")
    ckpt = untrained_checkpoint(tmp_path / "c.npz")
    assert main(["refine", ckpt, str(tmp_path / "s.pose"), str(tmp_path / "o.pose")]) == 2
    err = capsys.readouterr().err
    assert "K=3" in err and "K=5" in err


# eval


def test_eval_gt_against_itself(tmp_path, spec_file, capsys):
    main(["generate", spec_file, str(tmp_path / "d")])
    gt = str(tmp_path / "d" / "seq0000.clean.pose")
    capsys.readouterr()
    assert main(["eval", gt, gt, "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert all(rep["pck"][t]["mean"] == 1.0 for t in ("0.2", "0.1", "0.05"))
    assert rep["mpjpe"] == 0.0 and rep["accel"] == 0.0


def test_eval_hand_built_two_joint_file(tmp_path, capsys):
    gt = np.zeros((3, 2, 2))
    gt[:, 1] = [3.0, 4.0]  # bbox diagonal 5 every frame
    pred = gt.copy()
    pred[1, 0] = [0.0, 0.2]  # 0.04 of the bbox: correct at every threshold
    pred[:, 1] += [1.2, 1.6]  # distance 2 = 0.4 bbox: wrong at every threshold
    posefile.save(PoseSequence(gt), tmp_path / "gt.pose")
    posefile.save(PoseSequence(pred), tmp_path / "pred.pose")
    csv_path = tmp_path / "frames.csv"
    assert main(["eval", str(tmp_path / "pred.pose"), str(tmp_path / "gt.pose"), "--json", "--csv", str(csv_path)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["pck"]["0.2"]["mean"] == 0.5
    assert rep["pck"]["0.05"]["mean"] == 0.5
    # distances: joint 0 -> {0, 0.2, 0}, joint 1 -> 2 everywhere
    assert rep["mpjpe"] == pytest.approx((0.2 + 6.0) / 6, abs=1e-12)
    # only joint 0 at t=1 has a nonzero second difference: |(0, -0.4)| over 2 joints
    assert rep["accel"] == pytest.approx(0.4 / 2, abs=1e-12)
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "frame,mpjpe,accel,visible"
    assert len(rows) == 4


def test_eval_text_report(tmp_path, spec_file, capsys):
    main(["generate", spec_file, str(tmp_path / "d")])
    gt = str(tmp_path / "d" / "seq0000.clean.pose")
    capsys.readouterr()
    main(["eval", gt, gt])
    out = capsys.readouterr().out
    assert "PCK@0.05" in out and "MPJPE" in out


def test_eval_frame_count_mismatch(tmp_path, capsys):
    posefile.save(PoseSequence(np.zeros((4, 2, 2))), tmp_path / "a.pose")
    posefile.save(PoseSequence(np.zeros((5, 2, 2))), tmp_path / "b.pose")
    assert main(["eval", str(tmp_path / "a.pose"), str(tmp_path / "b.pose")]) == 2
    err = capsys.readouterr().err
    assert "4" in err and "5" in err


def test_missing_file_exit_one(tmp_path, capsys):
    missing = str(tmp_path / "nope.pose")
    assert main(["eval", missing, missing]) == 1
    assert missing in capsys.readouterr().err


# train and inspect


def test_train_and_inspect(tmp_path, capsys):
    spec = write_json(tmp_path / "spec.json", {"n_sequences": 4, "frames": 16, "keypoints": 3, "seed": 1})
    main(["generate", spec, str(tmp_path / "d")])
    cfg = write_json(tmp_path / "cfg.json", {"total_epochs": 2, "warmup_epochs": 1, "model": {"T": 8, "N": 2, "C": 8, "n_levels": 1, "heads": 2}})
    out = tmp_path / "run"
    args = ["train", "--data", str(tmp_path / "d"), "--out", str(out), "--config", cfg, "--set", "batch_size=4", "-q"]
    assert main(args) == 0
    lines = (out / "history.jsonl").read_text().splitlines()
    assert len(lines) == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["batch_size"] == 4
    assert manifest["config"]["model"]["K"] == 3
    capsys.readouterr()
    assert main(["inspect", str(out / "checkpoint.npz")]) == 0
    assert "epoch 2" in capsys.readouterr().out
    assert main(["inspect", str(tmp_path / "d" / "seq0000.corrupted.pose")]) == 0
    assert "visible joints" in capsys.readouterr().out


def test_train_unknown_override(tmp_path, capsys):
    spec = write_json(tmp_path / "spec.json", {"n_sequences": 2, "frames": 16, "keypoints": 3})
    main(["generate", spec, str(tmp_path / "d")])
    code = main(["train", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "r"), "--set", "model.width=4"])
    assert code == 2
    err = capsys.readouterr().err
    assert "model.width" in err and "loss.lambda_topk" in err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kinepose.cli", "eval", str(tmp_path / "x"), str(tmp_path / "y")], capture_output=True, text=True)
    assert proc.returncode == 1
