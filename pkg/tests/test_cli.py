import json
import shutil

import numpy as np
import pytest
import torch
from PIL import Image

from bmlinpaint import cli, imgcore, phantom
from bmlinpaint.detect import STAGES
from bmlinpaint.ffcnet import ArchConfig, TrainingDiverged, build_model, load_checkpoint

SMALL = {
    "seed": 4,
    "phantom": {"size": 64, "counts": {"train": 4, "val": 1, "test": 10}},
    "train": {"steps": 3, "batch_size": 2, "arch": {"channels": 8, "n_blocks": 1}},
    "eval": {"resolutions": [64]},
}


def write_config(path, out, **overrides):
    cfg = json.loads(json.dumps(SMALL)) | {"out": str(out)} | overrides
    path.write_text(json.dumps(cfg))
    return str(path)


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    """A run directory with the phantom dataset already generated."""
    base = tmp_path_factory.mktemp("run")
    cfg = write_config(base / "run.json", base / "out")
    assert cli.main(["phantom", "--config", cfg]) == 0
    return base


@pytest.fixture
def fresh(run_dir, tmp_path):
    """Copy of ``run_dir`` that a test may modify."""
    shutil.copytree(run_dir / "out", tmp_path / "out")
    return write_config(tmp_path / "run.json", tmp_path / "out"), tmp_path / "out"


def test_phantom_creates_output_and_is_deterministic(run_dir, tmp_path):
    out = run_dir / "out"
    entries, _ = phantom.load_manifest(out / "data")
    assert len(entries) == 15
    assert sorted({e["split"] for e in entries}) == ["test", "train", "val"]
    cfg = write_config(tmp_path / "run.json", tmp_path / "nested" / "out")
    assert cli.main(["phantom", "--config", cfg]) == 0
    assert tree(tmp_path / "nested" / "out") == tree(out)


def test_usage_and_config_errors_exit_1(tmp_path, capsys):
    cfg = {k: v for k, v in SMALL.items() if k != "seed"} | {"out": str(tmp_path / "o")}
    (tmp_path / "noseed.json").write_text(json.dumps(cfg))
    assert cli.main(["phantom", "--config", str(tmp_path / "noseed.json")]) == 1
    assert "seed" in capsys.readouterr().err
    bad = write_config(tmp_path / "bad.json", tmp_path / "o", detect={"opn_radius": 1})
    assert cli.main(["phantom", "--config", bad]) == 1
    assert cli.main(["phantom", "--config", str(tmp_path / "missing.json")]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["bogus", "--config", bad])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["eval", "--config", bad, "--resolutions", "12x"])
    assert exc.value.code == 1


def test_seed_flag_overrides_config(tmp_path):
    cfg = {k: v for k, v in SMALL.items() if k != "seed"} | {"out": str(tmp_path / "o")}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert cli.main(["phantom", "--config", str(tmp_path / "c.json"), "--seed", "4"]) == 0


def test_train_without_dataset_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.json", tmp_path / "empty")
    assert cli.main(["train", "--config", cfg]) == 2
    assert "dataset missing" in capsys.readouterr().err


def test_train_writes_checkpoint_and_full_trace(fresh):
    cfg, out = fresh
    assert cli.main(["train", "--config", cfg, "--steps", "5"]) == 0
    assert sorted(p.name for p in (out / "checkpoints").iterdir()) == ["loss_64.csv", "model_64.ckpt"]
    rows = (out / "checkpoints" / "loss_64.csv").read_text().splitlines()
    assert rows[0] == "step,loss" and len(rows) == 6
    assert [int(r.split(",")[0]) for r in rows[1:]] == list(range(5))
    _, header = load_checkpoint(out / "checkpoints" / "model_64.ckpt")
    assert header["hyperparams"]["steps"] == 5 and header["seed"] == 4


def test_train_zero_steps_is_initialization(fresh):
    cfg, out = fresh
    assert cli.main(["train", "--config", cfg, "--steps", "0"]) == 0
    model, _ = load_checkpoint(out / "checkpoints" / "model_64.ckpt")
    init = build_model(ArchConfig(channels=8, n_blocks=1), seed=4)
    for (name, a), b in zip(model.state_dict().items(), init.state_dict().values()):
        assert torch.equal(a, b), name
    assert (out / "checkpoints" / "loss_64.csv").read_text() == "step,loss\n"


def test_train_divergence_reports_step(fresh, monkeypatch, capsys):
    cfg, _ = fresh

    def boom(*args, **kwargs):
        raise TrainingDiverged(17, float("nan"))

    monkeypatch.setattr(cli, "train", boom)
    assert cli.main(["train", "--config", cfg]) == 2
    assert "step 17" in capsys.readouterr().err


def test_detect_classical_writes_masks_traces_overlays(fresh):
    cfg, out = fresh
    assert cli.main(["detect", "--config", cfg, "--classical", "--trace", "--overlay"]) == 0
    masks = sorted((out / "detect" / "masks").iterdir())
    assert len(masks) == 10
    assert any(imgcore.load_mask(p).any() for p in masks)
    traces = {p.name for p in (out / "detect" / "traces").iterdir()}
    assert traces == {f"test_{i:04d}_{s}.png" for i in range(10) for s in STAGES}
    rgb = Image.open(out / "detect" / "overlays" / "test_0000.png")
    assert rgb.mode == "RGB" and rgb.size == (64, 64)


def test_detect_explicit_inputs_and_errors(fresh, tmp_path, capsys):
    cfg, out = fresh
    data = out / "data"
    image, bone = data / "images" / "test_0000.png", data / "bone" / "test_0000.png"
    assert cli.main(["detect", "--config", cfg, "--image", str(image), "--bone", str(bone)]) == 2
    assert "missing model" in capsys.readouterr().err
    assert cli.main(["detect", "--config", cfg, "--classical", "--image", str(image), "--bone", str(bone)]) == 0
    assert (out / "detect" / "masks" / "test_0000.png").exists()
    small = tmp_path / "small.png"
    imgcore.save_mask(np.ones((32, 32), bool), small)
    assert cli.main(["detect", "--config", cfg, "--classical", "--image", str(image), "--bone", str(small)]) == 2
    assert "dimension mismatch" in capsys.readouterr().err
    assert cli.main(["detect", "--config", cfg, "--classical", "--image", str(image)]) == 1


def test_overlay_marks_contour_only():
    image = np.full((9, 9), 0.5)
    mask = np.zeros((9, 9), bool)
    mask[2:7, 2:7] = True
    rgb = cli.overlay(image, mask)
    assert rgb.shape == (9, 9, 3)
    red = (rgb == (255, 0, 0)).all(axis=2)
    assert red[2, 4] and not red[4, 4] and not red[0, 0]
    assert (rgb[4, 4] == 128).all()


def test_eval_rows_groups_and_report(fresh):
    cfg, out = fresh
    assert cli.main(["eval", "--config", cfg, "--classical"]) == 0
    rows = (out / "eval" / "slices.csv").read_text().splitlines()
    assert len(rows) == 1 + 10 + 1 and rows[-1].startswith("64,mean,")
    report = json.loads((out / "eval" / "report.json").read_text())
    assert len(report["resolutions"][0]["size_groups"]) == 5
    first = tree(out / "eval")
    assert cli.main(["eval", "--config", cfg, "--classical"]) == 0
    assert tree(out / "eval") == first
    assert cli.main(["report", "--config", cfg]) == 0
    text = (out / "eval" / "report.md").read_text()
    assert "| 64 |" in text and "size groups" in text


def test_eval_resolution_flag(fresh):
    cfg, out = fresh
    assert cli.main(["eval", "--config", cfg, "--classical", "--resolutions", "64,80"]) == 0
    assert len((out / "eval" / "sweep.csv").read_text().splitlines()) == 3


def test_eval_missing_model_exits_2(fresh):
    cfg, _ = fresh
    assert cli.main(["eval", "--config", cfg]) == 2


def test_report_before_eval_exits_2(fresh):
    cfg, _ = fresh
    assert cli.main(["report", "--config", cfg]) == 2
