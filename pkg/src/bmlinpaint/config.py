"""Run configuration: one JSON file with a section per command.

Example::

    {
      "seed": 0,
      "out": "runs/demo",
      "phantom": {"size": 128, "counts": {"train": 200, "val": 25, "test": 50}},
      "train": {"steps": 3000, "lr": 0.001, "arch": {"channels": 32}, "resolutions": [128]},
      "detect": {"open_radius": 1, "close_radius": 2, "inpainter": "trained"},
      "eval": {"resolutions": [128], "region": "bone", "n_groups": 5}
    }

Unknown keys are rejected so that typos do not silently fall back to defaults.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .detect import DetectConfig
from .ffcnet.model import ArchConfig
from .ffcnet.train import TrainConfig
from .phantom import DEFAULT_SIZE_CLASSES, SPLITS, PhantomConfig


class ConfigError(ValueError):
    pass


def _check_keys(section: str, d: dict, allowed) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")


def _names(cls) -> set[str]:
    return {f.name for f in fields(cls)}


@dataclass
class PhantomSection:
    config: PhantomConfig = field(default_factory=PhantomConfig)
    counts: dict = field(default_factory=lambda: {"train": 200, "val": 25, "test": 50})
    size_classes: tuple = DEFAULT_SIZE_CLASSES


@dataclass
class TrainSection:
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=1e-3))
    resolutions: tuple = (128,)


@dataclass
class DetectSection:
    config: DetectConfig = field(default_factory=DetectConfig)
    inpainter: str = "trained"  # or "classical"
    classical_tolerance: float = 1e-6
    classical_max_iters: int = 20000


@dataclass
class EvalSection:
    resolutions: tuple = (128,)
    region: str = "bone"
    n_groups: int = 5
    split: str = "test"
    share_model: bool = False  # reuse the nearest trained resolution when one is missing


@dataclass
class RunConfig:
    seed: int
    out: Path
    phantom: PhantomSection = field(default_factory=PhantomSection)
    train: TrainSection = field(default_factory=TrainSection)
    detect: DetectSection = field(default_factory=DetectSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @property
    def data_dir(self) -> Path:
        return self.out / "data"

    @property
    def checkpoint_dir(self) -> Path:
        return self.out / "checkpoints"

    def checkpoint_path(self, resolution: int) -> Path:
        return self.checkpoint_dir / f"model_{resolution}.ckpt"

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None, out=None) -> "RunConfig":
        _check_keys("run", d, {"seed", "out", "phantom", "train", "detect", "eval"})
        seed = d.get("seed") if seed is None else seed
        if seed is None:
            raise ConfigError("a seed is required (config 'seed' or --seed)")
        out = d.get("out") if out is None else out
        if out is None:
            raise ConfigError("an output directory is required (config 'out' or --out)")

        p = dict(d.get("phantom", {}))
        _check_keys("phantom", p, _names(PhantomConfig) | {"counts", "size_classes"})
        phantom = PhantomSection(
            PhantomConfig.from_dict({k: v for k, v in p.items() if k in _names(PhantomConfig)}),
            dict(p.get("counts", PhantomSection().counts)),
            tuple(p.get("size_classes", DEFAULT_SIZE_CLASSES)),
        )
        bad = {k: v for k, v in phantom.counts.items() if k not in SPLITS or not isinstance(v, int) or v < 1}
        if bad or set(phantom.counts) != set(SPLITS):
            raise ConfigError(f"phantom.counts needs a positive integer for each of {SPLITS}")

        t = dict(d.get("train", {}))
        _check_keys("train", t, _names(TrainConfig) | {"arch", "resolutions"})
        _check_keys("train.arch", t.get("arch", {}), _names(ArchConfig))
        train_cfg = {"lr": 1e-3, **{k: v for k, v in t.items() if k in _names(TrainConfig)}}
        train = TrainSection(
            ArchConfig.from_dict(t.get("arch", {})),
            TrainConfig.from_dict(train_cfg),
            tuple(int(r) for r in t.get("resolutions", (phantom.config.size,))),
        )

        de = dict(d.get("detect", {}))
        extra = {"inpainter", "classical_tolerance", "classical_max_iters"}
        _check_keys("detect", de, _names(DetectConfig) | extra)
        detect = DetectSection(
            DetectConfig.from_dict(de),
            de.get("inpainter", "trained"),
            float(de.get("classical_tolerance", 1e-6)),
            int(de.get("classical_max_iters", 20000)),
        )
        if detect.inpainter not in ("trained", "classical"):
            raise ConfigError("detect.inpainter must be 'trained' or 'classical'")

        e = dict(d.get("eval", {}))
        _check_keys("eval", e, _names(EvalSection))
        ev = EvalSection(
            tuple(int(r) for r in e.get("resolutions", (phantom.config.size,))),
            e.get("region", "bone"),
            int(e.get("n_groups", 5)),
            e.get("split", "test"),
            bool(e.get("share_model", False)),
        )
        if ev.region not in ("bone", "full"):
            raise ConfigError("eval.region must be 'bone' or 'full'")
        return cls(int(seed), Path(out), phantom, train, detect, ev)

    @classmethod
    def load(cls, path, seed: int | None = None, out=None) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        try:
            return cls.from_dict(d, seed, out)
        except TypeError as err:
            raise ConfigError(str(err)) from err

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out": str(self.out),
            "phantom": {**asdict(self.phantom.config), "counts": self.phantom.counts,
                        "size_classes": list(self.phantom.size_classes)},
            "train": {**self.train.train.to_dict(), "arch": self.train.arch.to_dict(),
                      "resolutions": list(self.train.resolutions)},
            "detect": {**asdict(self.detect.config), "inpainter": self.detect.inpainter,
                       "classical_tolerance": self.detect.classical_tolerance,
                       "classical_max_iters": self.detect.classical_max_iters},
            "eval": {**asdict(self.eval), "resolutions": list(self.eval.resolutions)},
        }
