"""Dataset construction, the training loop, evaluation and checkpoints.

Everything is seeded: the same config trains the same model.  A checkpoint
is a directory holding manifest.json (format tag, architecture, training
provenance) next to weights.pt (the state dict).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
import torch

from .metrics import chamfer, voxel_iou
from .model import ENCODING_DIM, POSE_DIM, MultiViewNet, unit_ball_samples
from .raster import RASTER_RES, render_views
from .shapes import sample_spec, sample_poses, surface_points

CHECKPOINT_FORMAT = "mvrecon-checkpoint"


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    train_shapes: int = 240
    eval_shapes: int = 60
    surface_samples: int = 1400
    gt_points: int = 1024
    train_views: int = 4
    eval_views: int = 8
    steps: int = 600
    batch: int = 16
    pred_points: int = 512
    lr: float = 1e-3
    res: int = RASTER_RES
    encoding_dim: int = ENCODING_DIM
    fov_range: tuple = (40.0, 70.0)
    max_range: float = 2.0


@dataclass
class ShapeData:
    """One shape with pre-rendered views: rasters (k, 2, res, res) float32,
    poses (k, 12) float32, gt (gt_points, 3) float64."""

    family: str
    rasters: np.ndarray
    poses: np.ndarray
    gt: np.ndarray


@dataclass
class Dataset:
    train: list = field(default_factory=list)
    eval: list = field(default_factory=list)


def _build_shape(cfg: TrainConfig, views: int, rng) -> ShapeData:
    spec = sample_spec(rng)
    pts = surface_points(spec, cfg.surface_samples, rng)
    gt = pts[rng.choice(len(pts), cfg.gt_points, replace=False)]
    poses = sample_poses(views, rng)
    fov = float(rng.uniform(*cfg.fov_range))
    rasters = render_views(pts, poses, fov, cfg.max_range, cfg.res).astype(np.float32)
    flat = poses.reshape(views, POSE_DIM).astype(np.float32)
    return ShapeData(spec.family, rasters, flat, gt)


def build_dataset(cfg: TrainConfig) -> Dataset:
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xD5)))
    ds = Dataset()
    for _ in range(cfg.train_shapes):
        ds.train.append(_build_shape(cfg, cfg.train_views, rng))
    for _ in range(cfg.eval_shapes):
        ds.eval.append(_build_shape(cfg, cfg.eval_views, rng))
    return ds


def train_model(cfg: TrainConfig, dataset: Dataset | None = None, log=None):
    """Adam on symmetric Chamfer; returns (model, per-step loss history)."""
    torch.manual_seed(cfg.seed)
    ds = dataset if dataset is not None else build_dataset(cfg)
    model = MultiViewNet(cfg.encoding_dim, cfg.res)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x7E)))
    history = []
    model.train()
    for step in range(cfg.steps):
        picks = rng.choice(len(ds.train), cfg.batch, replace=False)
        k = int(rng.integers(1, cfg.train_views + 1))
        rasters, poses, gts = [], [], []
        for p in picks:
            shape = ds.train[p]
            view_ids = rng.choice(cfg.train_views, k, replace=False)
            rasters.append(shape.rasters[view_ids])
            poses.append(shape.poses[view_ids])
            gts.append(shape.gt)
        r = torch.from_numpy(np.stack(rasters))
        v = torch.from_numpy(np.stack(poses))
        gt = torch.from_numpy(np.stack(gts).astype(np.float32))
        samples = torch.from_numpy(
            unit_ball_samples(cfg.pred_points, seed=step).astype(np.float32)
        ).expand(cfg.batch, -1, -1)
        loss = chamfer(model(r, v, samples), gt)
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
        if log is not None and (step % 50 == 0 or step == cfg.steps - 1):
            log(f"step {step:4d}  chamfer {history[-1]:.6f}")
    model.eval()
    return model, history


def evaluate_iou(model: MultiViewNet, shapes, ks=(1, 2, 4, 8), m: int = 1024) -> dict:
    """Mean voxel IoU against ground truth using the first k stored views."""
    out = {}
    for k in ks:
        scores = []
        for shape in shapes:
            if k > len(shape.rasters):
                raise ValueError(f"shape holds {len(shape.rasters)} views, asked for {k}")
            pred = model.predict(shape.rasters[:k], shape.poses[:k], m)
            scores.append(voxel_iou(pred, shape.gt))
        out[k] = float(np.mean(scores))
    return out


def save_checkpoint(model: MultiViewNet, cfg: TrainConfig, path, extra=None):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "architecture": {"encoding_dim": cfg.encoding_dim, "raster_res": cfg.res},
        "train_config": asdict(cfg),
        "weights": "weights.pt",
    }
    if extra:
        manifest.update(extra)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    torch.save(model.state_dict(), path / "weights.pt")


def load_checkpoint(path) -> MultiViewNet:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"no manifest.json under {path}") from exc
    if manifest.get("format") != CHECKPOINT_FORMAT or manifest.get("version") != 1:
        raise ValueError(f"not a version-1 {CHECKPOINT_FORMAT} directory: {path}")
    arch = manifest["architecture"]
    model = MultiViewNet(arch["encoding_dim"], arch["raster_res"])
    state = torch.load(path / manifest["weights"], weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model
