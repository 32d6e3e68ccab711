"""Encoder, pooling, decoder and the decoded point-mapping network.

The decoder does not predict points; it predicts the flat weight vector of a
small 3-to-3 network, and that network carries seeded unit-ball samples onto
the surface.  Pooling is an element-wise maximum, so view order never
matters and extra views can only raise coordinates of the pooled encoding.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

ENCODING_DIM = 128
MAPPER_HIDDEN = 32
POSE_DIM = 12

# flat weight count of the 3 -> h -> h -> 3 mapper
MAPPER_PARAM_COUNT = (3 * MAPPER_HIDDEN + MAPPER_HIDDEN) + (
    MAPPER_HIDDEN * MAPPER_HIDDEN + MAPPER_HIDDEN
) + (MAPPER_HIDDEN * 3 + 3)


def pool_encodings(encodings) -> np.ndarray:
    """Coordinate-wise maximum of a non-empty encoding set; exact, no float
    arithmetic beyond comparison."""
    stack = np.asarray(encodings, dtype=np.float64)
    if stack.ndim == 1:
        stack = stack[None, :]
    if stack.ndim != 2 or stack.shape[0] == 0:
        raise ValueError(f"expected a (k, c) stack of encodings, got {stack.shape}")
    if not np.isfinite(stack).all():
        raise ValueError("encodings must be finite")
    return stack.max(axis=0)


def unit_ball_samples(m: int, seed: int) -> np.ndarray:
    """m seeded samples uniform in the unit ball, (m, 3) float64."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5A)))
    u = rng.normal(size=(m, 3))
    u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-12)
    r = np.cbrt(rng.uniform(size=(m, 1)))
    return u * r


class ViewEncoder(nn.Module):
    """Silhouette+depth raster plus flattened pose to a c-vector."""

    def __init__(self, c: int = ENCODING_DIM, res: int = 64):
        super().__init__()
        self.c = c
        self.res = res
        self.conv = nn.Sequential(
            nn.Conv2d(2, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(64, 128, 3, stride=2, padding=1), nn.ReLU(),
        )
        self.pose = nn.Sequential(nn.Linear(POSE_DIM, 32), nn.ReLU())
        self.head = nn.Linear(128 + 32, c)

    def forward(self, rasters: torch.Tensor, poses: torch.Tensor) -> torch.Tensor:
        if rasters.shape[-3:] != (2, self.res, self.res):
            raise ValueError(
                f"expected (..., 2, {self.res}, {self.res}) rasters, got {tuple(rasters.shape)}"
            )
        feat = self.conv(rasters).mean(dim=(-2, -1))
        return self.head(torch.cat([feat, self.pose(poses)], dim=-1))


class ParamDecoder(nn.Module):
    """Pooled encoding to the mapper's flat weight vector."""

    def __init__(self, c: int = ENCODING_DIM, hidden: int = 256):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(c, hidden), nn.ReLU(), nn.Linear(hidden, MAPPER_PARAM_COUNT)
        )

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.net(pooled)


def map_points(params: torch.Tensor, samples: torch.Tensor) -> torch.Tensor:
    """Run each batch row's decoded mapper over its samples.

    params (B, MAPPER_PARAM_COUNT), samples (B, m, 3) -> (B, m, 3).
    """
    h = MAPPER_HIDDEN
    i = 0

    def take(rows, cols):
        nonlocal i
        w = params[:, i : i + rows * cols].reshape(-1, rows, cols)
        i += rows * cols
        b = params[:, i : i + rows].reshape(-1, 1, rows)
        i += rows
        return w, b

    w1, b1 = take(h, 3)
    w2, b2 = take(h, h)
    w3, b3 = take(3, h)
    x = torch.tanh(torch.baddbmm(b1, samples, w1.transpose(1, 2)))
    x = torch.tanh(torch.baddbmm(b2, x, w2.transpose(1, 2)))
    return torch.baddbmm(b3, x, w3.transpose(1, 2))


class MultiViewNet(nn.Module):
    """Full pipeline: encode each view, max-pool, decode, map samples."""

    def __init__(self, c: int = ENCODING_DIM, res: int = 64):
        super().__init__()
        self.encoder = ViewEncoder(c, res)
        self.decoder = ParamDecoder(c)

    def forward(self, rasters: torch.Tensor, poses: torch.Tensor, samples: torch.Tensor) -> torch.Tensor:
        """rasters (B, k, 2, res, res), poses (B, k, 12), samples (B, m, 3)."""
        b, k = rasters.shape[0], rasters.shape[1]
        z = self.encoder(rasters.flatten(0, 1), poses.flatten(0, 1))
        pooled = z.reshape(b, k, -1).max(dim=1).values
        return map_points(self.decoder(pooled), samples)

    @torch.no_grad()
    def predict(self, rasters: np.ndarray, poses: np.ndarray, m: int, seed: int = 0) -> np.ndarray:
        """One shape from k numpy rasters/poses to m float64 surface points."""
        self.eval()
        r = torch.from_numpy(np.asarray(rasters, dtype=np.float32))[None]
        p = torch.from_numpy(
            np.asarray(poses, dtype=np.float64).reshape(len(rasters), POSE_DIM).astype(np.float32)
        )[None]
        s = torch.from_numpy(unit_ball_samples(m, seed).astype(np.float32))[None]
        return self.forward(r, p, s)[0].double().numpy()
