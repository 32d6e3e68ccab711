"""Chamfer distance and voxel IoU between point sets."""

from __future__ import annotations

import numpy as np
import torch


def chamfer(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Symmetric mean squared nearest-neighbor distance, batched.

    pred (B, m, 3), target (B, n, 3) -> scalar.
    """
    d = torch.cdist(pred, target)
    return d.min(dim=2).values.square().mean() + d.min(dim=1).values.square().mean()


def voxel_iou(a, b, res: int = 24, half_extent: float = 0.2) -> float:
    """Occupancy IoU of two clouds on a res^3 grid over [-half, half]^3.

    Points outside the box are clamped onto the boundary cells so a stray
    point degrades the score instead of vanishing.
    """
    def occupied(points):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"expected (n, 3) points, got {points.shape}")
        idx = np.floor((points + half_extent) / (2.0 * half_extent) * res)
        idx = np.clip(idx, 0, res - 1).astype(np.int64)
        return set((idx[:, 0] * res + idx[:, 1]) * res + idx[:, 2])

    occ_a, occ_b = occupied(a), occupied(b)
    union = len(occ_a | occ_b)
    if union == 0:
        raise ValueError("both clouds are empty")
    return len(occ_a & occ_b) / union
