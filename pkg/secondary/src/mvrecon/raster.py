"""Point clouds to silhouette+depth rasters.

The same projection is used for training data and for observations arriving
over the bridge, so the encoder never sees a train/serve mismatch.
"""

from __future__ import annotations

import math

import numpy as np

RASTER_RES = 64


def render(points, pose, fov_deg: float, max_range: float, res: int = RASTER_RES) -> np.ndarray:
    """(2, res, res) float32: channel 0 hit mask, channel 1 nearness.

    Pinhole projection through the camera-to-world pose [R|t]; per pixel the
    nearest point wins.  Nearness is 1 - depth/max_range so empty pixels and
    far pixels both read near zero.  An empty or fully clipped cloud yields
    an all-zero raster.
    """
    if res < 2:
        raise ValueError(f"raster resolution {res} is too small")
    if not math.isfinite(fov_deg) or not 0.0 < fov_deg < 180.0:
        raise ValueError(f"field of view {fov_deg} degrees is out of range")
    if not max_range > 0.0:
        raise ValueError(f"max range {max_range} must be positive")
    out = np.zeros((2, res, res), dtype=np.float32)
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return out
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got {points.shape}")
    pose = np.asarray(pose, dtype=np.float64).reshape(3, 4)
    cam = (points - pose[:, 3]) @ pose[:, :3]  # R^T (p - t)
    z = cam[:, 2]
    ok = (z > 1e-9) & (z <= max_range)
    if not ok.any():
        return out
    cam = cam[ok]
    z = z[ok]
    focal = (res / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    u = np.floor(res / 2.0 + focal * cam[:, 0] / z).astype(np.int64)
    v = np.floor(res / 2.0 + focal * cam[:, 1] / z).astype(np.int64)
    inside = (u >= 0) & (u < res) & (v >= 0) & (v < res)
    if not inside.any():
        return out
    u, v, z = u[inside], v[inside], z[inside]
    flat = v * res + u
    # z-buffer: nearest point per pixel
    order = np.lexsort((z, flat))
    flat, z = flat[order], z[order]
    first = np.ones(len(flat), dtype=bool)
    first[1:] = flat[1:] != flat[:-1]
    flat, z = flat[first], z[first]
    mask = out[0].reshape(-1)
    near = out[1].reshape(-1)
    mask[flat] = 1.0
    near[flat] = 1.0 - z / max_range
    return out


def render_views(points, poses, fov_deg: float, max_range: float, res: int = RASTER_RES) -> np.ndarray:
    """Stack of rasters for one cloud seen from several poses; (k, 2, res, res)."""
    return np.stack([render(points, pose, fov_deg, max_range, res) for pose in poses])
