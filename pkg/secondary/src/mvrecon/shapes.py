"""Synthetic training shapes and cameras.

Shapes are superellipsoid lobes centered near the origin, small enough to
fit inside a 0.4-unit cube.  Only surface point samples are ever used; there
is no mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("ellipsoid", "box", "pair")


@dataclass(frozen=True)
class Lobe:
    axes: np.ndarray  # semi-axes (3,)
    exponent: float  # 1.0 ellipsoid, smaller is boxier
    offset: np.ndarray  # lobe center (3,)


@dataclass(frozen=True)
class ShapeSpec:
    family: str
    lobes: tuple


def _implicit(lobe: Lobe, points: np.ndarray) -> np.ndarray:
    """Inside-outside value; < 1 inside, 1 on the surface."""
    q = np.abs((points - lobe.offset) / lobe.axes)
    return np.power(q, 2.0 / lobe.exponent).sum(axis=1)


def _lobe_surface(lobe: Lobe, n: int, rng) -> np.ndarray:
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    # radial scaling: implicit value of t*u is t^(2/e) * value(u)
    g = np.power(np.abs(u) / lobe.axes, 2.0 / lobe.exponent).sum(axis=1)
    t = np.power(g, -lobe.exponent / 2.0)
    return u * t[:, None] + lobe.offset


def sample_spec(rng) -> ShapeSpec:
    """One random shape: a single lobe or an offset pair of lobes."""
    family = FAMILIES[rng.integers(len(FAMILIES))]
    if family == "pair":
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        gap = rng.uniform(0.03, 0.07)
        lobes = []
        for sign in (1.0, -1.0):
            lobes.append(
                Lobe(
                    axes=rng.uniform(0.04, 0.10, size=3),
                    exponent=float(rng.uniform(0.4, 1.0)),
                    offset=sign * gap * axis,
                )
            )
        return ShapeSpec(family, tuple(lobes))
    exponent = 1.0 if family == "ellipsoid" else float(rng.uniform(0.3, 0.5))
    lobe = Lobe(
        axes=rng.uniform(0.05, 0.15, size=3),
        exponent=exponent,
        offset=np.zeros(3),
    )
    return ShapeSpec(family, (lobe,))


def surface_points(spec: ShapeSpec, n: int, rng) -> np.ndarray:
    """n surface samples; on a pair, points buried inside the other lobe
    are rejected so only the union boundary remains."""
    pts = np.empty((0, 3))
    while len(pts) < n:
        batch = []
        for i, lobe in enumerate(spec.lobes):
            cand = _lobe_surface(lobe, n, rng)
            keep = np.ones(len(cand), dtype=bool)
            for j, other in enumerate(spec.lobes):
                if j != i:
                    keep &= _implicit(other, cand) >= 1.0
            batch.append(cand[keep])
        pts = np.vstack([pts] + batch)
    return pts[:n]


def look_at_pose(center, target=(0.0, 0.0, 0.0), up_hint=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world [R|t], shape (3, 4).

    Columns of R are the camera axes in world coordinates and the camera
    looks along its +z axis; roll aligns image-up with `up_hint` projected
    onto the image plane, falling back to world X at the poles.
    """
    center = np.asarray(center, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - center
    dist = np.linalg.norm(z)
    if dist < 1e-12:
        raise ValueError("camera sits on the look-at target")
    z = z / dist
    hint = np.asarray(up_hint, dtype=np.float64)
    up = hint - (hint @ z) * z
    if np.linalg.norm(up) < 1e-9:
        helper = np.array([1.0, 0.0, 0.0])
        up = helper - (helper @ z) * z
    y = up / np.linalg.norm(up)
    x = np.cross(y, z)
    return np.hstack([np.column_stack([x, y, z]), center[:, None]])


def sample_poses(k: int, rng, radius_range=(0.45, 0.80)) -> np.ndarray:
    """k camera poses on spheres around the origin, aimed at it; (k, 3, 4)."""
    poses = []
    for _ in range(k):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        r = rng.uniform(*radius_range)
        poses.append(look_at_pose(d * r))
    return np.stack(poses)
