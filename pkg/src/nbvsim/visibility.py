"""Point-cloud visibility: spherical-flip HPR operator and a ray-cast oracle.

The HPR operator decides which points of a cloud are visible from a camera
center without any surface reconstruction: translate the cloud to the camera
frame, reflect every point outward across a sphere of radius R, and take the
convex hull of the reflected cloud plus the camera origin.  Points whose
reflections are hull vertices are visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import ParameterError
from .geometry import PointSet, Viewpoint

DEFAULT_FLIP_GAMMA = 3.0


@dataclass(frozen=True)
class HprParams:
    """Knobs for the hidden-point-removal pass.

    flip_gamma scales the flip-sphere radius relative to the farthest point;
    jitter_scale is the relative perturbation used to retry a degenerate hull.
    """

    flip_gamma: float = DEFAULT_FLIP_GAMMA
    jitter_scale: float = 1e-12
    jitter_seed: int = 0

    def __post_init__(self):
        if self.flip_gamma <= 1.0:
            raise ParameterError("flip_gamma must exceed 1")
        if self.jitter_scale < 0.0:
            raise ParameterError("jitter_scale must be non-negative")


@dataclass(frozen=True)
class VisibilityMask:
    """Boolean visibility per input point, with bookkeeping from the pass."""

    visible: np.ndarray  # bool (n,)
    in_frustum: np.ndarray  # bool (n,): passed the FOV / range cull
    degenerate: bool = False  # hull needed a jittered retry

    def __post_init__(self):
        object.__setattr__(self, "visible", np.asarray(self.visible, dtype=bool))
        object.__setattr__(self, "in_frustum", np.asarray(self.in_frustum, dtype=bool))

    @property
    def count(self) -> int:
        return int(self.visible.sum())


def frustum_mask(points: PointSet, view: Viewpoint) -> np.ndarray:
    """Points inside the symmetric viewing cone and within sensor range."""
    rel = points.xyz - view.center
    dist = np.linalg.norm(rel, axis=1)
    axis = view.optical_axis
    along = rel @ axis
    cos_half = math.cos(math.radians(view.fov_deg) / 2.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(dist > 0.0, along / dist, 1.0)
    return (cos >= cos_half) & (dist <= view.max_range) & (dist > 0.0)


def _spherical_flip(rel: np.ndarray, gamma: float) -> tuple[np.ndarray, float]:
    norms = np.linalg.norm(rel, axis=1)
    radius = gamma * norms.max()
    flipped = rel + 2.0 * (radius - norms)[:, None] * rel / norms[:, None]
    return flipped, radius


def hpr_visible(points: PointSet, view: Viewpoint, params: HprParams | None = None) -> VisibilityMask:
    """Visibility mask from the spherical-flip operator, after frustum culling."""
    params = params or HprParams()
    n = len(points)
    inside = frustum_mask(points, view)
    visible = np.zeros(n, dtype=bool)
    idx = np.flatnonzero(inside)
    if idx.size == 0:
        return VisibilityMask(visible, inside)
    rel = points.xyz[idx] - view.center
    if idx.size <= 3:
        # Too few points to occlude one another.
        visible[idx] = True
        return VisibilityMask(visible, inside)

    flipped, _ = _spherical_flip(rel, params.flip_gamma)
    cloud = np.vstack([flipped, np.zeros(3)])
    degenerate = False
    try:
        hull = ConvexHull(cloud)
    except QhullError:
        degenerate = True
        diam = float(np.ptp(rel, axis=0).max())
        rng = np.random.default_rng(params.jitter_seed)
        jitter = rng.normal(scale=params.jitter_scale * max(diam, 1e-30), size=rel.shape)
        flipped, _ = _spherical_flip(rel + jitter, params.flip_gamma)
        cloud = np.vstack([flipped, np.zeros(3)])
        try:
            hull = ConvexHull(cloud)
        except QhullError:
            hull = ConvexHull(cloud, qhull_options="QJ")
    verts = hull.vertices[hull.vertices < idx.size]
    visible[idx[verts]] = True
    return VisibilityMask(visible, inside, degenerate=degenerate)


def mean_spacing(points: PointSet) -> float:
    """Mean nearest-neighbor distance; scale-free density estimate."""
    if len(points) < 2:
        raise ParameterError("need at least two points to estimate spacing")
    tree = cKDTree(points.xyz)
    d, _ = tree.query(points.xyz, k=2)
    return float(d[:, 1].mean())


def raycast_visible(
    points: PointSet,
    view: Viewpoint,
    occluder_radius: float | None = None,
    min_separation: float | None = None,
) -> VisibilityMask:
    """Brute-force oracle: a point is hidden iff some other point blocks its ray.

    Each point acts as an opaque splat of radius occluder_radius.  A target p
    is occluded iff some strictly nearer point q lies within occluder_radius
    of the sight segment from the camera to p.  Blockers closer to p than
    min_separation are ignored: they belong to p's own surface patch, which
    must not shadow p (a continuous surface never occludes its own points).

    Defaults: occluder_radius = half the mean nearest-neighbor spacing of the
    cloud, min_separation = 4 * occluder_radius.  The oracle is exact for the
    splat model; near silhouettes it deviates from true surface visibility
    within a band of angular width about 2 * atan(occluder_radius / r) for a
    body of local radius r.  O(n^2) time and memory.
    """
    n = len(points)
    inside = frustum_mask(points, view)
    visible = np.zeros(n, dtype=bool)
    idx = np.flatnonzero(inside)
    if idx.size == 0:
        return VisibilityMask(visible, inside)
    if occluder_radius is None:
        occluder_radius = 0.5 * mean_spacing(points) if n >= 2 else 1e-9
    if occluder_radius <= 0.0:
        raise ParameterError("occluder_radius must be positive")
    if min_separation is None:
        min_separation = 4.0 * occluder_radius
    pos = points.xyz[idx]
    rel = pos - view.center  # (m, 3)
    dist = np.linalg.norm(rel, axis=1)
    dirs = rel / dist[:, None]
    # t[i, j]: projection of candidate blocker j onto target ray i.
    t = dirs @ rel.T
    perp_sq = (dist**2)[None, :] - t**2
    sep_sq = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1)
    blocked = (
        (t > 1e-12)
        & (t < dist[:, None])
        & (perp_sq < occluder_radius**2)
        & (sep_sq > min_separation**2)
    )
    np.fill_diagonal(blocked, False)
    visible[idx[~blocked.any(axis=1)]] = True
    return VisibilityMask(visible, inside)


def visible_points(points: PointSet, view: Viewpoint, params: HprParams | None = None) -> PointSet:
    return points.subset(hpr_visible(points, view, params).visible)


def union_visible(points: PointSet, views, params: HprParams | None = None) -> np.ndarray:
    """Boolean mask of points visible from at least one of the views."""
    mask = np.zeros(len(points), dtype=bool)
    for view in views:
        mask |= hpr_visible(points, view, params).visible
    return mask
