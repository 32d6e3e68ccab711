"""Shape predictors: exact oracle, view-count-degraded oracle, external bridge.

A predictor answers "given what the views have seen so far, what does the
whole object look like".  The oracle returns the ground truth; the degraded
oracle corrupts it by an amount that shrinks as views accumulate, which
stands in for a learned model improving with more input views.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, PredictorError
from .geometry import PointSet, Viewpoint

DEFAULT_PREDICTION_SIZE = 4096


@dataclass(frozen=True)
class ViewRecord:
    """One captured view: the pose plus the points it could actually see."""

    viewpoint: Viewpoint
    observation: PointSet


@dataclass(frozen=True)
class PredictorRequest:
    scene_id: str
    views: tuple

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        if len(self.views) < 1:
            raise ParameterError("a prediction request needs at least one view")


@dataclass(frozen=True)
class DegradationProfile:
    """Corruption knobs.  All effects shrink as the view count k grows:
    jitter sigma0/sqrt(k), dropout fraction dropout0/k (concentrated on
    cells no view has observed), spurious fraction hallucination0/k.
    """

    sigma0: float = 0.015
    dropout0: float = 0.35
    hallucination0: float = 0.05
    cell_edge: float = 0.010  # granularity of the seen/unseen split
    seed: int = 0

    def __post_init__(self):
        if self.sigma0 < 0.0:
            raise ParameterError("sigma0 must be non-negative")
        if not (0.0 <= self.dropout0 < 1.0):
            raise ParameterError("dropout0 must be in [0, 1)")
        if self.hallucination0 < 0.0:
            raise ParameterError("hallucination0 must be non-negative")
        if self.cell_edge <= 0.0:
            raise ParameterError("cell_edge must be positive")


def resize_points(xyz: np.ndarray, m: int) -> np.ndarray:
    """Deterministically pad (by cycling rows) or truncate to exactly m rows."""
    n = len(xyz)
    if n == m:
        return xyz
    if n == 0:
        raise PredictorError("cannot resize an empty prediction")
    if n > m:
        return xyz[:m]
    extra = xyz[np.arange(m - n) % n]
    return np.vstack([xyz, extra])


class OraclePredictor:
    """Returns the scene's ground truth verbatim, ignoring the views."""

    def __init__(self, ground_truth: PointSet, scene_id: str = "scene"):
        self.ground_truth = ground_truth
        self.scene_id = scene_id

    def predict(self, request: PredictorRequest) -> PointSet:
        if request.scene_id != self.scene_id:
            raise PredictorError(f"unknown scene {request.scene_id!r}")
        return self.ground_truth


class DegradedPredictor:
    """Ground truth corrupted by an amount that decays with the view count.

    Noise is drawn once per (seed, scene) from fixed streams, so predictions
    for different k of the same scene share their randomness: adding views
    only shrinks the corruption, never reshuffles it.
    """

    def __init__(
        self,
        ground_truth: PointSet,
        profile: DegradationProfile | None = None,
        scene_id: str = "scene",
        respond_m: int | None = None,
    ):
        self.ground_truth = ground_truth
        self.profile = profile or DegradationProfile()
        self.scene_id = scene_id
        self.respond_m = respond_m
        n = len(ground_truth)
        if n == 0:
            raise ParameterError("ground truth must be non-empty")
        rng = np.random.default_rng(
            np.random.SeedSequence(
                (self.profile.seed, zlib.crc32(scene_id.encode("utf-8")))
            )
        )
        lo, hi = ground_truth.bounds()
        span = np.maximum(hi - lo, 1e-9)
        center = (lo + hi) / 2.0
        self._bbox_lo = center - 0.6 * span  # bounding box inflated by 20%
        self._bbox_hi = center + 0.6 * span
        self._jitter = rng.normal(size=(n, 3))
        self._drop_u = rng.random(n)
        pool = max(1, int(np.ceil(self.profile.hallucination0 * n)))
        self._spurious = self._bbox_lo + rng.random((pool, 3)) * (
            self._bbox_hi - self._bbox_lo
        )

    def _seen_mask(self, request: PredictorRequest) -> np.ndarray:
        """Ground-truth points whose cell was observed by at least one view."""
        edge = self.profile.cell_edge
        gt_cells = np.floor((self.ground_truth.xyz - self._bbox_lo) / edge).astype(np.int64)
        seen = set()
        for record in request.views:
            obs = record.observation.xyz
            if len(obs) == 0:
                continue
            cells = np.floor((obs - self._bbox_lo) / edge).astype(np.int64)
            seen.update(map(tuple, cells))
        if not seen:
            return np.zeros(len(gt_cells), dtype=bool)
        seen_arr = np.array(sorted(seen), dtype=np.int64)
        # membership test via row view
        dt = np.dtype((np.void, gt_cells.dtype.itemsize * 3))
        return np.isin(
            np.ascontiguousarray(gt_cells).view(dt).ravel(),
            np.ascontiguousarray(seen_arr).view(dt).ravel(),
        )

    def predict(self, request: PredictorRequest) -> PointSet:
        if request.scene_id != self.scene_id:
            raise PredictorError(f"unknown scene {request.scene_id!r}")
        k = len(request.views)
        p = self.profile
        xyz = self.ground_truth.xyz
        n = len(xyz)
        if p.sigma0 > 0.0:
            xyz = xyz + (p.sigma0 / np.sqrt(k)) * self._jitter
        keep = np.ones(n, dtype=bool)
        delta = p.dropout0 / k
        if delta > 0.0:
            seen = self._seen_mask(request)
            f_unseen = float((~seen).mean())
            # unseen cells drop 4x more often; solve for the overall rate
            p_unseen = delta / max(f_unseen + 0.25 * (1.0 - f_unseen), 1e-9)
            p_unseen = min(p_unseen, 0.95)
            p_seen = 0.25 * p_unseen
            threshold = np.where(seen, p_seen, p_unseen)
            keep = self._drop_u >= threshold
            if not keep.any():
                keep[0] = True  # never emit an empty prediction
        parts = [xyz[keep]]
        n_spurious = int(round(p.hallucination0 / k * n))
        if n_spurious > 0:
            parts.append(self._spurious[: min(n_spurious, len(self._spurious))])
        out = np.vstack(parts) if len(parts) > 1 else parts[0]
        if self.respond_m is not None:
            out = resize_points(out, self.respond_m)
        return PointSet(out)


class ExternalPredictor:
    """Adapter that forwards requests over a bridge endpoint."""

    def __init__(self, endpoint, respond_m: int = DEFAULT_PREDICTION_SIZE,
                 fov_deg: float = 60.0, max_range: float = 1.0):
        self.endpoint = endpoint
        self.respond_m = respond_m
        self.fov_deg = fov_deg
        self.max_range = max_range

    def predict(self, request: PredictorRequest) -> PointSet:
        views = [r.viewpoint for r in request.views]
        observations = [r.observation for r in request.views]
        return self.endpoint.request(
            request.scene_id, views, observations, self.respond_m,
            self.fov_deg, self.max_range,
        )
