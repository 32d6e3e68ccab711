"""Comparison planners: information-gain maximization over an occupancy
belief, and greedy visibility maximization on the true points.

The belief is a per-cell log-odds grid updated by simulated depth scans with
the standard inverse sensor model: cells a ray passes through move toward
free, the cell it stops in moves toward occupied.  The information planner
visits the candidate whose frustum holds the most Bernoulli entropy.

Both planners report views-to-coverage against the true visible voxel union,
the same metric the primary planner exposes through its ground-truth
termination mode, so view counts are directly comparable.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import GridMismatchError, ParameterError
from .geometry import PointSet, ShapeSpec, ViewingSpace, Viewpoint, generate_shape, sample_viewpoints
from .planner import DEFAULT_SURFACE_POINTS, PlannerConfig, PlanStep, PlanTrace, _clip_to_grid, run_active_hof
from .predictor import OraclePredictor
from .visibility import hpr_visible, mean_spacing
from .voxels import CoverageState, coverage_fraction, make_grid_geometry, voxelize

L_OCC = math.log(0.7 / 0.3)
L_FREE = -L_OCC
L_CLAMP = 3.5
DEFAULT_RAYS = 64 * 64


@dataclass
class OccupancyBelief:
    """Per-cell occupancy log-odds; zero means even odds."""

    origin: np.ndarray
    edge: float
    dims: tuple
    log_odds: np.ndarray

    @classmethod
    def fresh(cls, origin, edge: float, dims) -> "OccupancyBelief":
        dims = tuple(int(d) for d in dims)
        return cls(
            np.asarray(origin, dtype=float).reshape(3),
            float(edge),
            dims,
            np.zeros(dims, dtype=float),
        )

    def probabilities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.log_odds))

    def entropy_bits(self) -> np.ndarray:
        p = self.probabilities()
        return _bernoulli_entropy(p)

    def _check_geometry(self, origin, edge, dims):
        if not (
            self.dims == tuple(dims)
            and self.edge == edge
            and np.array_equal(self.origin, np.asarray(origin, dtype=float).reshape(3))
        ):
            raise GridMismatchError("belief and scan grid geometry differ")


def _bernoulli_entropy(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, 1.0)
    out = np.zeros_like(p)
    interior = (p > 0.0) & (p < 1.0)
    q = p[interior]
    out[interior] = -q * np.log2(q) - (1.0 - q) * np.log2(1.0 - q)
    return out


@dataclass(frozen=True)
class DepthScan:
    """One simulated depth image: ray directions and hit distances.

    distances[i] is the along-ray distance of the first surface splat ray i
    meets, or nan for a miss; hits are in (0, max_range].
    """

    viewpoint: Viewpoint
    directions: np.ndarray  # (R, 3) unit vectors, world frame
    distances: np.ndarray   # (R,) float, nan = miss

    def __post_init__(self):
        if self.directions.shape != (len(self.distances), 3):
            raise ParameterError("directions and distances must align")


def _ray_grid(view: Viewpoint, rays: int) -> np.ndarray:
    """Square bundle of unit directions spanning the view frustum."""
    side = max(1, int(round(math.sqrt(rays))))
    half = math.tan(math.radians(view.fov_deg) / 2.0)
    u = np.linspace(-half, half, side)
    xx, yy = np.meshgrid(u, u, indexing="ij")
    local = np.column_stack([xx.ravel(), yy.ravel(), np.ones(side * side)])
    world = local @ view.rotation.T
    return world / np.linalg.norm(world, axis=1, keepdims=True)


def simulate_depth(points: PointSet, view: Viewpoint, rays: int = DEFAULT_RAYS, occluder_radius: float | None = None) -> DepthScan:
    """Cast a square ray bundle and record first-splat hit distances.

    Each surface point acts as a splat of the given radius (default half the
    cloud's mean spacing); a ray hits the nearest splat whose center passes
    within that radius, out to the view's max range.
    """
    if rays < 1:
        raise ParameterError("rays must be >= 1")
    if occluder_radius is None:
        occluder_radius = 0.5 * mean_spacing(points)
    if occluder_radius <= 0.0:
        raise ParameterError("occluder_radius must be positive")
    dirs = _ray_grid(view, rays)
    rel = points.xyz - view.center
    t = dirs @ rel.T  # (R, n) along-ray distance of each point's foot
    perp_sq = (rel * rel).sum(axis=1)[None, :] - t**2
    hit = (t > 0.0) & (t <= view.max_range) & (perp_sq <= occluder_radius**2)
    t = np.where(hit, t, np.inf)
    dist = t.min(axis=1)
    dist[~np.isfinite(dist)] = np.nan
    return DepthScan(view, dirs, dist)


def log_odds_update(belief: OccupancyBelief, scan: DepthScan) -> None:
    """Fold one scan into the belief with the inverse sensor model.

    Cells a ray traverses before its hit gain l_free once per ray; the hit
    cell gains l_occ per hitting ray; misses traverse to max range.  Updates
    are per-cell additive and clamped to |l| <= L_CLAMP.
    """
    origin, edge, dims = belief.origin, belief.edge, belief.dims
    view = scan.viewpoint
    n_cells = int(np.prod(dims))
    dims_arr = np.asarray(dims)

    far = np.where(np.isnan(scan.distances), view.max_range, scan.distances)
    # rays only matter inside the grid slab: clip to their box interval
    hi_corner = origin + dims_arr * edge
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (origin - view.center) / scan.directions
        t1 = (hi_corner - view.center) / scan.directions
    enter = np.nanmax(np.minimum(t0, t1), axis=1)
    exit_ = np.nanmin(np.maximum(t0, t1), axis=1)
    enter = np.maximum(enter, 0.0)
    stop = np.minimum(exit_, far)
    # sample each live ray densely enough that no traversed cell is skipped
    step = edge / 3.0
    ray_ids, flat = [], []
    live_idx = np.flatnonzero(enter < stop)
    if len(live_idx):
        span = stop[live_idx] - enter[live_idx]
        n_steps = int(np.ceil(span.max() / step))
        ts = (np.arange(n_steps) + 0.5) * step  # (S,) offsets past entry
        chunk = max(1, int(2e6 // max(n_steps, 1)))
        for lo in range(0, len(live_idx), chunk):
            ids = live_idx[lo : lo + chunk]
            t_abs = enter[ids, None] + ts[None, :]
            pts = view.center + scan.directions[ids, None, :] * t_abs[..., None]
            valid = t_abs < far[ids, None]
            idx = np.floor((pts - origin) / edge).astype(np.int64)
            inb = ((idx >= 0) & (idx < dims_arr)).all(axis=2) & valid
            f = idx[..., 0] * dims_arr[1] * dims_arr[2] + idx[..., 1] * dims_arr[2] + idx[..., 2]
            rid = np.broadcast_to(ids[:, None], f.shape)
            ray_ids.append(rid[inb])
            flat.append(f[inb])
    flat = np.concatenate(flat) if flat else np.empty(0, dtype=np.int64)
    ray_ids = np.concatenate(ray_ids) if ray_ids else np.empty(0, dtype=np.int64)

    hit_mask = ~np.isnan(scan.distances)
    hit_pts = view.center + scan.directions[hit_mask] * scan.distances[hit_mask, None]
    hidx = np.floor((hit_pts - origin) / edge).astype(np.int64)
    hin = ((hidx >= 0) & (hidx < dims_arr)).all(axis=1)
    hflat = hidx[hin, 0] * dims_arr[1] * dims_arr[2] + hidx[hin, 1] * dims_arr[2] + hidx[hin, 2]
    hit_ray = np.flatnonzero(hit_mask)[hin]

    # one l_free per (ray, traversed cell), excluding the ray's own hit cell
    pair = ray_ids * n_cells + flat
    pair = np.unique(pair)
    rid, cell = pair // n_cells, pair % n_cells
    hit_of_ray = np.full(len(scan.distances), -1, dtype=np.int64)
    hit_of_ray[hit_ray] = hflat
    keep = cell != hit_of_ray[rid]
    free_counts = np.bincount(cell[keep], minlength=n_cells)
    occ_counts = np.bincount(hflat, minlength=n_cells)

    l = belief.log_odds.ravel()
    l += free_counts * L_FREE + occ_counts * L_OCC
    np.clip(l, -L_CLAMP, L_CLAMP, out=l)


def expected_info_gain(belief: OccupancyBelief, view: Viewpoint, rays: int = DEFAULT_RAYS) -> float:
    """Total Bernoulli entropy (bits) of the cells the view can measure.

    A cell counts when its center lies in the frustum cone within max range
    and its line of sight is not blocked by a cell currently believed
    occupied (log-odds > 0); rays through the believed surface stop just
    past the first occupied cell they meet.  `rays` sets the nominal bundle
    size and is validated, but the bundle is treated as dense: the reachable
    set is computed per cell rather than per sampled ray.
    """
    if rays < 1:
        raise ParameterError("rays must be >= 1")
    centers = _cell_centers(belief)
    h = belief.entropy_bits().ravel()
    shadow = _shadow_mask(belief, view)
    return _gain_one(centers, np.where(shadow, 0.0, h), view)


def _shadow_mask(belief: OccupancyBelief, view: Viewpoint) -> np.ndarray:
    """Flat bool mask of cells hidden behind believed-occupied cells.

    March from each occupied cell away from the camera at sub-cell pitch,
    marking traversed cells; the occupied shell is dense enough at scan
    scale that neighboring pencils leave no gaps.
    """
    origin, edge, dims = belief.origin, belief.edge, belief.dims
    dims_arr = np.asarray(dims)
    n_cells = int(np.prod(dims))
    occ = np.flatnonzero(belief.log_odds.ravel() > 0.0)
    if len(occ) == 0:
        return np.zeros(n_cells, dtype=bool)
    idx = np.column_stack(np.unravel_index(occ, dims))
    b = origin + (idx + 0.5) * edge
    rel = b - view.center
    dist = np.linalg.norm(rel, axis=1)
    keep = dist > 0
    b, rel, dist = b[keep], rel[keep], dist[keep]
    dirs = rel / dist[:, None]
    # farthest in-grid distance bounds the march length
    diag = float(np.linalg.norm(dims_arr * edge))
    step = 0.8 * edge
    n_steps = int(np.ceil(diag / step)) + 1
    ts = edge + (np.arange(n_steps) + 0.5) * step  # start one cell past the blocker
    pts = b[:, None, :] + dirs[:, None, :] * ts[None, :, None]
    cell = np.floor((pts - origin) / edge).astype(np.int64)
    inb = ((cell >= 0) & (cell < dims_arr)).all(axis=2)
    flat = cell[..., 0] * dims_arr[1] * dims_arr[2] + cell[..., 1] * dims_arr[2] + cell[..., 2]
    mask = np.zeros(n_cells, dtype=bool)
    mask[flat[inb]] = True
    mask[occ] = False  # the believed surface itself stays measurable
    return mask


def _cell_centers(belief: OccupancyBelief) -> np.ndarray:
    nx, ny, nz = belief.dims
    ax = belief.origin[0] + (np.arange(nx) + 0.5) * belief.edge
    ay = belief.origin[1] + (np.arange(ny) + 0.5) * belief.edge
    az = belief.origin[2] + (np.arange(nz) + 0.5) * belief.edge
    gx, gy, gz = np.meshgrid(ax, ay, az, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


def _gain_one(centers: np.ndarray, h: np.ndarray, view: Viewpoint) -> float:
    # same cell set as expected_info_gain, entropy precomputed by the caller
    rel = centers - view.center
    dist = np.linalg.norm(rel, axis=1)
    cos_half = math.cos(math.radians(view.fov_deg) / 2.0)
    along = rel @ view.optical_axis
    cosang = np.where(dist > 0, along / np.where(dist > 0, dist, 1.0), 1.0)
    inside = (cosang >= cos_half) & (dist <= view.max_range) & (dist > 0)
    return float(h[inside].sum())


def belief_to_text(belief: OccupancyBelief) -> str:
    """RLE-style grid document with a real-valued log-odds payload."""
    head = [
        "beliefgrid 1",
        "dims " + " ".join(str(d) for d in belief.dims),
        "origin " + " ".join(f"{v:.9g}" for v in belief.origin),
        f"edge {belief.edge:.9g}",
    ]
    body = " ".join(f"{v:.6f}" for v in belief.log_odds.ravel())
    return "\n".join(head) + "\n" + body + "\n"


def _gt_machinery(shape, config, space, resolution):
    if isinstance(shape, ShapeSpec):
        shape = generate_shape(shape, DEFAULT_SURFACE_POINTS, config.seed)
    lo, hi = shape.bounds()
    origin, edge, dims = make_grid_geometry((lo + hi) / 2.0, resolution)
    gt_in = _clip_to_grid(shape, origin, edge, dims)
    gt_grid = voxelize(gt_in, None, origin, edge, dims)
    covered = CoverageState(origin, edge, dims, np.zeros(dims, dtype=bool))
    return shape, gt_in, gt_grid, covered, (origin, edge, dims)


def run_info_max(
    shape,
    config: PlannerConfig,
    space: ViewingSpace,
    resolution: int = 40,
    rays: int = DEFAULT_RAYS,
) -> PlanTrace:
    """Entropy-driven next-best-view loop over an occupancy belief.

    Candidates are scored by expected_info_gain; the winner is visited and a
    depth scan folded into the belief.  Termination coverage is the true
    visible voxel union, so traces compare directly with the primary
    planner's ground-truth termination mode.
    """
    shape, gt_in, gt_grid, covered, geom = _gt_machinery(shape, config, space, resolution)
    origin, edge, dims = geom
    belief = OccupancyBelief.fresh(origin, edge, dims)

    view = sample_viewpoints(space, 1, np.random.SeedSequence((config.seed, 0)))[0]
    steps = []
    terminated_by = "view_limit"
    for k in range(1, config.max_views + 1):
        log_odds_update(belief, simulate_depth(shape, view, rays))
        vis = hpr_visible(gt_in, view)
        covered.absorb(voxelize(gt_in, vis, origin, edge, dims))
        cov = coverage_fraction(covered, gt_grid)

        if cov > config.alpha:
            steps.append(PlanStep(view, cov, ()))
            terminated_by = "coverage"
            break
        if k == config.max_views:
            steps.append(PlanStep(view, cov, ()))
            terminated_by = "view_limit"
            break
        candidates = sample_viewpoints(
            space, config.n_candidates, np.random.SeedSequence((config.seed, k, 0))
        )
        centers = _cell_centers(belief)
        h = belief.entropy_bits().ravel()
        gains = [
            _gain_one(centers, np.where(_shadow_mask(belief, c), 0.0, h), c)
            for c in candidates
        ]
        best = int(np.argmax(gains))
        steps.append(PlanStep(view, cov, tuple(round(g, 6) for g in gains)))
        view = candidates[best]
    center = origin + np.asarray(dims) * edge / 2.0
    return PlanTrace(
        tuple(steps), terminated_by, config, resolution, "ground_truth", center, "info_max"
    )


def run_vis_max_gt(
    shape,
    config: PlannerConfig,
    space: ViewingSpace,
    resolution: int = 40,
) -> PlanTrace:
    """Greedy visibility maximization given the true points at every step."""
    if isinstance(shape, ShapeSpec):
        shape = generate_shape(shape, DEFAULT_SURFACE_POINTS, config.seed)
    trace = run_active_hof(
        shape, OraclePredictor(shape), config, space,
        resolution=resolution, termination="ground_truth",
    )
    return replace(trace, method="vis_max_gt")
