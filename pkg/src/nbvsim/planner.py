"""Greedy next-best-view planning.

The loop: predict the shape from the views gathered so far, mark what the
current view can see, voxelize, fold into the covered set, then move to the
sampled candidate that would uncover the most new occupied cells.  Stops when
the coverage fraction strictly exceeds alpha or the view budget runs out.

Every run is a pure function of (shape, predictor, config, space), so traces
can be re-run and compared bit for bit.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DeterminismError, ParameterError, PredictorError, UndefinedCoverageError
from .geometry import PointSet, ShapeSpec, Viewpoint, ViewingSpace, generate_shape, sample_viewpoints
from .predictor import PredictorRequest, ViewRecord
from .visibility import HprParams, hpr_visible, raycast_visible
from .voxels import CoverageState, VoxelGrid, coverage_fraction, in_bounds_mask, iou, make_grid_geometry, voxelize

MODES = ("static", "dynamic")
TERMINATION_METRICS = ("prediction", "ground_truth")

# Surface sample count used when the caller hands a ShapeSpec instead of points.
DEFAULT_SURFACE_POINTS = 1200


@dataclass(frozen=True)
class PlannerConfig:
    """Knobs of the planning loop.

    alpha is the coverage fraction to exceed; n_candidates the number of
    viewpoints sampled per step; mode chooses between predicting once from
    the first view ("static") and re-predicting every step ("dynamic").
    recompute_history additionally re-projects all past views onto each new
    prediction instead of only the current one.
    """

    alpha: float
    n_candidates: int = 24
    mode: str = "dynamic"
    max_views: int = 20
    seed: int = 0
    recompute_history: bool = False

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ParameterError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.n_candidates < 1:
            raise ParameterError("n_candidates must be >= 1")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}")
        if self.max_views < 1:
            raise ParameterError("max_views must be >= 1")


@dataclass(frozen=True)
class PlanStep:
    """One executed view: where the camera was, the coverage fraction after
    folding in what it saw, the candidate scores used to pick the next view
    (empty on the final step), and the prediction-vs-truth occupancy IoU."""

    viewpoint: Viewpoint
    coverage_after: float
    candidate_scores: tuple
    prediction_iou_vs_gt: float | None = None


@dataclass(frozen=True)
class PlanTrace:
    steps: tuple
    terminated_by: str  # "coverage" | "view_limit"
    config: PlannerConfig
    resolution: int = 40
    termination: str = "prediction"
    grid_center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    method: str = "active_hof"

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(
            self, "grid_center", np.asarray(self.grid_center, dtype=float).reshape(3)
        )

    @property
    def n_views(self) -> int:
        return len(self.steps)

    @property
    def final_coverage(self) -> float:
        return self.steps[-1].coverage_after if self.steps else 0.0


def _clip_to_grid(points: PointSet, origin, edge, dims) -> PointSet:
    keep = in_bounds_mask(points, origin, edge, dims)
    return points if keep.all() else points.subset(keep)


def sense(ground_truth: PointSet, view: Viewpoint) -> ViewRecord:
    """Capture one view: the pose plus the surface points a camera there sees."""
    mask = raycast_visible(ground_truth, view)
    return ViewRecord(view, ground_truth.subset(mask.visible))


def select_next_view(grid: VoxelGrid, covered: CoverageState, candidates, points: PointSet, params: HprParams | None = None):
    """Score candidates by how many occupied cells they would newly uncover.

    Each candidate is scored by voxelizing the points with that candidate's
    visibility labeling on the grid's geometry and counting visible-labeled
    cells not yet covered.  Returns (best viewpoint, its score, all scores);
    ties go to the lowest candidate index.  A best score of zero is the
    zero-gain signal: nothing any candidate sees is new.  Points must lie
    inside the grid.
    """
    if not candidates:
        raise ParameterError("candidate list must be non-empty")
    scores = []
    for cand in candidates:
        mask = hpr_visible(points, cand, params)
        vox = voxelize(points, mask, grid.origin, grid.edge, grid.dims)
        scores.append(int((vox.visible & ~covered.covered).sum()))
    best = int(np.argmax(scores))
    return candidates[best], scores[best], tuple(scores)


def _predict(predictor, records) -> PointSet:
    scene_id = getattr(predictor, "scene_id", "scene")
    return predictor.predict(PredictorRequest(scene_id, tuple(records)))


def run_active_hof(
    shape,
    predictor,
    config: PlannerConfig,
    space: ViewingSpace,
    resolution: int = 40,
    termination: str = "prediction",
    hpr_params: HprParams | None = None,
) -> PlanTrace:
    """Run the planning loop to completion and return its trace.

    shape is the ground-truth point set (or a ShapeSpec, sampled with the
    config seed).  termination selects the coverage metric that stops the
    loop: "prediction" checks covered cells against the current prediction's
    occupancy (what the planner itself believes), "ground_truth" checks the
    union of truly visible cells against the true occupancy, which makes
    view counts comparable across planners with different beliefs.  The grid
    stays frozen from step 1 either way.

    A predictor failure raises PredictorError with the partial trace attached
    as its .trace attribute.
    """
    if isinstance(shape, ShapeSpec):
        shape = generate_shape(shape, DEFAULT_SURFACE_POINTS, config.seed)
    if termination not in TERMINATION_METRICS:
        raise ParameterError(f"termination must be one of {TERMINATION_METRICS}")

    first = sample_viewpoints(space, 1, np.random.SeedSequence((config.seed, 0)))[0]
    views = [first]
    records = [sense(shape, first)]
    steps = []
    terminated_by = "view_limit"
    prediction = None
    grid_geom = None
    covered = gt_grid = gt_covered = None
    grid_center = np.zeros(3)

    def fail(exc) -> PredictorError:
        err = PredictorError(f"predictor failed at step {len(steps) + 1}: {exc}")
        err.trace = PlanTrace(
            tuple(steps), "view_limit", config, resolution, termination, grid_center
        )
        return err

    for k in range(1, config.max_views + 1):
        if prediction is None or config.mode == "dynamic":
            try:
                prediction = _predict(predictor, records)
            except Exception as exc:  # noqa: BLE001 - abort carries the trace
                raise fail(exc) from exc

        if grid_geom is None:
            anchor = shape if termination == "ground_truth" else prediction
            lo, hi = anchor.bounds()
            grid_center = (lo + hi) / 2.0
            grid_geom = make_grid_geometry(grid_center, resolution)
            origin, edge, dims = grid_geom
            covered = CoverageState(origin, edge, dims, np.zeros(dims, dtype=bool))
            gt_in = _clip_to_grid(shape, origin, edge, dims)
            gt_grid = voxelize(gt_in, None, origin, edge, dims)
            if termination == "ground_truth":
                gt_covered = CoverageState(origin, edge, dims, np.zeros(dims, dtype=bool))
        origin, edge, dims = grid_geom

        pred_in = _clip_to_grid(prediction, origin, edge, dims)
        current = views[-1]
        vis = hpr_visible(pred_in, current, hpr_params).visible
        if config.recompute_history:
            for past in views[:-1]:
                vis = vis | hpr_visible(pred_in, past, hpr_params).visible
        try:
            step_grid = voxelize(pred_in, vis, origin, edge, dims)
            covered.absorb(step_grid)
            if termination == "ground_truth":
                gt_vis = hpr_visible(gt_in, current, hpr_params)
                gt_covered.absorb(voxelize(gt_in, gt_vis, origin, edge, dims))
                cov = coverage_fraction(gt_covered, gt_grid)
            else:
                cov = coverage_fraction(covered, step_grid)
        except UndefinedCoverageError as exc:
            raise fail(exc) from exc
        step_iou = iou(step_grid, gt_grid) if gt_grid.occupied_count else None

        if cov > config.alpha:
            steps.append(PlanStep(current, cov, (), step_iou))
            terminated_by = "coverage"
            break
        if k == config.max_views:
            steps.append(PlanStep(current, cov, (), step_iou))
            terminated_by = "view_limit"
            break

        chosen = None
        for attempt in (0, 1):  # zero gain: resample once with a fresh stream
            candidates = sample_viewpoints(
                space, config.n_candidates, np.random.SeedSequence((config.seed, k, attempt))
            )
            chosen, gain, scores = select_next_view(
                step_grid, covered, candidates, pred_in, hpr_params
            )
            if gain > 0:
                break
        steps.append(PlanStep(current, cov, scores, step_iou))
        if gain == 0:
            terminated_by = "view_limit"
            break
        views.append(chosen)
        records.append(sense(shape, chosen))

    return PlanTrace(tuple(steps), terminated_by, config, resolution, termination, grid_center)


def _views_equal(a: Viewpoint, b: Viewpoint) -> bool:
    return (
        np.array_equal(a.center, b.center)
        and np.array_equal(a.rotation, b.rotation)
        and a.fov_deg == b.fov_deg
        and a.max_range == b.max_range
    )


def _steps_diverge(a: PlanStep, b: PlanStep) -> bool:
    return (
        not _views_equal(a.viewpoint, b.viewpoint)
        or a.coverage_after != b.coverage_after
        or a.candidate_scores != b.candidate_scores
        or a.prediction_iou_vs_gt != b.prediction_iou_vs_gt
    )


def replay_trace(trace: PlanTrace, shape, predictor, config: PlannerConfig, space: ViewingSpace) -> PlanTrace:
    """Re-run the loop and verify it reproduces the trace exactly.

    Raises DeterminismError naming the first divergent step (0-based; the
    step count itself diverging reports the shorter length).
    """
    fresh = run_active_hof(
        shape, predictor, config, space,
        resolution=trace.resolution, termination=trace.termination,
    )
    for i, (a, b) in enumerate(zip(trace.steps, fresh.steps)):
        if _steps_diverge(a, b):
            raise DeterminismError(f"replay diverged at step {i}", step=i)
    if len(trace.steps) != len(fresh.steps):
        n = min(len(trace.steps), len(fresh.steps))
        raise DeterminismError(f"replay diverged at step {n}: step counts differ", step=n)
    if trace.terminated_by != fresh.terminated_by:
        n = len(trace.steps) - 1
        raise DeterminismError(f"replay diverged at step {n}: termination differs", step=n)
    return fresh


def _fmt(x: float) -> str:
    return repr(float(x))


def trace_to_text(trace: PlanTrace) -> str:
    """Serialize a trace, one step per line.

    Step fields, space separated: index, camera center (3), camera-to-world
    rotation rows (9), coverage after the step, prediction IoU vs truth (or
    "-"), the number of candidate scores, then the scores.
    """
    c = trace.config
    out = [
        "plantrace 1",
        f"alpha {_fmt(c.alpha)}",
        f"candidates {c.n_candidates}",
        f"mode {c.mode}",
        f"max_views {c.max_views}",
        f"seed {c.seed}",
        f"recompute_history {int(c.recompute_history)}",
        f"resolution {trace.resolution}",
        f"termination {trace.termination}",
        "grid_center " + " ".join(_fmt(v) for v in trace.grid_center),
        f"method {trace.method}",
        f"terminated_by {trace.terminated_by}",
        f"steps {len(trace.steps)}",
    ]
    for i, s in enumerate(trace.steps):
        v = s.viewpoint
        fields = [str(i)]
        fields += [_fmt(x) for x in v.center]
        fields += [_fmt(x) for x in v.rotation.ravel()]
        fields += [_fmt(v.fov_deg), _fmt(v.max_range)]
        fields.append(_fmt(s.coverage_after))
        fields.append("-" if s.prediction_iou_vs_gt is None else _fmt(s.prediction_iou_vs_gt))
        fields.append(str(len(s.candidate_scores)))
        fields += [repr(x) for x in s.candidate_scores]
        out.append("step " + " ".join(fields))
    return "\n".join(out) + "\n"


def trace_from_text(text: str) -> PlanTrace:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["plantrace", "1"]:
        raise ParameterError("not a plantrace document")
    head = {}
    step_lines = []
    for ln in lines[1:]:
        key, rest = ln.split(" ", 1)
        if key == "step":
            step_lines.append(rest)
        else:
            head[key] = rest
    try:
        config = PlannerConfig(
            alpha=float(head["alpha"]),
            n_candidates=int(head["candidates"]),
            mode=head["mode"],
            max_views=int(head["max_views"]),
            seed=int(head["seed"]),
            recompute_history=bool(int(head["recompute_history"])),
        )
        resolution = int(head["resolution"])
        termination = head["termination"]
        grid_center = np.array([float(x) for x in head["grid_center"].split()])
        method = head.get("method", "active_hof")
        terminated_by = head["terminated_by"]
        declared = int(head["steps"])
    except KeyError as exc:
        raise ParameterError(f"plantrace header missing {exc}") from exc
    if terminated_by not in ("coverage", "view_limit"):
        raise ParameterError(f"bad terminated_by {terminated_by!r}")
    if declared != len(step_lines):
        raise ParameterError("plantrace step count mismatch")

    steps = []
    for rest in step_lines:
        tok = rest.split()
        center = np.array([float(x) for x in tok[1:4]])
        rot = np.array([float(x) for x in tok[4:13]]).reshape(3, 3)
        fov, rng_ = float(tok[13]), float(tok[14])
        cov = float(tok[15])
        pio = None if tok[16] == "-" else float(tok[16])
        n_scores = int(tok[17])
        raw = tok[18 : 18 + n_scores]
        if len(raw) != n_scores:
            raise ParameterError("plantrace score count mismatch")
        scores = tuple(int(x) if x.lstrip("-").isdigit() else float(x) for x in raw)
        view = Viewpoint(center, rot, fov_deg=fov, max_range=rng_)
        steps.append(PlanStep(view, cov, scores, pio))
    return PlanTrace(
        tuple(steps), terminated_by, config, resolution, termination, grid_center, method
    )
