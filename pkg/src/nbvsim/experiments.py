"""Experiment harness: runs a scenario to a result table, CSV in and out,
and numeric regression diffing between runs.

Five experiment kinds are wired up:

  entropy        per-cell occupancy-vote entropy, visible cells vs the whole
                 reconstruction, across grid resolutions and view counts
  methods        mean views to reach coverage alpha for the three planners
  iou_vs_k       prediction-vs-truth IoU as the view count grows
  static_dynamic planning against the first prediction vs re-predicting
  epsilon_net    fraction of seeds whose sampled viewpoints see every point

Every number in the table is a pure function of the scenario file; rerunning
a scenario reproduces the table bit for bit.
"""

import csv
import io
import os
from dataclasses import dataclass, replace

import numpy as np

from .baselines import run_info_max, run_vis_max_gt
from .errors import ScenarioError
from .geometry import epsilon_net_size, generate_shape, sample_viewpoints
from .planner import PlannerConfig, run_active_hof, sense, trace_to_text
from .predictor import (
    DegradationProfile,
    DegradedPredictor,
    OraclePredictor,
    PredictorRequest,
)
from .scenario import Scenario
from .uncertainty import (
    arc_viewpoints,
    entropy_map,
    entropy_stats,
    visible_cells,
    voting_occupancy,
)
from .visibility import hpr_visible
from .voxels import in_bounds_mask, iou, make_grid_geometry, voxelize

CSV_COLUMNS = (
    "scenario", "kind", "method", "alpha", "k", "grid", "views",
    "scope", "mean", "stddev", "cap_hits", "n", "status",
)

# Seed-stream tags: keep viewpoint draws independent of surface sampling.
_VIEW_STREAM = 1
_ARC_STREAM = 2
_NET_STREAM = 3


@dataclass(frozen=True)
class ResultRow:
    """One aggregated table row; label fields not used by a kind stay None."""

    kind: str
    method: str = ""
    alpha: float | None = None
    k: int | None = None
    grid: int | None = None
    views: int | None = None
    scope: str = ""
    mean: float | None = None
    stddev: float | None = None
    cap_hits: int | None = None
    n: int = 0
    status: str = "ok"


@dataclass(frozen=True)
class ResultTable:
    scenario: str
    kind: str
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    def row(self, **labels) -> ResultRow:
        """The unique row matching the given label fields."""
        hits = [
            r for r in self.rows
            if all(getattr(r, key) == val for key, val in labels.items())
        ]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {labels}")
        return hits[0]


def _row_key(r: ResultRow) -> tuple:
    return (
        r.method,
        -1.0 if r.alpha is None else r.alpha,
        -1 if r.k is None else r.k,
        -1 if r.grid is None else r.grid,
        -1 if r.views is None else r.views,
        r.scope,
    )


def _finish(scenario: Scenario, rows) -> ResultTable:
    return ResultTable(scenario.name, scenario.kind, tuple(sorted(rows, key=_row_key)))


def _opt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def table_to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in table.rows:
        writer.writerow([
            table.scenario, table.kind, r.method, _opt(r.alpha), _opt(r.k),
            _opt(r.grid), _opt(r.views), r.scope, _opt(r.mean), _opt(r.stddev),
            _opt(r.cap_hits), r.n, r.status,
        ])
    return buf.getvalue()


def table_from_csv(text: str) -> ResultTable:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ScenarioError("empty result csv") from None
    if tuple(header) != CSV_COLUMNS:
        raise ScenarioError(f"unexpected result csv header {header}")
    rows = []
    scenario = kind = None
    for rec in reader:
        if len(rec) != len(CSV_COLUMNS):
            raise ScenarioError(f"result csv row has {len(rec)} fields")
        scenario, kind = rec[0], rec[1]
        rows.append(ResultRow(
            kind=kind,
            method=rec[2],
            alpha=float(rec[3]) if rec[3] else None,
            k=int(rec[4]) if rec[4] else None,
            grid=int(rec[5]) if rec[5] else None,
            views=int(rec[6]) if rec[6] else None,
            scope=rec[7],
            mean=float(rec[8]) if rec[8] else None,
            stddev=float(rec[9]) if rec[9] else None,
            cap_hits=int(rec[10]) if rec[10] else None,
            n=int(rec[11]),
            status=rec[12],
        ))
    if scenario is None:
        raise ScenarioError("result csv has no rows")
    return ResultTable(scenario, kind, tuple(rows))


def compare_traces(a: ResultTable, b: ResultTable, tol: float = 1e-12) -> list:
    """Row-aligned numeric diff of two result tables.

    Returns a list of human-readable difference lines; empty means the runs
    agree within tol on every number and exactly on every label.  Tables
    from different scenarios or kinds do not compare.
    """
    if a.scenario != b.scenario or a.kind != b.kind:
        raise ScenarioError(
            f"tables describe different runs: {a.scenario}/{a.kind} vs {b.scenario}/{b.kind}"
        )
    diffs = []
    bykey_a = {_row_key(r): r for r in a.rows}
    bykey_b = {_row_key(r): r for r in b.rows}
    for key in sorted(set(bykey_a) | set(bykey_b)):
        ra, rb = bykey_a.get(key), bykey_b.get(key)
        name = "/".join(str(x) for x in key if x not in ("", -1, -1.0))
        if ra is None or rb is None:
            diffs.append(f"{name}: present in only one table")
            continue
        for field in ("mean", "stddev"):
            va, vb = getattr(ra, field), getattr(rb, field)
            if (va is None) != (vb is None):
                diffs.append(f"{name}: {field} {va} vs {vb}")
            elif va is not None and abs(va - vb) > tol:
                diffs.append(f"{name}: {field} differs by {abs(va - vb):.3e}")
        for field in ("cap_hits", "n", "status"):
            va, vb = getattr(ra, field), getattr(rb, field)
            if va != vb:
                diffs.append(f"{name}: {field} {va} vs {vb}")
    return diffs


def _stats(values) -> tuple:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


class PredictorSource:
    """Builds the per-trial predictor a scenario asks for.

    Oracle and degraded predictors are rebuilt per trial (they wrap that
    trial's ground truth); an external server is started once and shared, so
    close() must run when the experiment finishes.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._endpoint = None

    def for_trial(self, gt, trial: int):
        spec = self.scenario.predictor
        if spec.kind == "oracle":
            return OraclePredictor(gt)
        if spec.kind == "degraded":
            profile = spec.profile or DegradationProfile()
            return DegradedPredictor(gt, replace(profile, seed=profile.seed + trial))
        from .bridge import BridgeEndpoint
        from .predictor import ExternalPredictor

        if self._endpoint is None:
            self._endpoint = BridgeEndpoint(spec.command)
        space = self.scenario.space
        return ExternalPredictor(
            self._endpoint, fov_deg=space.fov_deg, max_range=space.range_limit
        )

    def close(self):
        if self._endpoint is not None:
            self._endpoint.close()
            self._endpoint = None


def _write_trace(traces_dir, name, trace):
    if traces_dir is None:
        return
    os.makedirs(traces_dir, exist_ok=True)
    with open(os.path.join(traces_dir, name), "w", encoding="utf-8") as fh:
        fh.write(trace_to_text(trace))


def _planned_rows(scenario, traces_dir, source, runners):
    """Shared loop for the view-count experiments.

    runners: list of (method_name, callable(trial, gt, config) -> PlanTrace).
    One row per (method, alpha); a failing trial marks the row and moves on.
    """
    rows = []
    for alpha in scenario.alphas:
        for method, run in runners:
            counts, caps, status = [], 0, "ok"
            for t in range(scenario.trials):
                label, spec = scenario.shape_for_trial(t)
                config = PlannerConfig(
                    alpha=alpha,
                    n_candidates=scenario.candidates,
                    mode="dynamic",
                    max_views=scenario.max_views,
                    seed=t,
                )
                try:
                    gt = generate_shape(spec, scenario.points, seed=t)
                    trace = run(t, gt, config)
                except Exception as exc:  # noqa: BLE001 - recorded per row
                    status = f"failed trial {t} ({label}): {exc}"
                    break
                counts.append(trace.n_views)
                caps += trace.terminated_by == "view_limit"
                _write_trace(traces_dir, f"{method}_a{alpha:g}_t{t:03d}.trace", trace)
            mean, std = _stats(counts) if counts else (None, None)
            rows.append(ResultRow(
                scenario.kind, method=method, alpha=alpha, mean=mean,
                stddev=std, cap_hits=caps, n=len(counts), status=status,
            ))
    return rows


def _run_methods(scenario: Scenario, traces_dir, source) -> list:
    def vis(t, gt, config):
        return run_vis_max_gt(gt, config, scenario.space, resolution=scenario.grid)

    def act(t, gt, config):
        return run_active_hof(
            gt, source.for_trial(gt, t), config, scenario.space,
            resolution=scenario.grid, termination=scenario.termination,
        )

    def info(t, gt, config):
        return run_info_max(
            gt, config, scenario.space, resolution=scenario.grid, rays=scenario.rays
        )

    return _planned_rows(
        scenario, traces_dir, source,
        [("vis_max_gt", vis), ("active_hof", act), ("info_max", info)],
    )


def _run_static_dynamic(scenario: Scenario, traces_dir, source) -> list:
    def runner(mode):
        def run(t, gt, config):
            return run_active_hof(
                gt, source.for_trial(gt, t), replace(config, mode=mode), scenario.space,
                resolution=scenario.grid, termination=scenario.termination,
            )
        return run

    return _planned_rows(
        scenario, traces_dir, source,
        [("static", runner("static")), ("dynamic", runner("dynamic"))],
    )


def entropy_trial(scenario: Scenario, trial: int, resolution: int, n_views: int) -> tuple:
    """(mean entropy over visible union, mean over all voted cells) for one trial.

    Each view gets its own degradation seed, so the per-view reconstructions
    disagree wherever the predictor is guessing; cells every view actually
    saw collect consistent votes.
    """
    _, spec = scenario.shape_for_trial(trial)
    gt = generate_shape(spec, scenario.points, seed=trial)
    lo, hi = gt.bounds()
    origin, edge, dims = make_grid_geometry((lo + hi) / 2.0, resolution)
    views = arc_viewpoints(
        scenario.space, n_views, np.random.SeedSequence((trial, _ARC_STREAM))
    )
    base = scenario.predictor.profile or DegradationProfile()
    grids = []
    for i, view in enumerate(views):
        record = sense(gt, view)
        profile = replace(base, seed=base.seed + 1000 * trial + i)
        pred = DegradedPredictor(gt, profile).predict(
            PredictorRequest("scene", (record,))
        )
        pred_in = pred.subset(in_bounds_mask(pred, origin, edge, dims))
        grids.append(voxelize(pred_in, hpr_visible(pred_in, view), origin, edge, dims))
    eg = entropy_map(voting_occupancy(grids))
    mean_vis, _ = entropy_stats(eg, visible_cells(grids))
    mean_all, _ = entropy_stats(eg)
    return mean_vis, mean_all


def _run_entropy(scenario: Scenario) -> list:
    rows = []
    for resolution in scenario.grids:
        for n_views in scenario.view_counts:
            vis_means, all_means, status = [], [], "ok"
            for t in range(scenario.trials):
                try:
                    mean_vis, mean_all = entropy_trial(scenario, t, resolution, n_views)
                except Exception as exc:  # noqa: BLE001 - recorded per row
                    status = f"failed trial {t}: {exc}"
                    break
                vis_means.append(mean_vis)
                all_means.append(mean_all)
            for scope, vals in (("visible", vis_means), ("entire", all_means)):
                mean, std = _stats(vals) if vals else (None, None)
                rows.append(ResultRow(
                    scenario.kind, method=scenario.predictor.kind, grid=resolution,
                    views=n_views, scope=scope, mean=mean, stddev=std,
                    n=len(vals), status=status,
                ))
            wins = np.array([v <= a for v, a in zip(vis_means, all_means)], dtype=float)
            rows.append(ResultRow(
                scenario.kind, method=scenario.predictor.kind, grid=resolution,
                views=n_views, scope="visible_le_entire",
                mean=float(wins.mean()) if len(wins) else None,
                stddev=float(wins.std()) if len(wins) else None,
                n=len(wins), status=status,
            ))
    return rows


def _run_iou_vs_k(scenario: Scenario, source) -> list:
    per_k = {k: [] for k in scenario.ks}
    status = "ok"
    k_max = max(scenario.ks)
    for t in range(scenario.trials):
        label, spec = scenario.shape_for_trial(t)
        try:
            gt = generate_shape(spec, scenario.points, seed=t)
            lo, hi = gt.bounds()
            origin, edge, dims = make_grid_geometry((lo + hi) / 2.0, scenario.grid)
            gt_grid = voxelize(gt, None, origin, edge, dims)
            views = sample_viewpoints(
                scenario.space, k_max, np.random.SeedSequence((t, _VIEW_STREAM))
            )
            records = [sense(gt, v) for v in views]
            predictor = source.for_trial(gt, t)
            for k in scenario.ks:
                pred = predictor.predict(
                    PredictorRequest(getattr(predictor, "scene_id", "scene"), tuple(records[:k]))
                )
                pred_in = pred.subset(in_bounds_mask(pred, origin, edge, dims))
                per_k[k].append(iou(voxelize(pred_in, None, origin, edge, dims), gt_grid))
        except Exception as exc:  # noqa: BLE001 - recorded per row
            status = f"failed trial {t} ({label}): {exc}"
            break
    rows = []
    for k in scenario.ks:
        vals = per_k[k]
        mean, std = _stats(vals) if vals else (None, None)
        rows.append(ResultRow(
            scenario.kind, method=scenario.predictor.kind, k=k,
            mean=mean, stddev=std, n=len(vals), status=status,
        ))
    return rows


def _run_epsilon_net(scenario: Scenario) -> list:
    n_views = epsilon_net_size(scenario.space.area())
    rows = []
    for label, spec in zip(scenario.labels, scenario.suite):
        successes, status = [], "ok"
        for s in range(scenario.trials):
            try:
                gt = generate_shape(spec, scenario.points, seed=s)
                views = sample_viewpoints(
                    scenario.space, n_views, np.random.SeedSequence((s, _NET_STREAM))
                )
                covered = np.zeros(len(gt), dtype=bool)
                for view in views:
                    covered |= hpr_visible(gt, view).visible
                    if covered.all():
                        break
                successes.append(bool(covered.all()))
            except Exception as exc:  # noqa: BLE001 - recorded per row
                status = f"failed seed {s}: {exc}"
                break
        mean, std = _stats(successes) if successes else (None, None)
        rows.append(ResultRow(
            scenario.kind, method="hpr_union", views=n_views, scope=label,
            mean=mean, stddev=std, n=len(successes), status=status,
        ))
    return rows


def run_experiment(scenario: Scenario, traces_dir: str | None = None) -> ResultTable:
    """Execute a scenario and aggregate its result table.

    traces_dir, when given, receives one plantrace file per planner run for
    the kinds that plan (methods, static_dynamic); file names encode method,
    alpha, and trial.  Failures are recorded in the affected row's status and
    leave the remaining rows intact.
    """
    source = PredictorSource(scenario)
    try:
        if scenario.kind == "methods":
            rows = _run_methods(scenario, traces_dir, source)
        elif scenario.kind == "static_dynamic":
            rows = _run_static_dynamic(scenario, traces_dir, source)
        elif scenario.kind == "entropy":
            rows = _run_entropy(scenario)
        elif scenario.kind == "iou_vs_k":
            rows = _run_iou_vs_k(scenario, source)
        elif scenario.kind == "epsilon_net":
            rows = _run_epsilon_net(scenario)
        else:  # unreachable: Scenario validates kind
            raise ScenarioError(f"unknown experiment kind {scenario.kind!r}")
    finally:
        source.close()
    return _finish(scenario, rows)
