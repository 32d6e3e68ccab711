from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbvsim.errors import DeterminismError, ParameterError, PredictorError
from nbvsim.geometry import (
    PointSet,
    ShapeSpec,
    ViewingSpace,
    generate_shape,
    look_at,
)
from nbvsim.planner import (
    PlannerConfig,
    PlanStep,
    PlanTrace,
    replay_trace,
    run_active_hof,
    select_next_view,
    sense,
    trace_from_text,
    trace_to_text,
)
from nbvsim.predictor import OraclePredictor
from nbvsim.voxels import CoverageState, voxelize

SPACE = ViewingSpace([0.0, 0.0, 0.0], 1.0)
SPHERE = ShapeSpec("sphere", {"radius": 0.1})


class CountingOracle:
    """Oracle that remembers how many predictions were requested."""

    def __init__(self, ground_truth):
        self.ground_truth = ground_truth
        self.scene_id = "scene"
        self.calls = 0

    def predict(self, request):
        self.calls += 1
        return self.ground_truth


class FailsAtCall(CountingOracle):
    def __init__(self, ground_truth, fail_at):
        super().__init__(ground_truth)
        self.fail_at = fail_at

    def predict(self, request):
        if self.calls + 1 >= self.fail_at:
            raise RuntimeError("model ran out of budget")
        return super().predict(request)


def config(**kw):
    base = dict(alpha=0.9, n_candidates=4, mode="dynamic", max_views=4, seed=0)
    base.update(kw)
    return PlannerConfig(**base)


class TestConfig:
    def test_alpha_range(self):
        with pytest.raises(ParameterError):
            config(alpha=0.0)
        with pytest.raises(ParameterError):
            config(alpha=1.0001)
        config(alpha=1.0)  # inclusive upper end

    def test_mode_names(self):
        with pytest.raises(ParameterError):
            config(mode="redo")

    def test_counts(self):
        with pytest.raises(ParameterError):
            config(n_candidates=0)
        with pytest.raises(ParameterError):
            config(max_views=0)


class TestSense:
    def test_observation_is_visible_subset(self):
        gt = generate_shape(SPHERE, 500, seed=2)
        rec = sense(gt, look_at([0.0, 0.0, 1.0], SPACE))
        assert 0 < len(rec.observation) < len(gt)
        # every observed point is a ground-truth point
        gt_rows = set(map(tuple, gt.xyz))
        assert all(tuple(p) in gt_rows for p in rec.observation.xyz)


class TestSelectNextView:
    def two_cluster_setup(self):
        # two tight clusters, one voxel cell apart; both fully visible
        near = np.full((3, 3), 0.1005) + np.arange(3)[:, None] * 1e-4
        far = near + np.array([0.1, 0.0, 0.0])
        pts = PointSet(np.vstack([near, far]))
        vox = voxelize(pts, None, np.zeros(3), 0.01, (40, 40, 40))
        covered = CoverageState(vox.origin, vox.edge, vox.dims,
                                np.zeros(vox.dims, dtype=bool))
        return pts, vox, covered

    def test_scores_count_new_cells_only(self):
        pts, vox, covered = self.two_cluster_setup()
        cand = [look_at([0.0, 0.0, 1.0], SPACE)]
        _, score, scores = select_next_view(vox, covered, cand, pts)
        assert score == 2 and scores == (2,)
        covered.covered[10, 10, 10] = True  # the near cluster's cell
        _, score, _ = select_next_view(vox, covered, cand, pts)
        assert score == 1

    def test_all_covered_scores_zero(self):
        pts, vox, covered = self.two_cluster_setup()
        covered.covered[:] = vox.occupied
        cand = [look_at([0.0, 0.0, 1.0], SPACE), look_at([1.0, 0.0, 0.1], SPACE)]
        _, score, scores = select_next_view(vox, covered, cand, pts)
        assert score == 0 and scores == (0, 0)

    def test_tie_goes_to_lowest_index(self):
        pts, vox, covered = self.two_cluster_setup()
        v = look_at([0.0, 0.0, 1.0], SPACE)
        chosen, _, scores = select_next_view(vox, covered, [v, v], pts)
        assert chosen is v and scores[0] == scores[1]

    def test_empty_candidates(self):
        pts, vox, covered = self.two_cluster_setup()
        with pytest.raises(ParameterError):
            select_next_view(vox, covered, [], pts)


class TestRunActiveHof:
    def test_tiny_alpha_takes_one_view(self):
        gt = generate_shape(SPHERE, 400, seed=1)
        trace = run_active_hof(gt, OraclePredictor(gt), config(alpha=1e-6), SPACE)
        assert trace.n_views == 1
        assert trace.terminated_by == "coverage"
        assert trace.final_coverage > 1e-6
        assert trace.steps[0].candidate_scores == ()

    def test_static_predicts_once(self):
        gt = generate_shape(SPHERE, 400, seed=1)
        pred = CountingOracle(gt)
        trace = run_active_hof(gt, pred, config(mode="static", alpha=0.95), SPACE)
        assert trace.n_views > 1
        assert pred.calls == 1

    def test_dynamic_predicts_every_step(self):
        gt = generate_shape(SPHERE, 400, seed=1)
        pred = CountingOracle(gt)
        trace = run_active_hof(gt, pred, config(alpha=0.95), SPACE)
        assert pred.calls == trace.n_views

    def test_shape_spec_accepted(self):
        trace = run_active_hof(
            SPHERE, OraclePredictorFromSpec(), config(alpha=1e-6), SPACE
        )
        assert trace.n_views == 1

    def test_zero_gain_stops_at_alpha_one(self):
        # one occupied cell: after the first view nothing is ever new
        gt = PointSet(np.full((3, 3), 0.001) + np.arange(3)[:, None] * 1e-4)
        trace = run_active_hof(gt, OraclePredictor(gt), config(alpha=1.0), SPACE)
        assert trace.n_views == 1
        assert trace.terminated_by == "view_limit"
        assert trace.steps[0].candidate_scores == (0, 0, 0, 0)

    def test_coverage_monotone_under_gt_termination(self):
        gt = generate_shape(SPHERE, 400, seed=5)
        trace = run_active_hof(
            gt, OraclePredictor(gt), config(alpha=0.999, max_views=5), SPACE,
            termination="ground_truth",
        )
        covs = [s.coverage_after for s in trace.steps]
        assert all(b >= a for a, b in zip(covs, covs[1:]))
        assert all(0.0 <= c <= 1.0 for c in covs)

    def test_view_budget_respected(self):
        gt = generate_shape(SPHERE, 400, seed=3)
        trace = run_active_hof(gt, OraclePredictor(gt), config(alpha=1.0, max_views=3), SPACE)
        assert trace.n_views <= 3

    def test_oracle_prediction_iou_is_one(self):
        gt = generate_shape(SPHERE, 400, seed=1)
        trace = run_active_hof(gt, OraclePredictor(gt), config(alpha=0.9), SPACE)
        assert all(s.prediction_iou_vs_gt == 1.0 for s in trace.steps)

    def test_bad_termination_name(self):
        gt = generate_shape(SPHERE, 400, seed=1)
        with pytest.raises(ParameterError):
            run_active_hof(gt, OraclePredictor(gt), config(), SPACE, termination="belief")

    def test_failure_carries_partial_trace(self):
        gt = generate_shape(SPHERE, 400, seed=1)
        pred = FailsAtCall(gt, fail_at=2)
        with pytest.raises(PredictorError, match="step 2") as err:
            run_active_hof(gt, pred, config(alpha=0.999), SPACE)
        assert err.value.trace.n_views == 1


class OraclePredictorFromSpec:
    """Predicts the same samples run_active_hof draws from a ShapeSpec."""

    scene_id = "scene"

    def predict(self, request):
        return generate_shape(SPHERE, 1200, 0)


class TestReplay:
    def run_once(self):
        gt = generate_shape(SPHERE, 400, seed=4)
        cfg = config(alpha=0.95)
        trace = run_active_hof(gt, OraclePredictor(gt), cfg, SPACE)
        return gt, cfg, trace

    def test_replay_reproduces(self):
        gt, cfg, trace = self.run_once()
        fresh = replay_trace(trace, gt, OraclePredictor(gt), cfg, SPACE)
        assert trace_to_text(fresh) == trace_to_text(trace)

    def test_replay_flags_divergent_step(self):
        gt, cfg, trace = self.run_once()
        bad_step = replace(trace.steps[1], coverage_after=trace.steps[1].coverage_after + 1e-9)
        tampered = replace(trace, steps=(trace.steps[0], bad_step, *trace.steps[2:]))
        with pytest.raises(DeterminismError) as err:
            replay_trace(tampered, gt, OraclePredictor(gt), cfg, SPACE)
        assert err.value.step == 1

    def test_replay_flags_missing_step(self):
        gt, cfg, trace = self.run_once()
        truncated = replace(trace, steps=trace.steps[:-1])
        with pytest.raises(DeterminismError):
            replay_trace(truncated, gt, OraclePredictor(gt), cfg, SPACE)


class TestTraceText:
    def golden_trace(self):
        view = look_at([0.0, 0.0, 1.0], SPACE)
        step = PlanStep(view, 0.5, (3, 1), 0.25)
        cfg = PlannerConfig(alpha=0.5, n_candidates=2, mode="static",
                            max_views=3, seed=9)
        return PlanTrace((step,), "coverage", cfg, 40, "prediction",
                         np.array([0.0, 0.0, 0.0]))

    def test_golden_document(self):
        text = trace_to_text(self.golden_trace())
        assert text == (
            "plantrace 1\n"
            "alpha 0.5\n"
            "candidates 2\n"
            "mode static\n"
            "max_views 3\n"
            "seed 9\n"
            "recompute_history 0\n"
            "resolution 40\n"
            "termination prediction\n"
            "grid_center 0.0 0.0 0.0\n"
            "method active_hof\n"
            "terminated_by coverage\n"
            "steps 1\n"
            "step 0 0.0 0.0 1.0 -0.0 1.0 0.0 1.0 0.0 0.0 0.0 0.0 -1.0"
            " 60.0 2.0 0.5 0.25 2 3 1\n"
        )

    def test_roundtrip_exact(self):
        gt = generate_shape(SPHERE, 400, seed=6)
        trace = run_active_hof(gt, OraclePredictor(gt), config(alpha=0.95), SPACE)
        text = trace_to_text(trace)
        back = trace_from_text(text)
        assert trace_to_text(back) == text
        assert back.config == trace.config
        assert back.terminated_by == trace.terminated_by
        assert len(back.steps) == len(trace.steps)

    def test_not_a_trace(self):
        with pytest.raises(ParameterError):
            trace_from_text("voxelgrid 1\n")

    def test_step_count_mismatch(self):
        text = trace_to_text(self.golden_trace()).replace("steps 1", "steps 2")
        with pytest.raises(ParameterError):
            trace_from_text(text)

    def test_missing_header_key(self):
        text = trace_to_text(self.golden_trace()).replace("seed 9\n", "")
        with pytest.raises(ParameterError, match="seed"):
            trace_from_text(text)

    def test_bad_termination_tag(self):
        text = trace_to_text(self.golden_trace()).replace(
            "terminated_by coverage", "terminated_by crash"
        )
        with pytest.raises(ParameterError):
            trace_from_text(text)

    def test_score_count_mismatch(self):
        text = trace_to_text(self.golden_trace()).replace("2 3 1\n", "3 3 1\n")
        with pytest.raises(ParameterError):
            trace_from_text(text)


@settings(max_examples=8, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_plan_invariants_and_text_roundtrip(seed):
    gt = generate_shape(SPHERE, 300, seed=seed)
    cfg = PlannerConfig(alpha=0.9, n_candidates=3, max_views=3, seed=seed)
    trace = run_active_hof(gt, OraclePredictor(gt), cfg, SPACE)
    assert 1 <= trace.n_views <= 3
    assert trace.terminated_by in ("coverage", "view_limit")
    # the last step never carries scores when coverage terminated the run
    if trace.terminated_by == "coverage":
        assert trace.steps[-1].candidate_scores == ()
    assert trace_to_text(trace_from_text(trace_to_text(trace))) == trace_to_text(trace)
