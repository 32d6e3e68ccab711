"""Command line front end.

Verbs:
  gen          sample a scenario shape's surface points to an XYZ file
  plan         run one planner and write its trace
  experiment   run a scenario file, write the result CSV (and traces)
  audit        replay a saved trace bit for bit, or diff two result CSVs
  bridge-test  protocol conformance checks against an external predictor

Exit codes: 0 success, 2 input/validation error, 3 run failure, 4 determinism
or regression failure.
"""

import argparse
import difflib
import struct
import sys

import numpy as np

from . import bridge
from .baselines import run_info_max, run_vis_max_gt
from .errors import BridgeError, DeterminismError, ParameterError, ScenarioError
from .experiments import (
    PredictorSource,
    compare_traces,
    run_experiment,
    table_from_csv,
    table_to_csv,
)
from .geometry import generate_shape, save_points
from .planner import PlannerConfig, run_active_hof, trace_from_text, trace_to_text
from .scenario import PredictorSpec, load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUN = 3
EXIT_REGRESSION = 4


def _load(path):
    try:
        return load_scenario(path)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_gen(args) -> int:
    scenario = _load(args.scenario)
    label, spec = scenario.shape_for_trial(args.seed)
    points = generate_shape(spec, args.points or scenario.points, seed=args.seed)
    save_points(points, args.out, fmt=args.fmt)
    print(f"wrote {len(points)} points of {label} (seed {args.seed}) to {args.out}")
    return EXIT_OK


def _run_one(scenario, args):
    """One planner run built from a scenario plus flag overrides."""
    label, spec = scenario.shape_for_trial(args.seed)
    gt = generate_shape(spec, scenario.points, seed=args.seed)
    config = PlannerConfig(
        alpha=args.alpha if args.alpha is not None else scenario.alphas[0],
        n_candidates=scenario.candidates,
        mode=args.mode,
        max_views=args.max_views,
        seed=args.seed,
    )
    resolution = args.grid if args.grid is not None else scenario.grid
    if args.method == "vis_max_gt":
        return label, run_vis_max_gt(gt, config, scenario.space, resolution=resolution)
    if args.method == "info_max":
        return label, run_info_max(
            gt, config, scenario.space, resolution=resolution, rays=scenario.rays
        )
    if args.predictor is not None and args.predictor != scenario.predictor.kind:
        scenario = _replace_predictor(scenario, args.predictor)
    source = PredictorSource(scenario)
    try:
        trace = run_active_hof(
            gt, source.for_trial(gt, args.seed), config, scenario.space,
            resolution=resolution, termination=scenario.termination,
        )
    finally:
        source.close()
    return label, trace


def _replace_predictor(scenario, kind):
    from dataclasses import replace

    profile = scenario.predictor.profile if kind == "degraded" else None
    command = scenario.predictor.command if kind == "external" else ()
    return replace(scenario, predictor=PredictorSpec(kind, profile, command))


def cmd_plan(args) -> int:
    scenario = _load(args.scenario)
    try:
        label, trace = _run_one(scenario, args)
    except (ParameterError, ScenarioError) as exc:
        return _fail(str(exc), EXIT_VALIDATION)
    except Exception as exc:  # noqa: BLE001 - surfaced as run failure
        return _fail(f"run failed: {exc}", EXIT_RUN)
    text = trace_to_text(trace)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(
            f"{trace.method} on {label}: {trace.n_views} views, "
            f"coverage {trace.final_coverage:.3f}, {trace.terminated_by} -> {args.out}"
        )
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(args) -> int:
    scenario = _load(args.scenario)
    out = args.out or scenario.output
    traces_dir = None
    if out and scenario.kind in ("methods", "static_dynamic"):
        traces_dir = (out[:-4] if out.endswith(".csv") else out) + "_traces"
    try:
        table = run_experiment(scenario, traces_dir=traces_dir)
    except (ParameterError, ScenarioError) as exc:
        return _fail(str(exc), EXIT_VALIDATION)
    except Exception as exc:  # noqa: BLE001 - surfaced as run failure
        return _fail(f"experiment failed: {exc}", EXIT_RUN)
    text = table_to_csv(table)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {len(table.rows)} rows to {out}")
    else:
        sys.stdout.write(text)
    bad = [r for r in table.rows if r.status != "ok"]
    for r in bad:
        print(f"row {r.method or r.scope}: {r.status}", file=sys.stderr)
    return EXIT_RUN if bad else EXIT_OK


def _audit_trace(args) -> int:
    scenario = _load(args.scenario)
    with open(args.trace, "r", encoding="utf-8") as fh:
        stored = fh.read()
    try:
        trace = trace_from_text(stored)
    except ParameterError as exc:
        return _fail(f"unreadable trace: {exc}", EXIT_VALIDATION)

    ns = argparse.Namespace(
        seed=trace.config.seed, alpha=trace.config.alpha, mode=trace.config.mode,
        max_views=trace.config.max_views, grid=trace.resolution,
        method=trace.method, predictor=None,
    )
    # candidate count and termination must match the stored run
    from dataclasses import replace

    scenario = replace(
        scenario, candidates=trace.config.n_candidates, termination=trace.termination
    )
    try:
        _, fresh = _run_one(scenario, ns)
    except Exception as exc:  # noqa: BLE001 - surfaced as run failure
        return _fail(f"replay failed: {exc}", EXIT_RUN)
    fresh_text = trace_to_text(fresh)
    if fresh_text == stored:
        print(f"replay identical: {fresh.n_views} steps, method {fresh.method}")
        return EXIT_OK
    diff = difflib.unified_diff(
        stored.splitlines(), fresh_text.splitlines(),
        "stored", "replay", lineterm="", n=0,
    )
    for line in list(diff)[:12]:
        print(line, file=sys.stderr)
    return _fail(f"replay diverged from {args.trace}", EXIT_REGRESSION)


def _audit_tables(args) -> int:
    try:
        with open(args.tables[0], "r", encoding="utf-8") as fh:
            a = table_from_csv(fh.read())
        with open(args.tables[1], "r", encoding="utf-8") as fh:
            b = table_from_csv(fh.read())
        diffs = compare_traces(a, b, tol=args.tol)
    except (ScenarioError, OSError) as exc:
        return _fail(str(exc), EXIT_VALIDATION)
    if not diffs:
        print(f"tables agree within {args.tol:g} ({len(a.rows)} rows)")
        return EXIT_OK
    for line in diffs:
        print(line, file=sys.stderr)
    return _fail(f"{len(diffs)} differing rows", EXIT_REGRESSION)


def cmd_audit(args) -> int:
    if args.tables:
        if args.trace or not len(args.tables) == 2:
            return _fail("audit takes a trace or exactly two --tables", EXIT_VALIDATION)
        return _audit_tables(args)
    if not args.trace or not args.scenario:
        return _fail("audit needs --scenario and a trace file", EXIT_VALIDATION)
    return _audit_trace(args)


# ---------------------------------------------------------------------------
# bridge-test: conformance checks an external predictor must pass
# ---------------------------------------------------------------------------


def _fake_views(k: int, seed: int):
    from .geometry import ViewingSpace, sample_viewpoints

    space = ViewingSpace((0.0, 0.0, 0.0), 1.0)
    return sample_viewpoints(space, k, seed)


def _check(name, fn, failures):
    try:
        fn()
    except Exception as exc:  # noqa: BLE001 - reported as a failed check
        failures.append(name)
        print(f"FAIL - {name}: {exc}")
        return
    print(f"ok - {name}")


def cmd_bridge_test(args) -> int:
    command = args.command
    if command and command[0] == "--":
        command = command[1:]
    if not command:
        return _fail("bridge-test needs the server command after --", EXIT_VALIDATION)
    from .geometry import PointSet

    rng = np.random.default_rng(7)
    try:
        endpoint = bridge.BridgeEndpoint(command, timeout=args.timeout)
    except (BridgeError, OSError) as exc:
        return _fail(f"handshake failed: {exc}", EXIT_RUN)
    print("ok - handshake (protocol version 1)")
    failures = []
    views = _fake_views(2, 11)
    obs = [PointSet(rng.normal(size=(16, 3))), PointSet(rng.normal(size=(24, 3)))]
    with endpoint:
        def small():
            pts = endpoint.request("conf-small", views, obs, 64, 60.0, 2.0)
            if len(pts) != 64 or not np.isfinite(pts.xyz).all():
                raise BridgeError(f"expected 64 finite points, got {len(pts)}")

        def repeat():
            a = endpoint.request("conf-rep", views, obs, 32, 60.0, 2.0)
            b = endpoint.request("conf-rep", views, obs, 32, 60.0, 2.0)
            if not np.array_equal(a.xyz, b.xyz):
                raise BridgeError("same request produced different predictions")

        def size():
            pts = endpoint.request("conf-size", views, obs, 100, 60.0, 2.0)
            if len(pts) != 100:
                raise BridgeError(f"asked for 100 points, got {len(pts)}")

        def malformed_header():
            # claims two views but carries one point count
            frame = bridge.encode_frame(
                ["predict", "scene conf-bad", "views 2", "points 5",
                 "respond 8", "fov 60", "range 2"],
            )
            endpoint._send(frame)
            header, _ = bridge.read_frame(endpoint.proc.stdout.fileno(), args.timeout)
            if header[0] != "error":
                raise BridgeError(f"expected an error frame, got {header[0]!r}")

        def garbage_frame():
            endpoint._send(struct.pack("<I", 6) + b"zzzzzz")
            header, _ = bridge.read_frame(endpoint.proc.stdout.fileno(), args.timeout)
            if header[0] != "error":
                raise BridgeError(f"expected an error frame, got {header[0]!r}")

        def echo_roundtrip():
            m = args.m
            cloud = rng.normal(size=(m, 3))
            pts = endpoint.request(
                "conformance-echo", _fake_views(1, 13), [PointSet(cloud)], m, 60.0, 2.0
            )
            if not np.array_equal(pts.xyz, cloud):
                raise BridgeError("echoed points are not bit-identical")

        _check("small predict (2 views -> 64 points)", small, failures)
        _check("identical request repeats identically", repeat, failures)
        _check("respond count honored (100)", size, failures)
        _check("malformed predict header -> error frame", malformed_header, failures)
        _check("recovers after malformed header", small, failures)
        _check("garbage frame -> error frame", garbage_frame, failures)
        _check("recovers after garbage frame", small, failures)
        _check(f"{args.m}-point lossless echo round-trip", echo_roundtrip, failures)
    if failures:
        return _fail(f"{len(failures)} conformance checks failed", EXIT_RUN)
    print("all conformance checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nbvsim",
        description="Next-best-view planning simulation harness.",
    )
    sub = ap.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gen", help="write a suite shape's surface points")
    g.add_argument("--scenario", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--points", type=int, default=None)
    g.add_argument("--fmt", choices=("ascii", "binary"), default="ascii")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    p = sub.add_parser("plan", help="run one planner, write its trace")
    p.add_argument("--scenario", required=True)
    p.add_argument("--method", choices=("active_hof", "vis_max_gt", "info_max"),
                   default="active_hof")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--grid", type=int, choices=(40, 80), default=None)
    p.add_argument("--mode", choices=("static", "dynamic"), default="dynamic")
    p.add_argument("--predictor", choices=("oracle", "degraded", "external"),
                   default=None)
    p.add_argument("--max-views", type=int, default=20)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_plan)

    e = sub.add_parser("experiment", help="run a scenario file")
    e.add_argument("scenario")
    e.add_argument("--out", default=None)
    e.set_defaults(fn=cmd_experiment)

    a = sub.add_parser("audit", help="replay a trace or diff two result CSVs")
    a.add_argument("trace", nargs="?", default=None)
    a.add_argument("--scenario", default=None)
    a.add_argument("--tables", nargs=2, default=None)
    a.add_argument("--tol", type=float, default=1e-12)
    a.set_defaults(fn=cmd_audit)

    b = sub.add_parser("bridge-test", help="conformance-check an external predictor")
    b.add_argument("--m", type=int, default=4096)
    b.add_argument("--timeout", type=float, default=15.0)
    b.add_argument("command", nargs=argparse.REMAINDER)
    b.set_defaults(fn=cmd_bridge_test)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except (ParameterError, ScenarioError) as exc:
        return _fail(str(exc), EXIT_VALIDATION)


if __name__ == "__main__":
    sys.exit(main())
