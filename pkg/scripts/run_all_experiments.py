#!/usr/bin/env python3
"""Run every scenario under scenarios/ and write its CSV (plus traces).

Usage: python3 scripts/run_all_experiments.py [scenario.yaml ...]
With no arguments, runs all scenario files next to this repo's scenarios/
directory in name order and writes outputs relative to the repo root.
"""

import sys
import time
from pathlib import Path

from nbvsim.experiments import run_experiment, table_to_csv
from nbvsim.scenario import load_scenario

ROOT = Path(__file__).resolve().parent.parent


def run_one(path: Path) -> bool:
    scenario = load_scenario(path)
    out = ROOT / (scenario.output or f"results/{scenario.name}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    traces_dir = None
    if scenario.kind in ("methods", "static_dynamic"):
        traces_dir = str(out.with_name(out.stem + "_traces"))
    t0 = time.time()
    table = run_experiment(scenario, traces_dir=traces_dir)
    out.write_text(table_to_csv(table), encoding="utf-8")
    bad = [r for r in table.rows if r.status != "ok"]
    print(f"{scenario.name}: {len(table.rows)} rows -> {out} ({time.time() - t0:.0f}s)"
          + (f", {len(bad)} FAILED rows" if bad else ""))
    for r in bad:
        print(f"  {r.method or r.scope}: {r.status}")
    return not bad


def main() -> int:
    paths = [Path(p) for p in sys.argv[1:]] or sorted((ROOT / "scenarios").glob("*.yaml"))
    ok = True
    for path in paths:
        ok = run_one(path) and ok
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
