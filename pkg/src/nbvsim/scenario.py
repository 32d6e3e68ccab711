"""Scenario files: a small YAML schema describing one experiment run.

A scenario names an experiment kind, the shape suite it runs over, the
viewing space, planner knobs, and the predictor; everything the harness
needs to reproduce the run bit for bit lives in the file.  The grammar is
documented in docs/formats.md.
"""

from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ScenarioError
from .geometry import ShapeSpec, ViewingSpace, rotation_about_z
from .predictor import DegradationProfile

EXPERIMENT_KINDS = ("entropy", "methods", "iou_vs_k", "static_dynamic", "epsilon_net")
PREDICTOR_KINDS = ("oracle", "degraded", "external")


@dataclass(frozen=True)
class PredictorSpec:
    kind: str = "oracle"
    profile: DegradationProfile | None = None
    command: tuple = ()  # external only: argv of the server process

    def __post_init__(self):
        if self.kind not in PREDICTOR_KINDS:
            raise ScenarioError(f"unknown predictor kind {self.kind!r}")
        if self.kind == "external" and not self.command:
            raise ScenarioError("external predictor needs a command")
        object.__setattr__(self, "command", tuple(self.command))


@dataclass(frozen=True)
class Scenario:
    """One experiment, fully specified.

    Not every field matters to every kind: alphas drive methods and
    static_dynamic, ks drives iou_vs_k, grids and view_counts drive entropy.
    trials is the number of seeded runs per table row; trial t uses shape
    suite[t % len(suite)] and seed t.
    """

    name: str
    kind: str
    suite: tuple
    labels: tuple
    space: ViewingSpace
    trials: int
    output: str | None = None
    grid: int = 40
    grids: tuple = (40, 80)
    view_counts: tuple = (5, 8, 11)
    alphas: tuple = (0.9,)
    ks: tuple = (1, 2, 3, 4)
    candidates: int = 20
    max_views: int = 20
    termination: str = "prediction"
    rays: int = 1024
    points: int = 1200
    predictor: PredictorSpec = field(default_factory=PredictorSpec)

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ScenarioError(f"unknown experiment kind {self.kind!r}")
        if not self.suite:
            raise ScenarioError("shape suite must be non-empty")
        if len(self.labels) != len(self.suite):
            raise ScenarioError("one label per suite shape")
        if len(set(self.labels)) != len(self.labels):
            raise ScenarioError("suite labels must be unique")
        if self.trials < 1:
            raise ScenarioError("trials must be >= 1")
        for a in self.alphas:
            if not (0.0 < a <= 1.0):
                raise ScenarioError(f"alpha {a} out of (0, 1]")
        for g in (self.grid, *self.grids):
            if g not in (40, 80):
                raise ScenarioError(f"grid resolution {g} not offered (40 or 80)")
        if self.termination not in ("prediction", "ground_truth"):
            raise ScenarioError(f"unknown termination metric {self.termination!r}")
        object.__setattr__(self, "suite", tuple(self.suite))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "grids", tuple(self.grids))
        object.__setattr__(self, "view_counts", tuple(self.view_counts))
        object.__setattr__(self, "alphas", tuple(self.alphas))
        object.__setattr__(self, "ks", tuple(self.ks))

    def shape_for_trial(self, trial: int) -> tuple:
        """(label, ShapeSpec) owning the given trial index."""
        i = trial % len(self.suite)
        return self.labels[i], self.suite[i]


def _shape_from_dict(d: dict) -> ShapeSpec:
    if not isinstance(d, dict) or "family" not in d:
        raise ScenarioError(f"shape entry needs a family: {d!r}")
    rotation = np.eye(3)
    if "yaw_deg" in d:
        rotation = rotation_about_z(float(d["yaw_deg"]))
    children = tuple(_shape_from_dict(c) for c in d.get("children", ()))
    try:
        return ShapeSpec(
            d["family"],
            dict(d.get("params", {})),
            translation=np.asarray(d.get("translation", (0.0, 0.0, 0.0)), dtype=float),
            rotation=rotation,
            children=children,
        )
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"bad shape entry: {exc}") from exc


def _space_from_dict(d: dict) -> ViewingSpace:
    try:
        return ViewingSpace(
            center=np.asarray(d.get("center", (0.0, 0.0, 0.0)), dtype=float),
            radius=float(d["radius"]),
            fov_deg=float(d.get("fov_deg", 60.0)),
            max_range=float(d["max_range"]) if "max_range" in d else None,
        )
    except KeyError as exc:
        raise ScenarioError(f"viewing_space needs {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"bad viewing_space: {exc}") from exc


def _predictor_from_dict(d: dict) -> PredictorSpec:
    kind = d.get("kind", "oracle")
    profile = None
    if kind == "degraded":
        try:
            profile = DegradationProfile(**dict(d.get("profile", {})))
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"bad degradation profile: {exc}") from exc
    return PredictorSpec(kind, profile, tuple(d.get("command", ())))


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    unknown = set(doc) - {
        "name", "kind", "trials", "output", "grid", "grids", "view_counts",
        "alphas", "ks", "candidates", "max_views", "termination", "rays",
        "points", "suite", "viewing_space", "predictor",
    }
    if unknown:
        raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
    try:
        name = doc["name"]
        kind = doc["kind"]
        raw_suite = doc["suite"]
        raw_space = doc["viewing_space"]
        trials = int(doc["trials"])
    except KeyError as exc:
        raise ScenarioError(f"scenario needs {exc}") from exc
    if not isinstance(raw_suite, list) or not raw_suite:
        raise ScenarioError("suite must be a non-empty list")
    labels, shapes = [], []
    for i, entry in enumerate(raw_suite):
        label = entry.get("label", f"{entry.get('family', 'shape')}{i}") if isinstance(entry, dict) else None
        if label is None:
            raise ScenarioError(f"shape entry {i} must be a mapping")
        labels.append(str(label))
        shapes.append(_shape_from_dict(entry))
    kwargs = {}
    for key in ("output", "grid", "candidates", "max_views", "termination", "rays", "points"):
        if key in doc:
            kwargs[key] = doc[key]
    for key in ("grids", "view_counts", "alphas", "ks"):
        if key in doc:
            kwargs[key] = tuple(doc[key])
    try:
        return Scenario(
            name=str(name),
            kind=str(kind),
            suite=tuple(shapes),
            labels=tuple(labels),
            space=_space_from_dict(raw_space),
            trials=trials,
            predictor=_predictor_from_dict(doc.get("predictor", {})),
            **kwargs,
        )
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"bad scenario: {exc}") from exc


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"unparseable scenario file: {exc}") from exc
    return scenario_from_dict(doc)
