"""Multi-view reconstruction uncertainty: occupancy voting across per-view
reconstructions, per-cell Bernoulli entropy, and summary statistics that
contrast cells seen by the cameras with the reconstruction as a whole.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, ParameterError
from .geometry import ViewingSpace, _orthonormal_frame, look_at


@dataclass(frozen=True)
class ProbGrid:
    """Per-cell occupancy frequency across a set of reconstructions."""

    origin: np.ndarray
    edge: float
    dims: tuple
    votes: np.ndarray         # int count per cell
    measurements: int

    def __post_init__(self):
        if self.measurements < 1:
            raise ParameterError("need at least one measurement")
        if self.votes.shape != tuple(self.dims):
            raise ParameterError("votes array does not match dims")

    @property
    def p(self) -> np.ndarray:
        return self.votes / self.measurements

    @property
    def voted(self) -> np.ndarray:
        """Cells marked occupied by at least one reconstruction."""
        return self.votes > 0


@dataclass(frozen=True)
class EntropyGrid:
    origin: np.ndarray
    edge: float
    dims: tuple
    h: np.ndarray      # bits, in [0, 1]
    voted: np.ndarray  # cells occupied in at least one reconstruction

    def __post_init__(self):
        if self.h.shape != tuple(self.dims):
            raise ParameterError("entropy array does not match dims")
        if self.voted.shape != tuple(self.dims):
            raise ParameterError("voted mask does not match dims")


def voting_occupancy(per_view_grids) -> ProbGrid:
    """Fraction of reconstructions voting each cell occupied."""
    grids = list(per_view_grids)
    if not grids:
        raise ParameterError("need at least one grid")
    first = grids[0]
    votes = np.zeros(first.dims, dtype=np.int64)
    for g in grids:
        if not first.same_geometry(g):
            raise GridMismatchError("voting grids must share geometry")
        votes += g.occupied
    return ProbGrid(first.origin.copy(), first.edge, first.dims, votes, len(grids))


def bernoulli_entropy_bits(p: np.ndarray) -> np.ndarray:
    """H(p) in bits with the H(0) = H(1) = 0 convention."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    interior = (p > 0.0) & (p < 1.0)
    q = p[interior]
    out[interior] = -q * np.log2(q) - (1.0 - q) * np.log2(1.0 - q)
    return out


def entropy_map(pg: ProbGrid) -> EntropyGrid:
    return EntropyGrid(
        pg.origin.copy(), pg.edge, pg.dims, bernoulli_entropy_bits(pg.p), pg.voted
    )


def entropy_stats(eg: EntropyGrid, cells: np.ndarray | None = None) -> tuple:
    """Mean and population standard deviation of per-cell entropy.

    With no restriction the statistics run over every voted-occupied cell;
    `cells` (a boolean mask, e.g. the visible-cell union) narrows the set.
    """
    if cells is None:
        cells = eg.voted
    cells = np.asarray(cells, dtype=bool)
    if cells.shape != tuple(eg.dims):
        raise ParameterError("cell mask does not match grid dims")
    if not cells.any():
        raise ParameterError("cell selection is empty")
    vals = eg.h[cells]
    return float(vals.mean()), float(vals.std())


def visible_cells(per_view_grids, combine: str = "union") -> np.ndarray:
    """Cells visible-labeled across the per-view grids.

    combine selects set semantics: "union" (visible from at least one view)
    or "intersection" (visible from every view).
    """
    if combine not in ("union", "intersection"):
        raise ParameterError(f"unknown combine mode {combine!r}")
    grids = list(per_view_grids)
    if not grids:
        raise ParameterError("need at least one grid")
    first = grids[0]
    out = grids[0].visible.copy()
    for g in grids[1:]:
        if not first.same_geometry(g):
            raise GridMismatchError("grids must share geometry")
        if combine == "union":
            out |= g.visible
        else:
            out &= g.visible
    return out


def arc_viewpoints(space: ViewingSpace, count: int, seed: int, step_deg: float = 5.0) -> list:
    """Consecutive viewpoints along a constant-height hemisphere arc.

    The start azimuth and the height are drawn from the seed; successive
    cameras advance by step_deg of azimuth, mimicking small physical moves.
    """
    if count < 1:
        raise ParameterError("count must be >= 1")
    rng = np.random.default_rng(seed)
    h = rng.uniform(0.2, 0.8)  # stay away from pole and equator
    phi0 = rng.uniform(0.0, 2.0 * math.pi)
    s = math.sqrt(max(0.0, 1.0 - h * h))
    frame = _orthonormal_frame(space.axis)
    out = []
    for i in range(count):
        phi = phi0 + math.radians(step_deg) * i
        local = np.array([s * math.cos(phi), s * math.sin(phi), h])
        out.append(look_at(space.center + space.radius * (frame @ local), space))
    return out
