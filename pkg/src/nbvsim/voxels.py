"""World-aligned voxel grids: occupancy, visible-cell labeling, coverage, IoU.

A grid is a fixed box of dims cells with edge length in meters anchored at
origin (the minimum corner).  Cells are half-open intervals, indexed (ix,
iy, iz), flattened in C order (iz fastest).  Planner runs keep one frozen
grid so that unions of covered cells across steps stay well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, GridMismatchError, ParameterError, UndefinedCoverageError
from .geometry import PointSet

# resolution presets: cells per axis -> edge length; both span a 0.40 m cube
GRID_PRESETS = {40: 0.010, 80: 0.005}


@dataclass(frozen=True)
class VoxelGrid:
    origin: np.ndarray  # (3,) minimum corner, meters
    edge: float
    dims: tuple  # (nx, ny, nz)
    occupied: np.ndarray  # bool (nx, ny, nz)
    visible: np.ndarray  # bool, subset of occupied

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.edge <= 0.0:
            raise ParameterError("voxel edge must be positive")
        if any(d < 1 for d in self.dims):
            raise ParameterError("grid dims must each be >= 1")
        occ = np.asarray(self.occupied, dtype=bool)
        vis = np.asarray(self.visible, dtype=bool)
        if occ.shape != self.dims or vis.shape != self.dims:
            raise ParameterError("occupancy arrays must match dims")
        if np.any(vis & ~occ):
            raise ParameterError("visible cells must be occupied")
        object.__setattr__(self, "occupied", occ)
        object.__setattr__(self, "visible", vis)

    def same_geometry(self, other) -> bool:
        return (
            self.dims == other.dims
            and self.edge == other.edge
            and np.array_equal(self.origin, other.origin)
        )

    @property
    def occupied_count(self) -> int:
        return int(self.occupied.sum())


@dataclass
class CoverageState:
    """Cells confirmed seen so far, aligned to one fixed grid geometry."""

    origin: np.ndarray
    edge: float
    dims: tuple
    covered: np.ndarray  # bool (nx, ny, nz)

    @classmethod
    def empty(cls, grid: VoxelGrid) -> "CoverageState":
        return cls(grid.origin.copy(), grid.edge, grid.dims, np.zeros(grid.dims, dtype=bool))

    def _check(self, grid: VoxelGrid):
        if not (
            self.dims == grid.dims
            and self.edge == grid.edge
            and np.array_equal(self.origin, grid.origin)
        ):
            raise GridMismatchError("coverage state and grid geometry differ")

    def absorb(self, grid: VoxelGrid) -> None:
        """Union the grid's visible cells into the covered set."""
        self._check(grid)
        self.covered |= grid.visible


def cell_indices(points: PointSet, origin, edge: float, dims) -> np.ndarray:
    """Map points to integer cell indices; raises naming the first outlier."""
    origin = np.asarray(origin, dtype=float).reshape(3)
    idx = np.floor((points.xyz - origin) / edge).astype(np.int64)
    bad = (idx < 0) | (idx >= np.asarray(dims, dtype=np.int64))
    if np.any(bad):
        i = int(np.flatnonzero(bad.any(axis=1))[0])
        p = points.xyz[i]
        raise BoundsError(
            f"point ({p[0]:.9g} {p[1]:.9g} {p[2]:.9g}) at row {i} "
            f"falls outside the grid (origin {origin.tolist()}, edge {edge}, dims {tuple(dims)})"
        )
    return idx


def in_bounds_mask(points: PointSet, origin, edge: float, dims) -> np.ndarray:
    origin = np.asarray(origin, dtype=float).reshape(3)
    idx = np.floor((points.xyz - origin) / edge)
    return ~((idx < 0) | (idx >= np.asarray(dims, dtype=float))).any(axis=1)


def voxelize(points: PointSet, visible, origin, edge: float, dims) -> VoxelGrid:
    """Occupancy plus majority visible/invisible labeling (ties -> visible).

    visible may be a VisibilityMask, a boolean array aligned to points, or
    None to label every occupied cell visible.
    """
    dims = tuple(int(d) for d in dims)
    if hasattr(visible, "visible"):
        visible = visible.visible
    if visible is None:
        visible = np.ones(len(points), dtype=bool)
    visible = np.asarray(visible, dtype=bool)
    if visible.shape != (len(points),):
        raise ParameterError("visibility flags must align with points")
    idx = cell_indices(points, origin, edge, dims)
    flat = np.ravel_multi_index((idx[:, 0], idx[:, 1], idx[:, 2]), dims)
    n_cells = int(np.prod(dims))
    vis_count = np.bincount(flat[visible], minlength=n_cells)
    inv_count = np.bincount(flat[~visible], minlength=n_cells)
    occupied = (vis_count + inv_count) > 0
    vis_cells = occupied & (vis_count >= inv_count)
    return VoxelGrid(
        np.asarray(origin, dtype=float),
        float(edge),
        dims,
        occupied.reshape(dims),
        vis_cells.reshape(dims),
    )


def make_grid_geometry(center, resolution: int):
    """Origin and dims of a fixed-extent cube grid centered at `center`."""
    if resolution not in GRID_PRESETS:
        raise ParameterError(f"resolution must be one of {sorted(GRID_PRESETS)}")
    edge = GRID_PRESETS[resolution]
    dims = (resolution, resolution, resolution)
    center = np.asarray(center, dtype=float).reshape(3)
    origin = center - np.array(dims) * edge / 2.0
    return origin, edge, dims


def coverage_fraction(state: CoverageState, grid: VoxelGrid) -> float:
    """|covered ∩ occupied| / |occupied| against the current occupancy."""
    state._check(grid)
    denom = grid.occupied_count
    if denom == 0:
        raise UndefinedCoverageError("grid has no occupied cells")
    return float((state.covered & grid.occupied).sum()) / denom


def iou(a: VoxelGrid, b: VoxelGrid) -> float:
    if not a.same_geometry(b):
        raise GridMismatchError("grids differ in origin, edge, or dims")
    inter = int((a.occupied & b.occupied).sum())
    union = int((a.occupied | b.occupied).sum())
    if union == 0:
        return 1.0
    return inter / union


# ---------------------------------------------------------------------------
# Run-length-encoded text format (see docs/formats.md)
# ---------------------------------------------------------------------------

_STATE_CHARS = "eov"  # empty / occupied-invisible / occupied-visible


def grid_to_text(grid: VoxelGrid) -> str:
    states = np.zeros(grid.dims, dtype=np.int8)
    states[grid.occupied] = 1
    states[grid.visible] = 2
    flat = states.ravel(order="C")
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    tokens = [f"{e - s}{_STATE_CHARS[flat[s]]}" for s, e in zip(starts, ends)]
    o = grid.origin
    return (
        "voxelgrid 1\n"
        f"dims {grid.dims[0]} {grid.dims[1]} {grid.dims[2]}\n"
        f"origin {o[0]:.9g} {o[1]:.9g} {o[2]:.9g}\n"
        f"edge {grid.edge:.9g}\n"
        f"{' '.join(tokens)}\n"
    )


def grid_from_text(text: str) -> VoxelGrid:
    lines = text.strip().split("\n")
    if len(lines) != 5 or lines[0] != "voxelgrid 1":
        raise ParameterError("not a voxelgrid v1 document")
    dims = tuple(int(x) for x in lines[1].split()[1:])
    origin = np.array([float(x) for x in lines[2].split()[1:]])
    edge = float(lines[3].split()[1])
    flat = np.empty(int(np.prod(dims)), dtype=np.int8)
    pos = 0
    for token in lines[4].split():
        count, state = int(token[:-1]), token[-1]
        flat[pos : pos + count] = _STATE_CHARS.index(state)
        pos += count
    if pos != flat.size:
        raise ParameterError(f"run lengths cover {pos} cells, expected {flat.size}")
    states = flat.reshape(dims)
    return VoxelGrid(origin, edge, dims, states >= 1, states == 2)
