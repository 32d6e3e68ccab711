"""Core 3D types, synthetic shape generators, and hemisphere viewpoint sampling.

Everything is plain numpy: points are float64 arrays of shape (n, 3) in a
world frame measured in meters.  All sampling is deterministic given a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

DEFAULT_FOV_DEG = 60.0
# Default disk area (m^2) that every point's visibility region is assumed to
# contain; drives the candidate-count bound below.
DEFAULT_EPSILON = 0.1


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"non-finite coordinates: {a}")
    return a


@dataclass(frozen=True)
class PointSet:
    """Ordered set of 3D surface samples, shape (n, 3), world frame."""

    xyz: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.xyz, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != 3:
            raise ParameterError(f"expected (n, 3) array, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ParameterError("point set contains non-finite coordinates")
        object.__setattr__(self, "xyz", a)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def subset(self, mask) -> "PointSet":
        return PointSet(self.xyz[np.asarray(mask)])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self) == 0:
            raise ParameterError("bounds of an empty point set")
        return self.xyz.min(axis=0), self.xyz.max(axis=0)


@dataclass(frozen=True)
class Viewpoint:
    """Camera center plus camera-to-world rotation; optical axis is column Z."""

    center: np.ndarray
    rotation: np.ndarray
    fov_deg: float = DEFAULT_FOV_DEG
    max_range: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec3(self.center))
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if np.abs(r.T @ r - np.eye(3)).max() >= 1e-9:
            raise ParameterError("viewpoint rotation is not orthonormal")
        object.__setattr__(self, "rotation", r)
        if not (0.0 < self.fov_deg < 180.0):
            raise ParameterError(f"fov_deg out of range: {self.fov_deg}")
        if self.max_range <= 0.0:
            raise ParameterError("max_range must be positive")

    @property
    def optical_axis(self) -> np.ndarray:
        return self.rotation[:, 2]


@dataclass(frozen=True)
class ViewingSpace:
    """Upper hemisphere of candidate camera centers, all looking at `center`."""

    center: np.ndarray
    radius: float
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    fov_deg: float = DEFAULT_FOV_DEG
    max_range: float | None = None  # None -> 2 * radius

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec3(self.center))
        if self.radius <= 0.0:
            raise ParameterError("viewing radius must be positive")
        a = _as_vec3(self.axis)
        n = np.linalg.norm(a)
        if n < 1e-12:
            raise ParameterError("hemisphere axis must be a nonzero vector")
        object.__setattr__(self, "axis", a / n)

    @property
    def range_limit(self) -> float:
        return 2.0 * self.radius if self.max_range is None else self.max_range

    def area(self) -> float:
        return 2.0 * math.pi * self.radius**2


def _orthonormal_frame(axis: np.ndarray) -> np.ndarray:
    """Columns (u, v, axis) forming a right-handed orthonormal basis."""
    helper = np.array([1.0, 0.0, 0.0])
    if abs(axis @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return np.column_stack([u, v, axis])


def look_at(center, space: ViewingSpace) -> Viewpoint:
    """Viewpoint at `center` whose optical axis passes through space.center.

    Camera roll is fixed by aligning the image up direction with the
    hemisphere axis projected onto the image plane; at the pole (axis
    parallel to the optical axis) world X is projected instead.
    """
    center = _as_vec3(center)
    z = space.center - center
    dist = np.linalg.norm(z)
    if dist < 1e-12:
        raise ParameterError("viewpoint coincides with the look-at target")
    z = z / dist
    up = space.axis - (space.axis @ z) * z
    if np.linalg.norm(up) < 1e-9:
        helper = np.array([1.0, 0.0, 0.0])
        up = helper - (helper @ z) * z
    y = up / np.linalg.norm(up)
    x = np.cross(y, z)
    rot = np.column_stack([x, y, z])
    return Viewpoint(center, rot, fov_deg=space.fov_deg, max_range=space.range_limit)


def sample_viewpoints(space: ViewingSpace, n: int, seed: int) -> list[Viewpoint]:
    """n viewpoints, uniform by area on the hemisphere surface, looking at center."""
    if n < 1:
        raise ParameterError("viewpoint count must be >= 1")
    rng = np.random.default_rng(seed)
    # Area-uniform on the upper hemisphere: height above the equator plane is
    # uniform (Archimedes), azimuth is uniform.
    h = rng.uniform(0.0, 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    s = np.sqrt(np.clip(1.0 - h**2, 0.0, None))
    local = np.column_stack([s * np.cos(phi), s * np.sin(phi), h])
    frame = _orthonormal_frame(space.axis)
    centers = space.center + space.radius * (local @ frame.T)
    return [look_at(c, space) for c in centers]


def epsilon_net_size(viewing_area: float, epsilon: float = DEFAULT_EPSILON) -> int:
    """Candidate-count bound ``max(1, ceil((A/eps) * ln(A/eps)))``.

    A concrete instantiation (constant 1, clamped to >= 1) of the sample
    bound that guarantees every visibility region of area >= epsilon on the
    viewing surface receives at least one sample with high probability.
    """
    if viewing_area <= 0.0:
        raise ParameterError("viewing_area must be positive")
    if epsilon <= 0.0:
        raise ParameterError("epsilon must be positive")
    if epsilon > viewing_area:
        raise ParameterError("epsilon cannot exceed the viewing area")
    ratio = viewing_area / epsilon
    return max(1, math.ceil(ratio * math.log(ratio)))


# ---------------------------------------------------------------------------
# Shape specifications and surface samplers
# ---------------------------------------------------------------------------

FAMILIES = ("sphere", "box", "superellipsoid", "capsule", "composite")


@dataclass(frozen=True)
class ShapeSpec:
    """Parametric test object: a primitive or a rigid composite of children."""

    family: str
    params: dict = field(default_factory=dict)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    children: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown shape family {self.family!r}")
        object.__setattr__(self, "translation", _as_vec3(self.translation))
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if np.abs(r.T @ r - np.eye(3)).max() >= 1e-9:
            raise ParameterError("shape pose rotation is not orthonormal")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "children", tuple(self.children))
        self._validate_params()

    def _validate_params(self):
        p = self.params
        if self.family == "sphere":
            if p.get("radius", 0.0) <= 0.0:
                raise ParameterError("sphere radius must be positive")
        elif self.family == "box":
            size = np.asarray(p.get("size", ()), dtype=float)
            if size.shape != (3,) or np.any(size <= 0.0):
                raise ParameterError("box size must be three positive lengths")
        elif self.family == "capsule":
            if p.get("radius", 0.0) <= 0.0 or p.get("half_length", 0.0) <= 0.0:
                raise ParameterError("capsule radius and half_length must be positive")
        elif self.family == "superellipsoid":
            for key in ("a", "b", "c"):
                if p.get(key, 0.0) <= 0.0:
                    raise ParameterError(f"superellipsoid {key} must be positive")
            for key in ("e1", "e2"):
                if not (0.0 < p.get(key, 1.0) <= 2.0):
                    raise ParameterError(f"superellipsoid {key} must be in (0, 2]")
        elif self.family == "composite":
            if len(self.children) < 1:
                raise ParameterError("composite shape needs at least one child")


def rotation_about_z(yaw_deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(yaw_deg)), math.sin(math.radians(yaw_deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _sample_sphere(radius, n, rng):
    z = rng.uniform(-1.0, 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    s = np.sqrt(np.clip(1.0 - z**2, 0.0, None))
    return radius * np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def _sample_box(size, n, rng):
    lx, ly, lz = size
    areas = np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=n)
    v = rng.uniform(-0.5, 0.5, size=n)
    pts = np.empty((n, 3))
    half = np.array([lx, ly, lz]) / 2.0
    # Faces 0/1: +-x, 2/3: +-y, 4/5: +-z.
    for f in range(6):
        m = face == f
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        others = [i for i in range(3) if i != axis]
        pts[m, axis] = sign * half[axis]
        pts[m, others[0]] = u[m] * size[others[0]]
        pts[m, others[1]] = v[m] * size[others[1]]
    return pts


def _sample_capsule(radius, half_length, n, rng):
    cyl_area = 2.0 * math.pi * radius * (2.0 * half_length)
    cap_area = 4.0 * math.pi * radius**2
    on_cyl = rng.uniform(0.0, 1.0, size=n) < cyl_area / (cyl_area + cap_area)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    pts = np.empty((n, 3))
    nc = int(on_cyl.sum())
    z = rng.uniform(-half_length, half_length, size=nc)
    pts[on_cyl] = np.column_stack(
        [radius * np.cos(phi[on_cyl]), radius * np.sin(phi[on_cyl]), z]
    )
    ns = n - nc
    zs = rng.uniform(-1.0, 1.0, size=ns)  # full sphere, split into two caps
    s = np.sqrt(np.clip(1.0 - zs**2, 0.0, None))
    cap = radius * np.column_stack([s * np.cos(phi[~on_cyl]), s * np.sin(phi[~on_cyl]), zs])
    cap[:, 2] += np.where(cap[:, 2] >= 0.0, half_length, -half_length)
    pts[~on_cyl] = cap
    return pts


def _se_surface(theta, phi, a, b, c, e1, e2):
    def pcos(t, e):
        ct = np.cos(t)
        return np.sign(ct) * np.abs(ct) ** e

    def psin(t, e):
        st = np.sin(t)
        return np.sign(st) * np.abs(st) ** e

    x = a * pcos(theta, e1) * pcos(phi, e2)
    y = b * pcos(theta, e1) * psin(phi, e2)
    z = c * psin(theta, e1)
    return np.stack([x, y, z], axis=-1)


_SE_GRID = (192, 384)  # theta x phi resolution for area-weighted sampling


def _se_cell_weights(a, b, c, e1, e2):
    nt, np_ = _SE_GRID
    dt = math.pi / nt
    dp = 2.0 * math.pi / np_
    theta = -math.pi / 2.0 + (np.arange(nt) + 0.5) * dt
    phi = -math.pi + (np.arange(np_) + 0.5) * dp
    tg, pg = np.meshgrid(theta, phi, indexing="ij")
    h = 1e-6
    ds_dt = (_se_surface(tg + h, pg, a, b, c, e1, e2) - _se_surface(tg - h, pg, a, b, c, e1, e2)) / (2 * h)
    ds_dp = (_se_surface(tg, pg + h, a, b, c, e1, e2) - _se_surface(tg, pg - h, a, b, c, e1, e2)) / (2 * h)
    w = np.linalg.norm(np.cross(ds_dt, ds_dp), axis=-1) * dt * dp
    return theta, phi, w, dt, dp


def _sample_superellipsoid(p, n, rng):
    a, b, c, e1, e2 = p["a"], p["b"], p["c"], p["e1"], p["e2"]
    theta, phi, w, dt, dp = _se_cell_weights(a, b, c, e1, e2)
    flat = w.ravel()
    idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
    ti, pi = np.unravel_index(idx, w.shape)
    t = theta[ti] + rng.uniform(-0.5, 0.5, size=n) * dt
    f = phi[pi] + rng.uniform(-0.5, 0.5, size=n) * dp
    return _se_surface(t, f, a, b, c, e1, e2)


def surface_area(spec: ShapeSpec) -> float:
    """Analytic area for primitives; numeric quadrature for superellipsoids."""
    p = spec.params
    if spec.family == "sphere":
        return 4.0 * math.pi * p["radius"] ** 2
    if spec.family == "box":
        lx, ly, lz = p["size"]
        return 2.0 * (lx * ly + ly * lz + lx * lz)
    if spec.family == "capsule":
        return 2.0 * math.pi * p["radius"] * 2.0 * p["half_length"] + 4.0 * math.pi * p["radius"] ** 2
    if spec.family == "superellipsoid":
        _, _, w, _, _ = _se_cell_weights(p["a"], p["b"], p["c"], p["e1"], p["e2"])
        return float(w.sum())
    return sum(surface_area(ch) for ch in spec.children)


def _apportion(weights: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder split of n samples proportional to weights."""
    quota = weights / weights.sum() * n
    counts = np.floor(quota).astype(int)
    rem = n - counts.sum()
    if rem > 0:
        order = np.argsort(-(quota - counts))
        counts[order[:rem]] += 1
    return counts


def generate_shape(spec: ShapeSpec, n_points: int, seed: int) -> PointSet:
    """Sample n_points approximately uniform by area on the shape boundary."""
    if n_points < 1:
        raise ParameterError("n_points must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pts = _generate_local(spec, n_points, rng)
    return PointSet(pts)


def _generate_local(spec: ShapeSpec, n: int, rng) -> np.ndarray:
    p = spec.params
    if spec.family == "sphere":
        pts = _sample_sphere(p["radius"], n, rng)
    elif spec.family == "box":
        pts = _sample_box(np.asarray(p["size"], dtype=float), n, rng)
    elif spec.family == "capsule":
        pts = _sample_capsule(p["radius"], p["half_length"], n, rng)
    elif spec.family == "superellipsoid":
        pts = _sample_superellipsoid(p, n, rng)
    else:
        areas = np.array([surface_area(ch) for ch in spec.children])
        counts = _apportion(areas, n)
        parts = [
            _generate_local(ch, int(k), rng)
            for ch, k in zip(spec.children, counts)
            if k > 0
        ]
        pts = np.vstack(parts)
    return pts @ spec.rotation.T + spec.translation


# ---------------------------------------------------------------------------
# Point set export / import
# ---------------------------------------------------------------------------


def save_points(points: PointSet, path, fmt: str = "ascii") -> None:
    """Write points as ASCII XYZ (9 significant digits) or raw <f8 triples."""
    if fmt == "ascii":
        lines = [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in points.xyz]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    elif fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(points.xyz.astype("<f8").tobytes())
    else:
        raise ParameterError(f"unknown point format {fmt!r}")


def load_points(path, fmt: str = "ascii") -> PointSet:
    if fmt == "ascii":
        with open(path) as fh:
            text = fh.read()
        if not text.strip():
            return PointSet(np.zeros((0, 3)))
        data = np.array(text.split(), dtype=float)
        return PointSet(data.reshape(-1, 3))
    if fmt == "binary":
        with open(path, "rb") as fh:
            raw = np.frombuffer(fh.read(), dtype="<f8")
        return PointSet(raw.reshape(-1, 3).astype(np.float64))
    raise ParameterError(f"unknown point format {fmt!r}")
