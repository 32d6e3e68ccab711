import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbvsim.errors import ParameterError
from nbvsim.geometry import (
    DEFAULT_EPSILON,
    PointSet,
    ShapeSpec,
    ViewingSpace,
    Viewpoint,
    epsilon_net_size,
    generate_shape,
    load_points,
    look_at,
    rotation_about_z,
    sample_viewpoints,
    save_points,
    surface_area,
)


def sphere_spec(r=0.1):
    return ShapeSpec("sphere", {"radius": r})


def box_spec(size=(0.18, 0.12, 0.08)):
    return ShapeSpec("box", {"size": list(size)})


class TestPointSet:
    def test_shape_checked(self):
        with pytest.raises(ParameterError):
            PointSet(np.zeros((4, 2)))

    def test_rejects_nan(self):
        a = np.zeros((3, 3))
        a[1, 1] = np.nan
        with pytest.raises(ParameterError):
            PointSet(a)

    def test_subset_and_len(self):
        ps = PointSet(np.arange(12.0).reshape(4, 3))
        sub = ps.subset(np.array([True, False, True, False]))
        assert len(sub) == 2
        assert np.array_equal(sub.xyz, ps.xyz[[0, 2]])


class TestShapes:
    def test_sphere_points_on_surface(self):
        ps = generate_shape(sphere_spec(0.1), 500, seed=0)
        r = np.linalg.norm(ps.xyz, axis=1)
        assert np.abs(r - 0.1).max() < 1e-12

    def test_box_points_on_surface(self):
        size = np.array([0.18, 0.12, 0.08])
        ps = generate_shape(box_spec(size), 2000, seed=1)
        half = size / 2.0
        # Every point lies on at least one face plane, none outside the box.
        at_face = np.isclose(np.abs(ps.xyz), half, atol=1e-12)
        assert np.all(at_face.any(axis=1))
        assert np.all(np.abs(ps.xyz) <= half + 1e-12)

    def test_box_face_occupancy_matches_area(self):
        # [DERIVED] face hit fractions for a 0.18 x 0.12 x 0.08 box:
        # areas (yz, yz, xz, xz, xy, xy) = 2*(.0096, .0144, .0216), total .0912;
        # expected per-axis pair fractions: x .2105, y .3158, z .4737.
        size = np.array([0.18, 0.12, 0.08])
        ps = generate_shape(box_spec(size), 20000, seed=2)
        half = size / 2.0
        frac = [
            np.mean(np.isclose(np.abs(ps.xyz[:, i]), half[i], atol=1e-12))
            for i in range(3)
        ]
        expect = np.array([0.0192, 0.0288, 0.0432]) / 0.0912
        assert np.abs(np.array(frac) - expect).max() < 0.02

    def test_capsule_points_on_surface(self):
        spec = ShapeSpec("capsule", {"radius": 0.05, "half_length": 0.08})
        ps = generate_shape(spec, 3000, seed=3)
        x, y, z = ps.xyz.T
        rho = np.hypot(x, y)
        on_cyl = np.abs(z) <= 0.08 + 1e-12
        d_cyl = np.abs(rho - 0.05)
        zc = z - np.sign(z) * 0.08
        d_cap = np.abs(np.sqrt(rho**2 + zc**2) - 0.05)
        dist = np.where(on_cyl, d_cyl, d_cap)
        assert dist.max() < 1e-9

    def test_capsule_area(self):
        # [TRIVIAL] 2*pi*r*L + 4*pi*r^2 with r=0.05, L=0.16
        spec = ShapeSpec("capsule", {"radius": 0.05, "half_length": 0.08})
        expect = 2 * math.pi * 0.05 * 0.16 + 4 * math.pi * 0.05**2
        assert surface_area(spec) == pytest.approx(expect, rel=1e-12)

    def test_superellipsoid_ellipsoid_limit(self):
        # [DERIVED] with e1=e2=1 the surface is an ellipsoid; quadrature area
        # must match the Thomsen approximation (good to ~1e-3 relative).
        a, b, c = 0.09, 0.07, 0.05
        spec = ShapeSpec("superellipsoid", {"a": a, "b": b, "c": c, "e1": 1.0, "e2": 1.0})
        p = 1.6075
        approx = 4 * math.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3) ** (1 / p)
        assert surface_area(spec) == pytest.approx(approx, rel=5e-3)

    def test_superellipsoid_points_satisfy_implicit(self):
        a, b, c, e1, e2 = 0.09, 0.07, 0.05, 0.8, 0.8
        spec = ShapeSpec("superellipsoid", {"a": a, "b": b, "c": c, "e1": e1, "e2": e2})
        ps = generate_shape(spec, 1000, seed=4)
        x, y, z = np.abs(ps.xyz.T)
        f = ((x / a) ** (2 / e2) + (y / b) ** (2 / e2)) ** (e2 / e1) + (z / c) ** (2 / e1)
        assert np.abs(f - 1.0).max() < 1e-6

    def test_sphere_cap_fraction(self):
        # [DERIVED] fraction of a unit-sphere sample with z > cos(30 deg)
        # equals the cap area ratio (1 - cos 30)/2 ~ 0.066987.
        ps = generate_shape(sphere_spec(1.0), 40000, seed=5)
        frac = np.mean(ps.xyz[:, 2] > math.cos(math.radians(30)))
        expect = (1 - math.cos(math.radians(30))) / 2
        sigma = math.sqrt(expect * (1 - expect) / 40000)
        assert abs(frac - expect) < 4 * sigma

    def test_composite_apportionment_and_pose(self):
        # Two spheres with areas 4:1 -> sample counts split 4:1 exactly
        # (largest remainder), each shifted by its child translation.
        big = ShapeSpec("sphere", {"radius": 0.2})
        small = ShapeSpec("sphere", {"radius": 0.1}, translation=[1.0, 0.0, 0.0])
        comp = ShapeSpec("composite", children=(big, small))
        ps = generate_shape(comp, 1000, seed=6)
        near_small = np.linalg.norm(ps.xyz - [1.0, 0.0, 0.0], axis=1) < 0.5
        assert near_small.sum() == 200
        assert surface_area(comp) == pytest.approx(
            4 * math.pi * (0.2**2 + 0.1**2), rel=1e-12
        )

    def test_pose_applied(self):
        spec = ShapeSpec(
            "box",
            {"size": [0.2, 0.1, 0.1]},
            rotation=rotation_about_z(90.0),
            translation=[0.0, 0.0, 0.3],
        )
        ps = generate_shape(spec, 500, seed=7)
        lo, hi = ps.bounds()
        # After a 90 degree yaw the long side lies along y.
        assert hi[1] - lo[1] == pytest.approx(0.2, abs=0.01)
        assert hi[0] - lo[0] == pytest.approx(0.1, abs=0.01)
        assert (lo[2] + hi[2]) / 2 == pytest.approx(0.3, abs=0.01)

    def test_determinism_and_seed_sensitivity(self):
        a = generate_shape(box_spec(), 100, seed=11)
        b = generate_shape(box_spec(), 100, seed=11)
        c = generate_shape(box_spec(), 100, seed=12)
        assert np.array_equal(a.xyz, b.xyz)
        assert not np.array_equal(a.xyz, c.xyz)

    def test_param_validation(self):
        with pytest.raises(ParameterError):
            ShapeSpec("sphere", {"radius": 0.0})
        with pytest.raises(ParameterError):
            ShapeSpec("box", {"size": [0.1, -0.1, 0.1]})
        with pytest.raises(ParameterError):
            ShapeSpec("composite")
        with pytest.raises(ParameterError):
            ShapeSpec("pyramid", {})


class TestViewpoints:
    def test_rotation_validated(self):
        with pytest.raises(ParameterError):
            Viewpoint([0, 0, 1], np.ones((3, 3)))

    def test_samples_on_hemisphere(self):
        space = ViewingSpace([0.1, -0.2, 0.0], 0.5)
        vps = sample_viewpoints(space, 200, seed=0)
        for vp in vps:
            d = vp.center - space.center
            assert np.linalg.norm(d) == pytest.approx(0.5, abs=1e-12)
            assert d @ space.axis >= -1e-12

    def test_optical_axis_hits_center(self):
        space = ViewingSpace([0.0, 0.0, 0.0], 0.5)
        for vp in sample_viewpoints(space, 50, seed=1):
            to_center = space.center - vp.center
            cos = (to_center / np.linalg.norm(to_center)) @ vp.optical_axis
            assert cos == pytest.approx(1.0, abs=1e-12)

    def test_height_distribution_uniform(self):
        # [DERIVED] area-uniform hemisphere sampling makes the height above
        # the equator uniform on [0, r]; check the first moment.
        space = ViewingSpace([0.0, 0.0, 0.0], 1.0)
        vps = sample_viewpoints(space, 20000, seed=2)
        h = np.array([vp.center[2] for vp in vps])
        assert abs(h.mean() - 0.5) < 4 * (1 / math.sqrt(12)) / math.sqrt(20000)

    def test_tilted_axis(self):
        axis = np.array([1.0, 1.0, 1.0]) / math.sqrt(3)
        space = ViewingSpace([0.0, 0.0, 0.0], 0.3, axis=axis)
        vps = sample_viewpoints(space, 100, seed=3)
        for vp in vps:
            assert (vp.center - space.center) @ axis >= -1e-12

    def test_pole_roll_fallback(self):
        space = ViewingSpace([0.0, 0.0, 0.0], 0.5)
        vp = look_at([0.0, 0.0, 0.5], space)
        # Rotation must still be orthonormal with the axis pointing down.
        assert np.allclose(vp.optical_axis, [0, 0, -1], atol=1e-12)

    def test_determinism(self):
        space = ViewingSpace([0.0, 0.0, 0.0], 0.5)
        a = sample_viewpoints(space, 10, seed=9)
        b = sample_viewpoints(space, 10, seed=9)
        assert all(np.array_equal(x.center, y.center) for x, y in zip(a, b))


class TestEpsilonNet:
    def test_documented_example(self):
        # [DERIVED] A = 2*pi*0.25 ~ 1.5708, eps = 0.1 -> ratio ~ 15.708,
        # ceil(15.708 * ln 15.708) = ceil(43.29) = 44 (checked with mpmath).
        area = 2 * math.pi * 0.5**2
        assert epsilon_net_size(area, 0.1) == 44

    def test_default_epsilon(self):
        area = 2 * math.pi * 0.5**2
        assert epsilon_net_size(area) == epsilon_net_size(area, DEFAULT_EPSILON)

    def test_clamped_to_one(self):
        # ratio just above 1 gives a tiny positive product -> still 1
        assert epsilon_net_size(1.0001, 1.0) == 1

    def test_invalid(self):
        with pytest.raises(ParameterError):
            epsilon_net_size(1.0, 0.0)
        with pytest.raises(ParameterError):
            epsilon_net_size(1.0, 2.0)
        with pytest.raises(ParameterError):
            epsilon_net_size(-1.0, 0.1)

    @given(
        st.floats(min_value=0.05, max_value=50.0),
        st.floats(min_value=0.01, max_value=0.05),
    )
    def test_monotone_in_area(self, area, eps):
        assert epsilon_net_size(area + 0.1, eps) >= epsilon_net_size(area, eps)


class TestPointIO:
    def test_ascii_roundtrip_9_sig_digits(self, tmp_path):
        ps = generate_shape(sphere_spec(0.1), 50, seed=0)
        path = tmp_path / "pts.xyz"
        save_points(ps, path)
        back = load_points(path)
        assert len(back) == 50
        # 9 significant digits keep relative error below 5e-9.
        rel = np.abs(back.xyz - ps.xyz) / np.maximum(np.abs(ps.xyz), 1e-300)
        assert rel.max() < 5e-9

    def test_ascii_format_exact(self, tmp_path):
        ps = PointSet(np.array([[0.1, -0.25, 1.0 / 3.0]]))
        path = tmp_path / "one.xyz"
        save_points(ps, path)
        assert path.read_text() == "0.1 -0.25 0.333333333\n"

    def test_binary_roundtrip_bit_exact(self, tmp_path):
        ps = generate_shape(box_spec(), 64, seed=1)
        path = tmp_path / "pts.bin"
        save_points(ps, path, fmt="binary")
        back = load_points(path, fmt="binary")
        assert np.array_equal(back.xyz, ps.xyz)
        assert path.stat().st_size == 64 * 3 * 8

    def test_empty_ascii(self, tmp_path):
        path = tmp_path / "empty.xyz"
        save_points(PointSet(np.zeros((0, 3))), path)
        assert len(load_points(path)) == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_shapes_in_convex_position(seed):
    # Primitive generators emit boundary points of convex bodies: no sample
    # may fall strictly inside the hull of the others.
    from scipy.spatial import ConvexHull

    spec = ShapeSpec("superellipsoid", {"a": 0.09, "b": 0.07, "c": 0.05, "e1": 0.8, "e2": 0.8})
    ps = generate_shape(spec, 120, seed=seed)
    hull = ConvexHull(ps.xyz, qhull_options="QJ")
    eqs = hull.equations
    d = ps.xyz @ eqs[:, :3].T + eqs[:, 3]
    # every point within jitter tolerance of some supporting plane
    assert np.abs(d.max(axis=1)).max() < 1e-6
