import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from affinehls.geometry import (
    Ball,
    Box,
    CrossPolytope,
    Ellipsoid,
    GeometryError,
    LinearImage,
    Sampled,
    SimplexGauge,
    SphereGrid,
    are_dilates,
    body_from_dict,
    check_dual_mixed_inequality,
    dual_mixed_volume,
    gauge,
    linear_image,
    radial,
    schwarz_symmetral,
    volume,
)
from affinehls.specialfns import DomainError


def _rot(th):
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s], [s, c]])


def random_body(rng, n):
    kind = rng.integers(0, 4)
    if kind == 0:
        return Ball(n, float(rng.uniform(0.3, 3.0)))
    if kind == 1:
        a = rng.normal(size=(n, n))
        return Ellipsoid(n, a @ a.T + 0.2 * np.eye(n))
    if kind == 2:
        return CrossPolytope(n, float(rng.uniform(0.5, 2.0)))
    m = rng.normal(size=(n, n)) + 2 * np.eye(n)
    return LinearImage(m, Ball(n))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_grid_nodes_and_weights(n):
    g = SphereGrid.make(n)
    assert np.allclose(np.linalg.norm(g.nodes, axis=1), 1.0, atol=1e-14)
    area = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}[n]
    assert g.weights.sum() == pytest.approx(area, rel=1e-10)


def test_grid_trapezoid_exactness():
    g = SphereGrid.make(2, 64)
    th = np.arctan2(g.nodes[:, 1], g.nodes[:, 0])
    for k in range(1, 17):
        assert abs(g.integrate(np.cos(k * th))) < 1e-12
        assert abs(g.integrate(np.sin(k * th))) < 1e-12


def test_grid_s2_polynomial_exactness():
    g = SphereGrid.make(3, 8)
    x, y, z = g.nodes.T
    # int x^2 y^2 z^2 over S^2 = 4 pi / 105, int z^4 = 4 pi / 5
    assert g.integrate(x**2 * y**2 * z**2) == pytest.approx(4 * math.pi / 105, rel=1e-10)
    assert g.integrate(z**4) == pytest.approx(4 * math.pi / 5, rel=1e-10)
    assert abs(g.integrate(x**3 * z)) < 1e-12


def test_grid_roundtrip_and_errors():
    g = SphereGrid.make(3, 6)
    g2 = SphereGrid.from_dict(g.to_dict())
    assert np.array_equal(g.nodes, g2.nodes) and g2.shape == g.shape
    with pytest.raises(GeometryError):
        SphereGrid.make(4)
    with pytest.raises(GeometryError):
        SphereGrid.make(2, 2)


def test_radial_examples():
    assert radial(Ball(2, 2.0), np.array([0.6, 0.8])) == pytest.approx(2.0)
    assert radial(CrossPolytope(2), np.array([0.6, 0.8])) == pytest.approx(5 / 7, rel=1e-14)
    assert radial(LinearImage(np.diag([2.0, 1.0]), Ball(2)), np.array([1.0, 0.0])) == pytest.approx(2.0)
    with pytest.raises(GeometryError):
        radial(Ball(2), np.array([1.0, 1.0]))


def test_gauge_examples():
    assert gauge(Ball(2), np.array([0.3, 0.4])) == pytest.approx(0.5)
    assert gauge(CrossPolytope(2), np.array([0.3, 0.4])) == pytest.approx(0.7)
    for b in (Ball(2), CrossPolytope(2), Ellipsoid(2, np.diag([4.0, 1.0]))):
        assert gauge(b, np.zeros(2)) == 0.0


def test_simplex_gauge_off_cone():
    s = SimplexGauge.standard(2)
    assert s.gauge(np.array([-1.0, 0.5])) == math.inf
    assert s.gauge(np.array([0.25, 0.25])) == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(5))
def test_radial_gauge_reciprocity(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    body = LinearImage(m, CrossPolytope(2))
    g = SphereGrid.make(2, 32)
    rho = body.radial(g.nodes)
    for t in (0.3, 1.0, 7.0):
        assert np.allclose(rho * body.gauge(g.nodes * t) / t, 1.0, rtol=1e-10)


def test_volume_examples():
    assert volume(Ball(2)) == pytest.approx(math.pi)
    assert volume(CrossPolytope(2)) == pytest.approx(2.0)
    m = np.array([[2.0, 1.0], [0.0, 0.5]])
    assert volume(LinearImage(m, Ball(2))) == pytest.approx(math.pi, rel=1e-12)
    # quadrature route: spectral for the smooth image, 1e-8 once the ellipse is resolved
    g = SphereGrid.make(2, 256)
    assert volume(LinearImage(m, Ball(2)), g, exact=False) == pytest.approx(math.pi, rel=1e-8)


@pytest.mark.parametrize("n", [2, 3])
def test_volume_quadrature_smooth_bodies(n):
    g = SphereGrid.make(n)
    for b in (Ball(n, 1.7), Ellipsoid(n, np.diag([2.0, 1.0, 0.6][:n]))):
        assert volume(b, g, exact=False) == pytest.approx(b.exact_volume(), rel=1e-6)


def test_volume_quadrature_polytope_convergence():
    # kinked radial functions: the trapezoid rule is second order
    errs = [abs(volume(CrossPolytope(2), SphereGrid.make(2, m), exact=False) - 2.0) for m in (64, 128, 256)]
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5
    assert volume(SimplexGauge.standard(3)) == pytest.approx(1 / 6)
    assert volume(Box(2, (-1, -2), (1, 2))) == pytest.approx(8.0)


def test_dual_mixed_volume_examples():
    g = SphereGrid.make(2)
    assert dual_mixed_volume(Ball(2), Ball(2, 2.0), 1.0, g) == pytest.approx(oracles.HOLDER_BALLS, rel=1e-12)
    k = CrossPolytope(2)
    assert dual_mixed_volume(k, k, 0.7, g) == pytest.approx(volume(k, g, exact=False), rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("seed", range(3))
def test_dual_mixed_volume_self(n, seed):
    rng = np.random.default_rng(seed)
    g = SphereGrid.make(n)
    b = random_body(rng, n)
    for a in (0.5, 1.3, n + 1.5):
        assert dual_mixed_volume(b, b, a, g) == pytest.approx(volume(b, g, exact=False), rel=1e-10)


def test_schwarz_symmetral():
    assert schwarz_symmetral(Ball(2, 1.3)).radius == pytest.approx(1.3)
    assert schwarz_symmetral(CrossPolytope(2)).radius == pytest.approx(math.sqrt(2 / math.pi))
    m = np.array([[3.0, 1.0], [0.0, 1 / 3]])
    k = CrossPolytope(2)
    assert schwarz_symmetral(LinearImage(m, k)).radius == pytest.approx(schwarz_symmetral(k).radius, rel=1e-8)


def test_linear_image():
    g = SphereGrid.make(2, 48)
    k = CrossPolytope(2, 1.5)
    assert np.allclose(linear_image(np.eye(2), k).radial(g.nodes), k.radial(g.nodes), rtol=1e-14)
    assert volume(linear_image(np.diag([2.0, 0.5]), Ball(2))) == pytest.approx(math.pi)
    a, b = _rot(0.4) @ np.diag([2.0, 1.0]), np.array([[1.0, 0.3], [0.0, 1.0]])
    two = linear_image(a, linear_image(b, k))
    one = linear_image(a @ b, k)
    assert np.allclose(two.radial(g.nodes), one.radial(g.nodes), rtol=1e-12)


def test_dual_mixed_inequality_examples():
    g = SphereGrid.make(2)
    r = check_dual_mixed_inequality(Ball(2), Ball(2), 1.0, g)
    assert r.passed and r.flags["dilates"] and r.gap(0) < 1e-10
    r = check_dual_mixed_inequality(Ball(2), CrossPolytope(2), 1.0, g)
    assert r.passed and r.margins[0] > 1e-3 and not r.flags["dilates"]
    r = check_dual_mixed_inequality(Ball(2), Ball(2, 3.0), 0.5, g)
    assert r.passed and r.gap(0) < 1e-10
    with pytest.raises(DomainError):
        check_dual_mixed_inequality(Ball(2), Ball(2), 2.0, g)


@given(st.integers(0, 10_000), st.sampled_from([1, 2, 3]), st.floats(0.05, 0.95), st.floats(1.1, 4.0))
def test_dual_mixed_inequality_property(seed, n, frac, over):
    rng = np.random.default_rng(seed)
    g = SphereGrid.make(n, 24 if n == 2 else 8)
    k, l = random_body(rng, n), random_body(rng, n)
    assert check_dual_mixed_inequality(k, l, frac * n, g).passed
    assert check_dual_mixed_inequality(k, l, over * n, g).passed


def test_sampled_body_roundtrip_and_interp():
    g = SphereGrid.make(2, 16)
    rho = 1.0 + 0.2 * g.nodes[:, 0] ** 2
    s = Sampled(g, rho)
    s2 = body_from_dict(s.to_dict())
    assert np.array_equal(s2.values, s.values)
    assert np.allclose(s.radial(g.nodes), rho)
    assert are_dilates(s, s.dilate(2.5), g)
    mid = np.array([math.cos(math.pi / 16), math.sin(math.pi / 16)])
    assert min(rho[:2]) <= s.radial(mid) <= max(rho[:2])
    with pytest.raises(GeometryError):
        Sampled(g, -rho)


def test_body_dict_roundtrip():
    for b in (Ball(3, 2.0), Ellipsoid(2, np.diag([1.0, 2.0])), CrossPolytope(2, 0.5),
              SimplexGauge.standard(2), Box(2, (0, 0), (1, 2)), LinearImage(np.eye(2) * 2, Ball(2))):
        b2 = body_from_dict(b.to_dict())
        x = np.array([0.3, -0.2, 0.1][: b.dim])
        assert b2.gauge(x) == pytest.approx(b.gauge(x))
