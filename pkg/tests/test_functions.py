import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate as sint

import oracles
from affinehls.functions import (
    Affine,
    CorrelationFunction,
    FunctionError,
    Gaussian,
    GridSampled,
    HlsExtremal,
    Indicator,
    Mixture,
    QuadConfig,
    SConcavePeak,
    Scaled,
    SimplexExponential,
    concavity_check,
    correlation,
    evaluate,
    function_from_dict,
    inner_product,
    lp_norm,
    power_integral,
    scale,
    schwarz_symmetrize,
    superlevel_volume,
    transform,
    translate,
)
from affinehls.geometry import Ball, Box, CrossPolytope, Ellipsoid, SimplexGauge
from affinehls.specialfns import unit_ball_volume

CFG = QuadConfig()
I01 = Indicator(Box(1, (0.0,), (1.0,)))


def families(n):
    return [
        HlsExtremal(n, alpha=0.5 * n),
        SimplexExponential(n),
        SConcavePeak(n, 1.0),
        Gaussian(n),
        Indicator(Ball(n, 1.0)),
        Indicator(Box(n, (0.0,) * n, (1.0,) * n)),
    ]


def test_evaluate_examples():
    assert evaluate(HlsExtremal(1, alpha=1.0), np.array([0.0])) == 1.0
    assert evaluate(SimplexExponential(2), np.array([-1.0, 0.5])) == 0.0
    assert evaluate(SimplexExponential(2), np.array([0.5, 0.25])) == pytest.approx(math.exp(-0.75))
    assert evaluate(I01, np.array([0.5])) == 1.0
    assert evaluate(SConcavePeak(1, 0.5), np.array([0.5])) == pytest.approx(0.25)


def test_extremal_typo_convention():
    # a (b^2 + |phi(x - x0)|^2)^(-(n+alpha)/2)
    f = HlsExtremal(2, a=2.0, b=0.5, phi=np.diag([2.0, 1.0]), center=np.array([1.0, 0.0]), alpha=1.0)
    x = np.array([1.5, 1.0])
    assert f(x) == pytest.approx(2.0 * (0.25 + 1.0 + 1.0) ** -1.5)


def test_lp_norm_examples():
    assert lp_norm(I01, 2.0) == pytest.approx(1.0)
    for n in (1, 2, 3):
        assert lp_norm(SimplexExponential(n), 1.0) == pytest.approx(1.0, rel=1e-10)
    f = HlsExtremal(1, alpha=0.5)
    assert lp_norm(scale(f, 2.5), 4 / 3) == pytest.approx(2.5 * lp_norm(f, 4 / 3), rel=1e-12)


@pytest.mark.parametrize("p", [0.5, 2 / 3, 1.0, 4 / 3, 2.0])
def test_lp_norm_extremal_against_scipy(p):
    f = HlsExtremal(1, alpha=2.0 if p < 1 else 0.5)
    assert lp_norm(f, p) == pytest.approx(oracles.extremal_lp_norm_1d(f.alpha, p), rel=1e-9)


@pytest.mark.parametrize("n", [1, 2])
def test_power_integral_quadrature_matches_closed_forms(n):
    # the cell quadrature route against each family's closed form
    from affinehls.functions import _integrate_cells

    for f in families(n):
        want = f.power_integral(1.5)
        if want is None:
            continue
        got = _integrate_cells(lambda x: f._eval(x) ** 1.5, f.cells(), CFG)
        assert got == pytest.approx(want, rel=1e-5), f.family


def test_inner_product_examples():
    assert inner_product(I01, I01) == pytest.approx(1.0)
    for n in (1, 2, 3):
        f = SimplexExponential(n)
        assert inner_product(f, f) == pytest.approx(2.0**-n, rel=1e-8)
    far = Indicator(Box(1, (3.0,), (4.0,)))
    assert inner_product(I01, far) == 0.0


def test_correlation_examples():
    assert correlation(I01, I01, np.array([0.25])) == pytest.approx(0.75)
    f = SimplexExponential(2)
    for y in ([0.3, -0.3], [-1.0, 1.0], [0.0, 0.0]):
        assert correlation(f, f, np.array(y)) == pytest.approx(oracles.simplex_exp_correlation(y), rel=1e-6)
    g = Gaussian(2)
    assert correlation(g, g, np.zeros(2)) == pytest.approx(inner_product(g, g), rel=1e-12)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0, -0.7])
def test_correlation_1d_hand_convolution(t):
    f = SimplexExponential(1)
    assert correlation(f, f, np.array([t])) == pytest.approx(oracles.simplex_exp_correlation_1d(t), rel=1e-8)


def test_correlation_gaussian_closed_form():
    # e^(-|x|^2/2) correlated with itself: pi e^(-|y|^2/4) in the plane
    g = Gaussian(2)
    y = np.array([[0.0, 0.0], [1.0, 0.5], [3.0, -2.0]])
    want = math.pi * np.exp(-np.sum(y**2, axis=1) / 4)
    assert np.allclose(correlation(g, g, y), want, rtol=1e-9)


@pytest.mark.parametrize("n", [1, 2])
def test_correlation_swap_symmetry(n):
    rng = np.random.default_rng(n)
    f, h = HlsExtremal(n, alpha=0.5 * n), Indicator(Ball(n, 1.0))
    h = translate(h, rng.normal(size=n) * 0.3)
    y = rng.normal(size=(6, n))
    assert np.allclose(correlation(f, h, y), correlation(h, f, -y), rtol=1e-6)


@pytest.mark.parametrize("n", [1, 2])
def test_correlation_even_max_at_zero(n):
    for f in (Gaussian(n), Indicator(Ball(n, 1.0)), SimplexExponential(n, body=CrossPolytope(n))):
        assert f.even
        y = np.random.default_rng(0).normal(size=(8, n))
        g0 = correlation(f, f, np.zeros(n))
        gy, gm = correlation(f, f, y), correlation(f, f, -y)
        assert np.allclose(gy, gm, rtol=1e-6, atol=1e-14)
        assert np.all(gy <= g0 * (1 + 1e-9))


def test_superlevel_examples():
    sq = Indicator(Box(2, (0.0, 0.0), (1.0, 1.0)))
    assert superlevel_volume(sq, 0.5) == pytest.approx(1.0)
    assert superlevel_volume(sq, 2.0) == 0.0
    for n in (1, 2):
        a = 0.5
        f = HlsExtremal(n, alpha=a)
        for t in (0.2, 0.6):
            want = unit_ball_volume(n) * (t ** (-2 / (n + a)) - 1) ** (n / 2)
            assert superlevel_volume(f, t) == pytest.approx(want, rel=1e-12)


def test_superlevel_mc_route_and_monotone():
    # an Affine wrapper has no closed form and goes through seeded Monte Carlo
    f = Affine(Indicator(Ball(2, 1.0)), np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2))
    v, e = superlevel_volume(f, 0.5, CFG, return_error=True)
    assert abs(v - math.pi) <= e
    g = Affine(Gaussian(2), np.array([[1.0, 0.3], [0.0, 1.0]]), np.zeros(2))
    vs = [superlevel_volume(g, t) for t in (0.9, 0.5, 0.2, 0.05)]
    assert all(a <= b for a, b in zip(vs, vs[1:]))


def test_schwarz_fixed_point_and_examples():
    f = HlsExtremal(1, alpha=0.5)
    prof = schwarz_symmetrize(f)
    x = np.linspace(-5, 5, 41)[:, None]
    assert np.allclose(prof.evaluate(x), f(x), rtol=1e-3)
    sq = schwarz_symmetrize(Indicator(Box(2, (0.0, 0.0), (1.0, 1.0))))
    assert sq.radii[0] == pytest.approx(1 / math.sqrt(math.pi), rel=1e-12)
    # e^(-||x||_1) in the plane symmetrizes to e^(-|x| sqrt(pi/2))
    e1 = SimplexExponential(2, body=CrossPolytope(2))
    prof = schwarz_symmetrize(e1)
    r = np.array([[0.1, 0.0], [0.8, 0.0], [2.0, 0.0]])
    assert np.allclose(prof.evaluate(r), np.exp(-r[:, 0] * math.sqrt(math.pi / 2)), rtol=1e-3)
    assert np.all(np.diff(prof.radii) >= 0)


@pytest.mark.parametrize("n", [1, 2])
def test_equimeasurability(n):
    a = 0.5 * n
    for f in (HlsExtremal(n, alpha=a), SimplexExponential(n), Gaussian(n), Indicator(Ball(n, 1.0))):
        prof = schwarz_symmetrize(f)
        for p in (1.0, 2.0, 2 * n / (n + a)):
            assert prof.lp_norm(p) == pytest.approx(lp_norm(f, p), rel=2 * CFG.rel_tol), (f.family, p)


def test_concavity_examples():
    assert concavity_check(SimplexExponential(2), "log").passed
    assert concavity_check(Gaussian(2), "log").passed
    assert concavity_check(SConcavePeak(2, 0.5), "s", s=0.5).passed
    bumps = Mixture((Gaussian(1, center=np.array([-3.0])), Gaussian(1, center=np.array([3.0]))))
    assert not concavity_check(bumps, "log", trials=2000).passed


def test_correlation_of_s_concave_is_concave():
    s = 1.0
    p = SConcavePeak(2, s)
    g = CorrelationFunction(p, p)
    rep = concavity_check(g, "s", s=s / (2 * s + 2), trials=300, slack=1e-6)
    assert rep.passed, rep.worst


def test_transform_examples():
    g = Gaussian(2, covariance=np.diag([2.0, 0.5]))
    same = transform(g, np.eye(2))
    x = np.random.default_rng(1).normal(size=(5, 2))
    assert np.array_equal(same(x), g(x))
    m = np.array([[2.0, 1.0], [0.0, 0.5]])
    for f in (g, SimplexExponential(2), HlsExtremal(2, alpha=1.0), Indicator(Ball(2, 1.0))):
        tf = transform(f, m, np.array([0.3, -1.0]))
        assert lp_norm(tf, 1.5) == pytest.approx(lp_norm(f, 1.5), rel=1e-6), f.family
        y = m @ x.T + np.array([[0.3], [-1.0]])
        assert np.allclose(tf(y.T), f(x), rtol=1e-12)
    e = transform(HlsExtremal(2, alpha=1.0), m)
    assert isinstance(e, HlsExtremal)
    assert np.allclose(e.phi, np.linalg.inv(m))


def test_scaling_and_serialization():
    f = SConcavePeak(2, 2.0)
    sf = scale(f, 3.0)
    assert isinstance(sf, Scaled)
    assert lp_norm(sf, 1.0) == pytest.approx(3.0 * lp_norm(f, 1.0), rel=1e-12)
    for g in families(2) + [sf, Affine(Gaussian(2), np.eye(2) * 2, np.ones(2))]:
        g2 = function_from_dict(g.to_dict())
        x = np.array([[0.2, 0.1], [1.5, -0.3]])
        assert np.allclose(g2(x), g(x))


def test_grid_sampled_roundtrip(tmp_path):
    f = Gaussian(2)
    gs = GridSampled.from_function(f, [-6, -6], [6, 6], (97, 97))
    assert lp_norm(gs, 1.0) == pytest.approx(2 * math.pi, rel=5e-3)
    gs.save(tmp_path / "f.csv", tmp_path / "f.json")
    g2 = GridSampled.load(tmp_path / "f.csv", tmp_path / "f.json")
    assert np.array_equal(g2.values, gs.values)
    with pytest.raises(FunctionError):
        GridSampled(np.zeros(2), np.ones(2), -np.ones((3, 3)))


def test_truncation_warning_for_heavy_tail():
    # alpha tiny: decay (1+x^2)^(-(1+a)/2) barely integrable; the box clips real mass
    f = Affine(HlsExtremal(1, alpha=0.05), np.eye(1), np.zeros(1))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        power_integral(f, 1.0, QuadConfig(box_radius=5.0))
    assert isinstance(f.decay, float)


def test_validation_errors():
    with pytest.raises(FunctionError):
        HlsExtremal(2, phi=np.zeros((2, 2)))
    with pytest.raises(FunctionError):
        Gaussian(2, covariance=-np.eye(2))
    with pytest.raises(FunctionError):
        QuadConfig(nodes_per_axis=0)
    with pytest.raises(FunctionError):
        correlation(I01, Gaussian(2), np.zeros(2))


@given(st.floats(0.1, 5.0), st.floats(-2, 2))
def test_correlation_interval_overlap_property(length, y):
    h = Indicator(Box(1, (0.0,), (length,)))
    want = max(0.0, min(length, 1.0 - y) - max(0.0, -y))
    assert correlation(I01, h, np.array([y])) == pytest.approx(want, abs=1e-12)
