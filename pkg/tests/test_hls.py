import math

import numpy as np
import pytest

import oracles
from affinehls.functions import (
    Gaussian,
    HlsExtremal,
    Indicator,
    QuadConfig,
    SConcavePeak,
    SimplexExponential,
    lp_norm,
    scale,
    transform,
    translate,
)
from affinehls.geometry import Ball, Box, CrossPolytope, Ellipsoid, SimplexGauge, SphereGrid
from affinehls.hls import (
    check_representation_identity,
    hls_functional,
    riesz_rearrangement_check,
    verify_corollary_sconcave,
    verify_theorem_1_1,
    verify_theorem_1_2,
    verify_theorem_1_3,
)
from affinehls.specialfns import DomainError, HlsParams, RegimeError, reverse_constant_sconcave

CFG = QuadConfig()
G1 = SphereGrid.make(1)
I01 = Indicator(Box(1, (0.0,), (1.0,)))
I02 = Indicator(Box(1, (0.0,), (2.0,)))
K1 = Box(1, (-1.0,), (1.0,))


def test_hls_functional_anchor():
    pol = hls_functional(I01, I01, K1, 0.5, CFG, "polar", grid=G1)
    assert pol.value == pytest.approx(oracles.HLS_INTERVAL_HALF, rel=1e-10)
    mc = hls_functional(I01, I01, K1, 0.5, CFG, "direct-mc")
    assert abs(mc.value - oracles.HLS_INTERVAL_HALF) <= mc.error
    assert mc.value == pytest.approx(oracles.HLS_INTERVAL_HALF, rel=5e-3)


def test_hls_functional_against_scipy():
    f = HlsExtremal(1, alpha=0.5)
    pol = hls_functional(f, f, None, 0.5, CFG, grid=G1)
    ref = oracles.hls_double_integral_1d(f, 0.5)
    assert pol.value == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_methods_agree_random_smooth_pairs(seed):
    rng = np.random.default_rng(seed)
    f = Gaussian(1, covariance=np.array([[rng.uniform(0.3, 2.0)]]), center=rng.normal(size=1))
    h = Gaussian(1, a=rng.uniform(0.5, 2.0), center=rng.normal(size=1))
    a = float(rng.uniform(0.2, 0.9))
    pol = hls_functional(f, h, None, a, CFG, grid=G1)
    mc = hls_functional(f, h, None, a, CFG, "direct-mc")
    assert abs(pol.value - mc.value) <= pol.error + mc.error


def test_hls_functional_radial_equality_case():
    # K = ball and f, h radial: the functional equals n w_n^((n-a)/n) |S_a|^(a/n)
    g = Gaussian(2)
    grid = SphereGrid.make(2, 16)
    a = 1.0
    val = hls_functional(g, g, None, a, CFG, grid=grid).value
    r = (math.pi * 2 ** (a - 1) * math.gamma(a / 2)) ** (1 / a)
    mid = 2 * math.pi ** 0.5 * (math.pi * r * r) ** 0.5
    assert val == pytest.approx(mid, rel=1e-8)


def test_hls_polar_translation_invariant():
    f, h = HlsExtremal(1, alpha=0.5), I02
    a = hls_functional(f, h, None, 0.5, CFG, grid=G1).value
    b = hls_functional(translate(f, [3.0]), translate(h, [3.0]), None, 0.5, CFG, grid=G1).value
    assert b == pytest.approx(a, rel=2 * CFG.rel_tol)


def test_hls_functional_domain():
    with pytest.raises(DomainError):
        hls_functional(I01, I01, None, 1.0, CFG)
    with pytest.raises(DomainError):
        hls_functional(I01, I01, None, 0.5, CFG, method="nope")


def test_theorem_1_1_extremal():
    f = HlsExtremal(1, alpha=0.5)
    rep = verify_theorem_1_1(f, f, HlsParams(1, 0.5, 4 / 3, 4 / 3), G1, CFG)
    assert rep.passed
    assert rep.gap(0) < 0.02 and rep.gap(1) < 0.02
    assert rep.flags["left_constant"] == "sharp"
    assert rep.flags["near_equality"] == [True, True]


def test_theorem_1_1_indicator_pair_strict():
    rep = verify_theorem_1_1(I01, I02, HlsParams(1, 0.5, 4 / 3, 4 / 3), G1, CFG)
    assert rep.passed
    assert min(rep.margins) > 0
    budget = [rep.error_bars[i] + rep.error_bars[i + 1] + rep.abs_tol for i in range(2)]
    assert all(m > b for m, b in zip(rep.margins, budget))
    # middle term from the closed-form rays
    r = [oracles.rho_interval_pair(0.5, 1.0), oracles.rho_interval_pair(0.5, -1.0)]
    assert rep.values[1] == pytest.approx(2 ** 0.5 * sum(r) ** 0.5, rel=1e-9)


def test_theorem_1_1_off_diagonal_and_regime():
    p = 1.5
    r = 1.0 / (1.5 - 1.0 / p)
    rep = verify_theorem_1_1(I01, I02, HlsParams(1, 0.5, p, r), G1, CFG)
    assert rep.passed and rep.flags["left_constant"] == "upper bound, not sharp"
    with pytest.raises(RegimeError):
        verify_theorem_1_1(I01, I01, HlsParams.diagonal(1, 2.0), G1, CFG)
    with pytest.raises(RegimeError):
        HlsParams.diagonal(1, 1.0).require("thm11")


def test_theorem_1_1_scaling_covariance():
    params = HlsParams(1, 0.5, 4 / 3, 4 / 3)
    f = SimplexExponential(1)
    base = verify_theorem_1_1(f, f, params, G1, CFG)
    c = 2.5
    sc = verify_theorem_1_1(scale(f, c), scale(f, c), params, G1, CFG)
    assert np.allclose(sc.values, c * c * np.array(base.values), rtol=1e-8)


def test_theorem_1_2_extremal():
    f = HlsExtremal(1, alpha=2.0)
    rep = verify_theorem_1_2(f, f, HlsParams(1, 2.0, 2 / 3, 2 / 3), G1, CFG)
    assert rep.passed
    assert rep.gap(0) < 0.02 and rep.gap(1) < 0.02


def test_theorem_1_2_indicator():
    rep = verify_theorem_1_2(I01, I01, HlsParams(1, 2.0, 2 / 3, 2 / 3), G1, CFG)
    assert rep.passed
    assert rep.margins[0] > rep.error_bars[0] + rep.error_bars[1] + rep.abs_tol
    # rho_{S_2}(+-1)^2 = int_0^1 t(1-t) dt = 1/6; in one dimension the second
    # inequality is an identity for symmetric S_alpha
    rho = 6 ** -0.5
    assert rep.values[1] == pytest.approx(0.5 * (2 * rho) ** 2, rel=1e-10)
    assert rep.gap(1) < 1e-12


def test_theorem_1_2_off_diagonal_has_no_constant():
    p = 0.6
    r = 1.0 / (3.0 - 1.0 / p)
    rep = verify_theorem_1_2(I01, I01, HlsParams(1, 2.0, p, r), G1, CFG)
    assert rep.passed and rep.labels == ["middle", "hls_integral"]


@pytest.mark.parametrize("alpha", [0.5, 2.0])
def test_theorem_1_3_simplex_exp_1d(alpha):
    f = SimplexExponential(1)
    rep = verify_theorem_1_3(f, f, alpha, G1, CFG)
    assert rep.passed
    assert rep.gap(0) < 0.02
    assert rep.flags["reduction_residual"] < 1e-6
    assert rep.flags["concave"] == [True, True]


def test_theorem_1_3_reduction_forms():
    f = Gaussian(1)
    a = 0.5
    rep = verify_theorem_1_3(f, f, a, G1, CFG)
    q = 2 / (1 + a)
    l1, l2, lq = lp_norm(f, 1), lp_norm(f, 2), lp_norm(f, q)
    assert rep.values[1] == pytest.approx(l1 ** (2 * a) * l2 ** (2 * (1 - a)), rel=1e-6)
    assert rep.values[2] == pytest.approx(lq**2, rel=1e-6)


def test_theorem_1_3_gaussian_plane_strict():
    g = Gaussian(2)
    rep = verify_theorem_1_3(g, g, 1.0, SphereGrid.make(2, 16), CFG)
    assert rep.passed and min(rep.margins) > 0
    assert rep.flags["even"]


def test_corollary_s_peak_1d():
    p = SConcavePeak(1, 1.0)
    rep = verify_corollary_sconcave(p, p, 0.5, 1.0, G1, CFG)
    assert rep.passed


def test_corollary_large_s_indicator_limit():
    n, a = 1, 0.5
    limit = (n * oracles.beta(n, n + 1)) ** (a / n) / oracles.beta(a, n + 1)
    assert reverse_constant_sconcave(n, a, 1e6) == pytest.approx(limit, rel=1e-5)
    ind = Indicator(SimplexGauge.standard(1))
    rep = verify_corollary_sconcave(ind, ind, a, 1e6, G1, CFG)
    assert rep.passed


def test_corollary_s_peak_plane():
    p = SConcavePeak(2, 2.0)
    rep = verify_corollary_sconcave(p, p, 1.0, 2.0, SphereGrid.make(2, 24), CFG)
    assert rep.passed and min(rep.margins) > 0


def test_riesz_examples():
    b = Ball(2, 1.0)
    rep = riesz_rearrangement_check(b, b, b, CFG, samples=4000)
    assert rep.passed and rep.flags["burchard_configuration"] and rep.flags["equality_within_error"]
    A = Indicator(Box(2, (-3.0, 0.0), (-2.0, 1.0)))
    C = Indicator(Box(2, (2.0, 0.0), (3.0, 1.0)))
    B = Indicator(Ball(2, 0.5))
    rep = riesz_rearrangement_check(A, B, C, CFG, samples=4000)
    assert rep.passed and rep.margins[0] > rep.error_bars[0]
    m = np.array([[1.5, 0.4], [0.0, 0.8]])
    a, bb = np.array([0.3, -0.2]), np.array([-1.0, 0.5])
    D = Indicator(Ball(2, 1.0))
    tri = [transform(D, m * r, c) for r, c in ((1.0, a), (0.7, bb), (1.2, a + bb))]
    rep = riesz_rearrangement_check(*tri, CFG, samples=4000)
    assert rep.passed and rep.flags["burchard_configuration"] and rep.flags["equality_within_error"]


@pytest.mark.parametrize("n", [1, 2])
def test_riesz_random_triples(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(5):
        sets = []
        for _ in range(3):
            c = rng.normal(size=n)
            if rng.random() < 0.5:
                w = rng.uniform(0.3, 2.0, size=n)
                sets.append(Indicator(Box(n, tuple(c - w / 2), tuple(c + w / 2))))
            else:
                sets.append(Indicator(Ball(n, float(rng.uniform(0.3, 1.5)), tuple(c))))
        assert riesz_rearrangement_check(*sets, CFG, samples=2000).passed


def test_representation_identity_examples():
    rep = check_representation_identity(I01, I01, K1, 0.5, G1, CFG)
    assert rep.passed and rep.values[1] == pytest.approx(8 / 3, rel=1e-10)
    f = HlsExtremal(1, alpha=2.0)
    rep = check_representation_identity(f, f, Ball(1), 2.0, G1, CFG)
    assert rep.passed


def test_representation_identity_cross_polytope():
    g = Gaussian(2)
    rep = check_representation_identity(g, g, CrossPolytope(2), 1.0, SphereGrid.make(2, 32), CFG)
    assert rep.passed
