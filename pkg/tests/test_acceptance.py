"""Acceptance suite: one PASS/FAIL line per criterion.

Run ``python3 tests/test_acceptance.py`` for the plain listing, or through
pytest (``pytest -s tests/test_acceptance.py``) to see the lines inline.
Each criterion is a function returning ``(ok, detail, values)``; the values
are what the determinism criterion compares across reruns.
"""

import math
import time

import numpy as np
import pytest

import oracles
from affinehls import salpha
from affinehls.functions import (
    Gaussian,
    HlsExtremal,
    Indicator,
    QuadConfig,
    SimplexExponential,
    transform,
)
from affinehls.geometry import Ball, Box, CrossPolytope, Ellipsoid, LinearImage, SphereGrid, check_dual_mixed_inequality
from affinehls.hls import (
    hls_functional,
    riesz_rearrangement_check,
    verify_theorem_1_1,
    verify_theorem_1_2,
    verify_theorem_1_3,
)
from affinehls.salpha import (
    check_correlation_closed_forms,
    check_inclusion_monotone,
    check_proportionality,
    check_sn_volume_identity,
    polar_projection_body_neg,
    radial_mean_body_fn_neg,
)
from affinehls.specialfns import HlsParams

CFG = QuadConfig()
G1 = SphereGrid.make(1)
I01 = Indicator(Box(1, (0.0,), (1.0,)))
I02 = Indicator(Box(1, (0.0,), (2.0,)))


def _rel(a, b):
    return abs(a - b) / abs(b)


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# --------------------------------------------------------------------------
# criteria


def crit_1():
    K = Box(1, (-1.0,), (1.0,))

    def run():
        pol = hls_functional(I01, I01, K, 0.5, CFG, "polar", grid=G1)
        mc = hls_functional(I01, I01, K, 0.5, CFG, "direct-mc")
        return pol.value, mc.value

    (pol, mc), dt = _timed(run)
    target = oracles.HLS_INTERVAL_HALF
    ok = _rel(pol, target) < 5e-3 and _rel(mc, target) < 5e-3 and dt < 5.0
    return ok, f"polar {pol:.6f} mc {mc:.6f} vs 8/3, {dt:.1f}s", [pol, mc]


def crit_2():
    pairs = [
        (I01, I02, G1, 2.0),
        (Indicator(Ball(2)), Indicator(Ball(2)), SphereGrid.make(2, 32), oracles.DISK_VOLUME_IDENTITY),
        (Gaussian(2), Indicator(Ball(2)), SphereGrid.make(2, 16), math.pi**2),
    ]

    def run():
        return [check_sn_volume_identity(f, h, g, CFG) for f, h, g, _ in pairs]

    reps, dt = _timed(run)
    errs = [max(_rel(r.values[0], r.values[1]), _rel(r.values[1], want)) for r, (*_, want) in zip(reps, pairs)]
    ok = max(errs) < 5e-3 and dt < 30.0
    return ok, f"max rel err {max(errs):.2e}, {dt:.1f}s", [r.values[0] for r in reps]


def crit_3():
    errs, vals = [], []
    boxes = Box(1, (0.0,), (1.0,))
    g2 = SphereGrid.make(2, 16)
    for a in (0.5, 1.0, 2.0):
        for E, F, g in ((boxes, boxes, G1), (Ball(2), Ball(2, 0.5), g2)):
            rep = check_proportionality(E, F, a, g, CFG)
            errs.append(rep.metrics["max_rel_error"])
    res = polar_projection_body_neg(I01, I01, -0.5, G1, CFG)
    r = radial_mean_body_fn_neg(I01, I01, -0.5, G1, CFG)
    neg = max(np.max(np.abs(res.radii - oracles.POLAR_NEG_INTERVAL)) / oracles.POLAR_NEG_INTERVAL,
              np.max(np.abs(r.values - oracles.R_NEG_INTERVAL)) / oracles.R_NEG_INTERVAL)
    vals = errs + [float(res.radii[0]), float(r.values[0])]
    ok = max(errs) < 1e-2 and neg < 1e-2
    return ok, f"max node err {max(errs):.2e}, negative case {neg:.2e}", vals


def crit_4():
    params = HlsParams(1, 0.5, 4 / 3, 4 / 3)
    f = HlsExtremal(1, alpha=0.5)

    def run():
        d = verify_theorem_1_1(f, f, params, G1, CFG)
        hi = verify_theorem_1_1(f, f, params, G1, QuadConfig.high())
        ind = verify_theorem_1_1(I01, I02, params, G1, CFG)
        return d, hi, ind

    (d, hi, ind), dt = _timed(run)
    ok = (d.passed and hi.passed and ind.passed and d.gap(0) < 0.02 and hi.gap(0) < 5e-3
          and min(ind.margins) > 0 and dt < 60.0)
    detail = f"gap default {d.gap(0):.2e}, high {hi.gap(0):.2e}, indicator margins {min(ind.margins):.3f}, {dt:.1f}s"
    return ok, detail, d.values + hi.values + ind.values


def crit_5():
    f = HlsExtremal(1, alpha=2.0)
    rep = verify_theorem_1_2(f, f, HlsParams(1, 2.0, 2 / 3, 2 / 3), G1, CFG)
    ok = rep.passed and rep.gap(0) < 0.02
    return ok, f"gap {rep.gap(0):.2e}", rep.values


def crit_6():
    ok, vals, gaps, resid = True, [], [], 0.0
    for n in (1, 2):
        # S_alpha of the simplex exponential is a cross-polytope; the kinks make
        # the planar volume second order in the grid, so resolve them finely
        grid = G1 if n == 1 else SphereGrid.make(2, 64)
        for a in (n / 2, 2 * n):
            for f in (Gaussian(n), SimplexExponential(n)):
                rep = verify_theorem_1_3(f, f, a, grid, CFG)
                ok = ok and rep.passed
                resid = max(resid, rep.flags["reduction_residual"])
                vals += rep.values
                if isinstance(f, SimplexExponential):
                    gaps.append(rep.gap(0))
    ok = ok and max(gaps) < 0.02 and resid < 1e-6
    return ok, f"simplex-exp max gap {max(gaps):.2e}, reduction residual {resid:.1e}", vals


def crit_7():
    r1, r2 = check_correlation_closed_forms(1, CFG), check_correlation_closed_forms(2, CFG)
    e = max(r1.metrics["exp_max_rel_error"], r2.metrics["exp_max_rel_error"])
    p = r2.metrics["peak_max_rel_error"]
    ok = e < 5e-3 and p < 2e-2
    return ok, f"exp err {e:.2e}, s-peak err {p:.2e}", [e, p]


def crit_8():
    from fractions import Fraction

    # (a+1)^(-1/a) / Gamma(a+1)^(1/a) = Gamma(a+2)^(-1/a): strictly decreasing
    # iff Gamma(a+2)^b < Gamma(b+2)^a for consecutive a < b.
    # a = 1/2, b = 1: Gamma(5/2)^2 = 9 pi/16 < 2  <=>  pi < 32/9, and pi < 22/7 < 32/9
    steps = [Fraction(9, 16) * Fraction(22, 7) < 2, 2**2 < 6**1, 6**4 < 120**2]
    exact_ok = all(steps)
    interval = check_inclusion_monotone(I01, I01, [0.5, 1.0, 2.0, 4.0], "log", G1, CFG)
    f = SimplexExponential(1)
    rep = check_inclusion_monotone(f, f, [0.5, 1.0, 2.0, 4.0], "log", G1, CFG)
    spread = rep.metrics["relative_spread"]
    ok = exact_ok and interval.passed and rep.passed and spread < 1e-2
    return ok, f"exact decrease {exact_ok}, simplex-exp spread {spread:.2e}", [spread]


def _random_set(rng, n):
    c = rng.normal(size=n)
    if rng.random() < 0.5:
        w = rng.uniform(0.3, 2.0, size=n)
        return Indicator(Box(n, tuple(c - w / 2), tuple(c + w / 2)))
    return Indicator(Ball(n, float(rng.uniform(0.3, 1.5)), tuple(c)))


def crit_9():
    rng = np.random.default_rng(9)
    viol, vals = 0, []
    for k in range(100):
        n = 1 + k % 2
        rep = riesz_rearrangement_check(*[_random_set(rng, n) for _ in range(3)], CFG, samples=2000)
        viol += not rep.passed
        vals.append(rep.values[0])
    m = np.array([[1.5, 0.4], [0.0, 0.8]])
    a, b = np.array([0.3, -0.2]), np.array([-1.0, 0.5])
    D = Indicator(Ball(2, 1.0))
    tri = [transform(D, m * r, c) for r, c in ((1.0, a), (0.7, b), (1.2, a + b))]
    bur = riesz_rearrangement_check(*tri, CFG, samples=4000)
    eq = bur.flags["burchard_configuration"] and bur.flags["equality_within_error"]
    ok = viol == 0 and eq
    return ok, f"{viol} violations in 100 triples, Burchard equality {eq}", vals + bur.values


def _random_body(rng, n):
    kind = rng.integers(0, 4)
    if kind == 0:
        return Ball(n, float(rng.uniform(0.3, 3.0)))
    if kind == 1:
        a = rng.normal(size=(n, n))
        return Ellipsoid(n, a @ a.T + 0.2 * np.eye(n))
    if kind == 2:
        return CrossPolytope(n, float(rng.uniform(0.5, 2.0)))
    return LinearImage(rng.normal(size=(n, n)) + 2 * np.eye(n), Ball(n))


def crit_10():
    rng = np.random.default_rng(10)
    viol, dil, vals = 0, 0.0, []
    for n in (1, 2, 3):
        grid = SphereGrid.make(n)
        for _ in range(50):
            K, L = _random_body(rng, n), _random_body(rng, n)
            for a in (float(rng.uniform(0.05, 0.95)) * n, float(rng.uniform(1.1, 4.0)) * n):
                rep = check_dual_mixed_inequality(K, L, a, grid)
                viol += not rep.passed
                vals.append(rep.values[0])
            for a in (0.5 * n, 2.0 * n):
                rep = check_dual_mixed_inequality(K, transform_body(K, float(rng.uniform(0.5, 3.0))), a, grid)
                dil = max(dil, rep.gap(0))
    ok = viol == 0 and dil < 1e-8
    return ok, f"{viol} violations in 150 pairs x 2 regimes, dilate gap {dil:.1e}", vals


def transform_body(K, c):
    return LinearImage(c * np.eye(K.dim), K)


CRITERIA = [crit_1, crit_2, crit_3, crit_4, crit_5, crit_6, crit_7, crit_8, crit_9, crit_10]
_RESULTS = {}
LINES = {}  # shown in the pytest terminal summary


def _result(k):
    if k not in _RESULTS:
        _RESULTS[k] = CRITERIA[k - 1]()
    return _RESULTS[k]


def _line(k, ok, detail):
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES[k] = line
    print(line)
    return line


@pytest.mark.parametrize("k", range(1, 11))
def test_criterion(k):
    ok, detail, _ = _result(k)
    _line(k, ok, detail)
    assert ok, detail


def crit_11():
    mismatched = []
    for k in range(1, 11):
        _, _, first = _result(k)
        salpha.clear_cache()
        _, _, again = CRITERIA[k - 1]()
        if list(map(float, first)) != list(map(float, again)):
            mismatched.append(k)
    return not mismatched, f"reruns identical (mismatches: {mismatched or 'none'})", []


def test_criterion_11_determinism():
    ok, detail, _ = crit_11()
    _line(11, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    for k in range(1, 11):
        ok, detail, _ = _result(k)
        _line(k, ok, detail)
    ok, detail, _ = crit_11()
    _line(11, ok, detail)
