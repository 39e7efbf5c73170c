"""Affine HLS functionals and verification of the inequality chains.

The middle term |S_alpha(f,h)| and the HLS integral are always computed by the
polar route,

    int int f(x) h(y) ||x - y||_K^(alpha-n) dx dy = int_{S^{n-1}} rho_K^(n-alpha) rho_{S_alpha}^alpha,

which carries no singularity.  The seeded Monte Carlo estimator of the double
integral is kept as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .functions import (
    DEFAULT_CONFIG,
    Correlator,
    FunctionError,
    Indicator,
    QuadConfig,
    TestFunction,
    _lens,
    concavity_check,
    power_integral,
    product_integral,
    transform,
)
from .geometry import Ball, Box, SphereGrid, StarBody
from .reports import ChainReport, Relation
from .salpha import AlphaBodyResult, body_volume, s_alpha_body, sphere_sum
from .specialfns import (
    DomainError,
    HlsParams,
    RegimeError,
    hls_constant_bound,
    hls_sharp_constant,
    reverse_constant_logconcave,
    reverse_constant_sconcave,
    sphere_area,
    unit_ball_volume,
)


@dataclass
class HlsValue:
    value: float
    error: float
    method: str
    metadata: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def _middle_term(res: AlphaBodyResult, alpha: float) -> tuple[float, float]:
    n = res.grid.dim
    vol, err = body_volume(res)
    m = n * unit_ball_volume(n) ** ((n - alpha) / n) * vol ** (alpha / n)
    return m, m * (alpha / n) * err / vol


def _polar_integral(res: AlphaBodyResult, K: StarBody | None, alpha: float) -> tuple[float, float]:
    g = res.grid
    n = g.dim
    rho = res.radii
    rk = np.ones(len(g)) if K is None else np.asarray(K.radial(g.nodes), dtype=float)
    wk = np.exp((n - alpha) * np.log(rk))
    v, e = sphere_sum(wk * rho**alpha, g)
    e_nodes = float(np.sum(g.weights * wk * alpha * rho ** (alpha - 1) * res.errors))
    return v, e + e_nodes


def _with_error(fn, cfg: QuadConfig) -> tuple[float, float]:
    """fn(cfg) and its change under a coarser spatial rule."""
    hi = fn(cfg)
    lo = fn(replace(cfg, nodes_per_axis=max(3, math.ceil(0.7 * cfg.nodes_per_axis))))
    return hi, abs(hi - lo)


def _power(f: TestFunction, p: float, cfg: QuadConfig) -> tuple[float, float]:
    v = f.power_integral(p)
    if v is not None:
        return float(v), 0.0
    return _with_error(lambda c: power_integral(f, p, c), cfg)


def _norm(f, p, cfg) -> tuple[float, float]:
    v, e = _power(f, p, cfg)
    return v ** (1.0 / p), v ** (1.0 / p) * e / (p * v) if v > 0 else 0.0


def _chain_tol(values, cfg: QuadConfig) -> float:
    return cfg.abs_tol + cfg.chain_rel_tol * max(abs(v) for v in values)


def _equality_flags(rep: ChainReport, cfg: QuadConfig) -> ChainReport:
    rep.flags["near_equality"] = [bool(g < cfg.equality_gap) for g in rep.relative_gaps]
    rep.flags["equality_gap_threshold"] = cfg.equality_gap
    return rep


def _fn_meta(f, h, cfg, grid=None, **extra) -> dict:
    d = {"f": f.to_dict(), "h": h.to_dict(), "config": cfg.to_dict(), "seed": cfg.seed}
    if grid is not None:
        d["grid"] = {"dim": grid.dim, "nodes": len(grid)}
    d.update(extra)
    return d


# --------------------------------------------------------------------------
# the functional


def _direct_mc(f, h, K, alpha, cfg: QuadConfig) -> tuple[float, float]:
    n = f.dim
    N = cfg.mc_samples
    rng = cfg.rng("hls-direct", n, int(round(alpha * 1e6)))
    mass = power_integral(h, 1.0, cfg)
    x = h.sample(rng, N)
    if n == 1:
        xi = np.where(rng.random(N) < 0.5, 1.0, -1.0)[:, None]
    else:
        z = rng.standard_normal((N, n))
        xi = z / np.linalg.norm(z, axis=1, keepdims=True)
    # radial stratification around the diagonal x = y: u ~ Beta(kappa, 1)
    # stratified in u^kappa, t = s u / (1 - u)
    kappa = 0.5 * min(alpha, n)
    s = max(f.scale, h.scale)
    w = (rng.permutation(N) + rng.random(N)) / N
    u = w ** (1.0 / kappa)
    u = np.minimum(u, 1.0 - 1e-16)
    t = s * u / (1.0 - u)
    dens = kappa * u ** (kappa - 1.0) * s / (s + t) ** 2
    rk = np.ones(N) if K is None else np.asarray(K.radial(xi), dtype=float)
    vals = f(x + t[:, None] * xi) * np.exp((alpha - 1.0) * np.log(t)) * rk ** (n - alpha) / dens
    vals *= mass * sphere_area(n)
    mean = float(np.mean(vals))
    err = cfg.mc_z * float(np.std(vals, ddof=1)) / math.sqrt(N)
    return mean, err


def hls_functional(
    f: TestFunction, h: TestFunction, K: StarBody | None, alpha: float,
    cfg: QuadConfig = DEFAULT_CONFIG, method: str = "polar", grid: SphereGrid | None = None,
    result: AlphaBodyResult | None = None,
) -> HlsValue:
    """int int f(x) h(y) ||x - y||_K^(alpha - n) dx dy; K = None means the Euclidean ball."""
    if f.dim != h.dim or (K is not None and K.dim != f.dim):
        raise FunctionError("dimension mismatch")
    n = f.dim
    if not alpha > 0 or alpha == n:
        raise DomainError("alpha must be positive and different from n")
    if method == "polar":
        if result is None:
            grid = SphereGrid.make(n, cfg.polar_resolution) if grid is None else grid
            result = s_alpha_body(f, h, alpha, grid, cfg)
        v, e = _polar_integral(result, K, alpha)
        return HlsValue(v, e, "polar", {"grid_nodes": len(result.grid)})
    if method == "direct-mc":
        v, e = _direct_mc(f, h, K, alpha, cfg)
        return HlsValue(v, e, "direct-mc", {"samples": cfg.mc_samples, "seed": cfg.seed})
    raise DomainError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# forward and reversed HLS chains


def _hls_chain(f, h, params: HlsParams, grid, cfg, regime: str) -> ChainReport:
    params.require(regime)
    n, alpha = params.n, params.alpha
    if f.dim != n or h.dim != n or grid.dim != n:
        raise RegimeError("dimension of f, h or grid differs from n")
    res = s_alpha_body(f, h, alpha, grid, cfg)
    mid, e_mid = _middle_term(res, alpha)
    hls, e_hls = _polar_integral(res, None, alpha)
    flags = {}
    if params.is_diagonal:
        c = hls_sharp_constant(n, alpha)
        flags["left_constant"] = "sharp"
        flags["constant_assumption"] = "left constant taken as the sharp HLS constant at p = r"
    elif regime == "thm11":
        c = hls_constant_bound(params)
        flags["left_constant"] = "upper bound, not sharp"
    else:
        c = None
        flags["left_constant"] = "unavailable off the diagonal p = r"
    direction = ">=" if regime == "thm11" else "<="
    labels, values, errors = ["middle", "hls_integral"], [mid, hls], [e_mid, e_hls]
    relations = [Relation(0, 1, direction)]
    if c is not None:
        nf, enf = _norm(f, params.p, cfg)
        nh, enh = _norm(h, params.r, cfg)
        left = c * nf * nh
        e_left = c * (enf * nh + nf * enh)
        labels = ["constant_norms"] + labels
        values = [left] + values
        errors = [e_left] + errors
        relations = [Relation(0, 1, direction), Relation(1, 2, direction)]
        flags["constant"] = c
    rep = ChainReport(
        labels=labels, values=values, error_bars=errors, relations=relations,
        abs_tol=_chain_tol(values, cfg), flags=flags,
        metadata=_fn_meta(f, h, cfg, grid, n=n, alpha=alpha, p=params.p, r=params.r, chain=regime),
    ).evaluate()
    rep.flags["node_flags"] = sorted({x for x in res.flags if x})
    return _equality_flags(rep, cfg)


def verify_theorem_1_1(f, h, params: HlsParams, grid: SphereGrid, cfg: QuadConfig = DEFAULT_CONFIG) -> ChainReport:
    """C ||f||_p ||h||_r >= n w_n^((n-a)/n) |S_a|^(a/n) >= int int f h |x-y|^(a-n), 0 < a < n."""
    return _hls_chain(f, h, params, grid, cfg, "thm11")


def verify_theorem_1_2(f, h, params: HlsParams, grid: SphereGrid, cfg: QuadConfig = DEFAULT_CONFIG) -> ChainReport:
    """The reversed chain for a > n and 0 < p, r < 1 (L^p quasi-norms)."""
    return _hls_chain(f, h, params, grid, cfg, "thm12")


# --------------------------------------------------------------------------
# log-concave reverse chain and the s-concave corollary


def _reverse_terms(f, h, alpha, cfg):
    n = f.dim
    q = 2.0 * n / (n + alpha)
    beta = (n - alpha) / (n + alpha)
    l1f, e1f = _power(f, 1.0, cfg)
    l1h, e1h = _power(h, 1.0, cfg)
    ip, eip = _with_error(lambda c: product_integral(f, h, lambda a, b: a * b, c), cfg)

    def mixed(g1, g2, c):
        # int g1 g2^beta = ||g1^((n+a)/2n) g2^((n-a)/2n)||_q^q
        def fn(a, b):
            with np.errstate(divide="ignore", invalid="ignore"):
                out = a * np.where(b > 0, b, np.nan) ** beta
            return np.where(a > 0, np.where(b > 0, out, np.inf if beta < 0 else 0.0), 0.0)

        return product_integral(g1, g2, fn, c)

    m1, em1 = _with_error(lambda c: mixed(f, h, c), cfg)
    m2, em2 = _with_error(lambda c: mixed(h, f, c), cfg)
    e = alpha / n
    t2 = (l1f * l1h) ** e * ip ** (1.0 - e)
    e_t2 = t2 * (e * (e1f / l1f + e1h / l1h) + abs(1.0 - e) * eip / ip)
    t3 = (m1 * m2) ** (1.0 / q)
    e_t3 = t3 * (em1 / m1 + em2 / m2) / q if math.isfinite(t3) else math.inf
    return (t2, e_t2), (t3, e_t3), {"l1_f": l1f, "l1_h": l1h, "int_fh": ip, "q": q}


def _reverse_chain(f, h, alpha, grid, cfg, const, label, cls, s=None) -> ChainReport:
    n = f.dim
    if h.dim != n or grid.dim != n:
        raise FunctionError("dimension mismatch")
    if not alpha > 0 or alpha == n:
        raise DomainError("alpha must be positive and different from n")
    res = s_alpha_body(f, h, alpha, grid, cfg)
    vol, e_vol = body_volume(res)
    t1 = const * vol ** (alpha / n)
    e_t1 = t1 * (alpha / n) * e_vol / vol
    (t2, e_t2), (t3, e_t3), parts = _reverse_terms(f, h, alpha, cfg)
    d = ">=" if alpha < n else "<="
    values = [t1, t2, t3]
    rep = ChainReport(
        labels=[label, "l1_mixed", "lq_mixed"],
        values=values,
        error_bars=[e_t1, e_t2, e_t3],
        relations=[Relation(0, 1, d), Relation(1, 2, d)],
        abs_tol=_chain_tol(values, cfg),
        flags={"constant": const},
        metadata=_fn_meta(f, h, cfg, grid, n=n, alpha=alpha, s=s, chain=cls, **parts),
    ).evaluate()
    # hypotheses are advisory: report, do not gate
    rep.flags["even"] = bool(f.even and h.even)
    concave = []
    for g in (f, h):
        try:
            cr = concavity_check(g, "log" if s is None else "s", s=s, seed=cfg.seed)
            concave.append(bool(cr.passed))
        except (FunctionError, DomainError):
            concave.append(None)
    rep.flags["concave"] = concave
    if f is h or f.to_dict() == h.to_dict():
        # f = h: the chain collapses to the two-term forms in ||f||_1, ||f||_2, ||f||_q
        q = parts["q"]
        l1 = parts["l1_f"]
        l2sq, _ = _power(f, 2.0, cfg)
        lq, _ = _norm(f, q, cfg)
        r2 = abs(t2 - l1 ** (2 * alpha / n) * l2sq ** (1 - alpha / n)) / t2
        r3 = abs(t3 - lq**2) / t3
        rep.flags["reduction_residual"] = max(r2, r3)
    return _equality_flags(rep, cfg)


def verify_theorem_1_3(f, h, alpha: float, grid: SphereGrid, cfg: QuadConfig = DEFAULT_CONFIG) -> ChainReport:
    n = f.dim
    return _reverse_chain(f, h, alpha, grid, cfg, reverse_constant_logconcave(n, alpha), "gamma_volume", "thm13")


def verify_corollary_sconcave(f, h, alpha: float, s: float, grid: SphereGrid, cfg: QuadConfig = DEFAULT_CONFIG) -> ChainReport:
    n = f.dim
    return _reverse_chain(f, h, alpha, grid, cfg, reverse_constant_sconcave(n, alpha, s), "beta_volume", "corollary-s", s=s)


# --------------------------------------------------------------------------
# Riesz rearrangement


def _as_indicator(A) -> TestFunction:
    return Indicator(A) if isinstance(A, StarBody) else A


def _reflect(f: TestFunction) -> TestFunction:
    if isinstance(f, Indicator):
        b = f.body
        if isinstance(b, Box):
            return Indicator(Box(b.dim, tuple(-np.array(b.hi)), tuple(-np.array(b.lo))))
        if isinstance(b, Ball):
            c = None if b.center is None else tuple(-np.asarray(b.center, dtype=float))
            return Indicator(Ball(b.dim, b.radius, c))
    return transform(f, -np.eye(f.dim))


def _ellipsoid_frame(f: TestFunction):
    """(center, M) with f = 1 on center + M B^n, or None."""
    if isinstance(f, Indicator) and isinstance(f.body, Ball):
        b = f.body
        c = np.zeros(b.dim) if b.center is None else np.asarray(b.center, dtype=float)
        return c, b.radius * np.eye(b.dim)
    inner = getattr(f, "inner", None)
    if inner is not None and hasattr(f, "matrix"):
        fr = _ellipsoid_frame(inner)
        if fr is not None:
            c, m = fr
            return f.matrix @ c + f.shift, f.matrix @ m
    return None


def _burchard(A, B, C) -> bool:
    frames = [_ellipsoid_frame(g) for g in (A, B, C)]
    if any(fr is None for fr in frames):
        return False
    (ca, ma), (cb, mb), (cc, mc) = frames
    # same shape D up to scale: M = r M_D
    ra, rb, rc = (abs(np.linalg.det(m)) ** (1.0 / len(ca)) for m in (ma, mb, mc))
    d = ma / ra
    if not (np.allclose(mb / rb @ (mb / rb).T, d @ d.T) and np.allclose(mc / rc @ (mc / rc).T, d @ d.T)):
        return False
    # 1_A(y) 1_B(x - y) 1_C(x): centres must satisfy c_C = c_A + c_B
    return bool(np.allclose(cc, ca + cb, atol=1e-12) and abs(ra - rb) < rc < ra + rb)


def _symmetrized_triple(a, b, c, n, q=64) -> float:
    # int_{|x|<c} |B_a ∩ (x - B_b)| dx = |S^{n-1}| int_0^c lens(a, b, r) r^{n-1} dr
    cuts = sorted({0.0, c, *[x for x in (abs(a - b), a + b) if 0 < x < c]})
    x, w = np.polynomial.legendre.leggauss(q)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        r = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        total += 0.5 * (hi - lo) * float(np.dot(w, _lens(a, b, r, n) * r ** (n - 1)))
    return sphere_area(n) * total


def riesz_rearrangement_check(A, B, C, cfg: QuadConfig = DEFAULT_CONFIG, samples: int | None = None) -> ChainReport:
    """int int 1_A(y) 1_B(x - y) 1_C(x) dx dy <= the same for the centred balls A*, B*, C*."""
    A, B, C = (_as_indicator(g) for g in (A, B, C))
    n = A.dim
    if not (B.dim == n and C.dim == n):
        raise FunctionError("dimension mismatch")
    N = samples or max(1000, cfg.mc_samples // 10)
    vols = [power_integral(g, 1.0, cfg) for g in (A, B, C)]
    if not all(math.isfinite(v) and v > 0 for v in vols):
        raise DomainError("sets must have positive finite measure")
    rng = cfg.rng("riesz", n)
    x = C.sample(rng, N)
    # |A ∩ (x - B)| = G(1_{-B}, 1_A)(-x)
    inner = Correlator(_reflect(B), A, cfg).many(-x)
    lhs = vols[2] * float(np.mean(inner))
    e_lhs = vols[2] * cfg.mc_z * float(np.std(inner, ddof=1)) / math.sqrt(N)
    radii = [(v / unit_ball_volume(n)) ** (1.0 / n) for v in vols]
    rhs = _symmetrized_triple(radii[0], radii[1], radii[2], n)
    values = [lhs, rhs]
    rep = ChainReport(
        labels=["triple_integral", "symmetrized"],
        values=values,
        error_bars=[e_lhs, 0.0],
        relations=[Relation(0, 1, "<=")],
        abs_tol=_chain_tol(values, cfg),
        metadata={"sets": [g.to_dict() for g in (A, B, C)], "radii": radii, "samples": N, "seed": cfg.seed,
                  "config": cfg.to_dict()},
    ).evaluate()
    rep.flags["burchard_configuration"] = _burchard(A, B, C)
    rep.flags["equality_within_error"] = bool(abs(lhs - rhs) <= e_lhs + rep.abs_tol)
    return rep


# --------------------------------------------------------------------------
# representation identity


def check_representation_identity(
    f, h, K: StarBody | None, alpha: float, grid: SphereGrid, cfg: QuadConfig = DEFAULT_CONFIG,
) -> ChainReport:
    """Direct Monte Carlo double integral against n V_alpha(K, S_alpha(f,h))."""
    mc = hls_functional(f, h, K, alpha, cfg, "direct-mc")
    pol = hls_functional(f, h, K, alpha, cfg, "polar", grid=grid)
    values = [mc.value, pol.value]
    return ChainReport(
        labels=["direct_mc", "polar"],
        values=values,
        error_bars=[mc.error, pol.error],
        relations=[Relation(0, 1, "=")],
        abs_tol=_chain_tol(values, cfg),
        metadata=_fn_meta(f, h, cfg, grid, alpha=alpha, K=None if K is None else K.to_dict()),
    ).evaluate()

