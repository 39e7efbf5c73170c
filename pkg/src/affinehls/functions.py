"""Test-function families on R^n and the integrals built from them.

Every family knows how to evaluate itself, how to cut its support into cells
where it is smooth (see :mod:`affinehls.quadrature`), how to draw samples from
its normalized density, and which integrals it has in closed form.

The extremal family is f(x) = a (b^2 + |phi(x - x0)|^2)^(-(n+alpha)/2), i.e.
the square sits on the norm |phi(x - x0)|.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull

from . import quadrature as qd
from .geometry import (
    Ball,
    Box,
    CrossPolytope,
    Ellipsoid,
    LinearImage,
    PolytopeBody,
    SimplexGauge,
    StarBody,
    body_from_dict,
)
from .specialfns import DomainError, log_beta, log_gamma, unit_ball_volume


class FunctionError(ValueError):
    pass


class TruncationWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class QuadConfig:
    """Numerical budgets.  Every random draw in the package is seeded from ``seed``.

    ``nodes_per_axis`` is the Gauss order used inside each cell, ``t_nodes``
    the order per t-panel and ``t_panels`` the minimum panel count on the ray.
    ``box_radius`` bounds sampling boxes for functions with unbounded support.
    ``chain_rel_tol`` is the relative slack added to every chain comparison on
    top of the reported error bars; ``equality_gap`` is the relative gap under
    which an inequality is flagged as attained.
    """

    box_radius: float = 40.0
    nodes_per_axis: int = 10
    t_max: float = 1e6
    t_panels: int = 6
    t_nodes: int = 12
    mc_samples: int = 200_000
    seed: int = 20240917
    rel_tol: float = 1e-3
    abs_tol: float = 1e-10
    polar_resolution: int | None = None
    mc_z: float = 4.0
    levels: int = 256
    chain_rel_tol: float = 1e-6
    equality_gap: float = 0.02

    def __post_init__(self):
        for name in ("box_radius", "t_max"):
            if not getattr(self, name) > 0:
                raise FunctionError(f"{name} must be positive")
        for name in ("nodes_per_axis", "t_panels", "t_nodes", "mc_samples", "levels"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise FunctionError(f"{name} must be a positive integer")
        if not (0 < self.rel_tol < 1 and 0 < self.abs_tol < 1):
            raise FunctionError("rel_tol and abs_tol must lie in (0, 1)")
        if not (0 <= int(self.seed) < 2**64):
            raise FunctionError("seed must be a 64-bit unsigned integer")

    @classmethod
    def high(cls, **kw) -> "QuadConfig":
        base = dict(nodes_per_axis=16, t_nodes=20, t_panels=10, mc_samples=1_000_000, rel_tol=2e-4, equality_gap=0.005)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "QuadConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise FunctionError(f"unknown QuadConfig fields: {sorted(unknown)}")
        return cls(**d)

    def rng(self, *keys) -> np.random.Generator:
        """Philox stream keyed by (seed, *keys); strings are hashed stably."""
        ints = [int(self.seed) & 0xFFFFFFFF, int(self.seed) >> 32]
        for k in keys:
            ints.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(ints)))


DEFAULT_CONFIG = QuadConfig()


# --------------------------------------------------------------------------
# helpers


def _points(x, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce to an (m, dim) batch; report whether a single point was given.

    In one dimension a flat array is a batch of scalars, except shape (1,).
    """
    x = np.asarray(x, dtype=float)
    if dim == 1:
        if x.ndim == 0 or x.shape == (1,):
            return x.reshape(1, 1), True
        if x.ndim == 1:
            return x[:, None], False
    elif x.ndim == 1:
        if x.shape != (dim,):
            raise FunctionError(f"point dimension {x.shape[0]} does not match function dimension {dim}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != dim:
        raise FunctionError(f"points of shape {x.shape} do not match function dimension {dim}")
    return x, False


def _hull_ordered(points: np.ndarray) -> np.ndarray:
    if points.shape[1] == 1:
        return np.array([[points.min()], [points.max()]])
    hull = ConvexHull(points)
    return points[hull.vertices]


def _polytope_vertices(body: StarBody) -> np.ndarray | None:
    if isinstance(body, CrossPolytope):
        return body.vertices
    if isinstance(body, Box):
        if not body.bounded:
            return None
        return body.vertices
    if isinstance(body, PolytopeBody):
        return np.asarray(body.vertices, dtype=float)
    if isinstance(body, LinearImage):
        v = _polytope_vertices(body.inner)
        return None if v is None else v @ body.matrix.T
    return None


def _halfspaces(vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if vertices.shape[1] == 1:
        return np.array([[1.0], [-1.0]]), np.array([vertices.max(), -vertices.min()])
    hull = ConvexHull(vertices)
    eq = hull.equations
    key = np.round(eq, 12)
    _, idx = np.unique(key, axis=0, return_index=True)
    eq = eq[np.sort(idx)]
    return eq[:, :-1], -eq[:, -1]


def _gauge_facets(body: StarBody) -> list[np.ndarray]:
    """Facet vertex sets of a polytope gauge body not passing through the origin.

    On the cone over each such facet the gauge is linear.  3-D facets come back
    triangulated.
    """
    v = _polytope_vertices(body)
    if v is None:
        raise FunctionError("gauge-based families need a polytope gauge body")
    if body.dim == 1:
        return [p[None, :] for p in v if abs(p[0]) > 1e-14]
    hull = ConvexHull(v)
    out = []
    for simplex, eq in zip(hull.simplices, hull.equations):
        if -eq[-1] > 1e-12:
            out.append(v[simplex])
    return out


def _cone_slab(facet: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if lo <= 0:
        v = np.vstack([np.zeros(facet.shape[1]), hi * facet])
    else:
        v = np.vstack([lo * facet, hi * facet])
    return _hull_ordered(v) if v.shape[1] == 2 else v


def _uniform_in_body(body: StarBody, rng: np.random.Generator, m: int) -> np.ndarray:
    n = body.dim
    if isinstance(body, Box):
        lo, hi = np.array(body.lo), np.array(body.hi)
        return lo + (hi - lo) * rng.random((m, n))
    if isinstance(body, (Ball, Ellipsoid)):
        z = rng.standard_normal((m, n))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        u = z * rng.random((m, 1)) ** (1.0 / n)
        if isinstance(body, Ball):
            c = np.zeros(n) if body.center is None else np.asarray(body.center, dtype=float)
            return c + body.radius * u
        return u @ body.sqrt_matrix.T
    if isinstance(body, SimplexGauge):
        lam = rng.dirichlet(np.ones(n + 1), size=m)
        return lam @ body.vertices
    if isinstance(body, LinearImage):
        return _uniform_in_body(body.inner, rng, m) @ body.matrix.T
    v = _polytope_vertices(body)
    if v is None:
        raise FunctionError(f"cannot sample from {type(body).__name__}")
    a, b = _halfspaces(v)
    lo, hi = v.min(axis=0), v.max(axis=0)
    out = []
    need = m
    while need > 0:
        x = lo + (hi - lo) * rng.random((2 * need + 16, n))
        x = x[np.all(x @ a.T <= b, axis=1)]
        out.append(x[:need])
        need -= len(out[-1])
    return np.concatenate(out)


def _body_measure(body: StarBody) -> float:
    v = body.exact_volume()
    if v is None:
        verts = _polytope_vertices(body)
        if verts is None:
            raise FunctionError("body volume unavailable")
        v = float(ConvexHull(verts).volume) if body.dim > 1 else float(np.ptp(verts))
    return v


def _body_is_symmetric(body: StarBody) -> bool:
    if isinstance(body, Ball):
        return body.center is None or np.allclose(body.center, 0.0)
    if isinstance(body, (Ellipsoid, CrossPolytope)):
        return True
    if isinstance(body, Box):
        return bool(np.allclose(np.array(body.lo), -np.array(body.hi)))
    if isinstance(body, LinearImage):
        return _body_is_symmetric(body.inner)
    v = _polytope_vertices(body)
    if v is None:
        return False
    vs = {tuple(np.round(p, 12)) for p in v}
    return all(tuple(np.round(-p, 12)) in vs for p in v)


def _body_cells(body: StarBody) -> list:
    n = body.dim
    if isinstance(body, LinearImage):
        return [c.affine(body.matrix) for c in _body_cells(body.inner)]
    if isinstance(body, Ball):
        c = np.zeros(n) if body.center is None else np.asarray(body.center, dtype=float)
        if n == 1:
            return [qd.PolyCell(np.array([[c[0] - body.radius], [c[0] + body.radius]]))]
        return [qd.EllipCell(c, body.radius * np.eye(n), (0.0, 1.0))]
    if isinstance(body, Ellipsoid):
        if n == 1:
            r = body.sqrt_matrix[0, 0]
            return [qd.PolyCell(np.array([[-r], [r]]))]
        return [qd.EllipCell(np.zeros(n), body.sqrt_matrix, (0.0, 1.0))]
    if isinstance(body, Box):
        if not body.bounded:
            raise FunctionError("unbounded box has no finite cell decomposition")
        return [qd.box_cell(body.lo, body.hi)]
    v = _polytope_vertices(body)
    if v is None:
        raise FunctionError(f"no cell decomposition for {type(body).__name__}")
    return [qd.PolyCell(_hull_ordered(v))]


def _body_kinks(body: StarBody):
    """(vertices, A, b, round) describing the jump set of an indicator."""
    n = body.dim
    if isinstance(body, Ball) and n > 1:
        c = np.zeros(n) if body.center is None else np.asarray(body.center, dtype=float)
        return np.zeros((0, n)), np.zeros((0, n)), np.zeros(0), [(c, float(body.radius))]
    if isinstance(body, (Ball, Ellipsoid)) and n == 1:
        cell = _body_cells(body)[0]
        v = cell.vertices
        a, b = _halfspaces(v)
        return v, a, b, []
    if isinstance(body, Ellipsoid) or (isinstance(body, LinearImage) and _polytope_vertices(body) is None):
        return np.zeros((0, n)), np.zeros((0, n)), np.zeros(0), []
    v = _polytope_vertices(body)
    if v is None:
        return np.zeros((0, n)), np.zeros((0, n)), np.zeros(0), []
    a, b = _halfspaces(v)
    return _hull_ordered(v) if n > 1 else v, a, b, []


def _no_kinks(n):
    return np.zeros((0, n)), np.zeros((0, n)), np.zeros(0), []


# --------------------------------------------------------------------------
# families


class TestFunction:
    """Nonnegative function on R^n.  Instances are immutable."""

    __test__ = False  # keep pytest from collecting this class

    dim: int
    family = "abstract"

    # -- required ------------------------------------------------------
    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cells(self) -> list:
        raise NotImplementedError

    @property
    def sup(self) -> float:
        raise NotImplementedError

    # -- optional closed forms -------------------------------------------
    def power_integral(self, p: float) -> float | None:
        """int f^p, or None when no closed form is known."""
        return None

    def superlevel_exact(self, t: float) -> float | None:
        return None

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        raise FunctionError(f"{self.family} has no sampler")

    @property
    def even(self) -> bool:
        return False

    @property
    def decay(self) -> float:
        """d with f = O(|x|^-d) at infinity; inf for compact or exponential decay."""
        return math.inf

    @property
    def scale(self) -> float:
        """Characteristic length of the bulk of f."""
        lo, hi = qd.cells_bbox(self.cells())
        return float(np.max(hi - lo))

    def kinks(self):
        """Jump set: (vertices, A, b, round pieces [(center, radius)])."""
        return _no_kinks(self.dim)

    def bounding_box(self, cfg: QuadConfig = DEFAULT_CONFIG):
        lo, hi = qd.cells_bbox(self.cells())
        r = cfg.box_radius
        return np.where(np.isfinite(lo), lo, -r), np.where(np.isfinite(hi), hi, r)

    # -- generic ---------------------------------------------------------
    def __call__(self, x):
        pts, single = _points(x, self.dim)
        out = np.maximum(self._eval(pts), 0.0)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        raise NotImplementedError

    def mass(self, cfg: QuadConfig = DEFAULT_CONFIG) -> float:
        return lp_norm(self, 1.0, cfg)


@dataclass(frozen=True, eq=False)
class HlsExtremal(TestFunction):
    dim: int
    a: float = 1.0
    b: float = 1.0
    phi: np.ndarray | None = None
    center: np.ndarray | None = None
    alpha: float = 1.0
    family = "hls-extremal"

    def __post_init__(self):
        n = self.dim
        phi = np.eye(n) if self.phi is None else np.atleast_2d(np.asarray(self.phi, dtype=float))
        c = np.zeros(n) if self.center is None else np.atleast_1d(np.asarray(self.center, dtype=float))
        if phi.shape != (n, n) or abs(np.linalg.det(phi)) < 1e-14:
            raise FunctionError("phi must be an invertible n x n matrix")
        if c.shape != (n,):
            raise FunctionError("center must be a point in R^n")
        if not self.a >= 0 or self.b == 0:
            raise FunctionError("need a >= 0 and b != 0")
        if not self.alpha > 0:
            raise FunctionError("extremal family needs alpha > 0")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "center", c)

    @property
    def exponent(self) -> float:
        return 0.5 * (self.dim + self.alpha)

    def _eval(self, x):
        u = (x - self.center) @ self.phi.T
        return self.a * (self.b**2 + np.einsum("ij,ij->i", u, u)) ** (-self.exponent)

    @cached_property
    def _cellmat(self):
        return abs(self.b) * np.linalg.inv(self.phi)

    def cells(self):
        return [qd.EllipCell(self.center, self._cellmat, (0.0, 0.5, 1, 2, 4, 8, 16, 32), tail=True, hard=False)]

    @property
    def sup(self):
        return self.a * abs(self.b) ** (-2 * self.exponent)

    def power_integral(self, p):
        n = self.dim
        g = p * self.exponent
        if g <= 0.5 * n:
            return math.inf
        if self.a == 0:
            return 0.0
        log_i = p * math.log(self.a)
        log_i += (n - 2 * g) * math.log(abs(self.b)) + 0.5 * n * math.log(math.pi)
        log_i += log_gamma(g - 0.5 * n) - log_gamma(g) - math.log(abs(np.linalg.det(self.phi)))
        return math.exp(log_i)

    def superlevel_exact(self, t):
        if t >= self.sup or self.a == 0:
            return 0.0
        r2 = (t / self.a) ** (-1.0 / self.exponent) - self.b**2
        return unit_ball_volume(self.dim) * r2 ** (0.5 * self.dim) / abs(np.linalg.det(self.phi))

    def sample(self, rng, m):
        n = self.dim
        z = rng.standard_normal((m, n))
        w = rng.chisquare(self.alpha, size=(m, 1))
        u = abs(self.b) * z / np.sqrt(w)
        return self.center + u @ np.linalg.inv(self.phi).T

    @property
    def even(self):
        return bool(np.allclose(self.center, 0.0))

    @property
    def decay(self):
        return 2 * self.exponent

    @property
    def scale(self):
        return float(abs(self.b) * np.linalg.norm(np.linalg.inv(self.phi), 2))

    def bounding_box(self, cfg=DEFAULT_CONFIG):
        r = min(cfg.box_radius, 64 * self.scale)
        return self.center - r, self.center + r

    def to_dict(self):
        return {
            "family": self.family,
            "dim": self.dim,
            "a": self.a,
            "b": self.b,
            "phi": self.phi.tolist(),
            "center": self.center.tolist(),
            "alpha": self.alpha,
        }


# the gauge cone pieces are cut into slabs so exponential decay stays well resolved
_EXP_SLABS = (0.0, 1.5, 4.0, 9.0, 18.0, 30.0, 45.0)
_PEAK_SLABS = (0.0, 0.5, 0.8, 0.95, 1.0)


@dataclass(frozen=True, eq=False)
class SimplexExponential(TestFunction):
    """a exp(-||x - x0||_Delta) for a polytope gauge body Delta containing 0."""

    dim: int
    a: float = 1.0
    body: StarBody | None = None
    center: np.ndarray | None = None
    family = "simplex-exp"

    def __post_init__(self):
        n = self.dim
        body = SimplexGauge.standard(n) if self.body is None else self.body
        c = np.zeros(n) if self.center is None else np.atleast_1d(np.asarray(self.center, dtype=float))
        if body.dim != n or c.shape != (n,):
            raise FunctionError("dimension mismatch")
        if not self.a >= 0:
            raise FunctionError("a must be nonnegative")
        object.__setattr__(self, "body", body)
        object.__setattr__(self, "center", c)

    @cached_property
    def _facets(self):
        return _gauge_facets(self.body)

    @cached_property
    def _body_volume(self):
        return _body_measure(self.body)

    def _eval(self, x):
        g = np.asarray(self.body.gauge(x - self.center), dtype=float)
        with np.errstate(over="ignore"):
            return self.a * np.exp(-g)

    def cells(self):
        out = []
        for lo, hi in zip(_EXP_SLABS[:-1], _EXP_SLABS[1:]):
            for fac in self._facets:
                out.append(qd.PolyCell(_cone_slab(fac, lo, hi) + self.center))
        return out

    @property
    def sup(self):
        return self.a

    def power_integral(self, p):
        # int e^{-p||x||_K} = n! |K| / p^n
        return self.a**p * math.factorial(self.dim) * self._body_volume / p**self.dim

    def superlevel_exact(self, t):
        if t >= self.a:
            return 0.0
        return self._body_volume * math.log(self.a / t) ** self.dim

    def sample(self, rng, m):
        return self.center + _gauge_radial_sample(self._facets, self.dim, rng, m, lambda k: rng.gamma(self.dim, size=k))

    @property
    def even(self):
        return bool(np.allclose(self.center, 0.0)) and _body_is_symmetric(self.body)

    @property
    def scale(self):
        v = _polytope_vertices(self.body)
        return float(np.max(np.ptp(v, axis=0)))

    def kinks(self):
        # jumps only across cone faces through the apex
        n = self.dim
        if self.body.contains(np.zeros(n)) and not _origin_on_boundary(self.body):
            return _no_kinks(n)
        v = _polytope_vertices(self.body)
        a, b = _halfspaces(v)
        through = np.abs(b) <= 1e-12
        a = a[through]
        return self.center[None, :], a, a @ self.center, []

    def bounding_box(self, cfg=DEFAULT_CONFIG):
        lo, hi = qd.cells_bbox(self.cells())
        return lo, hi

    def to_dict(self):
        return {"family": self.family, "dim": self.dim, "a": self.a, "body": self.body.to_dict(),
                "center": self.center.tolist()}


def _origin_on_boundary(body) -> bool:
    v = _polytope_vertices(body)
    a, b = _halfspaces(v)
    return bool(np.any(np.abs(b) <= 1e-12))


def _gauge_radial_sample(facets, n, rng, m, radial_draw):
    """x = g * (uniform point on a facet), facet chosen by cone volume."""
    vols = []
    for f in facets:
        if n == 1:
            vols.append(abs(f[0, 0]))
        else:
            vols.append(abs(np.linalg.det(f)) / math.factorial(n))
    vols = np.asarray(vols)
    k = rng.choice(len(facets), size=m, p=vols / vols.sum())
    g = radial_draw(m)
    out = np.empty((m, n))
    for j, f in enumerate(facets):
        sel = k == j
        cnt = int(sel.sum())
        if cnt == 0:
            continue
        if n == 1:
            out[sel] = f[0]
        else:
            lam = rng.dirichlet(np.ones(len(f)), size=cnt)
            out[sel] = lam @ f
    return out * g[:, None]


@dataclass(frozen=True, eq=False)
class SConcavePeak(TestFunction):
    """(1 - ||x||_Delta)_+^(1/s)."""

    dim: int
    s: float = 1.0
    body: StarBody | None = None
    family = "s-concave-peak"

    def __post_init__(self):
        body = SimplexGauge.standard(self.dim) if self.body is None else self.body
        if body.dim != self.dim:
            raise FunctionError("dimension mismatch")
        if not self.s > 0:
            raise FunctionError("s must be positive")
        object.__setattr__(self, "body", body)

    @cached_property
    def _facets(self):
        return _gauge_facets(self.body)

    @cached_property
    def _body_volume(self):
        return _body_measure(self.body)

    def _eval(self, x):
        g = np.asarray(self.body.gauge(x), dtype=float)
        base = np.clip(1.0 - g, 0.0, None)
        return base ** (1.0 / self.s)

    def cells(self):
        out = []
        for lo, hi in zip(_PEAK_SLABS[:-1], _PEAK_SLABS[1:]):
            for fac in self._facets:
                out.append(qd.PolyCell(_cone_slab(fac, lo, hi)))
        return out

    @property
    def sup(self):
        return 1.0

    def power_integral(self, p):
        n = self.dim
        return n * self._body_volume * math.exp(log_beta(n, p / self.s + 1.0))

    def superlevel_exact(self, t):
        if t >= 1.0:
            return 0.0
        return self._body_volume * (1.0 - t**self.s) ** self.dim

    def sample(self, rng, m):
        return _gauge_radial_sample(self._facets, self.dim, rng, m, lambda k: rng.beta(self.dim, 1.0 / self.s + 1.0, size=k))

    @property
    def even(self):
        return _body_is_symmetric(self.body)

    @property
    def scale(self):
        v = _polytope_vertices(self.body)
        return float(np.max(np.ptp(v, axis=0)))

    def kinks(self):
        v = _polytope_vertices(self.body)
        a, b = _halfspaces(v)
        return _hull_ordered(v) if self.dim > 1 else v, a, b, []

    def to_dict(self):
        return {"family": self.family, "dim": self.dim, "s": self.s, "body": self.body.to_dict()}


_GAUSS_BREAKS = (0.0, 1.5, 3.0, 4.5, 6.0, 8.5)


@dataclass(frozen=True, eq=False)
class Gaussian(TestFunction):
    """a exp(-(x-c)^T Sigma^{-1} (x-c) / 2)."""

    dim: int
    a: float = 1.0
    covariance: np.ndarray | None = None
    center: np.ndarray | None = None
    family = "gaussian"

    def __post_init__(self):
        n = self.dim
        cov = np.eye(n) if self.covariance is None else np.atleast_2d(np.asarray(self.covariance, dtype=float))
        c = np.zeros(n) if self.center is None else np.atleast_1d(np.asarray(self.center, dtype=float))
        if cov.shape != (n, n) or not np.allclose(cov, cov.T):
            raise FunctionError("covariance must be symmetric n x n")
        if np.min(np.linalg.eigvalsh(cov)) <= 0:
            raise FunctionError("covariance must be positive definite")
        if not self.a >= 0:
            raise FunctionError("a must be nonnegative")
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "center", c)

    @cached_property
    def _chol(self):
        return np.linalg.cholesky(self.covariance)

    @cached_property
    def _prec(self):
        return np.linalg.inv(self.covariance)

    def _eval(self, x):
        d = x - self.center
        return self.a * np.exp(-0.5 * np.einsum("ij,jk,ik->i", d, self._prec, d))

    def cells(self):
        return [qd.EllipCell(self.center, self._chol, _GAUSS_BREAKS, tail=False, hard=False)]

    @property
    def sup(self):
        return self.a

    def power_integral(self, p):
        n = self.dim
        return self.a**p * (2 * math.pi / p) ** (0.5 * n) * math.sqrt(np.linalg.det(self.covariance))

    def superlevel_exact(self, t):
        if t >= self.a:
            return 0.0
        r = math.sqrt(2.0 * math.log(self.a / t))
        return unit_ball_volume(self.dim) * r**self.dim * math.sqrt(np.linalg.det(self.covariance))

    def sample(self, rng, m):
        return self.center + rng.standard_normal((m, self.dim)) @ self._chol.T

    @property
    def even(self):
        return bool(np.allclose(self.center, 0.0))

    @property
    def scale(self):
        return float(math.sqrt(np.max(np.linalg.eigvalsh(self.covariance))))

    def to_dict(self):
        return {"family": self.family, "dim": self.dim, "a": self.a,
                "covariance": self.covariance.tolist(), "center": self.center.tolist()}


@dataclass(frozen=True, eq=False)
class Indicator(TestFunction):
    """1_E for a body or box E (boxes may sit anywhere; balls may carry a center)."""

    body: StarBody
    family = "indicator"

    @property
    def dim(self):
        return self.body.dim

    def _eval(self, x):
        b = self.body
        if isinstance(b, Box):
            lo, hi = np.array(b.lo), np.array(b.hi)
            return np.all((x >= lo) & (x <= hi), axis=1).astype(float)
        if isinstance(b, Ball) and b.center is not None:
            c = np.asarray(b.center, dtype=float)
            return (np.linalg.norm(x - c, axis=1) <= b.radius).astype(float)
        v = _polytope_vertices(b)
        if v is not None and not isinstance(b, CrossPolytope):
            a, bb = self._hs
            return np.all(x @ a.T <= bb + 1e-14 * (1 + np.abs(bb)), axis=1).astype(float)
        return (np.asarray(b.gauge(x)) <= 1.0).astype(float)

    @cached_property
    def _hs(self):
        return _halfspaces(_polytope_vertices(self.body))

    @property
    def bounded(self) -> bool:
        return not (isinstance(self.body, Box) and not self.body.bounded)

    def cells(self):
        return _body_cells(self.body)

    @property
    def sup(self):
        return 1.0

    @cached_property
    def measure(self) -> float:
        if not self.bounded:
            return math.inf
        return _body_measure(self.body)

    def power_integral(self, p):
        return self.measure

    def superlevel_exact(self, t):
        return self.measure if t <= 1.0 else 0.0

    def sample(self, rng, m):
        if not self.bounded:
            raise FunctionError("cannot sample an unbounded set")
        return _uniform_in_body(self.body, rng, m)

    @property
    def even(self):
        return _body_is_symmetric(self.body)

    def kinks(self):
        return _body_kinks(self.body)

    def to_dict(self):
        return {"family": self.family, "dim": self.dim, "body": self.body.to_dict()}


@dataclass(frozen=True, eq=False)
class GridSampled(TestFunction):
    """Multilinear interpolation of lattice values; zero outside the lattice box."""

    lo: np.ndarray
    spacing: np.ndarray
    values: np.ndarray
    family = "grid"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        sp = np.atleast_1d(np.asarray(self.spacing, dtype=float))
        if v.ndim != len(lo) or len(sp) != len(lo) or v.ndim not in (1, 2, 3):
            raise FunctionError("lattice shape, origin and spacing disagree")
        if np.any(sp <= 0) or np.any(np.array(v.shape) < 2):
            raise FunctionError("need positive spacing and at least 2 points per axis")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise FunctionError("grid values must be finite and nonnegative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "spacing", sp)

    @property
    def dim(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def hi(self):
        return self.lo + self.spacing * (np.array(self.shape) - 1)

    def _eval(self, x):
        n = self.dim
        g = (x - self.lo) / self.spacing
        inside = np.all((g >= 0) & (g <= np.array(self.shape) - 1), axis=1)
        i0 = np.clip(np.floor(g).astype(int), 0, np.array(self.shape) - 2)
        fr = np.clip(g - i0, 0.0, 1.0)
        out = np.zeros(len(x))
        for corner in np.ndindex(*([2] * n)):
            c = np.array(corner)
            w = np.prod(np.where(c == 1, fr, 1.0 - fr), axis=1)
            idx = tuple((i0 + c).T)
            out += w * self.values[idx]
        return np.where(inside, out, 0.0)

    def cells(self):
        # lattice cells grouped into at most 8 blocks per axis
        out = []
        edges = []
        for d in range(self.dim):
            k = self.shape[d] - 1
            nb = min(8, k)
            cuts = np.unique(np.round(np.linspace(0, k, nb + 1)).astype(int))
            edges.append(self.lo[d] + self.spacing[d] * cuts)
        for idx in np.ndindex(*[len(e) - 1 for e in edges]):
            blo = [edges[d][i] for d, i in enumerate(idx)]
            bhi = [edges[d][i + 1] for d, i in enumerate(idx)]
            out.append(qd.box_cell(blo, bhi))
        return out

    @property
    def sup(self):
        return float(self.values.max())

    def sample(self, rng, m):
        lo, hi = self.lo, self.hi
        top = self.sup
        out, need = [], m
        while need > 0:
            x = lo + (hi - lo) * rng.random((4 * need + 16, self.dim))
            keep = rng.random(len(x)) * top <= self._eval(x)
            out.append(x[keep][:need])
            need -= len(out[-1])
        return np.concatenate(out)

    def kinks(self):
        v = qd.box_cell(self.lo, self.hi).vertices
        a, b = _halfspaces(v)
        return v, a, b, []

    def to_dict(self):
        return {"family": self.family, "lo": self.lo.tolist(), "spacing": self.spacing.tolist(),
                "shape": list(self.shape), "values": self.values.tolist()}

    def header(self) -> dict:
        return {"dim": self.dim, "lo": self.lo.tolist(), "spacing": self.spacing.tolist(), "shape": list(self.shape)}

    def save(self, csv_path, json_path) -> None:
        """CSV rows: coordinates then value (C order); JSON header: the lattice."""
        with open(json_path, "w") as fh:
            json.dump(self.header(), fh, indent=2, sort_keys=True)
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{d}" for d in range(self.dim)] + ["value"])
            for idx in np.ndindex(*self.shape):
                x = self.lo + self.spacing * np.array(idx)
                w.writerow([repr(float(v)) for v in x] + [repr(float(self.values[idx]))])

    @classmethod
    def load(cls, csv_path, json_path) -> "GridSampled":
        with open(json_path) as fh:
            hdr = json.load(fh)
        lo = np.asarray(hdr["lo"], dtype=float)
        sp = np.asarray(hdr["spacing"], dtype=float)
        shape = tuple(int(s) for s in hdr["shape"])
        vals = np.full(shape, np.nan)
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        for row in rows[1:]:
            nums = [float(v) for v in row]
            idx = tuple(np.round((np.array(nums[:-1]) - lo) / sp).astype(int))
            vals[idx] = nums[-1]
        if np.isnan(vals).any():
            raise FunctionError("CSV does not cover every lattice point")
        return cls(lo, sp, vals)

    @classmethod
    def from_function(cls, f: TestFunction, lo, hi, shape) -> "GridSampled":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        axes = [np.linspace(a, b, k) for a, b, k in zip(lo, hi, shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
        vals = np.asarray(f(pts)).reshape(shape)
        return cls(lo, (hi - lo) / (np.array(shape) - 1), vals)


@dataclass(frozen=True, eq=False)
class Affine(TestFunction):
    """x -> inner(M^{-1}(x - shift)), used when a family is not closed under the map."""

    inner: TestFunction
    matrix: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        n = self.inner.dim
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        s = np.atleast_1d(np.asarray(self.shift, dtype=float))
        if m.shape != (n, n) or s.shape != (n,):
            raise FunctionError("map/shift dimension mismatch")
        if abs(np.linalg.det(m)) < 1e-14:
            raise FunctionError("map must be invertible")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "shift", s)

    @property
    def family(self):
        return self.inner.family

    @property
    def dim(self):
        return self.inner.dim

    @cached_property
    def _inv(self):
        return np.linalg.inv(self.matrix)

    @cached_property
    def _det(self):
        return abs(float(np.linalg.det(self.matrix)))

    def _eval(self, x):
        return self.inner._eval((x - self.shift) @ self._inv.T)

    def cells(self):
        return [c.affine(self.matrix, self.shift) for c in self.inner.cells()]

    @property
    def sup(self):
        return self.inner.sup

    def power_integral(self, p):
        v = self.inner.power_integral(p)
        return None if v is None else self._det * v

    def superlevel_exact(self, t):
        v = self.inner.superlevel_exact(t)
        return None if v is None else self._det * v

    def sample(self, rng, m):
        return self.inner.sample(rng, m) @ self.matrix.T + self.shift

    @property
    def even(self):
        return self.inner.even and bool(np.allclose(self.shift, 0.0))

    @property
    def decay(self):
        return self.inner.decay

    @property
    def scale(self):
        return self.inner.scale * float(np.linalg.norm(self.matrix, 2))

    def kinks(self):
        v, a, b, rnd = self.inner.kinks()
        v2 = v @ self.matrix.T + self.shift
        a2 = a @ self._inv
        b2 = b + a2 @ self.shift
        nrm = np.linalg.norm(a2, axis=1)
        keep = nrm > 0
        a2, b2 = a2[keep] / nrm[keep, None], b2[keep] / nrm[keep]
        rnd2 = []
        for c, r in rnd:
            if np.allclose(self.matrix.T @ self.matrix, (self._det ** (2 / self.dim)) * np.eye(self.dim)):
                rnd2.append((self.matrix @ c + self.shift, r * self._det ** (1 / self.dim)))
        return v2, a2, b2, rnd2

    def to_dict(self):
        return {"family": "affine", "inner": self.inner.to_dict(), "matrix": self.matrix.tolist(),
                "shift": self.shift.tolist()}


@dataclass(frozen=True, eq=False)
class Scaled(TestFunction):
    """c * inner (c > 0)."""

    inner: TestFunction
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise FunctionError("scale factor must be positive")

    @property
    def family(self):
        return self.inner.family

    @property
    def dim(self):
        return self.inner.dim

    def _eval(self, x):
        return self.c * self.inner._eval(x)

    def cells(self):
        return self.inner.cells()

    @property
    def sup(self):
        return self.c * self.inner.sup

    def power_integral(self, p):
        v = self.inner.power_integral(p)
        return None if v is None else self.c**p * v

    def superlevel_exact(self, t):
        return self.inner.superlevel_exact(t / self.c)

    def sample(self, rng, m):
        return self.inner.sample(rng, m)

    @property
    def even(self):
        return self.inner.even

    @property
    def decay(self):
        return self.inner.decay

    @property
    def scale(self):
        return self.inner.scale

    def kinks(self):
        return self.inner.kinks()

    def to_dict(self):
        return {"family": "scaled", "inner": self.inner.to_dict(), "c": self.c}


@dataclass(frozen=True, eq=False)
class Mixture(TestFunction):
    """Sum of components; integrals against other functions go through linearity."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps or len({c.dim for c in comps}) != 1:
            raise FunctionError("mixture needs components of one dimension")
        object.__setattr__(self, "components", comps)

    family = "mixture"

    @property
    def dim(self):
        return self.components[0].dim

    def _eval(self, x):
        return sum(c._eval(x) for c in self.components)

    def cells(self):
        # smooth cover of the union: tensor boxes over the joint bounding box
        lo, hi = qd.cells_bbox([c for comp in self.components for c in comp.cells()])
        k = 8
        edges = [np.linspace(a, b, k + 1) for a, b in zip(lo, hi)]
        out = []
        for idx in np.ndindex(*([k] * self.dim)):
            out.append(qd.box_cell([edges[d][i] for d, i in enumerate(idx)],
                                   [edges[d][i + 1] for d, i in enumerate(idx)]))
        return out

    @property
    def sup(self):
        return sum(c.sup for c in self.components)

    def sample(self, rng, m):
        masses = np.array([lp_norm(c, 1.0) for c in self.components])
        k = rng.choice(len(masses), size=m, p=masses / masses.sum())
        out = np.empty((m, self.dim))
        for j, c in enumerate(self.components):
            sel = k == j
            if sel.any():
                out[sel] = c.sample(rng, int(sel.sum()))
        return out

    @property
    def even(self):
        return all(c.even for c in self.components)

    @property
    def decay(self):
        return min(c.decay for c in self.components)

    def kinks(self):
        parts = [c.kinks() for c in self.components]
        return (np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts]),
                np.concatenate([p[2] for p in parts]), [r for p in parts for r in p[3]])

    def to_dict(self):
        return {"family": self.family, "components": [c.to_dict() for c in self.components]}


def function_from_dict(d: dict) -> TestFunction:
    fam = d["family"]
    if fam == "hls-extremal":
        return HlsExtremal(int(d["dim"]), d["a"], d["b"], np.asarray(d["phi"]), np.asarray(d["center"]), d["alpha"])
    if fam == "simplex-exp":
        return SimplexExponential(int(d["dim"]), d["a"], body_from_dict(d["body"]), np.asarray(d["center"]))
    if fam == "s-concave-peak":
        return SConcavePeak(int(d["dim"]), d["s"], body_from_dict(d["body"]))
    if fam == "gaussian":
        return Gaussian(int(d["dim"]), d["a"], np.asarray(d["covariance"]), np.asarray(d["center"]))
    if fam == "indicator":
        return Indicator(body_from_dict(d["body"]))
    if fam == "grid":
        return GridSampled(np.asarray(d["lo"]), np.asarray(d["spacing"]), np.asarray(d["values"]))
    if fam == "affine":
        return Affine(function_from_dict(d["inner"]), np.asarray(d["matrix"]), np.asarray(d["shift"]))
    if fam == "scaled":
        return Scaled(function_from_dict(d["inner"]), float(d["c"]))
    if fam == "mixture":
        return Mixture(tuple(function_from_dict(c) for c in d["components"]))
    raise FunctionError(f"unknown family {fam!r}")


def scale(f: TestFunction, c: float) -> TestFunction:
    """c * f, staying inside the family when it has an amplitude."""
    if isinstance(f, (HlsExtremal, SimplexExponential, Gaussian)):
        return replace(f, a=f.a * c)
    if isinstance(f, Scaled):
        return Scaled(f.inner, f.c * c)
    return Scaled(f, c)


# --------------------------------------------------------------------------
# operations


def _check_same_dim(f: TestFunction, h: TestFunction):
    if f.dim != h.dim:
        raise FunctionError(f"dimension mismatch: {f.dim} vs {h.dim}")


def evaluate(f: TestFunction, x) -> float:
    return f(x)


def _integrate_cells(fn, cells, cfg: QuadConfig) -> float:
    pts, wts = qd.cells_rule(cells, cfg.nodes_per_axis, cfg.polar_resolution)
    if len(wts) == 0:
        return 0.0
    return float(np.dot(wts, fn(pts)))


def power_integral(f: TestFunction, p: float, cfg: QuadConfig = DEFAULT_CONFIG) -> float:
    """int f^p dx (closed form when the family has one)."""
    if not p > 0:
        raise DomainError("p must be positive")
    v = f.power_integral(p)
    if v is not None:
        return v
    if isinstance(f, Indicator) and not f.bounded:
        return math.inf
    val = _integrate_cells(lambda x: f._eval(x) ** p, f.cells(), cfg)
    _shell_check(f, p, val, cfg)
    return val


def _shell_check(f, p, total, cfg):
    lo, hi = qd.cells_bbox(f.cells())
    # sample the boundary of the cell box; mass near it signals truncation
    rng = cfg.rng("shell", f.dim)
    x = lo + (hi - lo) * rng.random((256, f.dim))
    side = rng.integers(0, f.dim, 256)
    x[np.arange(256), side] = np.where(rng.random(256) < 0.5, lo[side], hi[side])
    edge = float(np.max(f(x))) ** p * float(np.prod(hi - lo))
    if total > 0 and edge > cfg.rel_tol * total and f.decay < math.inf:
        warnings.warn(f"{f.family}: truncation shell carries {edge / total:.2e} of the mass", TruncationWarning)


def lp_norm(f: TestFunction, p: float, cfg: QuadConfig = DEFAULT_CONFIG) -> float:
    """(int f^p)^(1/p); a quasi-norm for p < 1."""
    return power_integral(f, p, cfg) ** (1.0 / p)


def product_integral(f: TestFunction, h: TestFunction, fn, cfg: QuadConfig = DEFAULT_CONFIG) -> float:
    """int fn(f(x), h(x)) dx over the common support, fn(0, .) = fn(., 0) = 0."""
    _check_same_dim(f, h)
    cells = qd.intersect_lists(f.cells(), h.cells())
    return _integrate_cells(lambda x: fn(f._eval(x), h._eval(x)), cells, cfg)


def inner_product(f: TestFunction, h: TestFunction, cfg: QuadConfig = DEFAULT_CONFIG) -> float:
    _check_same_dim(f, h)
    return correlation(f, h, np.zeros(f.dim), cfg)


def correlation(f: TestFunction, h: TestFunction, y, cfg: QuadConfig = DEFAULT_CONFIG):
    """G(f,h)(y) = int f(x+y) h(x) dx; y may be a single point or a batch."""
    _check_same_dim(f, h)
    return Correlator(f, h, cfg)(y)


def _lens(R, r, d, n):
    d = np.asarray(d, dtype=float)
    small = min(R, r)
    if n == 1:
        return np.clip(np.minimum(d + r, R) - np.maximum(d - r, -R), 0.0, None)
    out = np.zeros_like(d)
    inside = d <= abs(R - r)
    out[inside] = unit_ball_volume(n) * small**n
    part = (~inside) & (d < R + r)
    dd = d[part]
    if n == 2:
        c1 = np.clip((dd**2 + r**2 - R**2) / (2 * dd * r), -1, 1)
        c2 = np.clip((dd**2 + R**2 - r**2) / (2 * dd * R), -1, 1)
        k = (-dd + r + R) * (dd + r - R) * (dd - r + R) * (dd + r + R)
        out[part] = r**2 * np.arccos(c1) + R**2 * np.arccos(c2) - 0.5 * np.sqrt(np.maximum(k, 0.0))
    else:
        out[part] = (
            math.pi * (R + r - dd) ** 2 * (dd**2 + 2 * dd * r - 3 * r**2 + 2 * dd * R + 6 * r * R - 3 * R**2)
            / (12 * dd)
        )
    return out


def _as_interval(f: TestFunction):
    if not isinstance(f, Indicator) or f.dim != 1 or not f.bounded:
        return None
    v = f.cells()[0]
    if not isinstance(v, qd.PolyCell):
        return None
    return float(v.vertices[0, 0]), float(v.vertices[1, 0])


def _as_ball(f: TestFunction):
    if isinstance(f, Indicator) and isinstance(f.body, Ball):
        c = np.zeros(f.dim) if f.body.center is None else np.asarray(f.body.center, dtype=float)
        return c, float(f.body.radius)
    return None


def _as_box(f: TestFunction):
    if isinstance(f, Indicator) and isinstance(f.body, Box) and f.body.bounded:
        return np.array(f.body.lo), np.array(f.body.hi)
    return None


class Correlator:
    """y -> G(f,h)(y), with exact overlap formulas for box and ball indicator pairs.

    ``pointwise`` replaces the product f(x+y) h(x) by another function of the
    two values that vanishes when h does.
    """

    def __init__(self, f: TestFunction, h: TestFunction, cfg: QuadConfig = DEFAULT_CONFIG, pointwise=None):
        _check_same_dim(f, h)
        self.f, self.h, self.cfg = f, h, cfg
        self.n = f.dim
        self.pointwise = pointwise
        self.kind = "cells"
        if pointwise is None:
            if _as_interval(f) and _as_interval(h):
                self.kind = "interval"
            elif _as_box(f) is not None and _as_box(h) is not None:
                self.kind = "box"
            elif _as_ball(f) is not None and _as_ball(h) is not None:
                self.kind = "ball"
        if isinstance(f, Mixture) or isinstance(h, Mixture):
            if pointwise is not None:
                raise FunctionError("nonlinear correlations of mixtures are not supported")
            self.kind = "mixture"
        self._fc = None if self.kind != "cells" else f.cells()
        self._hc = None if self.kind != "cells" else h.cells()
        self.exact = self.kind in ("interval", "box", "ball")
        self._memo = {}
        self._diff_hs = None

    def __call__(self, y):
        y2, single = _points(y, self.n)
        out = self.many(y2)
        return float(out[0]) if single else out

    def many(self, Y: np.ndarray) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.kind == "interval":
            a, b = _as_interval(self.f)
            c, d = _as_interval(self.h)
            y = Y[:, 0]
            return np.clip(np.minimum(b - y, d) - np.maximum(a - y, c), 0.0, None)
        if self.kind == "box":
            (flo, fhi), (hlo, hhi) = _as_box(self.f), _as_box(self.h)
            ov = np.minimum(fhi - Y, hhi) - np.maximum(flo - Y, hlo)
            return np.prod(np.clip(ov, 0.0, None), axis=1)
        if self.kind == "ball":
            (cf, R), (ch, r) = _as_ball(self.f), _as_ball(self.h)
            d = np.linalg.norm(cf - Y - ch, axis=1)
            return _lens(R, r, d, self.n)
        if self.kind == "mixture":
            fs = self.f.components if isinstance(self.f, Mixture) else (self.f,)
            hs = self.h.components if isinstance(self.h, Mixture) else (self.h,)
            return sum(Correlator(a, b, self.cfg).many(Y) for a in fs for b in hs)
        return np.array([self._cached(y) for y in Y])

    def _cached(self, y: np.ndarray) -> float:
        key = y.tobytes()
        v = self._memo.get(key)
        if v is None:
            v = self._memo[key] = self._one(y)
        return v

    def _one(self, y: np.ndarray, q: int | None = None) -> float:
        q = self.cfg.nodes_per_axis if q is None else q
        shifted = [c.affine(shift=-y) for c in self._fc]
        cells = qd.intersect_lists(shifted, self._hc)
        pts, wts = qd.cells_rule(cells, q, self.cfg.polar_resolution)
        if len(wts) == 0:
            return 0.0
        fv = self.f._eval(pts + y)
        hv = self.h._eval(pts)
        vals = fv * hv if self.pointwise is None else self.pointwise(fv, hv)
        return float(np.dot(wts, vals))

    # -- support of y -> G(y) along rays -----------------------------------
    def reach(self, xi: np.ndarray) -> tuple[float, float]:
        """[t_lo, t_hi] with G(t xi) = 0 outside (t_hi may be inf)."""
        fc, hc = self.f.cells(), self.h.cells()
        if any(getattr(c, "tail", False) for c in fc + hc):
            return 0.0, math.inf
        if self._diff_hs is None:
            self._diff_hs = _difference_halfspaces(fc, hc)
        return _ray_reach(self._diff_hs, np.asarray(xi, dtype=float))

    def breaks(self, xi: np.ndarray, t_lo: float, t_hi: float) -> list:
        """Times in (t_lo, t_hi) where G(t xi) may fail to be smooth."""
        xi = np.asarray(xi, dtype=float)
        vf, af, bf, rf = self.f.kinks()
        vh, ah, bh, rh = self.h.kinks()
        ts = []
        # vertex of F - t xi meets a facet of H
        if len(vf) and len(ah):
            den = ah @ xi
            num = vf @ ah.T - bh[None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                ts.append((num / den[None, :])[:, np.abs(den) > 1e-14].ravel())
        # vertex of H meets a facet of F - t xi
        if len(vh) and len(af):
            den = af @ xi
            num = bf[None, :] - vh @ af.T
            with np.errstate(divide="ignore", invalid="ignore"):
                ts.append((num / den[None, :])[:, np.abs(den) > 1e-14].ravel())
        # round jump sets: internal tangency of two spheres
        for cf, R in rf:
            for ch, r in rh:
                d = cf - ch
                for rad in (abs(R - r), R + r):
                    bq = -2 * xi @ d
                    cq = d @ d - rad**2
                    disc = bq * bq - 4 * cq
                    if disc > 0:
                        ts.append(np.array([(-bq - math.sqrt(disc)) / 2, (-bq + math.sqrt(disc)) / 2]))
        if not ts:
            return []
        t = np.concatenate(ts)
        t = t[np.isfinite(t)]
        span = t_hi - t_lo if math.isfinite(t_hi) else max(1.0, abs(t_lo))
        t = t[(t > t_lo + 1e-9 * span) & (t < t_hi - 1e-9 * span)]
        t = np.unique(np.round(t, 12))
        return list(t)


def _support_points(cells) -> np.ndarray:
    pts = []
    for c in cells:
        base = c.base if isinstance(c, qd.ClippedCell) else c
        if isinstance(base, qd.PolyCell):
            pts.append(base.vertices)
        else:
            n = base.dim
            if n == 1:
                dirs = np.array([[1.0], [-1.0]])
            elif n == 2:
                th = np.linspace(0, 2 * math.pi, 721)[:-1]
                dirs = np.column_stack([np.cos(th), np.sin(th)])
            else:
                k = 4000
                i = np.arange(k) + 0.5
                z = 1 - 2 * i / k
                ph = math.pi * (1 + 5**0.5) * i
                s = np.sqrt(1 - z * z)
                dirs = np.column_stack([s * np.cos(ph), s * np.sin(ph), z])
            # circumscribed polygon so the hull over-approximates the ellipsoid
            grow = 1.0 / math.cos(math.pi / 720) if n == 2 else (1.002 if n == 3 else 1.0)
            pts.append(base.center + grow * base.radius * dirs @ base.matrix.T)
    return np.vstack(pts)


def _fibonacci_dirs(k: int) -> np.ndarray:
    i = np.arange(k) + 0.5
    z = 1 - 2 * i / k
    ph = math.pi * (1 + 5**0.5) * i
    s = np.sqrt(1 - z * z)
    return np.column_stack([s * np.cos(ph), s * np.sin(ph), z])


# above this many pairwise differences the hull is built from support points
_PAIR_LIMIT = 40_000


def _difference_halfspaces(fc, hc):
    """Half-space form (a, b) of conv(F) - conv(H); an interval in one dimension."""
    pf = _support_points(fc)
    ph = _support_points(hc)
    n = pf.shape[1]
    if n == 1:
        return pf.min() - ph.max(), pf.max() - ph.min()
    hf = _hull_ordered(pf) if len(pf) > n + 1 else pf
    hh = _hull_ordered(ph) if len(ph) > n + 1 else ph
    if len(hf) * len(hh) <= _PAIR_LIMIT:
        diff = (hf[:, None, :] - hh[None, :, :]).reshape(-1, n)
    else:
        # support point of a Minkowski difference: s_F(u) - s_H(-u)
        th = np.linspace(0, 2 * math.pi, 2881)[:-1]
        u = np.column_stack([np.cos(th), np.sin(th)]) if n == 2 else _fibonacci_dirs(8000)
        diff = hf[np.argmax(hf @ u.T, axis=0)] - hh[np.argmin(hh @ u.T, axis=0)]
        diff = np.unique(np.round(diff, 13), axis=0)
    return _halfspaces(diff)


def _ray_reach(hs, xi) -> tuple[float, float]:
    """{t >= 0 : t xi in conv(F) - conv(H)} from the difference half-spaces."""
    if xi.shape[0] == 1:
        lo, hi = hs
        a, b = sorted((lo / xi[0], hi / xi[0]))
        if b <= 0:
            return 0.0, 0.0
        return max(a, 0.0), b
    a, b = hs
    # t xi in D  <=>  t (a.xi) <= b for all facets
    ax = a @ xi
    lo, hi = 0.0, math.inf
    for ai, bi in zip(ax, b):
        if ai > 1e-15:
            hi = min(hi, bi / ai)
        elif ai < -1e-15:
            lo = max(lo, bi / ai)
        elif bi < -1e-12:
            return 0.0, 0.0
    if hi <= lo:
        return 0.0, 0.0
    return lo, hi


def superlevel_volume(f: TestFunction, t: float, cfg: QuadConfig = DEFAULT_CONFIG, return_error: bool = False):
    """|{f >= t}|, closed form when available, else seeded Monte Carlo on the cell box."""
    if not t > 0:
        raise DomainError("threshold must be positive")
    v = f.superlevel_exact(t)
    if v is not None:
        return (v, 0.0) if return_error else v
    if t > f.sup:
        return (0.0, 0.0) if return_error else 0.0
    lo, hi = f.bounding_box(cfg)
    vol = float(np.prod(hi - lo))
    rng = cfg.rng("superlevel", f.family, f.dim)
    x = lo + (hi - lo) * rng.random((cfg.mc_samples, f.dim))
    hit = f._eval(x) >= t
    pr = hit.mean()
    est = vol * pr
    err = cfg.mc_z * vol * math.sqrt(max(pr * (1 - pr), 1.0 / cfg.mc_samples) / cfg.mc_samples)
    return (est, err) if return_error else est


@dataclass(frozen=True)
class RadialProfile:
    """Decreasing radial function f*(x) = sup{t_k : r_k >= |x|}."""

    dim: int
    levels: np.ndarray
    radii: np.ndarray
    sup: float = 0.0

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        rd = np.asarray(self.radii, dtype=float)
        if lv.shape != rd.shape or lv.ndim != 1:
            raise FunctionError("levels and radii must be matching 1-D arrays")
        if np.any(np.diff(lv) >= 0) or np.any(lv <= 0):
            raise FunctionError("levels must be positive and strictly decreasing")
        if np.any(np.diff(rd) < -1e-12 * max(1.0, float(rd.max(initial=0)))) or np.any(rd < 0):
            raise FunctionError("radii must be nonnegative and nondecreasing as levels decrease")
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "radii", rd)

    def evaluate(self, x, mode: str = "interp"):
        """f*(x).  ``mode='step'`` is the literal sup-definition; 'interp' is
        log-linear in the level between radii, exact for piecewise power laws."""
        pts, single = _points(x, self.dim)
        r = np.linalg.norm(pts, axis=1)
        if mode == "step":
            out = np.zeros(len(r))
            for k in range(len(self.levels) - 1, -1, -1):
                out = np.where(self.radii[k] >= r, self.levels[k], out)
        else:
            rr, lv = self.radii, self.levels
            pos = rr > 0
            rr, lv = rr[pos], lv[pos]
            rr, idx = np.unique(rr, return_index=True)
            lv = lv[idx]
            out = np.exp(np.interp(r, rr, np.log(lv), left=math.log(self.sup or lv[0]), right=-np.inf))
            out = np.where(r > rr[-1], 0.0, out)
        return float(out[0]) if single else out

    def volumes(self) -> np.ndarray:
        return unit_ball_volume(self.dim) * self.radii**self.dim

    def power_integral(self, p: float) -> float:
        """int (f*)^p by the layer-cake formula with a power-law tail below the last level."""
        t = self.levels
        v = self.volumes()
        total = 0.0
        for k in range(len(t) - 1):
            a, b = t[k + 1], t[k]
            va, vb = v[k + 1], v[k]
            if vb <= 0 or va <= 0:
                # linear in t on the top segment
                total += _int_linear(p, a, b, va, vb)
                continue
            beta = -math.log(vb / va) / math.log(b / a)
            c = va * a**beta
            e = p - beta
            if abs(e) < 1e-12:
                total += p * c * math.log(b / a)
            else:
                total += p * c * (b**e - a**e) / e
        # above the top level (plateau up to sup)
        if self.sup > t[0]:
            total += v[0] * (self.sup**p - t[0] ** p)
        return total + self._tail(p)

    def _tail(self, p: float) -> float:
        """int_0^a p t^(p-1) V(t) dt below the last level a, with V = c t^-beta + d
        fitted through the last three levels (exact for the extremal family in the plane)."""
        t, v = self.levels, self.volumes()
        a = t[-1]
        if len(t) < 3 or not v[-3] > 0:
            return v[-1] * a**p
        d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
        if d1 <= 0 or d2 <= 0:
            return v[-1] * a**p
        r = t[-2] / a
        lr = math.log(t[-3] / t[-2])
        if abs(math.log(r) - lr) > 1e-9 * lr:
            raise FunctionError("tail fit needs log-spaced levels")
        if abs(d2 - d1) <= 1e-12 * d2:
            # V = v_end + c log(a/t)
            return v[-1] * a**p + (d2 / lr) * a**p / p
        beta = math.log(d2 / d1) / lr
        if p <= beta:
            return math.inf
        c = d2 / (a**-beta - t[-2] ** -beta)
        dd = v[-1] - c * a**-beta
        return p * c * a ** (p - beta) / (p - beta) + dd * a**p

    def lp_norm(self, p: float) -> float:
        return self.power_integral(p) ** (1.0 / p)


def _int_linear(p, a, b, va, vb):
    # int_a^b p t^(p-1) V(t) dt with V linear between (a, va) and (b, vb)
    s = (vb - va) / (b - a)
    c0 = va - s * a
    return c0 * (b**p - a**p) + s * p / (p + 1) * (b ** (p + 1) - a ** (p + 1))


def schwarz_symmetrize(f: TestFunction, cfg: QuadConfig = DEFAULT_CONFIG) -> RadialProfile:
    """Levels log-spaced from sup f down to rel_tol * sup f; radii from superlevel volumes."""
    top = f.sup
    if not (top > 0 and math.isfinite(top)):
        raise FunctionError("symmetrization needs 0 < sup f < inf")
    k = cfg.levels
    levels = top * np.exp(np.linspace(0.0, math.log(cfg.rel_tol), k))
    vols = np.array([superlevel_volume(f, float(t), cfg) for t in levels])
    vols = np.maximum.accumulate(vols)
    radii = (vols / unit_ball_volume(f.dim)) ** (1.0 / f.dim)
    return RadialProfile(f.dim, levels, radii, top)


@dataclass
class ConcavityReport:
    cls: str
    s: float | None
    trials: int
    violations: int
    worst: float
    counterexamples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self):
        return {"class": self.cls, "s": self.s, "trials": self.trials, "violations": self.violations,
                "worst": self.worst, "counterexamples": self.counterexamples}


def _support_sample(f, lo, hi, rng, m):
    out, need, tries = [], m, 0
    while need > 0 and tries < 50:
        x = lo + (hi - lo) * rng.random((4 * need + 16, len(lo)))
        x = x[np.asarray(f(x)) > 0]
        out.append(x[:need])
        need -= len(out[-1])
        tries += 1
    if need > 0:
        raise FunctionError("could not find support points")
    return np.concatenate(out)


def concavity_check(
    f,
    cls: str = "log",
    trials: int = 1000,
    seed: int = 0,
    s: float | None = None,
    slack: float = 1e-9,
    box=None,
) -> ConcavityReport:
    """Random (x, y, lambda) triples from the support; worst violation is reported.

    ``cls`` is 'log' or 's'.  For 's' the inequality is
    f(m)^s >= (1-l) f(x)^s + l f(y)^s with m = (1-l) x + l y.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    if cls not in ("log", "s"):
        raise DomainError("class must be 'log' or 's'")
    if cls == "s" and not (s is not None and s > 0):
        raise DomainError("s-concavity needs s > 0")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), zlib.crc32(b"concavity")])))
    if box is None:
        box = f.bounding_box() if hasattr(f, "bounding_box") else None
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    x = _support_sample(f, lo, hi, rng, trials)
    y = _support_sample(f, lo, hi, rng, trials)
    lam = rng.random((trials, 1))
    mid = (1 - lam) * x + lam * y
    fx, fy, fm = (np.asarray(f(p), dtype=float) for p in (x, y, mid))
    lam = lam[:, 0]
    if cls == "log":
        with np.errstate(divide="ignore"):
            viol = ((1 - lam) * np.log(fx) + lam * np.log(fy)) - np.log(fm)
    else:
        viol = ((1 - lam) * fx**s + lam * fy**s) - fm**s
    bad = viol > slack
    idx = np.flatnonzero(bad)[:5]
    ce = [{"x": x[i].tolist(), "y": y[i].tolist(), "lambda": float(lam[i]), "excess": float(viol[i])} for i in idx]
    return ConcavityReport(cls, s, trials, int(bad.sum()), float(np.max(viol)), ce)


@dataclass(frozen=True, eq=False)
class CorrelationFunction:
    """y -> G(f,h)(y) as a callable with a bounding box, for concavity probes."""

    f: TestFunction
    h: TestFunction
    cfg: QuadConfig = DEFAULT_CONFIG

    @cached_property
    def _corr(self):
        return Correlator(self.f, self.h, self.cfg)

    @property
    def dim(self):
        return self.f.dim

    def __call__(self, y):
        return self._corr(y)

    def bounding_box(self):
        flo, fhi = qd.cells_bbox(self.f.cells())
        hlo, hhi = qd.cells_bbox(self.h.cells())
        return flo - hhi, fhi - hlo


def transform(f: TestFunction, matrix, shift=None) -> TestFunction:
    """x -> f(M^{-1}(x - shift)); closed-family result when the family allows it."""
    n = f.dim
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    s = np.zeros(n) if shift is None else np.atleast_1d(np.asarray(shift, dtype=float))
    if m.shape != (n, n) or s.shape != (n,):
        raise FunctionError("map/shift dimension mismatch")
    if abs(np.linalg.det(m)) < 1e-14:
        raise FunctionError("map must be invertible")
    minv = np.linalg.inv(m)
    if isinstance(f, HlsExtremal):
        return replace(f, phi=f.phi @ minv, center=m @ f.center + s)
    if isinstance(f, Gaussian):
        return replace(f, covariance=m @ f.covariance @ m.T, center=m @ f.center + s)
    if isinstance(f, SimplexExponential) and isinstance(f.body, SimplexGauge):
        return replace(f, body=SimplexGauge(n, f.body.vertices @ m.T), center=m @ f.center + s)
    if isinstance(f, SConcavePeak) and isinstance(f.body, SimplexGauge) and np.allclose(s, 0):
        return replace(f, body=SimplexGauge(n, f.body.vertices @ m.T))
    if isinstance(f, Indicator):
        b = f.body
        diag = np.allclose(m, np.diag(np.diag(m)))
        if isinstance(b, Box) and diag and np.all(np.diag(m) > 0):
            d = np.diag(m)
            return Indicator(Box(n, tuple(d * np.array(b.lo) + s), tuple(d * np.array(b.hi) + s)))
        if isinstance(b, Ball) and np.allclose(m, m[0, 0] * np.eye(n)) and m[0, 0] > 0:
            c = np.zeros(n) if b.center is None else np.asarray(b.center, dtype=float)
            cn = m[0, 0] * c + s
            return Indicator(Ball(n, b.radius * m[0, 0], None if np.allclose(cn, 0) else tuple(cn)))
        if isinstance(b, SimplexGauge):
            return Indicator(SimplexGauge(n, b.vertices @ m.T + s))
    if isinstance(f, Scaled):
        return Scaled(transform(f.inner, m, s), f.c)
    if isinstance(f, Affine):
        return Affine(f.inner, m @ f.matrix, m @ f.shift + s)
    return Affine(f, m, s)


def translate(f: TestFunction, shift) -> TestFunction:
    return transform(f, np.eye(f.dim), shift)
