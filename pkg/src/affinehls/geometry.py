"""Star bodies in R^n (n <= 3): radial and gauge functions, volumes, dual mixed
volumes, Schwarz symmetrals, and the sphere quadratures everything runs on."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull

from .reports import ChainReport, Relation
from .specialfns import DomainError, sphere_area, unit_ball_volume

DILATE_SPREAD = 1e-6


class GeometryError(ValueError):
    pass


# --------------------------------------------------------------------------
# sphere quadrature


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Nodes and weights on S^{n-1}.

    n=1: the two atoms +-1.  n=2: uniform trapezoid in angle.  n=3: Gauss-Legendre
    in cos(theta) times uniform in phi.  ``degree`` is the exactness degree for
    spherical polynomials.
    """

    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    degree: int
    shape: tuple = ()

    @classmethod
    def make(cls, dim: int, resolution: int | None = None) -> "SphereGrid":
        if dim == 1:
            return cls(1, np.array([[1.0], [-1.0]]), np.array([1.0, 1.0]), 1, (2,))
        if dim == 2:
            m = 64 if resolution is None else int(resolution)
            if m < 3:
                raise GeometryError("need at least 3 angular nodes")
            th = 2.0 * math.pi * np.arange(m) / m
            nodes = np.column_stack([np.cos(th), np.sin(th)])
            return cls(2, nodes, np.full(m, 2.0 * math.pi / m), m - 1, (m,))
        if dim == 3:
            k = 16 if resolution is None else int(resolution)
            m = 2 * k
            z, wz = np.polynomial.legendre.leggauss(k)
            ph = 2.0 * math.pi * np.arange(m) / m
            zz, pp = np.meshgrid(z, ph, indexing="ij")
            sin_t = np.sqrt(1.0 - zz**2)
            nodes = np.column_stack(
                [(sin_t * np.cos(pp)).ravel(), (sin_t * np.sin(pp)).ravel(), zz.ravel()]
            )
            weights = np.outer(wz, np.full(m, 2.0 * math.pi / m)).ravel()
            return cls(3, nodes, weights, min(2 * k - 1, m - 1), (k, m))
        raise GeometryError(f"sphere grids exist for n in {{1,2,3}}, got {dim}")

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> float:
        values = np.asarray(values, dtype=float)
        # fixed-order reduction keeps results bit-reproducible
        return float(math.fsum((self.weights * values).tolist()))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "nodes": self.nodes.tolist(),
            "weights": self.weights.tolist(),
            "degree": self.degree,
            "shape": list(self.shape),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SphereGrid":
        return cls(
            int(d["dim"]),
            np.asarray(d["nodes"], dtype=float),
            np.asarray(d["weights"], dtype=float),
            int(d.get("degree", 0)),
            tuple(d.get("shape", ())),
        )


# --------------------------------------------------------------------------
# star bodies


def _unit(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    nrm = np.linalg.norm(xi, axis=-1, keepdims=True)
    if np.any(nrm == 0):
        raise GeometryError("direction must be nonzero")
    return xi / nrm


class StarBody:
    """Star-shaped set given by its radial function.  Subclasses are immutable."""

    dim: int

    def radial(self, xi) -> np.ndarray | float:
        """Radial function at direction(s) ``xi`` (normalized internally)."""
        xi = np.asarray(xi, dtype=float)
        single = xi.ndim == 1
        out = self._radial(np.atleast_2d(_unit(xi)))
        return float(out[0]) if single else out

    def _radial(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gauge(self, x) -> np.ndarray | float:
        """Minkowski functional ||x||_K; 0 at the origin, +inf off the body's cone."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        r = np.linalg.norm(x2, axis=1)
        out = np.zeros(len(x2))
        nz = r > 0
        if np.any(nz):
            rho = self._radial(x2[nz] / r[nz, None])
            with np.errstate(divide="ignore"):
                out[nz] = np.where(rho > 0, r[nz] / np.where(rho > 0, rho, 1.0), np.inf)
        return float(out[0]) if single else out

    def contains(self, x, slack: float = 0.0) -> np.ndarray:
        return np.asarray(self.gauge(x)) <= 1.0 + slack

    def exact_volume(self) -> float | None:
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Ball(StarBody):
    dim: int
    radius: float = 1.0
    center: tuple | None = None  # off-origin balls are only used as function supports

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("ball radius must be positive")

    def _radial(self, u):
        if self.center is None:
            return np.full(len(u), float(self.radius))
        c = np.asarray(self.center, dtype=float)
        # ray-sphere: |s u - c| = R, largest root
        b = u @ c
        disc = b**2 - (c @ c - self.radius**2)
        return np.where(disc >= 0, np.maximum(b + np.sqrt(np.maximum(disc, 0.0)), 0.0), 0.0)

    def exact_volume(self):
        return unit_ball_volume(self.dim) * self.radius**self.dim

    def to_dict(self):
        d = {"kind": "ball", "dim": self.dim, "radius": self.radius}
        if self.center is not None:
            d["center"] = list(self.center)
        return d


@dataclass(frozen=True, eq=False)
class Ellipsoid(StarBody):
    """{x : x^T A^{-1} x <= 1} for a symmetric positive-definite shape matrix A."""

    dim: int
    shape_matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.shape_matrix, dtype=float)
        if a.shape != (self.dim, self.dim) or not np.allclose(a, a.T):
            raise GeometryError("shape matrix must be symmetric n x n")
        if np.min(np.linalg.eigvalsh(a)) <= 0:
            raise GeometryError("shape matrix must be positive definite")
        object.__setattr__(self, "shape_matrix", a)

    @cached_property
    def _inv(self):
        return np.linalg.inv(self.shape_matrix)

    @cached_property
    def sqrt_matrix(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.shape_matrix)
        return (v * np.sqrt(w)) @ v.T

    def _radial(self, u):
        return 1.0 / np.sqrt(np.einsum("ij,jk,ik->i", u, self._inv, u))

    def exact_volume(self):
        return unit_ball_volume(self.dim) * math.sqrt(np.linalg.det(self.shape_matrix))

    def to_dict(self):
        return {"kind": "ellipsoid", "dim": self.dim, "shape_matrix": self.shape_matrix.tolist()}


@dataclass(frozen=True, eq=False)
class CrossPolytope(StarBody):
    """The l1 ball scaled by ``scale``."""

    dim: int
    scale: float = 1.0

    def _radial(self, u):
        return self.scale / np.sum(np.abs(u), axis=1)

    def exact_volume(self):
        return (2.0 * self.scale) ** self.dim / math.factorial(self.dim)

    @property
    def vertices(self) -> np.ndarray:
        eye = np.eye(self.dim) * self.scale
        return np.vstack([eye, -eye])

    def to_dict(self):
        return {"kind": "cross_polytope", "dim": self.dim, "scale": self.scale}


class PolytopeBody(StarBody):
    """Convex polytope containing the origin (possibly on its boundary)."""

    vertices: np.ndarray

    @cached_property
    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) with the polytope = {x : A x <= b}."""
        v = np.asarray(self.vertices, dtype=float)
        if self.dim == 1:
            lo, hi = float(v.min()), float(v.max())
            return np.array([[1.0], [-1.0]]), np.array([hi, -lo])
        hull = ConvexHull(v)
        eq = hull.equations
        # merge duplicate facets that qhull emits for non-simplicial faces
        a, b = eq[:, :-1], -eq[:, -1]
        key = np.round(np.column_stack([a, b]), 12)
        _, idx = np.unique(key, axis=0, return_index=True)
        idx = np.sort(idx)
        return a[idx], b[idx]

    def _radial(self, u):
        a, b = self.halfspaces
        if np.any(b < -1e-12):
            raise GeometryError("origin must lie in the closed polytope")
        au = u @ a.T  # (k, m)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(au > 1e-15, np.maximum(b, 0.0)[None, :] / au, np.inf)
        out = s.min(axis=1)
        return np.where(np.isfinite(out), out, np.inf)

    def exact_volume(self):
        v = np.asarray(self.vertices, dtype=float)
        if self.dim == 1:
            return float(v.max() - v.min())
        return float(ConvexHull(v).volume)


@dataclass(frozen=True, eq=False)
class SimplexGauge(PolytopeBody):
    """Simplex conv(vertices) with the origin in its closure (n+1 vertices)."""

    dim: int
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, self.dim)
        if len(v) != self.dim + 1:
            raise GeometryError("a simplex in R^n has n+1 vertices")
        if abs(np.linalg.det(v[1:] - v[0])) < 1e-14:
            raise GeometryError("degenerate simplex")
        object.__setattr__(self, "vertices", v)

    @classmethod
    def standard(cls, dim: int) -> "SimplexGauge":
        """conv(0, e_1, ..., e_n)."""
        return cls(dim, np.vstack([np.zeros(dim), np.eye(dim)]))

    @property
    def origin_vertex(self) -> bool:
        return bool(np.any(np.all(np.abs(self.vertices) < 1e-14, axis=1)))

    def exact_volume(self):
        v = self.vertices
        return abs(np.linalg.det(v[1:] - v[0])) / math.factorial(self.dim)

    def to_dict(self):
        return {"kind": "simplex", "dim": self.dim, "vertices": self.vertices.tolist()}


@dataclass(frozen=True, eq=False)
class Box(PolytopeBody):
    """Axis-parallel box prod [lo_i, hi_i]; bounds may be infinite (1-D supports only)."""

    dim: int
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != self.dim or len(hi) != self.dim or any(a >= b for a, b in zip(lo, hi)):
            raise GeometryError("box bounds must satisfy lo < hi in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(v) for v in self.lo + self.hi)

    @cached_property
    def vertices(self) -> np.ndarray:
        grids = np.meshgrid(*[[a, b] for a, b in zip(self.lo, self.hi)], indexing="ij")
        return np.column_stack([g.ravel() for g in grids])

    @cached_property
    def halfspaces(self):
        eye = np.eye(self.dim)
        return np.vstack([eye, -eye]), np.array(list(self.hi) + [-v for v in self.lo])

    def exact_volume(self):
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def to_dict(self):
        return {"kind": "box", "dim": self.dim, "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True, eq=False)
class LinearImage(StarBody):
    """M K for an invertible matrix M."""

    matrix: np.ndarray
    inner: StarBody

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape != (self.inner.dim, self.inner.dim):
            raise GeometryError("map must be n x n")
        if abs(np.linalg.det(m)) < 1e-14:
            raise GeometryError("map must be invertible")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.inner.dim

    @cached_property
    def _inv(self):
        return np.linalg.inv(self.matrix)

    def _radial(self, u):
        w = u @ self._inv.T
        nw = np.linalg.norm(w, axis=1)
        return self.inner._radial(w / nw[:, None]) / nw

    def exact_volume(self):
        v = self.inner.exact_volume()
        return None if v is None else abs(np.linalg.det(self.matrix)) * v

    def to_dict(self):
        return {"kind": "linear_image", "matrix": self.matrix.tolist(), "inner": self.inner.to_dict()}


@dataclass(frozen=True, eq=False)
class Sampled(StarBody):
    """Radial values at the nodes of a SphereGrid, interpolated in between."""

    grid: SphereGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.grid),):
            raise GeometryError("one radial value per grid node is required")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise GeometryError("radial values must be positive and finite")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.grid.dim

    def _radial(self, u):
        g = self.grid
        if g.dim == 1:
            idx = np.argmax(u @ g.nodes.T, axis=1)
            return self.values[idx]
        if g.dim == 2:
            m = len(g)
            th = np.mod(np.arctan2(u[:, 1], u[:, 0]), 2 * math.pi) * m / (2 * math.pi)
            i0 = np.floor(th).astype(int) % m
            fr = th - np.floor(th)
            return (1 - fr) * self.values[i0] + fr * self.values[(i0 + 1) % m]
        k, m = g.shape
        z_nodes = g.nodes[::m, 2]  # increasing cos(theta)
        vals = self.values.reshape(k, m)
        z = np.clip(u[:, 2], z_nodes[0], z_nodes[-1])
        j = np.clip(np.searchsorted(z_nodes, z) - 1, 0, k - 2)
        fz = (z - z_nodes[j]) / (z_nodes[j + 1] - z_nodes[j])
        ph = np.mod(np.arctan2(u[:, 1], u[:, 0]), 2 * math.pi) * m / (2 * math.pi)
        i0 = np.floor(ph).astype(int) % m
        fp = ph - np.floor(ph)
        i1 = (i0 + 1) % m
        lo = (1 - fp) * vals[j, i0] + fp * vals[j, i1]
        hi = (1 - fp) * vals[j + 1, i0] + fp * vals[j + 1, i1]
        return (1 - fz) * lo + fz * hi

    def to_dict(self):
        d = self.grid.to_dict()
        d["values"] = self.values.tolist()
        d["kind"] = "sampled"
        if self.meta:
            d["metadata"] = self.meta
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "Sampled":
        return cls(SphereGrid.from_dict(d), np.asarray(d["values"], dtype=float), d.get("metadata", {}))

    def dilate(self, c: float) -> "Sampled":
        return Sampled(self.grid, c * self.values, dict(self.meta))


def body_from_dict(d: dict) -> StarBody:
    kind = d["kind"]
    if kind == "ball":
        return Ball(int(d["dim"]), float(d["radius"]), tuple(d["center"]) if "center" in d else None)
    if kind == "ellipsoid":
        return Ellipsoid(int(d["dim"]), np.asarray(d["shape_matrix"]))
    if kind == "cross_polytope":
        return CrossPolytope(int(d["dim"]), float(d["scale"]))
    if kind == "simplex":
        return SimplexGauge(int(d["dim"]), np.asarray(d["vertices"]))
    if kind == "box":
        return Box(int(d["dim"]), tuple(d["lo"]), tuple(d["hi"]))
    if kind == "linear_image":
        return LinearImage(np.asarray(d["matrix"]), body_from_dict(d["inner"]))
    if kind == "sampled":
        return Sampled.from_dict(d)
    raise GeometryError(f"unknown body kind {kind!r}")


# --------------------------------------------------------------------------
# operations


def radial(body: StarBody, xi) -> float:
    xi = np.asarray(xi, dtype=float)
    if abs(np.linalg.norm(xi) - 1.0) > 1e-9:
        raise GeometryError("radial() expects a unit vector")
    return body.radial(xi)


def gauge(body: StarBody, x) -> float:
    return body.gauge(x)


def linear_image(matrix, body: StarBody) -> StarBody:
    if isinstance(body, LinearImage):
        return LinearImage(np.asarray(matrix, dtype=float) @ body.matrix, body.inner)
    return LinearImage(matrix, body)


def _check_dim(grid: SphereGrid, *bodies: StarBody):
    for b in bodies:
        if b.dim != grid.dim:
            raise GeometryError(f"body dimension {b.dim} does not match grid dimension {grid.dim}")


def volume(body: StarBody, grid: SphereGrid | None = None, exact: bool = True) -> float:
    """Lebesgue measure via (1/n) sum_j w_j rho(xi_j)^n, or a closed form when known."""
    if exact and getattr(body, "center", None) is None:
        v = body.exact_volume()
        if v is not None:
            return v
    if grid is None:
        grid = SphereGrid.make(body.dim)
    _check_dim(grid, body)
    rho = np.asarray(body.radial(grid.nodes), dtype=float)
    return grid.integrate(rho**grid.dim) / grid.dim


def _log_pow(rho: np.ndarray, e: float) -> np.ndarray:
    # rho^e via logs: extreme bodies with alpha > n would overflow otherwise
    return np.exp(e * np.log(rho))


def dual_mixed_volume(K: StarBody, L: StarBody, alpha: float, grid: SphereGrid) -> float:
    """(1/n) int rho_K^(n-alpha) rho_L^alpha over the sphere."""
    _check_dim(grid, K, L)
    n = grid.dim
    rk = np.asarray(K.radial(grid.nodes), dtype=float)
    rl = np.asarray(L.radial(grid.nodes), dtype=float)
    vals = np.exp((n - alpha) * np.log(rk) + alpha * np.log(rl))
    return grid.integrate(vals) / n


def schwarz_symmetral(body: StarBody, grid: SphereGrid | None = None) -> Ball:
    v = volume(body, grid)
    if not math.isfinite(v):
        raise GeometryError("Schwarz symmetral needs finite volume")
    return Ball(body.dim, (v / unit_ball_volume(body.dim)) ** (1.0 / body.dim))


def are_dilates(K: StarBody, L: StarBody, grid: SphereGrid, spread: float = DILATE_SPREAD) -> bool:
    ratio = np.asarray(K.radial(grid.nodes)) / np.asarray(L.radial(grid.nodes))
    return bool((ratio.max() - ratio.min()) <= spread * ratio.mean())


def check_dual_mixed_inequality(
    K: StarBody, L: StarBody, alpha: float, grid: SphereGrid, tol: float = 1e-12
) -> ChainReport:
    """Dual mixed volume inequality against |K|^((n-a)/n) |L|^(a/n).

    Both volumes come from the same quadrature as the mixed volume, so the
    discrete Hoelder inequality makes the check exact up to roundoff.
    """
    n = grid.dim
    if not alpha > 0 or alpha == n:
        raise DomainError("alpha must be positive and different from n")
    vkl = dual_mixed_volume(K, L, alpha, grid)
    vk = volume(K, grid, exact=False)
    vl = volume(L, grid, exact=False)
    bound = vk ** ((n - alpha) / n) * vl ** (alpha / n)
    rel = Relation(0, 1, "<=" if alpha < n else ">=")
    scale = max(abs(vkl), abs(bound))
    report = ChainReport(
        labels=["dual_mixed_volume", "holder_bound"],
        values=[vkl, bound],
        error_bars=[tol * scale, tol * scale],
        relations=[rel],
        metadata={"n": n, "alpha": alpha, "regime": "2a" if alpha < n else "2b"},
    )
    report.flags["dilates"] = are_dilates(K, L, grid)
    report.flags["near_equality"] = abs(vkl - bound) <= 1e-10 * scale
    return report.evaluate()
