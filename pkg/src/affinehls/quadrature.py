"""Cell-based cubature on R^n, n <= 3.

A function's support is described as a list of convex cells on each of which
the function is smooth.  Products of shifted functions integrate over pairwise
cell intersections, so kinks and jumps of the integrand always sit on cell
boundaries and Gauss rules converge spectrally inside.

Cells are either convex polytopes (vertex form) or ellipsoids
{c + M u : |u| <= R} integrated in polar coordinates.  An ellipsoid cell is
"soft" when it only marks where a smooth, everywhere-positive function carries
its mass (Gaussians, power-law peaks); soft cells never clip other cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, Delaunay, HalfspaceIntersection, QhullError

from .geometry import SphereGrid

_EPS = 1e-12


@lru_cache(maxsize=None)
def gauss_legendre(q: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(int(q))
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def interval_rule(a: float, b: float, q: int, panels: int = 1) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(q)
    edges = np.linspace(a, b, panels + 1)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + h[:, None] * x).ravel(), (h[:, None] * w).ravel()


def breaks_rule(breaks, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre with one panel between consecutive breakpoints."""
    b = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(q)
    h = 0.5 * np.diff(b)
    mid = 0.5 * (b[1:] + b[:-1])
    keep = h > 0
    return (mid[keep, None] + h[keep, None] * x).ravel(), (h[keep, None] * w).ravel()


_TAIL_V = (0.0, 1.0 / 16, 0.125, 0.25, 0.5, 1.0)


def tail_rule(start: float, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes on [start, inf) via t = start / v^2; exact-ish for power tails t^-k, k >= 1.5."""
    v, wv = breaks_rule(_TAIL_V, q)
    t = start / v**2
    return t, wv * 2.0 * start / v**3


@lru_cache(maxsize=64)
def _duffy_square(q: int):
    x, w = gauss_legendre(q)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    uu, vv = np.meshgrid(u, u, indexing="ij")
    ww = np.outer(wu, wu)
    return uu.ravel(), vv.ravel(), ww.ravel()


@lru_cache(maxsize=64)
def _duffy_cube(q: int):
    x, w = gauss_legendre(q)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    a, b, c = np.meshgrid(u, u, u, indexing="ij")
    ww = wu[:, None, None] * wu[None, :, None] * wu[None, None, :]
    return a.ravel(), b.ravel(), c.ravel(), ww.ravel()


def triangles_rule(tri: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on a stack of triangles, tri shape (k, 3, 2)."""
    u, v, w = _duffy_square(q)
    A, B, C = tri[:, 0], tri[:, 1], tri[:, 2]
    pts = (
        A[:, None, :]
        + u[None, :, None] * (B - A)[:, None, :]
        + (u * v)[None, :, None] * (C - B)[:, None, :]
    )
    e1, e2 = B - A, C - A
    area2 = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    wts = area2[:, None] * (u * w)[None, :]
    return pts.reshape(-1, 2), wts.ravel()


def tetra_rule(tet: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    u, v, s, w = _duffy_cube(q)
    A, B, C, D = tet[:, 0], tet[:, 1], tet[:, 2], tet[:, 3]
    pts = (
        A[:, None, :]
        + u[None, :, None] * (B - A)[:, None, :]
        + (u * v)[None, :, None] * (C - B)[:, None, :]
        + (u * v * s)[None, :, None] * (D - C)[:, None, :]
    )
    vol6 = np.abs(np.linalg.det(np.stack([B - A, C - A, D - A], axis=1)))
    wts = vol6[:, None] * (u**2 * v * w)[None, :]
    return pts.reshape(-1, 3), wts.ravel()


@lru_cache(maxsize=16)
def _sphere(dim: int, res: int | None) -> SphereGrid:
    return SphereGrid.make(dim, res)


def default_sphere_resolution(dim: int) -> int | None:
    return {1: None, 2: 64, 3: 12}[dim]


# --------------------------------------------------------------------------
# cells


@dataclass(frozen=True, eq=False)
class PolyCell:
    """Convex polytope conv(vertices); 2-D vertices are kept counter-clockwise."""

    vertices: np.ndarray
    hard: bool = True

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[1] == 1:
            v = np.array([[v.min()], [v.max()]])
        elif v.shape[1] == 2 and len(v) >= 3:
            sa = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
            if sa < 0:
                v = v[::-1]
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @cached_property
    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices
        if self.dim == 1:
            return np.array([[1.0], [-1.0]]), np.array([v[1, 0], -v[0, 0]])
        if self.dim == 2:
            d = np.roll(v, -1, axis=0) - v
            a = np.column_stack([d[:, 1], -d[:, 0]])
            nrm = np.linalg.norm(a, axis=1)
            keep = nrm > _EPS
            a = a[keep] / nrm[keep, None]
            return a, np.einsum("ij,ij->i", a, v[keep])
        hull = ConvexHull(v)
        return hull.equations[:, :-1], -hull.equations[:, -1]

    @cached_property
    def measure(self) -> float:
        v = self.vertices
        if self.dim == 1:
            return float(v[1, 0] - v[0, 0])
        if self.dim == 2:
            return 0.5 * abs(float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])))
        try:
            return float(ConvexHull(v).volume)
        except QhullError:
            return 0.0

    def contains(self, x: np.ndarray, slack: float = 1e-12) -> np.ndarray:
        a, b = self.halfspaces
        scale = 1.0 + np.abs(b)
        return np.all(x @ a.T <= b + slack * scale, axis=-1)

    def affine(self, matrix: np.ndarray | None = None, shift=None) -> "PolyCell":
        v = self.vertices
        if matrix is not None:
            v = v @ np.asarray(matrix, dtype=float).T
        if shift is not None:
            v = v + np.asarray(shift, dtype=float)
        return PolyCell(v, self.hard)

    def rule(self, q: int, sphere_res=None) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices
        if self.dim == 1:
            x, w = interval_rule(v[0, 0], v[1, 0], q)
            return x[:, None], w
        if self.dim == 2:
            k = len(v)
            tri = np.stack([np.repeat(v[:1], k - 2, axis=0), v[1:-1], v[2:]], axis=1)
            return triangles_rule(tri, q)
        try:
            dl = Delaunay(v)
        except QhullError:
            return np.zeros((0, 3)), np.zeros(0)
        return tetra_rule(v[dl.simplices], q)


@dataclass(frozen=True, eq=False)
class EllipCell:
    """{center + M u : |u| <= breaks[-1]} (or all of R^n when ``tail``), polar rule.

    ``breaks`` are radial panel boundaries in u-units, starting at 0.
    """

    center: np.ndarray
    matrix: np.ndarray
    breaks: tuple
    tail: bool = False
    hard: bool = True

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def radius(self) -> float:
        return math.inf if self.tail else self.breaks[-1]

    @cached_property
    def _inv(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    @cached_property
    def _row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.matrix, axis=1)

    @cached_property
    def opnorm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    @cached_property
    def bbox(self):
        r = self.radius
        return self.center - r * self._row_norms, self.center + r * self._row_norms

    @cached_property
    def measure(self) -> float:
        from .specialfns import unit_ball_volume

        return unit_ball_volume(self.dim) * abs(np.linalg.det(self.matrix)) * self.radius**self.dim

    @property
    def isotropic(self) -> bool:
        m = self.matrix
        s = abs(m[0, 0])
        return bool(np.allclose(m.T @ m, s * s * np.eye(self.dim), rtol=1e-12, atol=1e-14))

    def contains(self, x: np.ndarray, slack: float = 1e-12) -> np.ndarray:
        u = (np.atleast_2d(x) - self.center) @ self._inv.T
        return np.linalg.norm(u, axis=1) <= self.radius * (1 + slack)

    def affine(self, matrix=None, shift=None) -> "EllipCell":
        c, m = self.center, self.matrix
        if matrix is not None:
            mat = np.asarray(matrix, dtype=float)
            c, m = mat @ c, mat @ m
        if shift is not None:
            c = c + np.asarray(shift, dtype=float)
        return replace(self, center=c, matrix=m)

    def with_breaks(self, extra) -> "EllipCell":
        b = sorted(set(self.breaks) | {float(e) for e in extra if 0 < e < self.radius})
        return replace(self, breaks=tuple(b))

    def rule(self, q: int, sphere_res=None) -> tuple[np.ndarray, np.ndarray]:
        n = self.dim
        t, wt = breaks_rule(self.breaks, q)
        if self.tail:
            tt, wtt = tail_rule(self.breaks[-1], q)
            t, wt = np.concatenate([t, tt]), np.concatenate([wt, wtt])
        sg = _sphere(n, sphere_res if sphere_res is not None else default_sphere_resolution(n))
        dirs = sg.nodes @ self.matrix.T
        pts = self.center + t[:, None, None] * dirs[None, :, :]
        wts = (wt * t ** (n - 1))[:, None] * sg.weights[None, :] * abs(np.linalg.det(self.matrix))
        return pts.reshape(-1, n), wts.ravel()

    def box_cells(self) -> list:
        """Tensor subdivision of the bounding box into hard-free poly cells."""
        lo, hi = self.bbox
        k = min(8, 2 * max(1, len(self.breaks) - 1))
        edges = [np.linspace(a, b, k + 1) for a, b in zip(lo, hi)]
        cells = []
        for idx in np.ndindex(*([k] * self.dim)):
            blo = np.array([edges[d][i] for d, i in enumerate(idx)])
            bhi = np.array([edges[d][i + 1] for d, i in enumerate(idx)])
            cells.append(box_cell(blo, bhi, hard=False))
        return cells


@dataclass(frozen=True, eq=False)
class ClippedCell:
    """Base cell rule with the integrand multiplied by indicators of ``clips``.

    Only used when two curved hard boundaries cross; accuracy is first order.
    """

    base: object
    clips: tuple

    @property
    def dim(self):
        return self.base.dim

    @property
    def hard(self):
        return True

    @property
    def bbox(self):
        lo, hi = self.base.bbox
        for c in self.clips:
            clo, chi = c.bbox
            lo, hi = np.maximum(lo, clo), np.minimum(hi, chi)
        return lo, hi

    def affine(self, matrix=None, shift=None):
        return ClippedCell(self.base.affine(matrix, shift), tuple(c.affine(matrix, shift) for c in self.clips))

    def contains(self, x, slack=1e-12):
        ok = self.base.contains(x, slack)
        for c in self.clips:
            ok = ok & c.contains(x, slack)
        return ok

    def rule(self, q: int, sphere_res=None):
        p, w = self.base.rule(2 * q, sphere_res if sphere_res is None else 2 * sphere_res)
        mask = np.ones(len(w), dtype=bool)
        for c in self.clips:
            mask &= c.contains(p, 0.0)
        return p[mask], w[mask]


@dataclass(frozen=True, eq=False)
class PartitionCell:
    """Soft cell whose rule carries the weight phi_own / (phi_own + phi_other),
    phi_c(x) = (1 + |M_c^-1 (x - c)|^2)^-power.

    Two such cells, one around each peak, split a product of two separated
    smooth bumps into pieces that are each peaked only at their own centre.
    """

    base: EllipCell
    own: EllipCell
    other: EllipCell
    power: float = 4.0

    @property
    def dim(self):
        return self.base.dim

    @property
    def hard(self):
        return False

    @property
    def tail(self):
        return self.base.tail

    @property
    def bbox(self):
        return self.base.bbox

    def affine(self, matrix=None, shift=None):
        return PartitionCell(*(c.affine(matrix, shift) for c in (self.base, self.own, self.other)), self.power)

    def contains(self, x, slack=1e-12):
        return self.base.contains(x, slack)

    def weight(self, x):
        uo = np.sum(((x - self.own.center) @ self.own._inv.T) ** 2, axis=1)
        ut = np.sum(((x - self.other.center) @ self.other._inv.T) ** 2, axis=1)
        return 1.0 / (1.0 + ((1.0 + uo) / (1.0 + ut)) ** self.power)

    def rule(self, q: int, sphere_res=None):
        p, w = self.base.rule(q, sphere_res)
        return p, w * self.weight(p)


@dataclass(frozen=True, eq=False)
class CurvedCell:
    """Convex polygon intersected with an ellipse, planar only.

    The boundary is split into straight pieces and elliptic arcs; the rule is a
    fan from an interior point, Gauss-Legendre along each piece and radially.
    """

    poly: PolyCell
    ell: EllipCell

    @property
    def dim(self):
        return 2

    @property
    def hard(self):
        return True

    @property
    def bbox(self):
        (a, b), (c, d) = self.poly.bbox, self.ell.bbox
        return np.maximum(a, c), np.minimum(b, d)

    def affine(self, matrix=None, shift=None):
        return CurvedCell(self.poly.affine(matrix, shift), self.ell.affine(matrix, shift))

    def contains(self, x, slack=1e-12):
        return self.poly.contains(x, slack) & self.ell.contains(x, slack)

    @cached_property
    def pieces(self) -> list:
        """('seg', p, q) or ('arc', th0, th1) in the ellipse's unit-disk frame."""
        e = self.ell
        R = e.radius
        V = (self.poly.vertices - e.center) @ e._inv.T / R
        m = len(V)
        segs = []
        for i in range(m):
            p, d = V[i], V[(i + 1) % m] - V[i]
            qa, qb, qc = d @ d, p @ d, p @ p - 1.0
            disc = qb * qb - qa * qc
            if disc <= 0:
                continue
            r = math.sqrt(disc)
            s0, s1 = max(0.0, (-qb - r) / qa), min(1.0, (-qb + r) / qa)
            if s1 - s0 > 1e-14:
                segs.append((p + s0 * d, p + s1 * d))
        out = []
        k = len(segs)
        for j, (a, b) in enumerate(segs):
            out.append(("seg", a, b))
            nxt = segs[(j + 1) % k][0]
            if np.linalg.norm(nxt - b) > 1e-13:
                t0 = math.atan2(b[1], b[0])
                t1 = math.atan2(nxt[1], nxt[0])
                if t1 <= t0:
                    t1 += 2 * math.pi
                nseg = max(1, math.ceil((t1 - t0) / (math.pi / 4)))
                for i in range(nseg):
                    out.append(("arc", t0 + (t1 - t0) * i / nseg, t0 + (t1 - t0) * (i + 1) / nseg))
        return out

    def rule(self, q: int, sphere_res=None):
        pcs = self.pieces
        if not pcs:
            return np.zeros((0, 2)), np.zeros(0)
        ends = [p[1] for p in pcs if p[0] == "seg"] + [p[2] for p in pcs if p[0] == "seg"]
        c0 = np.mean(ends, axis=0)
        x, w = gauss_legendre(q)
        u, wu = 0.5 * (x + 1.0), 0.5 * w
        P, W = [], []
        for kind, a, b in pcs:
            if kind == "seg":
                g = a[None, :] + u[:, None] * (b - a)[None, :]
                dg = np.broadcast_to(b - a, g.shape)
            else:
                th = a + (b - a) * u
                g = np.stack([np.cos(th), np.sin(th)], axis=1)
                dg = (b - a) * np.stack([-np.sin(th), np.cos(th)], axis=1)
            rel = g - c0
            jac = np.abs(rel[:, 0] * dg[:, 1] - rel[:, 1] * dg[:, 0])
            pts = c0 + u[:, None, None] * rel[None, :, :]
            P.append(pts.reshape(-1, 2))
            W.append((wu[:, None] * u[:, None] * (wu * jac)[None, :]).ravel())
        e = self.ell
        scale = e.radius
        pts = e.center + (np.concatenate(P) * scale) @ e.matrix.T
        return pts, np.concatenate(W) * scale**2 * abs(np.linalg.det(e.matrix))


def _ellipse_point(e: EllipCell, th: np.ndarray) -> np.ndarray:
    return e.center + e.radius * np.stack([np.cos(th), np.sin(th)], axis=-1) @ e.matrix.T


def _inside_arcs(e: EllipCell, other: EllipCell, samples: int = 720) -> list:
    """Angle intervals of e's boundary lying inside ``other``."""
    from scipy.optimize import brentq

    def g(th):
        u = (_ellipse_point(e, np.atleast_1d(th)) - other.center) @ other._inv.T
        return np.sum(u * u, axis=1) / other.radius**2 - 1.0

    th = np.linspace(0.0, 2 * math.pi, samples + 1)
    v = g(th)
    roots = []
    for i in range(samples):
        if v[i] == 0.0:
            roots.append(th[i])
        elif v[i] * v[i + 1] < 0:
            roots.append(brentq(lambda t: float(g(t)[0]), th[i], th[i + 1], xtol=1e-15))
    if not roots:
        return [(0.0, 2 * math.pi)] if v[0] < 0 else []
    roots = sorted(roots)
    out = []
    for k, a in enumerate(roots):
        b = roots[(k + 1) % len(roots)] + (2 * math.pi if k + 1 == len(roots) else 0.0)
        if b - a > 1e-14 and g(0.5 * (a + b))[0] < 0:
            out.append((a, b))
    return out


@dataclass(frozen=True, eq=False)
class LensCell:
    """Intersection of two planar ellipses with crossing boundaries.

    Same fan rule as CurvedCell: Gauss-Legendre along each boundary arc and
    radially towards an interior point.
    """

    a: EllipCell
    b: EllipCell

    @property
    def dim(self):
        return 2

    @property
    def hard(self):
        return True

    @property
    def bbox(self):
        (a0, a1), (b0, b1) = self.a.bbox, self.b.bbox
        return np.maximum(a0, b0), np.minimum(a1, b1)

    def affine(self, matrix=None, shift=None):
        return LensCell(self.a.affine(matrix, shift), self.b.affine(matrix, shift))

    def contains(self, x, slack=1e-12):
        return self.a.contains(x, slack) & self.b.contains(x, slack)

    @cached_property
    def pieces(self) -> list:
        """(ellipse, th0, th1) arcs, each at most pi/4 long."""
        out = []
        for e, o in ((self.a, self.b), (self.b, self.a)):
            for t0, t1 in _inside_arcs(e, o):
                k = max(1, math.ceil((t1 - t0) / (math.pi / 4)))
                out += [(e, t0 + (t1 - t0) * i / k, t0 + (t1 - t0) * (i + 1) / k) for i in range(k)]
        return out

    def rule(self, q: int, sphere_res=None):
        pcs = self.pieces
        if not pcs:
            return np.zeros((0, 2)), np.zeros(0)
        # mean of boundary points of a strictly convex set lies inside it
        c0 = np.mean([_ellipse_point(e, np.array([t0, 0.5 * (t0 + t1)])) for e, t0, t1 in pcs], axis=(0, 1))
        x, w = gauss_legendre(q)
        u, wu = 0.5 * (x + 1.0), 0.5 * w
        P, W = [], []
        for e, t0, t1 in pcs:
            th = t0 + (t1 - t0) * u
            g = _ellipse_point(e, th)
            dg = (t1 - t0) * e.radius * np.stack([-np.sin(th), np.cos(th)], axis=1) @ e.matrix.T
            rel = g - c0
            jac = np.abs(rel[:, 0] * dg[:, 1] - rel[:, 1] * dg[:, 0])
            P.append((c0 + u[:, None, None] * rel[None, :, :]).reshape(-1, 2))
            W.append((wu[:, None] * u[:, None] * (wu * jac)[None, :]).ravel())
        return np.concatenate(P), np.concatenate(W)


def _distance_breaks(cell: EllipCell, r: float) -> list:
    out = [0.5 * r, r, 2.0 * r]
    b = cell.breaks[-1]
    while b < 2.0 * r:
        b *= 2.0
        out.append(b)
    return out


def box_cell(lo, hi, hard: bool = True) -> PolyCell:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n = len(lo)
    if n == 1:
        return PolyCell(np.array([[lo[0]], [hi[0]]]), hard)
    if n == 2:
        v = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
        return PolyCell(v, hard)
    grids = np.meshgrid(*[[a, b] for a, b in zip(lo, hi)], indexing="ij")
    return PolyCell(np.column_stack([g.ravel() for g in grids]), hard)


def _bbox_overlap(a, b) -> bool:
    alo, ahi = a.bbox
    blo, bhi = b.bbox
    return bool(np.all(alo <= bhi + _EPS) and np.all(blo <= ahi + _EPS))


def _clip_polygon(v: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon by halfplanes a.x <= b."""
    for ai, bi in zip(a, b):
        if len(v) == 0:
            break
        s = v @ ai - bi
        inside = s <= 1e-13 * (1.0 + abs(bi))
        if inside.all():
            continue
        if not inside.any():
            return np.zeros((0, 2))
        out = []
        k = len(v)
        for i in range(k):
            j = (i + 1) % k
            if inside[i]:
                out.append(v[i])
            if inside[i] != inside[j]:
                t = s[i] / (s[i] - s[j])
                out.append(v[i] + t * (v[j] - v[i]))
        v = np.array(out)
    return v


def _chebyshev_center(a: np.ndarray, b: np.ndarray):
    norms = np.linalg.norm(a, axis=1)
    n = a.shape[1]
    res = linprog(
        np.r_[np.zeros(n), -1.0],
        A_ub=np.column_stack([a, norms]),
        b_ub=b,
        bounds=[(None, None)] * n + [(0, None)],
        method="highs",
    )
    if res.status != 0 or res.x[-1] <= 1e-10:
        return None
    return res.x[:-1]


def intersect_polys(p: PolyCell, q: PolyCell) -> PolyCell | None:
    hard = p.hard or q.hard
    n = p.dim
    if n == 1:
        lo = max(p.vertices[0, 0], q.vertices[0, 0])
        hi = min(p.vertices[1, 0], q.vertices[1, 0])
        return PolyCell(np.array([[lo], [hi]]), hard) if hi - lo > _EPS * (1 + abs(hi)) else None
    if n == 2:
        a, b = q.halfspaces
        v = _clip_polygon(p.vertices, a, b)
        if len(v) < 3:
            return None
        cell = PolyCell(v, hard)
        scale = max(p.measure, q.measure, 1e-300)
        return cell if cell.measure > 1e-13 * scale else None
    a = np.vstack([p.halfspaces[0], q.halfspaces[0]])
    b = np.concatenate([p.halfspaces[1], q.halfspaces[1]])
    c = _chebyshev_center(a, b)
    if c is None:
        return None
    try:
        hs = HalfspaceIntersection(np.column_stack([a, -b]), c)
        v = hs.intersections
        hull = ConvexHull(v)
    except QhullError:
        return None
    return PolyCell(v[hull.vertices], hard)


def _ellip_in_halfspaces(e: EllipCell, a, b) -> bool:
    return bool(np.all(a @ e.center + e.radius * np.linalg.norm(a @ e.matrix, axis=1) <= b + 1e-12))


def _ellip_outside_some_halfspace(e: EllipCell, a, b) -> bool:
    return bool(np.any(a @ e.center - e.radius * np.linalg.norm(a @ e.matrix, axis=1) >= b - 1e-12))


def _ellip_pair_relation(e1: EllipCell, e2: EllipCell) -> str:
    """'inside' (e1 in e2), 'disjoint', or 'overlap' from sufficient tests."""
    d = e2._inv @ (e1.center - e2.center)
    nmat = e2._inv @ e1.matrix
    nrm = float(np.linalg.norm(nmat, 2))
    dist = float(np.linalg.norm(d))
    if dist + nrm * e1.radius <= e2.radius * (1 + 1e-12):
        return "inside"
    if dist - nrm * e1.radius >= e2.radius:
        # exact for balls; for ellipsoids test e2 against e1 too
        return "disjoint"
    d2 = e1._inv @ (e2.center - e1.center)
    if float(np.linalg.norm(d2)) - float(np.linalg.norm(e1._inv @ e2.matrix, 2)) * e2.radius >= e1.radius:
        return "disjoint"
    return "overlap"


def intersect(a, b) -> list:
    """Cells covering a ∩ b on which a product of the two owners is smooth.

    By convention ``a`` belongs to the shifted factor f(x+y) and ``b`` to h(x).
    """
    if not _bbox_overlap(a, b):
        return []
    if isinstance(a, ClippedCell) or isinstance(b, ClippedCell):
        base_a = a.base if isinstance(a, ClippedCell) else a
        base_b = b.base if isinstance(b, ClippedCell) else b
        clips = tuple(a.clips if isinstance(a, ClippedCell) else ()) + tuple(
            b.clips if isinstance(b, ClippedCell) else ()
        )
        out = []
        for c in intersect(base_a, base_b):
            out.append(ClippedCell(c.base if isinstance(c, ClippedCell) else c, clips + (
                c.clips if isinstance(c, ClippedCell) else ())))
        return out
    if isinstance(a, PolyCell) and isinstance(b, PolyCell):
        c = intersect_polys(a, b)
        return [] if c is None else [c]
    if isinstance(a, EllipCell) and isinstance(b, EllipCell):
        return _intersect_ellipses(a, b)
    poly, ell = (a, b) if isinstance(a, PolyCell) else (b, a)
    return _intersect_poly_ellip(poly, ell)


def _intersect_ellipses(a: EllipCell, b: EllipCell) -> list:
    if not a.hard and not b.hard:
        # smooth product; integrate on h's cell, resolving f's peak radially
        u = b._inv @ (a.center - b.center)
        r = float(np.linalg.norm(u))
        ra = float(np.linalg.norm(a._inv @ (b.center - a.center)))
        if max(r, ra) > 1.0:
            return [
                PartitionCell(a.with_breaks(_distance_breaks(a, ra)), a, b),
                PartitionCell(b.with_breaks(_distance_breaks(b, r)), b, a),
            ]
        extra = [r] if r > 0 else []
        if a.tail or b.tail:
            return [b.with_breaks(extra)]
        return [b.with_breaks(extra)] if b.measure <= a.measure else [a.with_breaks(
            [float(np.linalg.norm(a._inv @ (b.center - a.center)))])]
    if not a.hard or not b.hard:
        soft, hard = (a, b) if not a.hard else (b, a)
        if not soft.tail and _ellip_pair_relation(soft, hard) == "inside":
            return [soft]
        if not soft.tail and _ellip_pair_relation(soft, hard) == "disjoint":
            return []
        return [hard]
    rel = _ellip_pair_relation(a, b)
    if rel == "inside":
        return [a]
    if rel == "disjoint":
        return []
    rel2 = _ellip_pair_relation(b, a)
    if rel2 == "inside":
        return [b]
    if a.dim == 2 and not (a.tail or b.tail):
        return [LensCell(a, b)]
    small, big = (a, b) if a.measure <= b.measure else (b, a)
    return [ClippedCell(small, (big,))]


def _intersect_poly_ellip(poly: PolyCell, ell: EllipCell) -> list:
    a, b = poly.halfspaces
    if not ell.hard:
        if ell.tail:
            return [poly]
        if not poly.hard:
            return [poly]
        if _ellip_in_halfspaces(ell, a, b):
            return [ell]
        out = []
        for bc in ell.box_cells():
            c = intersect_polys(poly, bc)
            if c is not None:
                out.append(replace(c, hard=True) if not c.hard else c)
        return out
    if not poly.hard:
        return [ell]
    if _ellip_in_halfspaces(ell, a, b):
        return [ell]
    if _ellip_outside_some_halfspace(ell, a, b):
        return []
    if np.all(ell.contains(poly.vertices, 0.0)):
        return [poly]
    if poly.dim == 2:
        return [CurvedCell(poly, ell)]
    if poly.measure <= ell.measure:
        return [ClippedCell(poly, (ell,))]
    return [ClippedCell(ell, (poly,))]


def intersect_lists(fa: list, hb: list) -> list:
    out = []
    for a in fa:
        for b in hb:
            out.extend(intersect(a, b))
    return out


def cells_rule(cells: list, q: int, sphere_res=None) -> tuple[np.ndarray, np.ndarray]:
    if not cells:
        return np.zeros((0, 1)), np.zeros(0)
    ps, ws = [], []
    for c in cells:
        p, w = c.rule(q, sphere_res)
        ps.append(p)
        ws.append(w)
    return np.concatenate(ps), np.concatenate(ws)


def integrate(fn, cells: list, q: int, sphere_res=None, dim: int | None = None) -> float:
    pts, wts = cells_rule(cells, q, sphere_res)
    if len(wts) == 0:
        return 0.0
    vals = fn(pts)
    return float(np.dot(wts, vals))


def integrate_with_error(fn, cells: list, q: int, sphere_res=None) -> tuple[float, float]:
    """Value at order q and |I_q - I_q'| for a lower order q' as the error bar."""
    hi = integrate(fn, cells, q, sphere_res)
    q_lo = max(3, int(math.ceil(0.7 * q)))
    res_lo = None if sphere_res is None else max(4, int(0.7 * sphere_res))
    lo = integrate(fn, cells, q_lo, res_lo)
    return hi, abs(hi - lo)


def cells_bbox(cells: list):
    lo = np.min([c.bbox[0] for c in cells], axis=0)
    hi = np.max([c.bbox[1] for c in cells], axis=0)
    return lo, hi
