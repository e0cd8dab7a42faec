"""Implicit geometry for the boundary-derivative experiments.

Domains are predicates plus exact boundary projection, not meshes: the grid
solver classifies lattice nodes against `inside`, and the geometric
hypothesis checkers (enclosing tangent ball, strict hyperplane separation)
work on deterministic quasi-uniform boundary samples.  Inward normals are
reported only on smooth boundary pieces; edges, corners and rims give NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog
from scipy.stats import norm, qmc

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    """Normalize to an (n, dim) float array; report whether input was a single point."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if pts.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return pts, single


@dataclass(frozen=True)
class Domain:
    """Bounded domain given implicitly.

    dim, bbox are exact; inside/project/normal are vectorized over an (n, dim)
    leading axis and also accept a single (dim,) point.
    """

    dim: int
    bbox: np.ndarray  # (2, dim) rows [lo, hi]
    kind: str
    params: tuple
    inside_fn: Callable[[np.ndarray], np.ndarray]
    project_fn: Callable[[np.ndarray], np.ndarray]
    normal_fn: Callable[[np.ndarray], np.ndarray]
    sample_fn: Callable[[int], np.ndarray]

    def inside(self, x):
        pts, single = _as_points(x, self.dim)
        out = self.inside_fn(pts)
        return bool(out[0]) if single else out

    def boundary_project(self, x):
        pts, single = _as_points(x, self.dim)
        out = self.project_fn(pts)
        return out[0] if single else out

    def inward_normal(self, x):
        """Unit inward normal at a boundary point; NaN where the boundary is not smooth."""
        pts, single = _as_points(x, self.dim)
        out = self.normal_fn(pts)
        return out[0] if single else out

    def boundary_distance(self, x):
        pts, single = _as_points(x, self.dim)
        d = np.linalg.norm(pts - self.project_fn(pts), axis=1)
        return float(d[0]) if single else d

    def boundary_samples(self, n: int = 4096) -> np.ndarray:
        """Deterministic quasi-uniform samples of the boundary, (m, dim) with m >= n."""
        return self.sample_fn(int(n))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.bbox[1] - self.bbox[0]))

    def describe(self) -> str:
        return f"{self.kind}({', '.join(repr(p) for p in self.params)})"


@dataclass(frozen=True)
class BoundaryFunction:
    """Real-valued boundary data: value(points) -> array in [0, 1]."""

    value: Callable[[np.ndarray], np.ndarray]
    description: str


class BoundaryIndicator(BoundaryFunction):
    """{0,1}-valued boundary data (indicator of a closed boundary subset)."""


# --------------------------------------------------------------------------
# quasi-uniform point sets
# --------------------------------------------------------------------------

def sphere_points(m: int, dim: int, radius: float = 1.0) -> np.ndarray:
    """Deterministic near-uniform points on the sphere |x| = radius in R^dim."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if dim == 1:
        return np.array([[-radius], [radius]])
    if dim == 2:
        th = 2.0 * np.pi * np.arange(m) / max(m, 1)
        return radius * np.stack([np.cos(th), np.sin(th)], axis=1)
    if dim == 3:
        k = np.arange(m)
        z = 1.0 - (2.0 * k + 1.0) / max(m, 1)
        th = 2.0 * np.pi * k / GOLDEN
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        return radius * np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)
    h = qmc.Halton(d=dim, scramble=False).random(m + 1)[1:]  # drop the origin point
    g = norm.ppf(np.clip(h, 1e-12, 1 - 1e-12))
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    return radius * g / nrm


def ball_points(m: int, dim: int, radius: float = 1.0) -> np.ndarray:
    """Deterministic near-uniform points in the closed ball |x| <= radius."""
    if dim == 1:
        return np.linspace(-radius, radius, max(m, 2)).reshape(-1, 1)
    if dim == 2:
        k = np.arange(m)
        r = radius * np.sqrt((k + 0.5) / max(m, 1))
        th = 2.0 * np.pi * k / GOLDEN
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    h = qmc.Halton(d=dim + 1, scramble=False).random(m + 1)[1:]
    g = norm.ppf(np.clip(h[:, :dim], 1e-12, 1 - 1e-12))
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    r = radius * h[:, dim:] ** (1.0 / dim)
    return r * g / nrm


# --------------------------------------------------------------------------
# builtin domains
# --------------------------------------------------------------------------

def annulus(r_in: float, r_out: float, d: int) -> Domain:
    """Spherical shell r_in < |x| < r_out in R^d."""
    if not 0 < r_in < r_out:
        raise ValueError(f"annulus requires 0 < r_in < r_out, got r_in={r_in}, r_out={r_out}")
    if d < 1:
        raise ValueError(f"annulus requires d >= 1, got d={d}")
    mid = 0.5 * (r_in + r_out)
    tol = 1e-9 * 2.0 * r_out

    def inside(pts):
        r = np.linalg.norm(pts, axis=1)
        return (r > r_in) & (r < r_out)

    def project(pts):
        r = np.linalg.norm(pts, axis=1, keepdims=True)
        u = np.where(r > 0, pts / np.where(r > 0, r, 1.0), _e1(d))
        return np.where(r <= mid, r_in * u, r_out * u)

    def normal(pts):
        r = np.linalg.norm(pts, axis=1, keepdims=True)
        u = np.divide(pts, r, out=np.zeros_like(pts), where=r > 0)
        out = np.full_like(pts, np.nan)
        on_in = np.abs(r - r_in)[:, 0] <= tol
        on_out = np.abs(r - r_out)[:, 0] <= tol
        out[on_in] = u[on_in]          # inward at the inner sphere points away from the origin
        out[on_out] = -u[on_out]
        return out

    def samples(n):
        w_in = r_in ** (d - 1) / (r_in ** (d - 1) + r_out ** (d - 1))
        n_in = max(2, int(round(n * w_in)))
        return np.vstack([
            sphere_points(n_in, d, r_in),
            sphere_points(max(2, n - n_in), d, r_out),
        ])

    bbox = np.array([[-r_out] * d, [r_out] * d], dtype=float)
    return Domain(d, bbox, "annulus", (r_in, r_out, d), inside, project, normal, samples)


def _e1(d):
    v = np.zeros(d)
    v[0] = 1.0
    return v


def cylinder(d: int, R: float, H: float) -> Domain:
    """Finite cylinder B^d(0, R) x (0, H) in R^{d+1} (d = cross-section dimension)."""
    if d < 1:
        raise ValueError(f"cylinder requires cross-section dimension d >= 1, got d={d}")
    if R <= 0:
        raise ValueError(f"cylinder requires R > 0, got R={R}")
    if H <= 0:
        raise ValueError(f"cylinder requires H > 0, got H={H}")
    dim = d + 1
    tol = 1e-9 * max(2 * R, H)

    def split(pts):
        return pts[:, :d], pts[:, d]

    def inside(pts):
        x, y = split(pts)
        return (np.linalg.norm(x, axis=1) < R) & (y > 0) & (y < H)

    def project(pts):
        x, y = split(pts)
        rho = np.linalg.norm(x, axis=1)
        u = np.divide(x, rho[:, None], out=np.tile(_e1(d), (len(pts), 1)), where=rho[:, None] > 0)
        out = np.empty_like(pts)
        inside_closed = (rho <= R) & (y >= 0) & (y <= H)
        # interior: push to the nearest of side / bottom / top
        d_side, d_bot, d_top = R - rho, y, H - y
        to_side = inside_closed & (d_side <= d_bot) & (d_side <= d_top)
        to_bot = inside_closed & ~to_side & (d_bot <= d_top)
        to_top = inside_closed & ~to_side & ~to_bot
        out[to_side, :d] = R * u[to_side]
        out[to_side, d] = y[to_side]
        out[to_bot, :d] = x[to_bot]
        out[to_bot, d] = 0.0
        out[to_top, :d] = x[to_top]
        out[to_top, d] = H
        # exterior: clamping onto the closed cylinder lands on the boundary
        ext = ~inside_closed
        scale = np.minimum(1.0, np.divide(R, rho, out=np.ones_like(rho), where=rho > 0))
        out[ext, :d] = x[ext] * scale[ext, None]
        out[ext, d] = np.clip(y[ext], 0.0, H)
        return out

    def normal(pts):
        x, y = split(pts)
        rho = np.linalg.norm(x, axis=1)
        u = np.divide(x, rho[:, None], out=np.zeros((len(pts), d)), where=rho[:, None] > 0)
        out = np.full_like(pts, np.nan)
        on_side = (np.abs(rho - R) <= tol) & (y > tol) & (y < H - tol)
        on_bot = (np.abs(y) <= tol) & (rho < R - tol)
        on_top = (np.abs(y - H) <= tol) & (rho < R - tol)
        out[on_side, :d] = -u[on_side]
        out[on_side, d] = 0.0
        out[on_bot, :d] = 0.0
        out[on_bot, d] = 1.0
        out[on_top, :d] = 0.0
        out[on_top, d] = -1.0
        return out

    def samples(n):
        # side area ~ surface(S^{d-1}) R^{d-1} H, caps ~ vol(B^d) R^d each
        side_m = _sphere_area(d, R) * H
        cap_m = _ball_vol(d, R)
        total = side_m + 2 * cap_m
        n_side = max(4, int(round(n * side_m / total)))
        if d == 1:
            ring = sphere_points(2, d, R)
        else:
            rings_est = max(2, int(round(math.sqrt(n_side * H / max(_sphere_area(d, R), 1e-12)))))
            ring = sphere_points(max(2, n_side // rings_est), d, R)
        rings = max(2, int(math.ceil(n_side / len(ring))))
        ys = np.linspace(0.0, H, rings)  # includes both rims
        side = np.concatenate(
            [np.hstack([ring, np.full((len(ring), 1), yy)]) for yy in ys], axis=0
        )
        n_cap = max(4, int(math.ceil((n - len(side)) / 2)) + 1)
        cap = ball_points(n_cap, d, R)
        bot = np.hstack([cap, np.zeros((len(cap), 1))])
        top = np.hstack([cap, np.full((len(cap), 1), H)])
        return np.vstack([side, bot, top])

    bbox = np.array([[-R] * d + [0.0], [R] * d + [H]], dtype=float)
    return Domain(dim, bbox, "cylinder", (d, R, H), inside, project, normal, samples)


def _sphere_area(d, R):
    # surface measure of the sphere |x| = R in R^d
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0) * R ** (d - 1)


def _ball_vol(d, R):
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * R ** d


def box(sides) -> Domain:
    """Axis-aligned open box, sides = [(lo_1, hi_1), ..., (lo_d, hi_d)]."""
    sides = [(float(lo), float(hi)) for lo, hi in sides]
    for i, (lo, hi) in enumerate(sides):
        if not lo < hi:
            raise ValueError(f"box side {i} requires lo < hi, got ({lo}, {hi})")
    d = len(sides)
    lo = np.array([s[0] for s in sides])
    hi = np.array([s[1] for s in sides])
    tol = 1e-9 * float(np.max(hi - lo))

    def inside(pts):
        return np.all((pts > lo) & (pts < hi), axis=1)

    def project(pts):
        clamped = np.clip(pts, lo, hi)
        out = clamped.copy()
        is_in = np.all((pts > lo) & (pts < hi), axis=1)
        if np.any(is_in):
            q = pts[is_in]
            d_lo = q - lo
            d_hi = hi - q
            gaps = np.concatenate([d_lo, d_hi], axis=1)  # (m, 2d)
            j = np.argmin(gaps, axis=1)
            moved = q.copy()
            rows = np.arange(len(q))
            axis = j % d
            to_hi = j >= d
            moved[rows, axis] = np.where(to_hi, hi[axis], lo[axis])
            out[is_in] = moved
        return out

    def normal(pts):
        out = np.full_like(pts, np.nan)
        at_lo = np.abs(pts - lo) <= tol
        at_hi = np.abs(pts - hi) <= tol
        strict = (pts > lo + tol) & (pts < hi - tol)
        on_face = at_lo | at_hi
        ok = (on_face.sum(axis=1) == 1) & ((strict | on_face).all(axis=1))
        idx = np.argmax(on_face, axis=1)
        for i in np.flatnonzero(ok):
            v = np.zeros(d)
            v[idx[i]] = 1.0 if at_lo[i, idx[i]] else -1.0
            out[i] = v
        return out

    def samples(n):
        areas = []
        ext = hi - lo
        for a in range(d):
            face_area = float(np.prod(np.delete(ext, a))) if d > 1 else 1.0
            areas.extend([face_area, face_area])
        areas = np.array(areas)
        per = np.maximum(2, np.round(n * areas / areas.sum()).astype(int))
        chunks = []
        for a in range(d):
            m = per[2 * a]
            if d == 1:
                grid = np.zeros((1, 0))
            else:
                k = max(2, int(math.ceil(m ** (1.0 / (d - 1)))))
                axes = [np.linspace(lo[b], hi[b], k) for b in range(d) if b != a]
                grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d - 1)
            for val in (lo[a], hi[a]):
                face = np.empty((len(grid), d))
                cols = [b for b in range(d) if b != a]
                face[:, cols] = grid
                face[:, a] = val
                chunks.append(face)
        return np.vstack(chunks)

    bbox = np.array([lo, hi])
    return Domain(d, bbox, "box", (tuple(sides),), inside, project, normal, samples)


def make_builtin(spec: str) -> Domain:
    """Parse a domain spec string, e.g. 'annulus 1.0 2.0 2', 'cylinder 1 1.0 1.0',
    'box 0,1 0,1'."""
    toks = spec.split()
    if not toks:
        raise ValueError("empty domain spec")
    kind, args = toks[0], toks[1:]
    if kind == "annulus":
        if len(args) != 3:
            raise ValueError("annulus spec needs: r_in r_out d")
        return annulus(float(args[0]), float(args[1]), int(args[2]))
    if kind == "cylinder":
        if len(args) != 3:
            raise ValueError("cylinder spec needs: d R H")
        return cylinder(int(args[0]), float(args[1]), float(args[2]))
    if kind == "box":
        if not args:
            raise ValueError("box spec needs at least one lo,hi pair")
        sides = []
        for tok in args:
            parts = tok.split(",")
            if len(parts) != 2:
                raise ValueError(f"box side '{tok}' is not of the form lo,hi")
            sides.append((float(parts[0]), float(parts[1])))
        return box(sides)
    raise ValueError(f"unknown domain kind '{kind}'")


# --------------------------------------------------------------------------
# builtin boundary data
# --------------------------------------------------------------------------

def constant_data(v: float, description: Optional[str] = None) -> BoundaryIndicator:
    if v not in (0.0, 1.0, 0, 1):
        raise ValueError("constant indicator must be 0 or 1")
    return BoundaryIndicator(
        lambda pts: np.full(len(np.atleast_2d(pts)), float(v)),
        description or f"const-{int(v)}",
    )


def annulus_data(dom: Domain, one_on: str) -> BoundaryIndicator:
    """1 on the selected sphere of an annulus ('inner' or 'outer'), 0 on the other."""
    if dom.kind != "annulus":
        raise ValueError("annulus_data requires an annulus domain")
    if one_on not in ("inner", "outer"):
        raise ValueError(f"one_on must be 'inner' or 'outer', got {one_on!r}")
    r_in, r_out, _ = dom.params
    mid = 0.5 * (r_in + r_out)

    def value(pts):
        r = np.linalg.norm(np.atleast_2d(pts), axis=1)
        on_outer = r >= mid
        return (on_outer if one_on == "outer" else ~on_outer).astype(float)

    return BoundaryIndicator(value, f"annulus-{one_on}")


def cylinder_sides_top(dom: Domain) -> BoundaryIndicator:
    """1 on the lateral wall and the top cap (closed: rims included), 0 on the bottom."""
    if dom.kind != "cylinder":
        raise ValueError("cylinder_sides_top requires a cylinder domain")
    d, R, H = dom.params
    tol = 1e-9 * max(2 * R, H)

    def value(pts):
        pts = np.atleast_2d(pts)
        rho = np.linalg.norm(pts[:, :d], axis=1)
        y = pts[:, d]
        return ((rho >= R - tol) | (y >= H - tol)).astype(float)

    return BoundaryIndicator(value, "cylinder-sides-top")


def cylinder_top_only(dom: Domain) -> BoundaryIndicator:
    """1 on the open top cap only; 0 on side, bottom, and the top rim."""
    if dom.kind != "cylinder":
        raise ValueError("cylinder_top_only requires a cylinder domain")
    d, R, H = dom.params
    tol = 1e-9 * max(2 * R, H)

    def value(pts):
        pts = np.atleast_2d(pts)
        rho = np.linalg.norm(pts[:, :d], axis=1)
        y = pts[:, d]
        return ((y >= H - tol) & (rho < R - tol)).astype(float)

    return BoundaryIndicator(value, "cylinder-top-only")


def cylinder_ramp_top(dom: Domain) -> BoundaryFunction:
    """Continuous data: 0 on bottom and side, min(1, 10(1 - |x|/R)) on the top cap."""
    if dom.kind != "cylinder":
        raise ValueError("cylinder_ramp_top requires a cylinder domain")
    d, R, H = dom.params
    tol = 1e-9 * max(2 * R, H)

    def value(pts):
        pts = np.atleast_2d(pts)
        rho = np.linalg.norm(pts[:, :d], axis=1)
        y = pts[:, d]
        ramp = np.clip(10.0 * (1.0 - rho / R), 0.0, 1.0)
        return np.where(y >= H - tol, ramp, 0.0)

    return BoundaryFunction(value, "cylinder-ramp-top")


def make_boundary(name: str, dom: Domain) -> BoundaryFunction:
    """Parse a boundary data name from the CLI grammar."""
    catalog = {
        "zeros": lambda: constant_data(0.0),
        "ones": lambda: constant_data(1.0),
        "inner": lambda: annulus_data(dom, "inner"),
        "outer": lambda: annulus_data(dom, "outer"),
        "sides-top": lambda: cylinder_sides_top(dom),
        "top-only": lambda: cylinder_top_only(dom),
        "ramp-top": lambda: cylinder_ramp_top(dom),
    }
    if name not in catalog:
        raise ValueError(f"unknown boundary data '{name}' (known: {sorted(catalog)})")
    return catalog[name]()


# --------------------------------------------------------------------------
# geometric hypothesis checks (sampled; necessary, not sufficient)
# --------------------------------------------------------------------------

def check_enclosing_ball(F: BoundaryIndicator, dom: Domain, x0, R: float,
                         n_samples: int = 4096) -> bool:
    """Sampled test that {F=0} minus x0 lies strictly inside the ball of radius R
    tangent at x0 from outside the domain (center x0 - R*n(x0))."""
    if R <= 0:
        raise ValueError(f"R must be positive, got {R}")
    x0 = np.asarray(x0, dtype=float)
    n = dom.inward_normal(x0)
    if np.any(np.isnan(n)):
        raise ValueError(f"inward normal undefined at x0={x0.tolist()}")
    center = x0 - R * n
    S = dom.boundary_samples(n_samples)
    zeros = S[np.asarray(F.value(S)) < 0.5]
    if len(zeros):
        zeros = zeros[np.linalg.norm(zeros - x0, axis=1) > 1e-9 * dom.diameter]
    if not len(zeros):
        return True
    dist = np.linalg.norm(zeros - center, axis=1)
    return bool(np.all(dist < R * (1.0 - 1e-12)))


def check_hyperplane_separation(F: BoundaryIndicator, dom: Domain, x0,
                                n_samples: int = 4096):
    """Search for (xi, beta) with xi.x0 > beta and xi.s < beta for every sampled
    boundary point s with F(s) = 1.  Returns (unit xi, beta) or None.

    Solved as a max-margin linear program over the sample set; absence of a
    strict separator on the samples returns None.
    """
    x0 = np.asarray(x0, dtype=float)
    d = dom.dim
    S = dom.boundary_samples(n_samples)
    ones = S[np.asarray(F.value(S)) >= 0.5]
    if not len(ones):
        center = dom.bbox.mean(axis=0)
        xi = x0 - center
        nrm = np.linalg.norm(xi)
        xi = xi / nrm if nrm > 0 else _e1(d)
        return xi, float(xi @ x0) - 1.0

    # maximize margin m subject to xi.s <= beta - m, xi.x0 >= beta + m, |xi_i| <= 1
    m = len(ones)
    A = np.zeros((m + 1, d + 2))
    A[:m, :d] = ones
    A[:m, d] = -1.0
    A[:m, d + 1] = 1.0
    A[m, :d] = -x0
    A[m, d] = 1.0
    A[m, d + 1] = 1.0
    b = np.zeros(m + 1)
    cost = np.zeros(d + 2)
    cost[d + 1] = -1.0
    bounds = [(-1.0, 1.0)] * d + [(None, None), (None, None)]
    res = linprog(cost, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if not res.success:
        return None
    xi, beta, margin = res.x[:d], res.x[d], res.x[d + 1]
    if margin <= 1e-9 * dom.diameter:
        return None
    nrm = np.linalg.norm(xi)
    if nrm == 0:
        return None
    xi, beta = xi / nrm, float(beta / nrm)
    if not (xi @ x0 > beta and np.all(ones @ xi < beta)):
        return None
    return xi, beta
