"""Grid approximation of p-harmonic functions with {0,1} Dirichlet data.

Discretization: multilinear (Q1) elements on a uniform Cartesian lattice
embedded in the implicit domain.  Lattice nodes inside the domain are
unknowns; outside nodes touching an interior node (full 3^d neighborhood)
carry Dirichlet values F(project(node)).  Every cell whose corners are all
non-exterior and at least one interior enters the energy
    E(u) = sum_cells  vol * (mean|grad u|^2_cell + delta^2)^(p/2),
with the exact per-cell integral of |grad u|^2 as the quadratic form.

Minimization is lagged diffusivity: freeze the cell weights
(p/2)(mean|grad u|^2 + delta^2)^((p-2)/2) and solve the resulting linear
weighted-Laplacian system.  Because the weight function is the derivative of
a concave function of the quadratic form (1 < p <= 2), each step minimizes a
majorant of E, so the energy is non-increasing even with inexact inner
solves started from the previous iterate.  Inner solves are conjugate
gradients preconditioned by a classical AMG hierarchy that is rebuilt only
when it degrades; the assembled matrix is an M-matrix, which gives the
discrete maximum principle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pyamg
from scipy import sparse
from scipy.ndimage import binary_dilation

from .domain import BoundaryFunction, Domain

NODE_EXTERIOR = 0
NODE_INTERIOR = 1
NODE_DIRICHLET = 2


@dataclass
class Grid:
    """Uniform lattice with per-node classification and Dirichlet values."""

    spacing: float
    origin: np.ndarray          # (d,)
    shape: tuple                # nodes per axis
    node_class: np.ndarray      # uint8 lattice
    boundary_values: np.ndarray  # float lattice, NaN off the Dirichlet set
    domain: Domain
    data: BoundaryFunction
    mollify: Optional[float] = None
    _op: object = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.shape)

    def axes(self):
        return [self.origin[a] + self.spacing * np.arange(self.shape[a])
                for a in range(self.dim)]

    def node_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def interior_count(self) -> int:
        return int(np.count_nonzero(self.node_class == NODE_INTERIOR))

    def same_layout(self, other: "Grid") -> bool:
        return (self.shape == other.shape
                and math.isclose(self.spacing, other.spacing)
                and np.allclose(self.origin, other.origin)
                and np.array_equal(self.node_class, other.node_class))


@dataclass
class GridSolution:
    """Solver output: full-lattice values (NaN at exterior nodes) plus run metadata."""

    grid: Grid
    values: np.ndarray
    p: float
    delta: float
    iterations: int
    residual: float          # final fixed-point defect, max-norm
    converged: bool
    energy_history: list


def discretize(dom: Domain, F: BoundaryFunction, n: int,
               mollify: Optional[float] = None) -> Grid:
    """Build the embedded lattice at n nodes per unit length.

    `mollify` replaces F on the Dirichlet set by the continuous ramp
    min(1, dist(x, {F=0})/mollify) computed against sampled boundary zeros
    (and exact 0 on {F=0} itself).

    Production resolutions are n >= 8; smaller n is allowed for
    hand-countable lattices.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2 nodes per unit length, got {n}")
    h = 1.0 / n
    lo, hi = dom.bbox[0], dom.bbox[1]
    counts = tuple(int(math.ceil((hi[a] - lo[a]) / h - 1e-9)) + 3
                   for a in range(dom.dim))
    origin = lo - h

    axes = [origin[a] + h * np.arange(counts[a]) for a in range(dom.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)

    inside = dom.inside(points).reshape(counts)
    if not inside.any():
        raise ValueError("grid too coarse: no interior nodes")
    halo = binary_dilation(inside, structure=np.ones((3,) * dom.dim, bool))
    node_class = np.zeros(counts, dtype=np.uint8)
    node_class[inside] = NODE_INTERIOR
    node_class[halo & ~inside] = NODE_DIRICHLET

    bvals = np.full(counts, np.nan)
    dmask = node_class == NODE_DIRICHLET
    dpts = points[dmask.ravel()]
    proj = dom.boundary_project(dpts)
    fvals = np.asarray(F.value(proj), dtype=float)
    if mollify is not None:
        if mollify <= 0:
            raise ValueError(f"mollify width must be positive, got {mollify}")
        from scipy.spatial import cKDTree

        S = dom.boundary_samples(4096)
        zeros = S[np.asarray(F.value(S)) < 0.5]
        if len(zeros):
            dist, _ = cKDTree(zeros).query(proj)
            fvals = np.where(fvals >= 0.5, np.minimum(1.0, dist / mollify), 0.0)
    bvals[dmask] = fvals

    return Grid(h, origin, counts, node_class, bvals, dom, F, mollify)


# --------------------------------------------------------------------------
# cell operator: exact Q1 stiffness, energy, and pre-sorted assembly
# --------------------------------------------------------------------------

def _local_stiffness(d: int, h: float) -> np.ndarray:
    """Exact integral of grad(phi_i).grad(phi_j) over one h-cell, multilinear basis."""
    S = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    M = np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0
    K = np.zeros((2 ** d, 2 ** d))
    for a in range(d):
        term = np.ones((1, 1))
        for b in range(d):
            term = np.kron(term, S if b == a else M)
        K += term
    return K


class _CellOperator:
    """Static structures for one grid: active cells, corner gathers, assembly pattern."""

    def __init__(self, grid: Grid):
        d = grid.dim
        h = grid.spacing
        shape = grid.shape
        cell_shape = tuple(s - 1 for s in shape)
        nonext = grid.node_class != NODE_EXTERIOR
        interior = grid.node_class == NODE_INTERIOR

        offsets = list(itertools.product((0, 1), repeat=d))
        allmask = np.ones(cell_shape, bool)
        anyint = np.zeros(cell_shape, bool)
        for off in offsets:
            sl = tuple(slice(o, o + cs) for o, cs in zip(off, cell_shape))
            allmask &= nonext[sl]
            anyint |= interior[sl]
        active = allmask & anyint

        cm = np.array(np.unravel_index(np.flatnonzero(active), cell_shape)).T
        m = len(cm)
        nc = 2 ** d
        corners = np.empty((m, nc), dtype=np.int64)
        for j, off in enumerate(offsets):
            corners[:, j] = np.ravel_multi_index((cm + np.array(off)).T, shape)

        iidx = np.full(int(np.prod(shape)), -1, dtype=np.int64)
        int_flat = np.flatnonzero(interior.ravel())
        iidx[int_flat] = np.arange(len(int_flat))

        self.dim = d
        self.h = h
        self.vol = h ** d
        self.K = _local_stiffness(d, h)
        self.n_cells = m
        self.n_unknowns = len(int_flat)
        self.interior_flat = int_flat
        self.corners = corners
        corner_iidx = iidx[corners]
        self.corner_iidx = corner_iidx
        corner_is_int = corner_iidx >= 0

        bv = np.nan_to_num(grid.boundary_values.ravel(), nan=0.0)

        # matrix pattern: blocks per local (j, k) pair with both corners interior
        rows, cols, blocks = [], [], []
        off0 = 0
        for j in range(nc):
            for k in range(nc):
                mask = corner_is_int[:, j] & corner_is_int[:, k]
                sel = np.flatnonzero(mask)
                if not len(sel):
                    continue
                rows.append(corner_iidx[sel, j].astype(np.int32))
                cols.append(corner_iidx[sel, k].astype(np.int32))
                blocks.append((off0, sel.astype(np.int32), self.K[j, k]))
                off0 += len(sel)
        self.mat_blocks = blocks
        self.mat_total = off0
        rows = np.concatenate(rows) if rows else np.zeros(0, np.int32)
        cols = np.concatenate(cols) if cols else np.zeros(0, np.int32)

        order = np.lexsort((cols, rows))
        r_s, c_s = rows[order], cols[order]
        if len(r_s):
            first = np.empty(len(r_s), bool)
            first[0] = True
            first[1:] = (r_s[1:] != r_s[:-1]) | (c_s[1:] != c_s[:-1])
            starts = np.flatnonzero(first)
            self._order = order
            self._starts = starts
            self._indices = c_s[starts].astype(np.int32)
            counts = np.bincount(r_s[starts], minlength=self.n_unknowns)
            self._indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        else:
            self._order = order
            self._starts = np.zeros(0, np.int64)
            self._indices = np.zeros(0, np.int32)
            self._indptr = np.zeros(self.n_unknowns + 1, np.int32)

        # rhs operator: rhs = -(interior x cells) B w  with B[i, c] = K[j,k] * u_D
        b_rows, b_cells, b_vals = [], [], []
        for j in range(nc):
            for k in range(nc):
                mask = corner_is_int[:, j] & ~corner_is_int[:, k]
                sel = np.flatnonzero(mask)
                if not len(sel):
                    continue
                vals = self.K[j, k] * bv[corners[sel, k]]
                nz = vals != 0.0
                if not nz.any():
                    continue
                b_rows.append(corner_iidx[sel[nz], j])
                b_cells.append(sel[nz])
                b_vals.append(vals[nz])
        if b_rows:
            self.B = sparse.coo_matrix(
                (np.concatenate(b_vals),
                 (np.concatenate(b_rows), np.concatenate(b_cells))),
                shape=(self.n_unknowns, m),
            ).tocsr()
        else:
            self.B = sparse.csr_matrix((self.n_unknowns, m))

    def cell_grad_sq(self, u_flat: np.ndarray) -> np.ndarray:
        """Mean of |grad u|^2 over each active cell (exact for Q1)."""
        U = u_flat[self.corners]
        s = np.einsum("ij,jk,ik->i", U, self.K, U) / self.vol
        # the form is PSD; rounding can leave ~-1e-30 on flat cells, which
        # p/2 - 1 powers turn into NaN
        return np.maximum(s, 0.0)

    def weights(self, u_flat: np.ndarray, p: float, delta: float) -> np.ndarray:
        s = self.cell_grad_sq(u_flat)
        return 0.5 * p * (s + delta * delta) ** (0.5 * p - 1.0)

    def energy(self, u_flat: np.ndarray, p: float, delta: float) -> float:
        s = self.cell_grad_sq(u_flat)
        return float(self.vol * np.sum((s + delta * delta) ** (0.5 * p)))

    def assemble(self, w: np.ndarray) -> sparse.csr_matrix:
        raw = np.empty(self.mat_total)
        for off, cells, kval in self.mat_blocks:
            raw[off:off + len(cells)] = kval * w[cells]
        data = np.add.reduceat(raw[self._order], self._starts) if len(raw) else raw
        return sparse.csr_matrix((data, self._indices, self._indptr),
                                 shape=(self.n_unknowns, self.n_unknowns))

    def rhs(self, w: np.ndarray) -> np.ndarray:
        return -(self.B @ w)

    def weak_defect(self, u_flat: np.ndarray, p: float, delta: float) -> float:
        """Max-norm of the discrete weak-form defect at the interior nodes."""
        w = self.weights(u_flat, p, delta)
        U = u_flat[self.corners]
        flux = (U @ self.K.T) * w[:, None]
        r = np.zeros(u_flat.shape[0])
        np.add.at(r, self.corners.ravel(), flux.ravel())
        return float(np.max(np.abs(r[self.interior_flat]))) if len(self.interior_flat) else 0.0


def _operator(grid: Grid) -> _CellOperator:
    if grid._op is None:
        grid._op = _CellOperator(grid)
    return grid._op


def weak_residual(grid: Grid, values: np.ndarray, p: float, delta: float = 1e-6) -> float:
    """Discrete weak-form defect (max-norm) of arbitrary lattice values."""
    return _operator(grid).weak_defect(np.asarray(values, dtype=float).ravel(), p, delta)


def _pcg(A, b, x0, M, err_tol, max_iter):
    """Preconditioned CG; stops when the preconditioned residual (an error
    estimate under an AMG preconditioner) falls below err_tol in max-norm."""
    x = x0.copy()
    r = b - A @ x
    z = M @ r
    if np.max(np.abs(z), initial=0.0) <= err_tol:
        return x, 0
    pvec = z.copy()
    rz = float(r @ z)
    it = 0
    for it in range(1, max_iter + 1):
        Ap = A @ pvec
        pAp = float(pvec @ Ap)
        if pAp <= 0.0:
            break
        alpha = rz / pAp
        x += alpha * pvec
        r -= alpha * Ap
        z = M @ r
        if np.max(np.abs(z), initial=0.0) <= err_tol:
            break
        rz_new = float(r @ z)
        pvec = z + (rz_new / rz) * pvec
        rz = rz_new
    return x, it


def solve(grid: Grid, p: float, delta: float = 1e-6, tol: float = 1e-8,
          max_iter: int = 200, u0: Optional[np.ndarray] = None,
          inner_max_iter: int = 400) -> GridSolution:
    """Lagged-diffusivity minimization of the regularized p-Dirichlet energy.

    Stops when the successive-iterate max-change is <= tol; non-convergence
    within max_iter is flagged on the result, not raised.  `u0` optionally
    warm-starts the interior values from a lattice array of the same shape.
    """
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got p={p}")
    if delta <= 0 or tol <= 0:
        raise ValueError("delta and tol must be positive")
    op = _operator(grid)

    u = np.zeros(int(np.prod(grid.shape)))
    dmask = (grid.node_class == NODE_DIRICHLET).ravel()
    u[dmask] = np.nan_to_num(grid.boundary_values.ravel()[dmask], nan=0.0)

    ml_pre = None
    since_build = 0

    def rebuild(A):
        nonlocal ml_pre, since_build
        ml = pyamg.ruge_stuben_solver(A, max_coarse=100)
        ml_pre = ml.aspreconditioner(cycle="V")
        since_build = 0

    if u0 is not None:
        u0 = np.asarray(u0, dtype=float).ravel()
        if u0.shape != u.shape:
            raise ValueError("u0 shape does not match the grid")
        u[op.interior_flat] = u0[op.interior_flat]
    else:
        # initial guess: the unit-weight (harmonic) solution, so the first
        # lagged linearization sees O(1) gradients instead of the
        # regularization-dominated weights of a flat start
        ones = np.ones(op.n_cells)
        A = op.assemble(ones)
        b = op.rhs(ones)
        rebuild(A)
        x_init, _ = _pcg(A, b, u[op.interior_flat].copy(), ml_pre,
                         max(0.01 * tol, 1e-12), inner_max_iter)
        if np.isnan(x_init).any():
            raise FloatingPointError("NaN produced in the linear solve")
        u[op.interior_flat] = x_init
        since_build = 1

    x = u[op.interior_flat].copy()
    energies = [op.energy(u, p, delta)]
    last_pcg_iters = 0
    last_change = 1.0
    change = math.inf
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        w = op.weights(u, p, delta)
        # the median-normalized system has the same solution; it keeps the
        # matrix scale stable so a reused AMG hierarchy stays a valid error
        # estimator, and scalar weight factors preserve the energy descent
        w = w / max(float(np.median(w)), 1e-300)
        A = op.assemble(w)
        b = op.rhs(w)
        if ml_pre is None or since_build >= 25 or last_pcg_iters > 30:
            rebuild(A)
        err_tol = max(0.01 * tol, min(0.1 * last_change, 1e-3))
        x_new, last_pcg_iters = _pcg(A, b, x, ml_pre, err_tol, inner_max_iter)
        change = float(np.max(np.abs(x_new - x), initial=0.0))
        if change <= tol and since_build > 0:
            # a stale hierarchy can under-solve and fake convergence: confirm
            # against a hierarchy built from the current matrix
            rebuild(A)
            x_new, last_pcg_iters = _pcg(A, b, x_new, ml_pre, 0.01 * tol,
                                         inner_max_iter)
            change = float(np.max(np.abs(x_new - x), initial=0.0))
        if np.isnan(x_new).any():
            raise FloatingPointError("NaN produced in the linear solve")
        x = x_new
        u[op.interior_flat] = x
        energies.append(op.energy(u, p, delta))
        last_change = max(change, 1e-300)
        since_build += 1
        if change <= tol:
            converged = True
            break

    values = np.full(int(np.prod(grid.shape)), np.nan)
    values[op.interior_flat] = x
    values[dmask] = u[dmask]
    return GridSolution(grid, values.reshape(grid.shape), p, delta,
                        iterations, change, converged, energies)


# --------------------------------------------------------------------------
# evaluation and comparison
# --------------------------------------------------------------------------

def interpolate(sol: GridSolution, points) -> np.ndarray:
    """Multilinear interpolation of the solution; NaN where a cell touches
    exterior nodes."""
    from scipy.interpolate import RegularGridInterpolator

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    interp = RegularGridInterpolator(sol.grid.axes(), sol.values,
                                     method="linear", bounds_error=False,
                                     fill_value=np.nan)
    return interp(pts)


def boundary_derivative(sol: GridSolution, dom: Domain, x0, h_list) -> float:
    """One-sided difference quotients (u(x0 + h n) - F(x0))/h along the inward
    normal, Richardson-extrapolated from the two smallest h."""
    x0 = np.asarray(x0, dtype=float)
    nvec = dom.inward_normal(x0)
    if np.any(np.isnan(nvec)):
        raise ValueError(f"inward normal undefined at x0={x0.tolist()}")
    h_arr = np.sort(np.asarray(h_list, dtype=float))
    if len(h_arr) < 1:
        raise ValueError("h_list must be non-empty")
    if np.any(h_arr < 2.0 * sol.grid.spacing - 1e-12):
        raise ValueError("every probe offset must be >= 2 grid spacings")

    probes = x0[None, :] + h_arr[:, None] * nvec[None, :]
    inside = sol.grid.domain.inside(probes)
    if not np.all(inside):
        bad = h_arr[~np.asarray(inside, bool)]
        raise ValueError(f"probe points leave the domain at h={bad.tolist()}")
    u_probe = interpolate(sol, probes)
    if np.any(np.isnan(u_probe)):
        bad = h_arr[np.isnan(u_probe)]
        raise ValueError(f"probe points touch unresolved cells at h={bad.tolist()}")

    f0 = float(np.asarray(sol.grid.data.value(x0[None, :]))[0])
    q = (u_probe - f0) / h_arr
    if len(h_arr) == 1:
        return float(q[0])
    h1, h2 = h_arr[0], h_arr[1]
    return float((h2 * q[0] - h1 * q[1]) / (h2 - h1))


def compare(sol1: GridSolution, sol2: GridSolution, tol: float = 1e-6) -> bool:
    """Node-wise sol1 <= sol2 within tol (the discrete comparison principle)."""
    if not sol1.grid.same_layout(sol2.grid):
        raise ValueError("solutions live on different grids")
    if sol1.p != sol2.p:
        raise ValueError(f"solutions have different p: {sol1.p} vs {sol2.p}")
    mask = sol1.grid.node_class != NODE_EXTERIOR
    return bool(np.all(sol1.values[mask] <= sol2.values[mask] + tol))
