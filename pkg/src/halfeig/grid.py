"""Lattice grids on intervals and discs, and the monotone finite-difference
discretization of sup/inf-of-linear operators.

Diffusion uses centered second differences along the stencil directions,
drift uses first-order upwinding along the coordinate axes. With that choice
every assembled generator row has nonnegative off-diagonal entries at any
spacing, which is what the Perron and maximum-principle machinery relies on.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, NotDiagonallyDominant
from .operators import LinearControl, OperatorSpec, best_over_controls

DEFAULT_DIRECTIONS = {1: ((1,),), 2: ((1, 0), (0, 1), (1, 1), (1, -1))}
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Grid:
    """Lattice ``h * Z^d`` cut to the ball of radius ``radius``.

    Interior nodes satisfy ``|x| <= radius - h/2`` in 2D (``|x| < radius`` in
    1D); every lattice neighbor of an interior node along a stencil direction
    is a node, and the non-interior nodes carry the Dirichlet data.
    """

    dimension: int
    radius: float
    h: float
    points: np.ndarray
    interior: np.ndarray
    directions: np.ndarray
    plus: np.ndarray   # plus[j, i] = index of x_i + h e_j, -1 if absent
    minus: np.ndarray
    lattice: np.ndarray

    @classmethod
    def build(cls, dimension: int, radius: float, h: float, directions=None) -> "Grid":
        if dimension not in (1, 2):
            raise ConfigurationError("grid dimension must be 1 or 2")
        if not (radius > 0 and h > 0):
            raise ConfigurationError("grid radius and h must be positive")
        if h >= radius:
            raise ConfigurationError("grid spacing must be smaller than the radius")
        dirs = np.array(directions if directions is not None else DEFAULT_DIRECTIONS[dimension], dtype=int)
        if dirs.ndim != 2 or dirs.shape[1] != dimension:
            raise ConfigurationError("directions must be integer vectors of the grid dimension")
        if dimension == 1:
            m = int(round(radius / h))
            if abs(m * h - radius) > 1e-9 * radius:
                raise ConfigurationError("1D grids need radius to be an integer multiple of h")
            lattice = np.arange(-m, m + 1).reshape(-1, 1)
            interior = np.abs(lattice[:, 0]) < m
        else:
            m = int(np.floor(radius / h))
            reach = int(np.abs(dirs).max())
            rng = np.arange(-m - reach, m + reach + 1)
            I, J = np.meshgrid(rng, rng, indexing="ij")
            cand = np.stack([I.ravel(), J.ravel()], axis=1)
            inner = np.linalg.norm(cand * h, axis=1) <= radius - h / 2 + 1e-12
            inner_set = cand[inner]
            lookup = {tuple(v) for v in inner_set}
            for e in dirs:
                for s in (1, -1):
                    for v in inner_set + s * e:
                        lookup.add(tuple(v))
            keep = np.array([tuple(v) in lookup for v in cand])
            lattice = cand[keep]
            interior = inner[keep]
        index = {tuple(v): i for i, v in enumerate(lattice)}
        n = lattice.shape[0]
        plus = np.full((len(dirs), n), -1, dtype=int)
        minus = np.full((len(dirs), n), -1, dtype=int)
        for j, e in enumerate(dirs):
            for i, v in enumerate(lattice):
                plus[j, i] = index.get(tuple(v + e), -1)
                minus[j, i] = index.get(tuple(v - e), -1)
        if np.any(plus[:, interior] < 0) or np.any(minus[:, interior] < 0):
            raise ConfigurationError("stencil reaches outside the node set")
        points = lattice * float(h)
        for arr in (points, interior, dirs, plus, minus, lattice):
            arr.setflags(write=False)
        return cls(dimension, float(radius), float(h), points, interior, dirs, plus, minus, lattice)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def boundary(self) -> np.ndarray:
        return ~self.interior

    @functools.cached_property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    @functools.cached_property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    @functools.cached_property
    def origin(self) -> int:
        """Index of the node nearest the origin."""
        return int(np.argmin(self.norms))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n)

    def field(self, func) -> np.ndarray:
        """Sample ``func(points)`` at every node."""
        return np.asarray(func(self.points), dtype=float).reshape(self.n)

    def dirichlet(self, values) -> np.ndarray:
        """Copy of ``values`` with the boundary set to zero."""
        u = np.array(values, dtype=float).reshape(self.n)
        u[self.boundary] = 0.0
        return u

    def write_csv(self, path, values, column="value") -> None:
        values = np.asarray(values).reshape(self.n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k + 1}" for k in range(self.dimension)] + [column])
            for pt, v in zip(self.points, values):
                w.writerow([repr(float(c)) for c in pt] + [repr(float(v))])


def read_field_csv(grid: Grid, path) -> np.ndarray:
    """Inverse of :meth:`Grid.write_csv`; node coordinates must match."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(c) for c in r] for r in rows[1:]])
    if data.shape != (grid.n, grid.dimension + 1) or not np.allclose(data[:, :-1], grid.points):
        raise ConfigurationError(f"{path}: field does not match the grid")
    return data[:, -1].copy()


def second_difference(grid: Grid, u, node: int, direction: int) -> float:
    """``(u(x+he) - 2u(x) + u(x-he)) / (h^2 |e|^2)`` at an interior node."""
    if not grid.interior[node]:
        raise ValueError(f"node {node} is not interior")
    e = grid.directions[direction]
    u = np.asarray(u)
    return float((u[grid.plus[direction, node]] - 2 * u[node] + u[grid.minus[direction, node]])
                 / (grid.h ** 2 * float(e @ e)))


def decompose_diffusion(a, directions=None) -> np.ndarray:
    """Nonnegative weights ``mu_e`` with ``a = sum mu_e e e^T`` on the 4-point
    2D stencil ``{e1, e2, e1+e2, e1-e2}``."""
    if directions is not None:
        dirs = np.asarray(directions)
        if dirs.shape != (4, 2) or not np.array_equal(dirs, np.array(DEFAULT_DIRECTIONS[2])):
            raise ConfigurationError("diffusion splitting is defined for the default 2D direction set only")
    a = np.asarray(a, dtype=float)
    batched = a.ndim == 3
    a = a.reshape(-1, 2, 2)
    a11, a22, a12 = a[:, 0, 0], a[:, 1, 1], 0.5 * (a[:, 0, 1] + a[:, 1, 0])
    w = np.stack([a11 - np.abs(a12), a22 - np.abs(a12), np.maximum(a12, 0.0), np.maximum(-a12, 0.0)], axis=1)
    bad = w[:, :2].min(axis=1) < -1e-14
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise NotDiagonallyDominant(f"diffusion {a[k].tolist()} is not diagonally dominant")
    w = np.maximum(w, 0.0)
    return w if batched else w[0]


def control_matrix(grid: Grid, ctrl: LinearControl) -> sp.csr_matrix:
    """Sparse matrix of ``L_alpha + c_alpha`` with identity boundary rows."""
    idx = grid.interior_index
    x = grid.points[idx]
    d = grid.dimension
    h = grid.h
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    A = ctrl.diffusion(x)
    if d == 1:
        weights = A[:, 0, 0].reshape(-1, 1)
        if np.any(weights[:, 0] <= 0):
            raise ConfigurationError("1D diffusion must be positive")
    else:
        weights = decompose_diffusion(A, grid.directions)
    diag = np.zeros(len(idx))
    for j in range(weights.shape[1]):
        mu = weights[:, j] / h ** 2
        add(idx, grid.plus[j, idx], mu)
        add(idx, grid.minus[j, idx], mu)
        diag -= 2 * mu
    b = ctrl.drift(x)
    for k in range(d):
        axis = int(np.flatnonzero([np.array_equal(e, np.eye(d, dtype=int)[k]) for e in grid.directions])[0])
        bk = b[:, k] / h
        fwd = np.maximum(bk, 0.0)
        bwd = np.maximum(-bk, 0.0)
        add(idx, grid.plus[axis, idx], fwd)
        add(idx, grid.minus[axis, idx], bwd)
        diag -= fwd + bwd
    diag += ctrl.potential(x)
    add(idx, idx, diag)
    bnd = np.flatnonzero(grid.boundary)
    add(bnd, bnd, np.ones(len(bnd)))
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(grid.n, grid.n))
    return mat.tocsr()


class Discretization:
    """Per-control sparse matrices of an operator on a grid."""

    def __init__(self, spec: OperatorSpec, grid: Grid):
        if spec.dimension != grid.dimension:
            raise ConfigurationError("operator and grid dimensions differ")
        self.spec = spec
        self.grid = grid
        self.mode = spec.mode
        self.matrices = [control_matrix(grid, c) for c in spec.controls]

    def control_values(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.stack([K @ u for K in self.matrices])

    def apply(self, u) -> np.ndarray:
        best, _ = best_over_controls(self.control_values(u), self.mode)
        best[self.grid.boundary] = np.asarray(u, dtype=float)[self.grid.boundary]
        return best

    def improve(self, u, current=None) -> np.ndarray:
        """Pointwise optimal control for ``u`` (smallest index on near-ties).

        When ``current`` is given, a node keeps its control unless another one
        is better by more than the tie tolerance; this rules out flip-flopping
        between equal controls.
        """
        vals = self.control_values(u)
        best, idx = best_over_controls(vals, self.mode, TIE_TOL)
        if current is not None:
            cur = vals[current, np.arange(vals.shape[1])]
            slack = TIE_TOL * (1.0 + np.abs(best))
            keep = cur >= best - slack if self.mode == "sup" else cur <= best + slack
            idx = np.where(keep, current, idx)
        idx[self.grid.boundary] = 0
        return idx

    def assemble(self, policy) -> sp.csr_matrix:
        policy = np.asarray(policy, dtype=int)
        if policy.shape != (self.grid.n,):
            raise ValueError("policy must assign a control to every node")
        if policy.min() < 0 or policy.max() >= len(self.matrices):
            raise ValueError("policy index out of range")
        out = None
        for k, K in enumerate(self.matrices):
            mask = (policy == k).astype(float)
            if k == 0:
                mask[self.grid.boundary] = 1.0
            else:
                mask[self.grid.boundary] = 0.0
            part = sp.diags(mask) @ K
            out = part if out is None else out + part
        return out.tocsr()


@functools.lru_cache(maxsize=64)
def discretize(spec: OperatorSpec, grid: Grid) -> Discretization:
    return Discretization(spec, grid)


def apply_control(grid: Grid, ctrl: LinearControl, u) -> np.ndarray:
    """``L_alpha u + c_alpha u`` at interior nodes; boundary values pass through."""
    return control_matrix(grid, ctrl) @ np.asarray(u, dtype=float)


def assemble_matrix(spec: OperatorSpec, policy, grid: Grid) -> sp.csr_matrix:
    return discretize(spec, grid).assemble(policy)


def apply_F(spec: OperatorSpec, grid: Grid, u) -> np.ndarray:
    """Nodewise sup (or inf) over controls; boundary values pass through."""
    return discretize(spec, grid).apply(u)


def interior_block(A: sp.spmatrix, grid: Grid) -> sp.csr_matrix:
    idx = grid.interior_index
    return sp.csr_matrix(A)[idx][:, idx]
