"""Perron solver and Howard policy iteration for sup/inf-of-linear schemes.

Both loops alternate a linear solve for a frozen policy with pointwise
policy improvement. For the eigenproblem the linear solve is the Perron pair
of the policy matrix; for the Dirichlet equation it is a sparse direct solve.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverFailure
from .grid import Discretization, Grid, interior_block

log = logging.getLogger(__name__)

INNER_TOL = 1e-10
MAX_INNER = 10000
OUTER_TOL = 1e-9
MAX_OUTER = 200


def gershgorin_upper(A: sp.csr_matrix) -> float:
    """Upper bound on the real parts of the spectrum of ``A``."""
    A = sp.csr_matrix(A)
    diag = A.diagonal()
    absrow = np.asarray(abs(A).sum(axis=1)).ravel()
    return float(np.max(diag + (absrow - np.abs(diag))))


def perron_pair(A_int: sp.csr_matrix, v0=None, inner_tol: float = INNER_TOL,
                max_inner: int = MAX_INNER):
    """Perron eigenpair ``A v = mu v, v > 0`` of an interior block with
    nonnegative off-diagonals.

    Shifted inverse power iteration on ``s I - A`` with ``s`` a Gershgorin
    bound plus a margin, so the shifted matrix is a nonsingular M-matrix and
    its inverse is positive. Stops once both the eigenvalue change and the
    sup-norm change of the max-normalized iterate fall below ``inner_tol``.
    Returns ``(mu, v, iterations)`` with ``max(v) == 1``.
    """
    A_int = sp.csc_matrix(A_int)
    n = A_int.shape[0]
    if n == 0:
        raise SolverFailure("no interior nodes")
    off = A_int - sp.diags(A_int.diagonal())
    if off.nnz and off.data.min() < 0:
        raise SolverFailure("matrix has negative off-diagonal entries; scheme is not monotone")
    upper = gershgorin_upper(A_int)
    margin = 1.0
    v_init = np.ones(n) if v0 is None else np.abs(np.asarray(v0, dtype=float)) + 1e-300
    for attempt in range(6):
        s = upper + margin
        try:
            lu = spla.splu(sp.identity(n, format="csc") * s - A_int)
        except RuntimeError:
            margin *= 2
            continue
        v = v_init / v_init.max()
        mu = np.nan
        ok = True
        for it in range(1, max_inner + 1):
            w = lu.solve(v)
            if not np.all(np.isfinite(w)) or w.min() <= 0:
                ok = False
                break
            nu = float(v @ w) / float(v @ v)
            mu_new = s - 1.0 / nu
            w /= w.max()
            dv = float(np.abs(w - v).max())
            v = w
            if abs(mu_new - mu) < inner_tol and dv < inner_tol:
                mu = mu_new
                break
            mu = mu_new
        else:
            raise SolverFailure(f"inverse power iteration did not converge in {max_inner} steps")
        if ok:
            mu = float(v @ (A_int @ v)) / float(v @ v)
            return mu, v, it
        margin *= 2
    raise SolverFailure("shifted matrix stayed singular or indefinite after 5 shift increases")


def linear_principal_eig(A: sp.spmatrix, grid: Grid, v0=None, inner_tol: float = INNER_TOL,
                         max_inner: int = MAX_INNER):
    """Perron pair of a full assembled matrix restricted to interior nodes.

    Returns ``(mu, v)`` with ``v`` a node field, zero on the boundary, positive
    inside and max-normalized. The half-eigenvalue of the linear operator is
    ``-mu``.
    """
    idx = grid.interior_index
    v0i = None if v0 is None else np.asarray(v0)[idx]
    mu, vi, _ = perron_pair(interior_block(A, grid), v0i, inner_tol, max_inner)
    v = grid.zeros()
    v[idx] = vi
    return mu, v


def policy_eigen(disc: Discretization, policy=None, v0=None, inner_tol: float = INNER_TOL,
                 outer_tol: float = OUTER_TOL, max_outer: int = MAX_OUTER, max_inner: int = MAX_INNER):
    """Howard iteration for ``best_alpha (K_alpha phi) = mu phi, phi > 0``.

    ``sup`` mode raises the Perron root of the frozen-policy matrix at every
    step, ``inf`` mode lowers it. Returns a dict with the converged pair, the
    final policy and the per-step Perron roots.
    """
    grid = disc.grid
    idx = grid.interior_index
    policy = np.zeros(grid.n, dtype=int) if policy is None else np.array(policy, dtype=int)
    policy[grid.boundary] = 0
    v = None if v0 is None else np.asarray(v0, dtype=float)[idx]
    trace = []
    inner_total = 0
    for outer in range(1, max_outer + 1):
        A = interior_block(disc.assemble(policy), grid)
        mu, vi, inner = perron_pair(A, v, inner_tol, max_inner)
        inner_total += inner
        trace.append(mu)
        phi = grid.zeros()
        phi[idx] = vi
        new = disc.improve(phi, current=policy)
        changed = bool(np.any(new != policy))
        if not changed:
            return dict(mu=mu, phi=phi, policy=policy, trace=trace, outer=outer, inner=inner_total)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < outer_tol:
            # eigenvalue settled while tied controls keep swapping
            resid = np.abs(disc.apply(phi) - mu * phi)[idx].max()
            if resid < 1e3 * inner_tol * max(1.0, abs(mu)):
                return dict(mu=mu, phi=phi, policy=policy, trace=trace, outer=outer, inner=inner_total)
        policy = new
        v = vi
    raise SolverFailure(f"policy iteration did not settle in {max_outer} steps", trace)


def policy_solve(disc: Discretization, lam: float, f, policy=None, tol: float = 1e-13,
                 max_outer: int = MAX_OUTER):
    """Howard iteration for ``best_alpha (K_alpha u) + lam u = f`` with ``u = 0``
    on the boundary.

    Starts from the given policy (or control 0). If the residual grows after
    an improvement the iterate is replaced by the midpoint with the previous
    one. Returns ``(u, policy, iterations)``.
    """
    grid = disc.grid
    idx = grid.interior_index
    f = np.asarray(f, dtype=float)
    policy = np.zeros(grid.n, dtype=int) if policy is None else np.array(policy, dtype=int)
    policy[grid.boundary] = 0
    u_prev = None
    res_prev = np.inf
    n_int = len(idx)
    trace = []
    for it in range(1, max_outer + 1):
        A = interior_block(disc.assemble(policy), grid) + lam * sp.identity(n_int, format="csr")
        try:
            ui = spla.spsolve(sp.csc_matrix(A), f[idx])
        except RuntimeError as exc:
            raise SolverFailure(f"singular policy system: {exc}", trace) from None
        # one step of iterative refinement
        ui = ui + spla.spsolve(sp.csc_matrix(A), f[idx] - A @ ui)
        u = grid.zeros()
        u[idx] = ui
        if not np.all(np.isfinite(u)):
            raise SolverFailure("non-finite iterate in policy iteration", trace)
        res = float(np.abs(disc.apply(u) + lam * u - f)[idx].max())
        if u_prev is not None and res > res_prev:
            u_half = 0.5 * (u + u_prev)
            res_half = float(np.abs(disc.apply(u_half) + lam * u_half - f)[idx].max())
            if res_half < res:
                u, res = u_half, res_half
        trace.append(res)
        new = disc.improve(u, current=policy)
        change = np.inf if u_prev is None else float(np.abs(u - u_prev).max())
        scale = max(1.0, float(np.abs(u).max()))
        if not np.any(new != policy) or change <= tol * scale:
            return u, policy, it
        policy = new
        u_prev, res_prev = u, res
    raise SolverFailure(f"Dirichlet policy iteration did not settle in {max_outer} steps", trace)
