"""Dirichlet solves for ``F + lam``, monotone iteration for semilinear
problems, and discrete verification of maximum principles.

All statements are about the finite grid ball with the given boundary data;
reports carry the grid radius for that reason.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RefusedNoMP, SolverFailure, ThetaTooSmall
from .grid import Grid, apply_F, discretize
from .howard import OUTER_TOL, policy_solve
from .operators import OperatorSpec, reflect

SIGN_TOL = 1e-8
RESIDUAL_TOL = 1e-6
KAPPA_NS = (1, 2, 4, 8, 16)


def dirichlet_solve(spec: OperatorSpec, lam: float, f, grid: Grid, *, lambda_h: float | None = None,
                    policy=None, outer_tol: float = OUTER_TOL, tol: float = 1e-13) -> np.ndarray:
    """Solve ``F(u) + lam u = f`` inside the ball, ``u = 0`` on the boundary.

    ``f <= 0`` is solved directly (``u >= 0``); ``f >= 0`` is solved as the
    reflected problem ``G(w) + lam w = -f`` for ``w = -u >= 0``. Mixed-sign
    data uses the plus half-eigenvalue, the stricter of the two. The shift
    must lie below the matching half-eigenvalue by ``outer_tol``; a
    precomputed ``lambda_h`` skips the eigen solve.
    """
    from .eigen import half_eigen

    f = np.asarray(f, dtype=float).reshape(grid.n)
    fi = f[grid.interior]
    if not np.any(fi != 0):
        return grid.zeros()
    sign = "-" if fi.min() >= 0 else "+"
    if lambda_h is None:
        er = half_eigen(spec, grid, sign)
        lambda_h, policy = er.lambda_h, er.policy
    if not lam < lambda_h - outer_tol:
        raise RefusedNoMP(f"lam={lam:.6g} is not below the half-eigenvalue {lambda_h:.6g}")
    if sign == "+":
        u, _, _ = policy_solve(discretize(spec, grid), lam, f, policy, tol)
        return u
    w, _, _ = policy_solve(discretize(reflect(spec), grid), lam, -f, policy, tol)
    return -w


class QuadraticReaction:
    """``f(x, u) = q(x) u^2 - lam u`` with ``q`` constant or a callable of points."""

    def __init__(self, lam: float, q):
        self.lam = float(lam)
        self.q = q
        self.id = "quadratic"

    def coefficient(self, grid: Grid) -> np.ndarray:
        return grid.field(self.q) if callable(self.q) else np.full(grid.n, float(self.q))

    def __call__(self, grid: Grid, u):
        return self.coefficient(grid) * u ** 2 - self.lam * u

    def lipschitz(self, grid: Grid, lo: float, hi: float) -> float:
        q = np.abs(self.coefficient(grid)).max()
        return float(max(abs(2 * q * lo - self.lam), abs(2 * q * hi - self.lam), abs(self.lam)))

    def params(self):
        return {"id": self.id, "lam": self.lam}


class FixedForcing:
    """``f(x, u) = g(x)``, independent of ``u``."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.id = "fixed"

    def __call__(self, grid: Grid, u):
        return self.values

    def lipschitz(self, grid: Grid, lo: float, hi: float) -> float:
        return 0.0

    def params(self):
        return {"id": self.id}


@dataclass
class SemilinearProblem:
    spec: OperatorSpec
    grid: Grid
    rhs: object
    sub: np.ndarray
    super: np.ndarray
    lipschitz_bound: float | None = None

    def __post_init__(self):
        self.sub = np.asarray(self.sub, dtype=float)
        self.super = np.asarray(self.super, dtype=float)
        if np.any(self.sub > self.super + SIGN_TOL):
            raise ValueError("sub must lie below super")
        b = self.grid.boundary
        if np.any(self.sub[b] > SIGN_TOL) or np.any(self.super[b] < -SIGN_TOL):
            raise ValueError("need sub <= 0 and super >= 0 on the boundary")
        if self.lipschitz_bound is None:
            self.lipschitz_bound = self.rhs.lipschitz(self.grid, float(self.sub.min()), float(self.super.max()))


@dataclass
class IterationResult:
    u: np.ndarray
    trace: list
    residual: float
    iterations: int


def monotone_iteration(problem: SemilinearProblem, theta: float, tol: float = 1e-12,
                       max_iter: int = 5000, residual_tol: float = RESIDUAL_TOL) -> IterationResult:
    """Monotone iteration ``F(v') - theta v' = f(x, v) - theta v`` from ``v0 = sub``.

    Every iterate must be nodewise nondecreasing and below ``super``.
    """
    from .eigen import half_eigen

    if theta <= problem.lipschitz_bound:
        raise ThetaTooSmall(f"theta={theta} must exceed the Lipschitz bound {problem.lipschitz_bound:.6g}")
    spec, grid = problem.spec, problem.grid
    lam_plus = half_eigen(spec, grid, "+").lambda_h
    if -theta >= lam_plus - OUTER_TOL:
        raise RefusedNoMP("theta too small for the shifted operator to be invertible")
    v = problem.sub.copy()
    trace = [v.copy()]
    for it in range(1, max_iter + 1):
        rhs = problem.rhs(grid, v) - theta * v
        v_new = dirichlet_solve(spec, -theta, rhs, grid, lambda_h=lam_plus)
        if np.any(v_new[grid.interior] < v[grid.interior] - SIGN_TOL):
            raise ThetaTooSmall(f"iterate decreased at step {it}")
        if np.any(v_new > problem.super + SIGN_TOL):
            raise SolverFailure(f"iterate exceeded the supersolution at step {it}", trace)
        trace.append(v_new.copy())
        step = float(np.abs(v_new - v).max())
        v = v_new
        if step < tol:
            resid = float(np.abs(apply_F(spec, grid, v) - problem.rhs(grid, v))[grid.interior].max())
            if resid > residual_tol:
                raise SolverFailure(f"limit residual {resid:.3e} exceeds {residual_tol:.1e}", trace)
            return IterationResult(v, trace, resid, it)
    raise SolverFailure(f"monotone iteration did not converge in {max_iter} steps", trace)


@dataclass
class MPReport:
    holds: bool
    worst_node: int
    worst_value: float
    kappa_trace: list
    beta_id: str
    grid_radius: float
    growth_ratio: float = float("nan")
    notes: list = field(default_factory=list)

    def record(self) -> dict:
        return {
            "holds": self.holds,
            "worst_node": self.worst_node,
            "worst_value": self.worst_value,
            "kappa_trace": self.kappa_trace,
            "beta_id": self.beta_id,
            "grid_radius": self.grid_radius,
            "growth_ratio": self.growth_ratio,
            "notes": self.notes,
        }


def mp_verify(spec: OperatorSpec, grid: Grid, u, beta=None, side: str = "plus", *, certificate=None,
              chi=None, kappa: bool = True, tol: float = SIGN_TOL, beta_id: str | None = None) -> MPReport:
    """Check the sign conclusion of the beta-maximum principle for one field.

    ``side='plus'``: ``u`` must satisfy ``F(u) >= -tol``; the principle holds
    for it when ``max u <= tol``. ``side='minus'`` mirrors this. The kappa
    trace evaluates ``max u / (psi + chi/n)`` (``min`` and ``psi - chi/n`` on
    the minus side) for ``n`` in 1, 2, 4, 8, 16.
    """
    if side not in ("plus", "minus"):
        raise ValueError("side must be 'plus' or 'minus'")
    u = np.asarray(u, dtype=float)
    if beta is None:
        beta = np.ones(grid.n)
        beta_id = beta_id or "one"
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= 0):
        raise ValueError("beta must be positive")
    s = 1.0 if side == "plus" else -1.0
    scale = max(1.0, float(np.abs(u).max()))
    Fu = apply_F(spec, grid, u)[grid.interior]
    if np.any(s * Fu < -tol * scale):
        raise ValueError(f"u is not a {'sub' if side == 'plus' else 'super'}solution: "
                         f"worst F(u) = {Fu.min() if side == 'plus' else Fu.max():.3e}")
    signed = s * u
    growth = float(np.max(signed / beta))
    notes = []
    if np.abs(u).max() < 1e-14:
        return MPReport(True, grid.origin, 0.0, [], beta_id or "custom", grid.radius, growth, ["zero field"])
    worst = int(np.argmax(signed))
    worst_value = float(signed[worst])
    holds = worst_value <= tol
    trace = []
    if kappa:
        if chi is None:
            from .certificates import GrowthWeight, GrowthRegimeError, chi_comparison
            for weight in (GrowthWeight("polynomial", 2.0), GrowthWeight("exponential", 1.0)):
                try:
                    chi, _ = chi_comparison(spec, weight, grid)
                    break
                except GrowthRegimeError as exc:
                    notes.append(str(exc))
        if chi is None:
            notes.append("kappa trace omitted: no comparison function")
        else:
            psi = certificate
            if psi is None:
                psi = beta * max(1.0, growth)
            psi = np.abs(np.asarray(psi, dtype=float))
            chi = np.asarray(chi, dtype=float)
            for n in KAPPA_NS:
                trace.append(float(np.max(signed / (psi + chi / n))))
    return MPReport(bool(holds), worst, worst_value, trace, beta_id or "custom", grid.radius, growth, notes)


class ConvexityError(RuntimeError):
    """``F(u - v) >= F(u) - F(v)`` failed; the operator is not convex."""


def comparison(spec: OperatorSpec, grid: Grid, u, v, beta=None, tol: float = SIGN_TOL) -> bool:
    """Comparison for a subsolution ``u`` and supersolution ``v``: ``u <= v``.

    Convexity turns ``w = u - v`` into a subsolution, then the plus maximum
    principle is checked for ``w``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    Fu = apply_F(spec, grid, u)
    Fv = apply_F(spec, grid, v)
    scale = max(1.0, float(np.abs(u).max()), float(np.abs(v).max()))
    inside = grid.interior
    if np.any(Fu[inside] < -tol * scale) or np.any(Fv[inside] > tol * scale):
        raise ValueError("comparison needs F(u) >= 0 >= F(v)")
    w = u - v
    Fw = apply_F(spec, grid, w)
    if np.any((Fw - (Fu - Fv))[inside] < -tol * scale):
        raise ConvexityError("F(u - v) < F(u) - F(v): operator is not convex")
    return mp_verify(spec, grid, w, beta, "plus", kappa=False, tol=tol).holds
