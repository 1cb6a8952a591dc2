"""Discrete principal half-eigenpairs on balls, domain exhaustion,
eigenfunctions below the principal value, and a simplicity probe."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverFailure
from .grid import Grid, apply_F, discretize
from .howard import INNER_TOL, MAX_INNER, MAX_OUTER, OUTER_TOL, policy_eigen
from .operators import OperatorSpec, reflect

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-7


@dataclass
class EigenResult:
    lambda_h: float
    eigenfunction: np.ndarray
    sign: str
    residual_inf: float
    policy: np.ndarray
    outer_iterations: int
    inner_iterations: int
    grid: Grid = field(repr=False)
    perron_trace: list = field(default_factory=list, repr=False)

    @property
    def lambda_trace(self) -> list:
        return [-m for m in self.perron_trace]

    def record(self) -> dict:
        return {
            "lambda": self.lambda_h,
            "sign": self.sign,
            "residual_inf": self.residual_inf,
            "iterations": {"outer": self.outer_iterations, "inner": self.inner_iterations},
            "radius": self.grid.radius,
            "h": self.grid.h,
        }


def _check_sign(sign: str) -> str:
    if sign not in ("+", "-"):
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    return sign


def eigen_residual(spec: OperatorSpec, grid: Grid, lam: float, psi) -> float:
    r = apply_F(spec, grid, psi) + lam * np.asarray(psi)
    return float(np.abs(r[grid.interior]).max())


def half_eigen(spec: OperatorSpec, grid: Grid, sign: str = "+", *, policy=None, v0=None,
               inner_tol: float = INNER_TOL, outer_tol: float = OUTER_TOL,
               max_outer: int = MAX_OUTER, max_inner: int = MAX_INNER,
               residual_tol: float = RESIDUAL_TOL) -> EigenResult:
    """Principal half-eigenpair ``F(psi) + lambda psi = 0`` on the grid ball.

    ``sign='+'`` looks for ``psi > 0``. ``sign='-'`` solves the positive
    problem for the reflected operator and negates the eigenfunction, so the
    policy stored in the result refers to the reflected operator's controls
    (same indices). The eigenfunction is normalized to ``+1`` / ``-1`` at the
    node nearest the origin.
    """
    _check_sign(sign)
    work = spec if sign == "+" else reflect(spec)
    disc = discretize(work, grid)
    out = policy_eigen(disc, policy, v0, inner_tol, outer_tol, max_outer, max_inner)
    phi = out["phi"]
    o = grid.origin
    if phi[o] <= 0:
        raise SolverFailure("eigenfunction vanishes at the origin node")
    phi = phi / phi[o]
    psi = phi if sign == "+" else -phi
    lam = -out["mu"]
    resid = eigen_residual(spec, grid, lam, psi)
    if resid > residual_tol:
        raise SolverFailure(f"eigen residual {resid:.3e} exceeds {residual_tol:.1e}", out["trace"])
    return EigenResult(lam, psi, sign, resid, out["policy"], out["outer"], out["inner"], grid, out["trace"])


@dataclass
class ExhaustionTrace:
    radii: list
    lambdas: list
    residuals: list
    limit_estimate: float
    first_difference: float
    monotone_violation: float
    sign: str
    results: list = field(default_factory=list, repr=False)
    failures: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [{"radius": r, "lambda": l, "residual": e} for r, l, e in zip(self.radii, self.lambdas, self.residuals)]


def exhaust(spec: OperatorSpec, radii, sign: str = "+", h: float = 0.01, **kwargs) -> ExhaustionTrace:
    """Half-eigenvalues on nested balls with a common spacing ``h``.

    A radius whose solve fails is recorded in ``failures`` and skipped; the
    trace covers the completed radii.
    """
    _check_sign(sign)
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    done, lams, res, results, failures = [], [], [], [], {}
    for r in radii:
        grid = Grid.build(spec.dimension, r, h)
        try:
            er = half_eigen(spec, grid, sign, **kwargs)
        except SolverFailure as exc:
            log.warning("radius %g failed: %s", r, exc)
            failures[r] = str(exc)
            continue
        done.append(r)
        lams.append(er.lambda_h)
        res.append(er.residual_inf)
        results.append(er)
    if not lams:
        raise SolverFailure("every radius failed", list(failures.items()))
    jumps = np.diff(lams)
    violation = float(max(0.0, jumps.max())) if len(jumps) else 0.0
    first_diff = float(abs(lams[-1] - lams[-2])) if len(lams) > 1 else float("nan")
    return ExhaustionTrace(done, lams, res, lams[-1], first_diff, violation, sign, results, failures)


def annulus_forcing(grid: Grid, inner: float, outer: float) -> np.ndarray:
    """Raised-cosine bump of unit height supported in ``inner < |x| < outer``."""
    mid = 0.5 * (inner + outer)
    half = 0.5 * (outer - inner)
    t = (grid.norms - mid) / half
    bump = np.where(np.abs(t) < 1.0, 0.5 * (1.0 + np.cos(np.pi * t)), 0.0)
    bump[grid.boundary] = 0.0
    return bump


def continuum_eigenfunction(spec: OperatorSpec, lam: float, inner_radius: float, outer_radius: float,
                            h: float = 0.05, sign: str = "+", *, lambda_h: float | None = None,
                            outer_tol: float = OUTER_TOL):
    """Signed solution of ``F(u) + lam u = f`` on ``B_outer`` with ``f`` a bump
    in the annulus ``inner < |x| < outer``; on ``B_inner`` it is an eigenfunction
    for ``lam``.

    ``f <= 0`` for ``sign='+'`` (``u > 0``, ``u(0) = 1``), ``f >= 0`` for
    ``sign='-'`` (``u < 0``, ``u(0) = -1``). Returns ``(u, grid, residual)``
    with the residual taken over interior nodes with ``|x| <= inner_radius``.
    """
    from .maxprinciple import dirichlet_solve

    _check_sign(sign)
    if not 0 < inner_radius < outer_radius:
        raise ValueError("need 0 < inner_radius < outer_radius")
    grid = Grid.build(spec.dimension, outer_radius, h)
    policy = None
    if lambda_h is None:
        er = half_eigen(spec, grid, sign)
        lambda_h, policy = er.lambda_h, er.policy
    if not lam < lambda_h - outer_tol:
        raise ValueError(f"lam={lam} is not below the half-eigenvalue {lambda_h:.6g} on B_{outer_radius:g}")
    bump = annulus_forcing(grid, inner_radius, outer_radius)
    f = -bump if sign == "+" else bump
    u = dirichlet_solve(spec, lam, f, grid, lambda_h=lambda_h, policy=policy)
    u = u / abs(u[grid.origin])
    inside = grid.interior & (grid.norms <= inner_radius + 1e-12)
    r = apply_F(spec, grid, u) + lam * u
    return u, grid, float(np.abs(r[inside]).max())


def simplicity_probe(spec: OperatorSpec, grid: Grid, sign: str = "+", restarts: int = 5, seed=0,
                     restart_seeds=None, **kwargs) -> float:
    """Max pairwise sup-norm gap between eigenfunctions from random restarts.

    Each restart draws a random positive initial Perron vector and a random
    initial policy. ``restart_seeds`` overrides the per-restart seeds, which
    by default are spawned from ``seed``.
    """
    if restarts < 2:
        raise ValueError("need at least two restarts")
    if restart_seeds is None:
        restart_seeds = np.random.SeedSequence(seed).spawn(restarts)
    elif len(restart_seeds) != restarts:
        raise ValueError("restart_seeds must have one entry per restart")
    funcs = []
    for s in restart_seeds:
        rng = np.random.default_rng(s)
        v0 = rng.uniform(0.1, 1.0, size=grid.n)
        pol = rng.integers(0, spec.n_controls, size=grid.n)
        er = half_eigen(spec, grid, sign, policy=pol, v0=v0, **kwargs)
        funcs.append(er.eigenfunction)
    dev = 0.0
    for i in range(len(funcs)):
        for j in range(i + 1, len(funcs)):
            dev = max(dev, float(np.abs(funcs[i] - funcs[j]).max()))
    return dev
