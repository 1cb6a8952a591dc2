"""One-sided bounds on the auxiliary eigenvalues from explicit test functions.

For a test function ``psi`` of fixed sign the nodewise quotient
``q = -F(psi) / psi`` gives every bound here: its max over nodes bounds the
bounded-subsolution eigenvalues from above, its min bounds the
bounded-away-from-zero eigenvalues from below. The same formula serves both
signs because dividing by a negative ``psi`` flips the defining inequality
exactly once.

Test functions are node fields. Positivity (negativity for the minus sign)
is required at interior nodes, with a weak sign on the boundary so that
Dirichlet eigenfunctions qualify.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eigen import EigenResult, half_eigen
from .errors import ConfigurationError
from .grid import Grid, apply_F
from .operators import OperatorSpec, evaluate_many, zero_order_fields

MIN_ABS_PSI = 1e-8
SOUNDNESS_TOL = 1e-12


@dataclass
class Certificate:
    kind: str
    bound: float
    direction: str
    testfn_id: str
    margin: float

    def record(self) -> dict:
        return {"kind": self.kind, "bound": self.bound, "direction": self.direction,
                "testfn_id": self.testfn_id, "margin": self.margin}


@dataclass(frozen=True)
class GrowthWeight:
    kind: str
    sigma: float

    def __post_init__(self):
        if self.kind not in ("polynomial", "exponential"):
            raise ConfigurationError(f"growth weight kind must be polynomial or exponential, not {self.kind!r}")
        if not self.sigma > 0:
            raise ConfigurationError("growth weight sigma must be positive")

    def __call__(self, points) -> np.ndarray:
        r2 = np.sum(np.asarray(points, dtype=float) ** 2, axis=1)
        if self.kind == "polynomial":
            return (1.0 + r2) ** (self.sigma / 2)
        return np.exp(self.sigma * np.sqrt(1.0 + r2))

    @property
    def id(self) -> str:
        return f"{self.kind}(sigma={self.sigma:g})"


def _signed(sign: str) -> float:
    if sign not in ("+", "-"):
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    return 1.0 if sign == "+" else -1.0


def _check_test_function(grid: Grid, psi, sign: str) -> np.ndarray:
    s = _signed(sign)
    psi = np.asarray(psi, dtype=float).reshape(grid.n)
    if not np.all(np.isfinite(psi)):
        raise ValueError("test function must be finite")
    inner = s * psi[grid.interior]
    if inner.min() < MIN_ABS_PSI:
        k = int(grid.interior_index[np.argmin(inner)])
        raise ValueError(f"test function must satisfy {'psi' if s > 0 else '-psi'} >= {MIN_ABS_PSI:g} "
                         f"at interior nodes; node {k} has {psi[k]:.3e}")
    if np.any(s * psi[grid.boundary] < 0):
        raise ValueError("test function has the wrong sign on the boundary")
    return psi


def quotient(spec: OperatorSpec, grid: Grid, psi) -> np.ndarray:
    """``-F(psi)/psi`` at interior nodes."""
    psi = np.asarray(psi, dtype=float)
    Fpsi = apply_F(spec, grid, psi)
    i = grid.interior
    return -Fpsi[i] / psi[i]


def _margin(spec, grid, psi, bound, s, upper) -> float:
    Fpsi = apply_F(spec, grid, psi)[grid.interior]
    p = psi[grid.interior]
    slack = s * (Fpsi + bound * p)
    if not upper:
        slack = -slack
    return float(max(0.0, slack.min()))


def rayleigh_upper_prime(spec: OperatorSpec, grid: Grid, psi, sign: str = "+",
                         testfn_id: str = "custom") -> Certificate:
    """Upper bound on the bounded-subsolution eigenvalue: ``max(-F(psi)/psi)``."""
    s = _signed(sign)
    psi = _check_test_function(grid, psi, sign)
    bound = float(quotient(spec, grid, psi).max())
    return Certificate("prime_plus" if s > 0 else "prime_minus", bound, "upper", testfn_id,
                       _margin(spec, grid, psi, bound, s, True))


def rayleigh_lower_dprime(spec: OperatorSpec, grid: Grid, psi, sign: str = "+",
                          testfn_id: str = "custom", kind: str | None = None) -> Certificate:
    """Lower bound on the bounded-away-from-zero eigenvalue: ``min(-F(psi)/psi)``."""
    s = _signed(sign)
    psi = _check_test_function(grid, psi, sign)
    bound = float(quotient(spec, grid, psi).min())
    kind = kind or ("dprime_plus" if s > 0 else "dprime_minus")
    return Certificate(kind, bound, "lower", testfn_id, _margin(spec, grid, psi, bound, s, False))


def beta_certificates(spec: OperatorSpec, grid: Grid, psi, beta, sign: str = "+",
                      testfn_id: str = "custom") -> Certificate:
    """Lower bound on the beta-weighted eigenvalue; needs ``psi >= beta``
    (``psi <= -beta`` for the minus sign) at every node."""
    s = _signed(sign)
    psi = np.asarray(psi, dtype=float).reshape(grid.n)
    beta = np.asarray(beta, dtype=float).reshape(grid.n)
    bad = np.flatnonzero(s * psi < beta)
    if len(bad):
        k = int(bad[0])
        raise ValueError(f"test function does not dominate beta at node {k} "
                         f"(x={grid.points[k].tolist()}, psi={psi[k]:.6g}, beta={beta[k]:.6g})")
    kind = "beta_dprime_plus" if s > 0 else "beta_dprime_minus"
    return rayleigh_lower_dprime(spec, grid, psi, sign, testfn_id, kind)


# --------------------------------------------------------------------------
# bump subsolution


def bump_derivatives(points, epsilon: float, x0=None):
    """Value, gradient and Hessian of ``exp(-1/(1 - |eps (x - x0)|^2))``.

    Zero outside the open ball of radius ``1/eps`` around ``x0``.
    Returns ``(psi, grad, hess)`` with shapes ``(n,)``, ``(n, d)``, ``(n, d, d)``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = x.shape
    y = x - (np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).reshape(d))
    s = 1.0 - epsilon ** 2 * np.sum(y ** 2, axis=1)
    inside = s > 0
    psi = np.zeros(n)
    psi[inside] = np.exp(-1.0 / s[inside])
    grad = np.zeros((n, d))
    hess = np.zeros((n, d, d))
    si = s[inside]
    yi = y[inside]
    e2, e4 = epsilon ** 2, epsilon ** 4
    grad[inside] = (-2 * e2 / si ** 2)[:, None] * yi
    outer = np.einsum("ni,nj->nij", yi, yi)
    coef_xx = 4 * e4 / si ** 4 - 8 * e4 / si ** 3
    hess[inside] = coef_xx[:, None, None] * outer - (2 * e2 / si ** 2)[:, None, None] * np.eye(d)
    grad *= psi[:, None]
    hess *= psi[:, None, None]
    return psi, grad, hess


def _bump_log_derivatives(points, epsilon, x0):
    """Gradient and Hessian of the bump divided by the bump (finite inside the ball)."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = x.shape
    y = x - np.asarray(x0, dtype=float).reshape(d)
    s = 1.0 - epsilon ** 2 * np.sum(y ** 2, axis=1)
    e2, e4 = epsilon ** 2, epsilon ** 4
    g = (-2 * e2 / s ** 2)[:, None] * y
    outer = np.einsum("ni,nj->nij", y, y)
    H = (4 * e4 / s ** 4 - 8 * e4 / s ** 3)[:, None, None] * outer - (2 * e2 / s ** 2)[:, None, None] * np.eye(d)
    return g, H


def bump_subsolution(epsilon: float, x0, grid: Grid):
    """The translated bump and its analytic derivative fields on the grid."""
    x0 = np.asarray(x0, dtype=float).reshape(grid.dimension)
    if not np.any(np.linalg.norm(grid.points - x0, axis=1) < 1.0 / epsilon):
        raise ValueError("the bump's ball contains no grid node")
    psi, grad, hess = bump_derivatives(grid.points, epsilon, x0)
    return psi, hess, grad


@dataclass
class BumpCheck:
    ok: bool
    margin: float
    implied_bound: float | None
    n_nodes: int


def bump_strict_subsolution_check(spec: OperatorSpec, sigma_target: float, epsilon: float, x0,
                                  grid: Grid) -> BumpCheck:
    """Test ``F(D^2 phi, D phi, phi, x) - sigma phi > 0`` on the bump's ball.

    Uses the analytic derivatives, divided through by ``phi`` (exact by
    homogeneity) so the test does not underflow near the rim. ``margin`` is
    the smallest normalized value; when positive the bound
    ``lambda_1^+ <= -sigma_target`` follows.
    """
    x0 = np.asarray(x0, dtype=float).reshape(spec.dimension)
    inside = np.linalg.norm(grid.points - x0, axis=1) < 1.0 / epsilon
    pts = grid.points[inside]
    if len(pts) == 0:
        raise ValueError("the bump's ball contains no grid node")
    c, _ = zero_order_fields(spec, pts)
    if not c.min() > sigma_target:
        raise ValueError(f"inf of c over the ball is {c.min():.6g}, not above sigma={sigma_target:g}; "
                         "shrink epsilon or move x0")
    g, H = _bump_log_derivatives(pts, epsilon, x0)
    vals = evaluate_many(spec, H, g, np.ones(len(pts)), pts) - sigma_target
    margin = float(vals.min())
    ok = margin > 0
    return BumpCheck(bool(ok), margin, -float(sigma_target) if ok else None, int(len(pts)))


# --------------------------------------------------------------------------
# comparison function for the beta maximum principle


class GrowthRegimeError(ValueError):
    """The coefficients do not satisfy the growth regime the weight needs."""


GROWTH_SAMPLES = 7
GROWTH_FACTOR = 4.0


def _growth_profile(func, dim: int, radii) -> np.ndarray:
    vals = []
    for r in radii:
        pts = np.zeros((2 * dim, dim))
        for k in range(dim):
            pts[2 * k, k] = r
            pts[2 * k + 1, k] = -r
        vals.append(float(np.max(np.asarray(func(pts), dtype=float))))
    return np.array(vals)


def check_growth_regime(spec: OperatorSpec, weight: GrowthWeight, radius: float) -> None:
    """Sampled check of the coefficient growth conditions paired with ``weight``.

    Polynomial weights need ``delta`` bounded, ``gamma/|x|`` and
    ``Lambda/|x|^2`` bounded; exponential weights need all three bounded. The
    check samples radii ``radius * 2^k`` on the axes and fails when a ratio
    grows by more than a factor 4 over the sweep.
    """
    r = radius * 2.0 ** np.arange(GROWTH_SAMPLES)
    ell = spec.ellipticity
    d = spec.dimension
    if weight.kind == "polynomial":
        tests = {"delta bounded": (ell.delta, np.ones_like(r)),
                 "gamma/|x| bounded": (ell.gamma, r),
                 "Lambda/|x|^2 bounded": (ell.Lambda_hi, r ** 2)}
    else:
        tests = {"delta bounded": (ell.delta, np.ones_like(r)),
                 "gamma bounded": (ell.gamma, np.ones_like(r)),
                 "Lambda bounded": (ell.Lambda_hi, np.ones_like(r))}
    for name, (func, denom) in tests.items():
        ratio = _growth_profile(func, d, r) / denom
        if ratio[-1] > GROWTH_FACTOR * max(ratio[0], 1e-300) and ratio[-1] > 1e-12:
            raise GrowthRegimeError(f"{weight.kind} weight needs {name}: ratio grows from "
                                    f"{ratio[0]:.3g} to {ratio[-1]:.3g}")


def chi_comparison(spec: OperatorSpec, weight: GrowthWeight, grid: Grid):
    """Smooth positive ``chi`` with the weight's growth and ``C = max F(chi)/chi``."""
    check_growth_regime(spec, weight, grid.radius)
    chi = weight(grid.points)
    C = float((apply_F(spec, grid, chi)[grid.interior] / chi[grid.interior]).max())
    return chi, C


# --------------------------------------------------------------------------
# candidate families and the inequality chain


def standard_candidates(spec: OperatorSpec, grid: Grid, sign: str = "+", eigen: EigenResult | None = None,
                        floor: float = 0.1, prime: bool = False, extra: dict | None = None,
                        dirichlet: bool = False) -> dict:
    """Fixed test-function family, sign-adjusted.

    Prime candidates must be bounded: constants, Gaussians, decaying powers
    and the raw eigenfunction. With ``dirichlet=True`` they are also set to
    zero on the boundary, which is what the bounded-domain notion requires.
    Double-prime candidates add a floor to keep ``inf psi > 0`` and include
    the polynomial comparison function.
    """
    s = _signed(sign)
    pts = grid.points
    r2 = np.sum(pts ** 2, axis=1)
    R = grid.radius
    fl = 0.0 if prime else floor
    cands = {"const": np.ones(grid.n)}
    for width in sorted({1.0, R / 2}):
        cands[f"gauss(w={width:g})+{fl:g}"] = np.exp(-r2 / (2 * width ** 2)) + fl
    cands[f"power(k=1)+{fl:g}"] = 1.0 / (1.0 + r2) + fl
    if eigen is not None and eigen.grid is grid and eigen.sign == sign:
        phi = s * eigen.eigenfunction
        phi = phi / phi.max()
        cands["eigen" if prime else f"eigen+{fl:g}"] = phi + fl
    if not prime:
        cands["chi(poly,2)"] = GrowthWeight("polynomial", 2.0)(pts)
    if extra:
        cands.update({k: s * np.asarray(v, dtype=float) for k, v in extra.items()})
    if dirichlet:
        cands = {f"{k}|D": grid.dirichlet(v) for k, v in cands.items()}
    return {k: s * v for k, v in cands.items()}


def best_certificate(spec, grid, candidates: dict, sign: str, kind: str) -> Certificate:
    """Best bound over a candidate family: largest lower bound or smallest upper bound."""
    if not candidates:
        raise ConfigurationError("empty candidate family")
    best = None
    for name in sorted(candidates):
        psi = candidates[name]
        try:
            cert = (rayleigh_upper_prime if kind == "prime" else rayleigh_lower_dprime)(spec, grid, psi, sign, name)
        except ValueError:
            continue
        if best is None or (kind == "prime" and cert.bound < best.bound) or (
                kind != "prime" and cert.bound > best.bound):
            best = cert
    if best is None:
        raise ConfigurationError("no admissible candidate in the family")
    return best


@dataclass
class ChainReport:
    radius: float
    lambda_plus: float
    lambda_minus: float
    entries: dict
    checks: dict
    passed: bool
    tol: float

    def record(self) -> dict:
        return {
            "radius": self.radius,
            "lambda_plus": self.lambda_plus,
            "lambda_minus": self.lambda_minus,
            "entries": {s: {k: (v.record() if isinstance(v, Certificate) else v) for k, v in e.items()}
                        for s, e in self.entries.items()},
            "checks": self.checks,
            "passed": self.passed,
        }


def chain_check(spec: OperatorSpec, grid: Grid, tol: float = 1e-6, order_tol: float = 1e-8,
                extra_candidates: dict | None = None) -> ChainReport:
    """Check ``dprime <= prime <= lambda_h`` for both signs and ``lambda+ <= lambda-``.

    On the grid ball the prime family is taken with zero boundary values (the
    bounded-domain definition); the free-boundary prime bound is reported as
    ``prime_upper_free`` but is not part of the chain.
    """
    eig = {s: half_eigen(spec, grid, s) for s in ("+", "-")}
    entries, checks = {}, {}
    for s in ("+", "-"):
        dp = best_certificate(spec, grid, standard_candidates(spec, grid, s, eig[s], extra=extra_candidates), s,
                              "dprime")
        pr = best_certificate(spec, grid, standard_candidates(spec, grid, s, eig[s], prime=True,
                                                              extra=extra_candidates, dirichlet=True), s, "prime")
        free = best_certificate(spec, grid, standard_candidates(spec, grid, s, eig[s], prime=True,
                                                                extra=extra_candidates), s, "prime")
        lam = eig[s].lambda_h
        entries[s] = {"dprime_lower": dp, "prime_upper": pr, "prime_upper_free": free, "lambda_h": lam,
                      "residual_inf": eig[s].residual_inf}
        checks[f"dprime<=prime ({s})"] = bool(dp.bound <= pr.bound + tol)
        checks[f"prime<=lambda_h ({s})"] = bool(pr.bound <= lam + tol)
    checks["lambda+<=lambda-"] = bool(eig["+"].lambda_h <= eig["-"].lambda_h + order_tol)
    return ChainReport(grid.radius, eig["+"].lambda_h, eig["-"].lambda_h, entries, checks,
                       all(checks.values()), tol)


def annulus_mask(grid: Grid, inner_radius: float) -> np.ndarray:
    return grid.interior & (grid.norms > inner_radius)


def exterior_certificate_sweep(spec: OperatorSpec, inner_radius: float, outer_radius: float | None = None,
                               h: float = 0.05, sign: str = "+", candidates: dict | None = None) -> Certificate:
    """Best double-prime lower bound using only nodes with ``|x| > inner_radius``.

    The grid is the ball of radius ``outer_radius`` (default ``2 r``); the
    quotient is minimized over the annulus nodes only.
    """
    outer_radius = 2 * inner_radius if outer_radius is None else outer_radius
    if outer_radius < 2 * inner_radius:
        raise ConfigurationError("outer radius must be at least twice the inner radius")
    grid = Grid.build(spec.dimension, outer_radius, h)
    s = _signed(sign)
    if candidates is None:
        candidates = standard_candidates(spec, grid, sign)
    elif not candidates:
        raise ConfigurationError("empty candidate family")
    mask = annulus_mask(grid, inner_radius)[grid.interior]
    best = None
    for name in sorted(candidates):
        psi = np.asarray(candidates[name], dtype=float)
        if (s * psi[annulus_mask(grid, inner_radius)]).min() < MIN_ABS_PSI:
            continue
        q = quotient(spec, grid, psi)[mask]
        bound = float(q.min())
        if best is None or bound > best.bound:
            best = Certificate("dprime_plus" if s > 0 else "dprime_minus", bound, "lower", f"{name}|r>{inner_radius:g}", 0.0)
    if best is None:
        raise ConfigurationError("no admissible candidate on the annulus")
    return best


def exterior_sweep_table(spec: OperatorSpec, radii, h: float = 0.05, sign: str = "+") -> list[dict]:
    """``r -> bound(r)`` for the exterior sweep."""
    return [{"r": float(r), "bound": exterior_certificate_sweep(spec, r, None, h, sign).bound} for r in radii]


def lyapunov_epsilon(spec: OperatorSpec, grid: Grid, V, lambda_h: float, compact_radius: float) -> float:
    """Largest ``eps`` with ``F(V) <= -(lambda_h + eps) V`` at nodes outside
    the ball of radius ``compact_radius``; positive means the Lyapunov
    condition for simplicity holds on the grid."""
    V = _check_test_function(grid, V, "+")
    mask = (grid.norms > compact_radius)[grid.interior]
    if not mask.any():
        raise ValueError("no interior nodes outside the compact ball")
    return float(quotient(spec, grid, V)[mask].min() - lambda_h)


@dataclass
class ZetaXiReport:
    shell_inner_radius: float
    c_shell_sup: float
    c_shell_inf: float
    d_shell_sup: float
    d_shell_inf: float
    zeta_proxy: float
    xi_proxy: float
    regime_plus: str
    regime_minus: str
    checks: dict
    certificates: dict = field(default_factory=dict)
    label: str = "finite-domain proxy"

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def record(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "certificates"}
        out["certificates"] = {k: v.record() for k, v in self.certificates.items()}
        return out


def _regime(value: float, borderline: float, negative: bool) -> str:
    if abs(value) < borderline:
        return "borderline"
    if negative:
        return "negative" if value < 0 else "positive"
    return "positive" if value > 0 else "negative"


def zero_order_bounds(spec: OperatorSpec, grid: Grid, borderline: float = 0.1,
                      tol: float = 1e-12) -> ZetaXiReport:
    """Outer-shell extrema of ``c`` and ``d`` and the zero-order inequalities.

    The outermost 10% of the radius stands in for the limit at infinity.
    """
    c, d = zero_order_fields(spec, grid.points)
    shell = grid.norms >= 0.9 * grid.radius
    inside = grid.interior
    cands_p = standard_candidates(spec, grid, "+")
    cands_m = standard_candidates(spec, grid, "-")
    dp = best_certificate(spec, grid, cands_p, "+", "dprime")
    dm = best_certificate(spec, grid, cands_m, "-", "dprime")
    sup_c = float(c[inside].max())
    inf_d = float(d[inside].min())
    checks = {
        "-sup c <= inf d": bool(-sup_c <= inf_d + tol),
        "-sup c <= dprime_plus": bool(-sup_c <= dp.bound + tol),
        "inf d <= dprime_minus": bool(inf_d <= dm.bound + tol),
    }
    zeta = float(c[shell].max())
    xi = float(d[shell].max())
    return ZetaXiReport(0.9 * grid.radius, zeta, float(c[shell].min()), xi, float(d[shell].min()),
                        zeta, xi, _regime(zeta, borderline, True), _regime(xi, borderline, False),
                        checks, {"dprime_plus": dp, "dprime_minus": dm})
