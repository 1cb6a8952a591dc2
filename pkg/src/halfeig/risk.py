"""Monte-Carlo estimates of the risk-sensitive growth rate
``(1/T) log E[exp(int_0^T c(X_t) dt)]`` for 1D controlled diffusions.

With the eigen-equation written ``F(psi) + lambda psi = 0``, the growth rate
of a policy is minus its linear half-eigenvalue, so the optimal rate is
compared with ``-lambda_1^+``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, EstimateUnstable, SolverFailure
from .grid import Grid
from .operators import OperatorSpec

log = logging.getLogger(__name__)

N_BATCHES = 10


@dataclass
class SimConfig:
    spec: OperatorSpec
    policies: list = field(default_factory=list)
    T: float = 50.0
    dt: float = 1e-2
    n_paths: int = 10_000
    seed: int = 0
    x0: float = 0.0
    eig_radius: float | None = None
    eig_h: float = 0.01

    def __post_init__(self):
        if self.spec.dimension != 1:
            raise ConfigurationError("simulation supports 1D operators only")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.T < 10 * self.dt:
            raise ConfigurationError("T must be at least 10 dt")
        if self.n_paths < 100:
            raise ConfigurationError("need at least 100 paths")
        if self.n_paths % N_BATCHES:
            raise ConfigurationError(f"n_paths must be a multiple of {N_BATCHES}")


@dataclass
class GridPolicy:
    """A feedback policy tabulated on grid nodes; paths outside the grid use
    the nearest node's control."""

    grid: Grid
    controls: np.ndarray
    id: str = "grid-policy"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        k = np.rint(np.asarray(x) / self.grid.h).astype(np.int64)
        k = np.clip(k + self.grid.lattice[0, 0] * -1, 0, self.grid.n - 1)
        return self.controls[k]


@dataclass
class MCEstimate:
    policy_id: str
    lambda_hat: float
    stderr: float
    paths_used: int
    T: float
    dt: float

    def record(self) -> dict:
        return {"policy_id": self.policy_id, "lambda_hat": self.lambda_hat, "stderr": self.stderr,
                "paths": self.paths_used, "T": self.T, "dt": self.dt}


def _policy_id(policy) -> str:
    if isinstance(policy, (int, np.integer)):
        return f"const[{int(policy)}]"
    return getattr(policy, "id", "policy")


def simulate_log_growth(config: SimConfig, policy) -> MCEstimate:
    """Euler-Maruyama estimate of the growth rate under one policy.

    ``policy`` is a control index (constant control) or a callable mapping
    positions to control indices. The diffusion coefficient ``a`` maps to the
    noise amplitude ``sqrt(2 a)``. Paths are drawn from a Philox generator
    keyed by ``config.seed``, so results are reproducible bit for bit.
    """
    spec = config.spec
    m = spec.n_controls
    if isinstance(policy, (int, np.integer)) and not 0 <= policy < m:
        raise ConfigurationError(f"control index {policy} out of range")
    n = config.n_paths
    steps = int(round(config.T / config.dt))
    dt = config.dt
    rng = np.random.Generator(np.random.Philox(config.seed))
    x = np.full(n, float(config.x0))
    S = np.zeros(n)
    sqdt = np.sqrt(dt)
    const = isinstance(policy, (int, np.integer))
    for _ in range(steps):
        pts = x.reshape(-1, 1)
        if const:
            ctrl = spec.controls[int(policy)]
            a = ctrl.diffusion(pts)[:, 0, 0]
            b = ctrl.drift(pts)[:, 0]
            c = ctrl.potential(pts)
        else:
            idx = policy(x)
            a = np.empty(n)
            b = np.empty(n)
            c = np.empty(n)
            for k, ctrl in enumerate(spec.controls):
                sel = idx == k
                if sel.any():
                    p = pts[sel]
                    a[sel] = ctrl.diffusion(p)[:, 0, 0]
                    b[sel] = ctrl.drift(p)[:, 0]
                    c[sel] = ctrl.potential(p)
        with np.errstate(over="ignore"):
            S += c * dt
        x = x + b * dt + np.sqrt(2.0 * a) * sqdt * rng.standard_normal(n)
    T_eff = steps * dt
    pid = _policy_id(policy)
    if not np.all(np.isfinite(S)):
        good = np.isfinite(S)
        raise EstimateUnstable("exponential functional overflowed",
                               partial={"policy_id": pid, "finite_paths": int(good.sum())})
    lam = float((logsumexp(S) - np.log(n)) / T_eff)
    batches = S.reshape(N_BATCHES, -1)
    per = (logsumexp(batches, axis=1) - np.log(batches.shape[1])) / T_eff
    with np.errstate(over="ignore", invalid="ignore"):
        stderr = float(np.std(per, ddof=1) / np.sqrt(N_BATCHES))
    if not (np.isfinite(lam) and np.isfinite(stderr)):
        raise EstimateUnstable("growth estimate is not finite",
                               partial={"policy_id": pid, "lambda_hat": lam, "batch_means": per.tolist()})
    return MCEstimate(pid, lam, stderr, n, T_eff, dt)


@dataclass
class PolicySweep:
    best: MCEstimate
    table: list
    lambda_h: float | None
    gap: float | None
    failures: dict


def sup_over_policies(config: SimConfig) -> PolicySweep:
    """Estimate every configured policy plus the eigensolver's optimal policy.

    The eigen policy is computed on the ball of radius ``config.eig_radius``
    (skipped when unset). ``gap`` is ``best.lambda_hat + lambda_h``, the
    distance between the best growth rate and ``-lambda_1^+``.
    """
    from .eigen import half_eigen

    policies = list(config.policies)
    lam = None
    if config.eig_radius is not None:
        grid = Grid.build(1, config.eig_radius, config.eig_h)
        er = half_eigen(config.spec, grid, "+")
        lam = er.lambda_h
        ctrl = er.policy.copy()
        # boundary nodes carry no control choice; extend the outermost interior one
        ctrl[0], ctrl[-1] = ctrl[1], ctrl[-2]
        policies.append(GridPolicy(grid, ctrl, "eigen-policy"))
    if not policies:
        raise ConfigurationError("no policies to evaluate")
    table, failures = [], {}
    for pol in policies:
        try:
            table.append(simulate_log_growth(config, pol))
        except (EstimateUnstable, SolverFailure) as exc:
            failures[_policy_id(pol)] = str(exc)
    if not table:
        raise EstimateUnstable("every policy failed", partial=failures)
    table.sort(key=lambda e: e.lambda_hat, reverse=True)
    best = table[0]
    gap = None if lam is None else best.lambda_hat + lam
    return PolicySweep(best, table, lam, gap, failures)
