"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line
that is repeated in the terminal summary."""

import time

import numpy as np
import pytest

from halfeig import operators as op
from halfeig.certificates import (bump_derivatives, bump_strict_subsolution_check, chain_check,
                                  rayleigh_lower_dprime)
from halfeig.eigen import continuum_eigenfunction, exhaust, half_eigen, simplicity_probe
from halfeig.grid import Grid, assemble_matrix
from halfeig.howard import linear_principal_eig
from halfeig.maxprinciple import (FixedForcing, QuadraticReaction, SemilinearProblem, dirichlet_solve,
                                  monotone_iteration, mp_verify)
from halfeig.risk import SimConfig, sup_over_policies

OU = op.linear(1, drift={"kind": "ou", "rate": 1.0})
PUCCI_1D = op.pucci_plus_operator(1, 1.0, 4.0)


def test_01_laplacian_oracle(acceptance):
    t0 = time.perf_counter()
    grid = Grid.build(1, 1.0, 0.005)
    mu, _ = linear_principal_eig(assemble_matrix(op.linear(1), np.zeros(grid.n, dtype=int), grid), grid)
    err = abs(-mu - np.pi ** 2 / 4)
    elapsed = time.perf_counter() - t0
    ok = err <= 5e-3 and elapsed < 5.0
    acceptance(1, "Laplacian cosine oracle", ok, f"|lambda_h - pi^2/4| = {err:.2e}, {elapsed:.2f}s")
    assert ok


def test_02_half_eigenvalue_split(acceptance):
    grid = Grid.build(1, 1.0, 0.005)
    plus = half_eigen(PUCCI_1D, grid, "+").lambda_h
    minus = half_eigen(PUCCI_1D, grid, "-").lambda_h
    rp = abs(plus / (np.pi ** 2 / 4) - 1)
    rm = abs(minus / np.pi ** 2 - 1)
    ok = rp < 0.01 and rm < 0.01 and plus < minus
    acceptance(2, "Pucci half-eigenvalue split", ok,
               f"lambda+ = {plus:.5f} (rel {rp:.1e}), lambda- = {minus:.5f} (rel {rm:.1e})")
    assert ok


def test_03_linear_symmetry(acceptance):
    cases = [
        (OU, Grid.build(1, 2.0, 0.01)),
        (op.linear(1, diffusion=2.0, potential={"kind": "decay", "amplitude": 1.0}), Grid.build(1, 3.0, 0.01)),
        (op.linear(2, diffusion=[[1.5, 0.5], [0.5, 1.0]], drift={"kind": "ou", "rate": 0.5}),
         Grid.build(2, 1.5, 0.1)),
    ]
    gaps = [abs(half_eigen(s, g, "+").lambda_h - half_eigen(s, g, "-").lambda_h) for s, g in cases]
    ok = max(gaps) <= 1e-8
    acceptance(3, "linear operators: lambda+ = lambda-", ok, f"max gap {max(gaps):.1e} over {len(cases)} specs")
    assert ok


def test_04_exhaustion_ou(acceptance):
    tr = exhaust(OU, [1, 2, 4, 6], "+", h=0.01)
    strictly = all(b < a for a, b in zip(tr.lambdas, tr.lambdas[1:]))
    ok = tr.monotone_violation <= 1e-8 and -0.01 <= tr.limit_estimate <= 0.05 and not tr.failures
    acceptance(4, "OU exhaustion monotone with limit near 0", ok,
               f"lambdas {[round(v, 6) for v in tr.lambdas]}, violation {tr.monotone_violation:.1e}, "
               f"strict {strictly}")
    assert ok


@pytest.mark.parametrize("name,spec,R,h", [
    ("OU", OU, 6.0, 0.05),
    ("pucci1d", PUCCI_1D, 1.0, 0.005),
    ("bellman2", op.bellman2(1), 4.0, 0.02),
])
def test_05_convexity_chain(acceptance, name, spec, R, h):
    rep = chain_check(spec, Grid.build(1, R, h), tol=1e-6, order_tol=1e-8)
    e = rep.entries["+"]
    dp, pr, lam = e["dprime_lower"].bound, e["prime_upper"].bound, e["lambda_h"]
    ok = dp <= pr + 1e-6 and pr <= lam + 1e-6 and rep.lambda_plus <= rep.lambda_minus + 1e-8 and rep.passed
    acceptance(5, f"convexity chain [{name}]", ok,
               f"dprime {dp:.6g} <= prime {pr:.6g} <= lambda+ {lam:.6g}; lambda- {rep.lambda_minus:.6g}")
    assert ok


def test_06_two_control_bound(acceptance):
    spec = op.bellman2(1)
    grid = Grid.build(1, 4.0, 0.02)
    lam = half_eigen(spec, grid, "+").lambda_h
    frozen = [half_eigen(f, grid, "+").lambda_h for f in op.frozen_controls(spec)]
    ok = lam <= min(frozen) + 1e-8
    acceptance(6, "two-control bound", ok, f"lambda+ {lam:.6g} <= min frozen {min(frozen):.6g}")
    assert ok


@pytest.mark.parametrize("name,spec", [("pucci1d", PUCCI_1D), ("laplacian", op.linear(1))])
def test_07_continuum(acceptance, name, spec):
    grid = Grid.build(1, 4.0, 0.05)
    lam_h = half_eigen(spec, grid, "+").lambda_h
    lams = [lam_h - 0.1, -10.0]
    if lam_h > 0:
        lams.insert(1, 0.0)
    worst, signed = 0.0, True
    for lam in lams:
        u, g, res = continuum_eigenfunction(spec, lam, 3.0, 4.0, h=0.05, lambda_h=lam_h)
        worst = max(worst, res)
        signed &= bool(np.all(u[g.interior] > 0)) and u[g.origin] == 1.0
    ok = signed and worst <= 1e-8
    acceptance(7, f"continuum of eigenvalues [{name}]", ok,
               f"lams {[round(v, 4) for v in lams]}, max residual on B_3 {worst:.1e}")
    assert ok


def test_08_monotone_iteration(acceptance):
    spec = op.pucci_plus_operator(1, 1.0, 2.0, potential={"kind": "decay", "amplitude": 0.5})
    grid = Grid.build(1, 2.0, 0.02)
    er = half_eigen(spec, grid, "+")
    lam = er.lambda_h + 1.0
    c, _ = op.zero_order_fields(spec, grid.points)
    delta = float(np.abs(c).max())
    sub = grid.dirichlet(min(1.0, (lam - er.lambda_h) / (lam + delta)) * er.eigenfunction / er.eigenfunction.max())
    rhs = QuadraticReaction(lam, lambda pts: lam + np.maximum(op.zero_order_fields(spec, pts)[0], 0.0))
    prob = SemilinearProblem(spec, grid, rhs, sub, np.ones(grid.n))
    res = monotone_iteration(prob, prob.lipschitz_bound + 1.0)
    inner = grid.interior
    monotone = all(np.all(b[inner] >= a[inner] - 1e-8) for a, b in zip(res.trace, res.trace[1:]))
    sandwich = bool(np.all(sub <= res.u + 1e-12) and np.all(res.u <= 1 + 1e-12))
    f = -grid.dirichlet(np.random.default_rng(8).uniform(0, 1, grid.n))
    fixed = monotone_iteration(SemilinearProblem(spec, grid, FixedForcing(f), np.zeros(grid.n),
                                                 np.full(grid.n, 100.0)), 1.0, tol=1e-13)
    match = float(np.abs(fixed.u - dirichlet_solve(spec, 0.0, f, grid, lambda_h=er.lambda_h)).max())
    ok = monotone and sandwich and res.residual <= 1e-6 and match <= 1e-10
    acceptance(8, "monotone iteration", ok,
               f"{res.iterations} steps, residual {res.residual:.1e}, fixed-forcing gap {match:.1e}")
    assert ok


def test_09_maximum_principle(acceptance):
    spec = op.pucci_plus_operator(1, 1.0, 2.0, potential=-1.0)
    grid = Grid.build(1, 2.0, 0.02)
    dp = rayleigh_lower_dprime(spec, grid, np.ones(grid.n)).bound
    rng = np.random.default_rng(2024)
    worst = -np.inf
    for _ in range(20):
        f = grid.dirichlet(rng.uniform(0, 1, grid.n))
        u = dirichlet_solve(spec, 0.0, f, grid)
        worst = max(worst, float(u.max()))
        assert mp_verify(spec, grid, u, kappa=False).holds
    neg = op.linear(1, potential=1.0)
    g4 = Grid.build(1, 4.0, 0.02)
    er = half_eigen(neg, g4, "+")
    refuted = not mp_verify(neg, g4, er.eigenfunction, kappa=False).holds
    ok = abs(dp - 1.0) <= 1e-12 and worst <= 1e-8 and er.lambda_h < 0 and refuted
    acceptance(9, "maximum principle and refutation", ok,
               f"dprime(1) = {dp:.3g}, max u = {worst:.1e}, lambda_h(neg) = {er.lambda_h:.4f} refuted {refuted}")
    assert ok


def test_10_bump_machinery(acceptance):
    rng = np.random.default_rng(10)
    pts = rng.uniform(-0.8, 0.8, size=(20, 2))
    eps = 0.5
    _, grad, hess = bump_derivatives(pts, eps)
    f = lambda x: bump_derivatives(x, eps)[0]
    ratios = []
    for k in range(2):
        e = np.eye(2)[k]
        errs = []
        for s in (1e-2, 5e-3):
            fd = (f(pts + s * e) - 2 * f(pts) + f(pts - s * e)) / s ** 2
            fg = (f(pts + s * e) - f(pts - s * e)) / (2 * s)
            errs.append((np.abs(fd - hess[:, k, k]), np.abs(fg - grad[:, k])))
        ratios += list(errs[0][0] / errs[1][0]) + list(errs[0][1] / errs[1][1])
    ratios = np.array(ratios)
    spec = op.linear(1, potential=1.0)
    chk = bump_strict_subsolution_check(spec, 0.5, 0.05, [0.0], Grid.build(1, 40.0, 0.1))
    tr = exhaust(spec, [5, 10, 20], h=0.05)
    ok = bool(np.all(np.abs(ratios - 4) <= 0.8)) and chk.ok and -0.5 >= tr.limit_estimate
    acceptance(10, "bump machinery", ok,
               f"Richardson ratios in [{ratios.min():.3f}, {ratios.max():.3f}], margin {chk.margin:.3g}, "
               f"exhaustion {tr.limit_estimate:.4f} <= -0.5")
    assert ok


@pytest.mark.parametrize("name,spec,grid", [
    ("OU", OU, Grid.build(1, 4.0, 0.02)),
    ("laplacian-ball", op.linear(2), Grid.build(2, 2.0, 0.1)),
])
def test_11_simplicity(acceptance, name, spec, grid):
    dev = simplicity_probe(spec, grid, "+", restarts=5, seed=11)
    ok = dev <= 1e-6
    acceptance(11, f"simplicity probe [{name}]", ok, f"max deviation {dev:.1e}")
    assert ok


def test_12_risk_crosscheck(acceptance):
    # growth rate = -lambda_1^+ under F(psi) + lambda psi = 0
    t0 = time.perf_counter()
    spec = op.linear(1, drift={"kind": "ou", "rate": 1.0}, potential={"kind": "decay", "amplitude": 1.0})
    sweep = sup_over_policies(SimConfig(spec, [0], T=50.0, dt=0.01, n_paths=10_000, seed=12))
    lam = exhaust(spec, [4, 8, 12], h=0.02).limit_estimate
    elapsed = time.perf_counter() - t0
    gap = abs(sweep.best.lambda_hat - (-lam))
    tol = 3 * sweep.best.stderr + 0.05
    ok = gap <= tol and elapsed < 60
    acceptance(12, "risk-sensitive crosscheck", ok,
               f"lambda_hat {sweep.best.lambda_hat:.4f} +- {sweep.best.stderr:.1e} vs -lambda_1^+ {-lam:.4f} "
               f"(gap {gap:.1e} <= {tol:.3f}), {elapsed:.1f}s")
    assert ok


def test_13_hypothesis_suite(acceptance):
    presets = [
        op.make_preset("linear"),
        op.make_preset("linear", dimension=2, drift={"kind": "ou", "rate": 1.0}),
        op.make_preset("pucci_plus", lo=1.0, hi=4.0),
        op.make_preset("pucci_plus", dimension=2, lo=1.0, hi=3.0, potential=-1.0),
        op.make_preset("pucci_minus", lo=1.0, hi=4.0),
        op.make_preset("pucci_minus", dimension=2, lo=0.5, hi=2.0),
        op.make_preset("bellman2"),
        op.make_preset("bellman2", dimension=2),
    ]
    worst = 0.0
    for k, spec in enumerate(presets):
        rep = op.check_hypotheses(spec, op.random_samples(spec, 1000, 100 + k))
        worst = max(worst, max(rep.violations().values()))
    ok = worst <= 1e-9
    acceptance(13, "operator hypotheses", ok, f"{len(presets)} presets, worst violation {worst:.1e}")
    assert ok
