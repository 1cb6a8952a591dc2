import itertools

import numpy as np
import pytest
import scipy.linalg as sla

from halfeig import operators as op
from halfeig.eigen import (continuum_eigenfunction, eigen_residual, exhaust, half_eigen,
                           simplicity_probe)
from halfeig.errors import SolverFailure
from halfeig.grid import Grid, apply_F, assemble_matrix, interior_block
from halfeig.howard import gershgorin_upper, linear_principal_eig, perron_pair


def _dense_perron(A, grid):
    B = interior_block(A, grid).toarray()
    return float(np.max(sla.eigvals(B).real))


def test_laplacian_cosine_oracle():
    grid = Grid.build(1, 1.0, 0.005)
    A = assemble_matrix(op.linear(1), np.zeros(grid.n, dtype=int), grid)
    mu, v = linear_principal_eig(A, grid)
    assert abs(-mu - np.pi ** 2 / 4) <= 5e-3
    assert np.all(v[grid.interior] > 0)
    assert np.all(v[grid.boundary] == 0)


def test_potential_shift():
    grid = Grid.build(1, 1.0, 0.005)
    A = assemble_matrix(op.linear(1, potential=-1.0), np.zeros(grid.n, dtype=int), grid)
    mu, _ = linear_principal_eig(A, grid)
    assert abs(-mu - (np.pi ** 2 / 4 + 1)) <= 5e-3


def test_perron_matches_dense_eigensolver():
    grid = Grid.build(2, 1.0, 0.2)
    spec = op.linear(2, diffusion=[[1.5, 0.4], [0.4, 1.0]], drift={"kind": "ou", "rate": 0.7},
                     potential={"kind": "decay", "amplitude": 1.0})
    A = assemble_matrix(spec, np.zeros(grid.n, dtype=int), grid)
    mu, v = linear_principal_eig(A, grid)
    assert mu == pytest.approx(_dense_perron(A, grid), abs=1e-9)
    assert np.all(v[grid.interior] > 0)


def test_shift_is_above_spectrum():
    grid = Grid.build(1, 1.0, 0.1)
    A = interior_block(assemble_matrix(op.linear(1), np.zeros(grid.n, dtype=int), grid), grid)
    assert gershgorin_upper(A) >= np.max(sla.eigvals(A.toarray()).real)


def test_perron_rejects_negative_off_diagonal():
    import scipy.sparse as sp
    with pytest.raises(SolverFailure):
        perron_pair(sp.csr_matrix(np.array([[-2.0, -1.0], [1.0, -2.0]])))


def test_howard_matches_brute_force_over_policies():
    # sup mode: the half-eigenvalue is minus the largest Perron root over all policies
    grid = Grid.build(1, 1.0, 0.25)
    spec = op.bellman2(1)
    res = half_eigen(spec, grid, "+")
    idx = grid.interior_index
    best = -np.inf
    for combo in itertools.product(range(2), repeat=len(idx)):
        pol = np.zeros(grid.n, dtype=int)
        pol[idx] = combo
        best = max(best, _dense_perron(assemble_matrix(spec, pol, grid), grid))
    assert res.lambda_h == pytest.approx(-best, abs=1e-9)


def test_minus_sign_matches_brute_force_min():
    grid = Grid.build(1, 1.0, 0.25)
    spec = op.pucci_plus_operator(1, 1.0, 3.0)
    res = half_eigen(spec, grid, "-")
    refl = op.reflect(spec)
    idx = grid.interior_index
    worst = np.inf
    for combo in itertools.product(range(2), repeat=len(idx)):
        pol = np.zeros(grid.n, dtype=int)
        pol[idx] = combo
        worst = min(worst, _dense_perron(assemble_matrix(refl, pol, grid), grid))
    assert res.lambda_h == pytest.approx(-worst, abs=1e-9)
    assert np.all(res.eigenfunction[grid.interior] < 0)
    assert res.eigenfunction[grid.origin] == -1.0


def test_pucci_half_eigenvalues_split():
    grid = Grid.build(1, 1.0, 0.005)
    spec = op.pucci_plus_operator(1, 1.0, 4.0)
    plus = half_eigen(spec, grid, "+")
    minus = half_eigen(spec, grid, "-")
    assert abs(plus.lambda_h / (np.pi ** 2 / 4) - 1) < 0.01
    assert abs(minus.lambda_h / np.pi ** 2 - 1) < 0.01
    assert plus.lambda_h < minus.lambda_h
    assert plus.eigenfunction[grid.origin] == 1.0


@pytest.mark.parametrize("spec", [op.linear(1, drift={"kind": "ou", "rate": 1.0}),
                                  op.linear(2, potential={"kind": "decay", "amplitude": 2.0})],
                         ids=["ou1d", "decay2d"])
def test_linear_signs_agree(spec):
    grid = Grid.build(spec.dimension, 1.0, 0.1 if spec.dimension == 2 else 0.01)
    assert abs(half_eigen(spec, grid, "+").lambda_h - half_eigen(spec, grid, "-").lambda_h) <= 1e-8


def test_residual_and_sup_mode_monotone_trace():
    grid = Grid.build(2, 1.5, 0.15)
    spec = op.bellman2(2)
    res = half_eigen(spec, grid, "+", v0=np.ones(grid.n))
    assert res.residual_inf <= 1e-7
    assert eigen_residual(spec, grid, res.lambda_h, res.eigenfunction) == res.residual_inf
    tr = res.perron_trace
    assert all(b >= a - 1e-10 for a, b in zip(tr, tr[1:]))


def test_exhaustion_laplacian_closed_forms():
    tr = exhaust(op.linear(1), [1, 2, 4], h=0.01)
    for r, lam in zip(tr.radii, tr.lambdas):
        assert abs(lam / (np.pi ** 2 / (4 * r ** 2)) - 1) < 0.01
    assert tr.monotone_violation <= 1e-8


def test_exhaustion_ou_limit():
    tr = exhaust(op.linear(1, drift={"kind": "ou", "rate": 1.0}), [1, 2, 4, 6], h=0.01)
    assert tr.monotone_violation <= 1e-8
    assert -0.01 <= tr.limit_estimate <= 0.05
    assert len(tr.rows()) == 4


def test_exhaust_rejects_unsorted_radii():
    with pytest.raises(ValueError):
        exhaust(op.linear(1), [2, 1])


def test_continuum_below_laplacian_eigenvalue():
    u, grid, res = continuum_eigenfunction(op.linear(1), 0.1, 1.0, 2.0, h=0.05)
    assert res <= 1e-8
    assert u[grid.origin] == 1.0
    assert np.all(u[grid.interior] > 0)


def test_continuum_near_eigenvalue_and_far_below():
    spec = op.pucci_plus_operator(1, 1.0, 4.0)
    grid = Grid.build(1, 2.0, 0.05)
    lam_h = half_eigen(spec, grid, "+").lambda_h
    for lam in (lam_h - 1e-8, -10.0):
        u, g, res = continuum_eigenfunction(spec, lam, 1.0, 2.0, h=0.05, lambda_h=lam_h)
        assert u[g.origin] == 1.0
        assert np.all(u[g.interior] > 0)
        assert res <= 1e-8 * max(1.0, np.abs(u).max())


def test_continuum_rejects_lam_above_eigenvalue():
    with pytest.raises(ValueError):
        continuum_eigenfunction(op.linear(1), 1.0, 1.0, 2.0, h=0.05)


def test_continuum_minus_sign():
    u, grid, res = continuum_eigenfunction(op.pucci_plus_operator(1, 1.0, 2.0), -1.0, 1.0, 2.0, sign="-")
    assert u[grid.origin] == -1.0
    assert np.all(u[grid.interior] < 0)
    assert res <= 1e-8


@pytest.mark.parametrize("spec", [op.linear(1, drift={"kind": "ou", "rate": 1.0}), op.linear(2)],
                         ids=["ou", "laplacian2d"])
def test_simplicity(spec):
    grid = Grid.build(spec.dimension, 2.0, 0.02 if spec.dimension == 1 else 0.2)
    assert simplicity_probe(spec, grid, "+", restarts=5, seed=1) <= 1e-6


def test_simplicity_identical_seeds_exact():
    grid = Grid.build(1, 1.0, 0.05)
    assert simplicity_probe(op.bellman2(1), grid, "+", restarts=2, restart_seeds=[5, 5]) == 0.0


def test_eigenfunction_solves_discrete_equation():
    grid = Grid.build(1, 2.0, 0.02)
    spec = op.pucci_minus_operator(1, 1.0, 2.0)
    res = half_eigen(spec, grid, "+")
    r = apply_F(spec, grid, res.eigenfunction) + res.lambda_h * res.eigenfunction
    assert np.abs(r[grid.interior]).max() <= 1e-7
    assert res.record()["sign"] == "+"
