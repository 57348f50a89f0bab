import math

import numpy as np
import pytest
from scipy.optimize import minimize

from capshape.constellation import Constellation, make_square_qam
from capshape.errors import ConvergenceError, InfeasibleError
from capshape.mi import NoiseModel, mi_gradient, mutual_information
from capshape.solver import (
    CapacityCurvePoint,
    capacity_curve,
    curve_shape_violations,
    kkt_residual,
    solve_capacity,
    solve_unconstrained,
)


def slsqp_capacity(c, noise, e_bar):
    """Independent oracle: generic SLSQP on the same objective, analytic gradient."""
    m = c.size
    w = c.energies
    x0 = np.full(m, 1.0 / m)
    if x0 @ w > e_bar:
        x0 = np.exp(-w)
        x0 /= x0.sum()
    res = minimize(
        lambda p: -mutual_information(np.clip(p, 0, None) / np.clip(p, 0, None).sum(), c, noise),
        x0,
        jac=lambda p: -mi_gradient(np.clip(p, 0, None) / np.clip(p, 0, None).sum(), c, noise),
        bounds=[(0.0, 1.0)] * m,
        constraints=[{"type": "eq", "fun": lambda p: p.sum() - 1.0},
                     {"type": "ineq", "fun": lambda p: e_bar - p @ w}],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )
    p = np.clip(res.x, 0, None)
    return mutual_information(p / p.sum(), c, noise)


def check_kkt(sol, c, noise, tol=1e-7):
    assert sol.kkt_residual <= tol
    assert kkt_residual(sol.pmf, sol.nu, sol.lam, c, noise) <= tol
    assert sol.nu >= 0
    assert np.all(sol.mu >= -1e-12)
    # complementary slackness
    assert abs(sol.nu * (sol.energy - sol.e_bar if math.isfinite(sol.e_bar) else 0.0)) <= 1e-9
    assert np.all(sol.mu * sol.pmf <= 1e-9)
    assert sol.energy <= sol.e_bar + 1e-9
    assert sol.pmf.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("e_bar", [1.5, 3.0, 5.0])
def test_matches_generic_optimizer(qam16, noise, e_bar):
    sol = solve_capacity(qam16, noise, e_bar)
    check_kkt(sol, qam16, noise)
    oracle = slsqp_capacity(qam16, noise, e_bar)
    # the oracle is a feasible point, so it can only be lower
    assert sol.mi >= oracle - 1e-10
    assert sol.mi == pytest.approx(oracle, abs=1e-6)


def test_binary_symmetric_is_uniform(noise):
    c = Constellation(np.array([-1.0, 1.0], dtype=complex))
    sol = solve_capacity(c, noise, 1.0)
    assert np.allclose(sol.pmf, 0.5, atol=1e-9)
    assert sol.mi == pytest.approx(mutual_information([0.5, 0.5], c, noise), abs=1e-14)


def test_loose_constraint_is_inactive(qam16, noise):
    free = solve_unconstrained(qam16, noise)
    sol = solve_capacity(qam16, noise, 50.0)
    assert not sol.power_constraint_active
    assert sol.nu == 0.0
    assert sol.mi == pytest.approx(free.mi)
    check_kkt(sol, qam16, noise)


def test_unconstrained_64qam(qam64, noise):
    free = solve_unconstrained(qam64, noise)
    check_kkt(free, qam64, noise)
    assert free.energy == pytest.approx(11.91, abs=0.03)
    # two of the eight levels per axis receive no mass
    assert np.count_nonzero(free.pmf) == 36


def test_target_design(sol52, qam64, noise):
    check_kkt(sol52, qam64, noise)
    assert sol52.power_constraint_active
    assert sol52.energy == pytest.approx(5.2, abs=1e-9)
    assert sol52.mi == pytest.approx(1.81, abs=0.01)
    # the PMF inherits the constellation's symmetries
    grid = sol52.pmf.reshape(8, 8)
    assert np.allclose(grid, grid.T, atol=1e-8)
    assert np.allclose(grid, grid[::-1], atol=1e-8)


def test_infeasible(qam16, noise):
    with pytest.raises(InfeasibleError):
        solve_capacity(qam16, noise, 0.5 * qam16.energies.min())


def test_minimum_energy_constraint(qam16, noise):
    w_min = qam16.energies.min()
    sol = solve_capacity(qam16, noise, w_min)
    inner = qam16.energies <= w_min + 1e-12
    assert np.allclose(sol.pmf[inner], 0.25, atol=1e-9)
    assert np.all(sol.pmf[~inner] == 0)
    check_kkt(sol, qam16, noise)


def test_warm_start_gives_same_answer(qam16, noise):
    cold = solve_capacity(qam16, noise, 3.0)
    warm = solve_capacity(qam16, noise, 3.0, init=solve_capacity(qam16, noise, 2.8).pmf)
    assert warm.mi == pytest.approx(cold.mi, abs=1e-12)
    assert np.allclose(warm.pmf, cold.pmf, atol=1e-7)


def test_convergence_error_carries_best(noise):
    c = make_square_qam(16, 10.0)
    with pytest.raises(ConvergenceError) as info:
        solve_capacity(c, noise, 3.0, tol=1e-30)
    assert info.value.best is not None
    assert info.value.residual > 0


def test_kkt_residual_flags_non_optimal(qam16, noise):
    p = np.full(16, 1 / 16)
    assert kkt_residual(p, 0.0, None, qam16, noise) > 1e-3


def test_curve_shape_and_slope(qam16, noise):
    grid = np.round(np.arange(1.5, 6.01, 0.25), 10)
    pts, sols = capacity_curve(qam16, noise, grid, return_solutions=True)
    assert curve_shape_violations(pts) == []
    C = np.array([p.capacity for p in pts])
    nu = np.array([p.nu for p in pts])
    assert np.all(np.diff(C) >= -1e-12)
    assert np.all(np.diff(C, 2) <= 1e-10)
    # nu is the slope: it lies between neighbouring chord slopes
    chords = np.diff(C) / np.diff(grid)
    active = nu[1:-1] > 0
    assert np.all((nu[1:-1] <= chords[:-1] + 1e-7)[active])
    assert np.all((nu[1:-1] >= chords[1:] - 1e-7)[active])
    for s in sols:
        assert s.kkt_residual <= 1e-7


def test_curve_threads_match_serial(qam16, noise):
    grid = [2.0, 2.5, 3.0, 3.5]
    serial = capacity_curve(qam16, noise, grid)
    threaded = capacity_curve(qam16, noise, grid, threads=2)
    for a, b in zip(serial, threaded):
        assert a.capacity == pytest.approx(b.capacity, abs=1e-10)


def test_shape_violations_detected():
    pts = [CapacityCurvePoint(e, c, n, True) for e, c, n in [(1, 1.0, 0.5), (2, 1.2, 0.4), (3, 1.6, 0.3)]]
    assert any("concave" in m for m in curve_shape_violations(pts))
    pts = [CapacityCurvePoint(1, 1.0, 0.1, True), CapacityCurvePoint(2, 0.9, 0.2, True)]
    msgs = curve_shape_violations(pts)
    assert len(msgs) == 2


def test_solution_json(sol52):
    d = sol52.to_json()
    assert set(d) >= {"pmf", "nu", "lambda", "mu", "energy", "mi", "kkt_residual", "power_constraint_active"}
    assert len(d["pmf"]) == 64


def test_kkt_residual_at_uniform_64qam(qam64, noise, sol52):
    assert kkt_residual(np.full(64, 1 / 64), sol52.nu, None, qam64, noise) > 1e3 * 1e-7


def test_kkt_residual_grows_with_perturbation(sol52, qam64, noise):
    supp = np.flatnonzero(sol52.pmf > 0.01)
    i, j = supp[0], supp[-1]
    res = []
    for eps in (0.001, 0.002, 0.004):
        p = sol52.pmf.copy()
        p[i] += eps
        p[j] -= eps
        res.append(kkt_residual(p, sol52.nu, None, qam64, noise))
    assert res[0] > 1e-6
    assert res[1] / res[0] == pytest.approx(2.0, rel=0.1)
    assert res[2] / res[1] == pytest.approx(2.0, rel=0.1)


def test_equal_energy_constellation_has_flat_curve(noise):
    c = Constellation(np.array([1.0, -1.0], dtype=complex))
    pts = capacity_curve(c, noise, [1.0, 2.0, 3.0])
    assert len({round(p.capacity, 12) for p in pts}) == 1
    assert all(p.nu == 0.0 for p in pts)
