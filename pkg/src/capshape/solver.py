"""Capacity-achieving PMFs under an average power constraint.

Maximizes ``I(p)`` over the probability simplex subject to ``w^T p <= E_bar``
and certifies the result through the first-order conditions

    dI/dp_i <= lambda + nu * w_i,   with equality where p_i > 0.

The solve runs in two phases. A Blahut-Arimoto style multiplicative update
``p_i <- p_i exp(dI/dp_i - nu w_i)`` (nu chosen each step so the update meets
the power constraint) brings the iterate close to the optimum. Newton steps
on the equality-constrained KKT system then finish the job, with an active set
that drops symbols hitting zero and re-admits symbols whose gradient violates
the inequality above.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from capshape.constellation import Constellation, feasible_energy_range
from capshape.errors import ConvergenceError, InfeasibleError
from capshape.mi import (
    NoiseModel,
    QuadratureSpec,
    as_pmf,
    mi_gradient,
    mi_gradient_hessian,
    mutual_information,
)

log = logging.getLogger(__name__)

SUPPORT_THRESHOLD = 1e-10
BA_MAX_ITER = 10_000
BA_HANDOFF = 1e-2
NEWTON_MAX_ITER = 100


@dataclass
class CapacitySolution:
    pmf: np.ndarray
    nu: float
    lam: float
    mu: np.ndarray
    energy: float
    mi: float
    kkt_residual: float
    power_constraint_active: bool
    e_bar: float = math.inf
    iterations: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "e_bar": None if math.isinf(self.e_bar) else self.e_bar,
            "pmf": self.pmf.tolist(),
            "nu": self.nu,
            "lambda": self.lam,
            "mu": self.mu.tolist(),
            "energy": self.energy,
            "mi": self.mi,
            "kkt_residual": self.kkt_residual,
            "power_constraint_active": self.power_constraint_active,
        }


@dataclass(frozen=True)
class CapacityCurvePoint:
    energy: float
    capacity: float
    nu: float
    constraint_active: bool


def kkt_residual(candidate, nu, lam, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None,
                 grad=None) -> float:
    """Largest violation of the stationarity conditions at ``candidate``.

    Counts ``dI/dp_i - lam - nu w_i`` where positive for every symbol, and its
    absolute value on the support. ``lam=None`` recovers lambda as the mean of
    ``dI/dp_i - nu w_i`` over the support.
    """
    p = as_pmf(candidate, c.size)
    g = mi_gradient(p, c, noise, quad) if grad is None else grad
    slack = g - nu * c.energies
    supp = p > 0
    if lam is None:
        lam = float(slack[supp].mean())
    slack = slack - lam
    res = max(0.0, float(slack.max()))
    if supp.any():
        res = max(res, float(np.abs(slack[supp]).max()))
    return res


def _ba_nu(p, g, w, e_target):
    """Smallest nu >= 0 for which the multiplicative update meets the power target."""

    def energy(nu):
        a = np.log(p, where=p > 0, out=np.full_like(p, -np.inf)) + g - nu * w
        a -= a.max()
        q = np.exp(a)
        return q @ w / q.sum()

    if e_target is None or energy(0.0) <= e_target:
        return 0.0
    hi = 1.0
    while energy(hi) > e_target:
        hi *= 2.0
        if hi > 1e8:
            return hi
    return brentq(lambda nu: energy(nu) - e_target, 0.0, hi, xtol=1e-14, rtol=1e-14)


def _blahut_arimoto(p, c, noise, quad, e_target, max_iter=BA_MAX_ITER, handoff=BA_HANDOFF):
    w = c.energies
    nu = 0.0
    for it in range(1, max_iter + 1):
        g = mi_gradient(p, c, noise, quad)
        nu = _ba_nu(p, g, w, e_target)
        slack = g - nu * w
        big = p > 1e-4
        lam = float(p @ slack)
        gap = max(float(np.abs(slack[big] - lam).max()), float((slack - lam).max()))
        if gap < handoff:
            return p, nu, it
        a = np.log(p, where=p > 0, out=np.full_like(p, -np.inf)) + slack
        a -= a.max()
        p = np.exp(a)
        p /= p.sum()
    return p, nu, max_iter


def _newton_kkt(p, c, noise, quad, e_target, tol, max_iter=NEWTON_MAX_ITER):
    """Active-set Newton iteration on the KKT system; returns ``(p, nu, lam, grad, residual, iters)``."""
    w = c.energies
    m = c.size
    nu = 0.0
    lam = 0.0
    best = (math.inf, p.copy())
    for it in range(1, max_iter + 1):
        grad, H, S = mi_gradient_hessian(p, c, noise, quad)
        s = S.size
        active = e_target is not None
        if active and np.ptp(w[S]) == 0.0:
            active = False  # single energy class on the support: 1 and w are collinear
        k = s + 1 + int(active)
        J = np.zeros((k, k))
        J[:s, :s] = H
        J[:s, s] = -1.0
        J[s, :s] = 1.0
        rhs = np.zeros(k)
        rhs[:s] = -grad[S]
        rhs[s] = 1.0 - p.sum()
        if active:
            J[:s, s + 1] = -w[S]
            J[s + 1, :s] = w[S]
            rhs[s + 1] = e_target - w @ p
        try:
            sol = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(J, rhs, rcond=None)[0]
        dp = sol[:s]
        lam = float(sol[s])
        nu = float(sol[s + 1]) if active else 0.0

        res = kkt_residual(p, nu, lam, c, noise, quad, grad=grad)
        feas = abs(p.sum() - 1.0) + (abs(w @ p - e_target) if e_target is not None else 0.0)
        if res + feas < best[0]:
            best = (res + feas, p.copy())
        slack = grad - lam - nu * w
        outside = np.setdiff1d(np.arange(m), S)
        if res <= 0.1 * tol and feas <= 1e-12:
            return p, nu, lam, grad, res, it
        # re-admit symbols whose gradient beats the multiplier bound
        if outside.size and np.abs(dp).max() < 1e-6:
            viol = outside[slack[outside] > 0.1 * tol]
            if viol.size:
                p = p.copy()
                p[viol] = 1e-9
                p /= p.sum()
                continue

        step = 1.0
        neg = dp < 0
        if np.any(neg):
            ratios = -p[S][neg] / dp[neg]
            step = min(1.0, float(ratios.min()))
        new = p.copy()
        new[S] = p[S] + step * dp
        if step < 1.0:
            new[S[neg][ratios <= step * (1 + 1e-12)]] = 0.0
        new[new < SUPPORT_THRESHOLD] = 0.0
        if e_target is None or not active:
            new /= new.sum()
        else:
            new = np.maximum(new, 0.0)
        p = new
    raise ConvergenceError(
        f"KKT Newton iteration did not reach tol={tol:g} in {max_iter} steps",
        best=best[1],
        residual=best[0],
    )


_UNCONSTRAINED_CACHE: dict = {}


def _cache_key(c, noise, quad, tol):
    return (c.points.tobytes(), noise.variance, quad.nodes_per_axis, tol)


def _finish(p, nu, lam, grad, c, noise, quad, e_bar, tol, iterations):
    w = c.energies
    supp = p > 0
    slack = grad - nu * w
    lam = float(slack[supp].mean())
    mu = np.where(supp, 0.0, np.maximum(lam - slack, 0.0))
    res = kkt_residual(p, nu, lam, c, noise, quad, grad=grad)
    if res > tol:
        raise ConvergenceError(f"KKT residual {res:.3e} above tol {tol:g}", best=p, residual=res)
    return CapacitySolution(
        pmf=p,
        nu=nu,
        lam=lam,
        mu=mu,
        energy=float(w @ p),
        mi=mutual_information(p, c, noise, quad),
        kkt_residual=res,
        power_constraint_active=nu > tol,
        e_bar=e_bar,
        iterations=iterations,
    )


def _solve(c, noise, quad, e_target, tol, init):
    if init is not None:
        try:
            p, nu, lam, grad, _, nt_iters = _newton_kkt(as_pmf(init, c.size), c, noise, quad, e_target, tol,
                                                        max_iter=25)
            return p, nu, lam, grad, {"blahut_arimoto": 0, "newton": nt_iters}
        except ConvergenceError:
            log.debug("warm start failed; restarting from a full-support PMF")
    p = np.full(c.size, 1.0 / c.size) if init is None else as_pmf(init, c.size)
    # keep every symbol alive so multiplicative updates can find the support
    p = 0.99 * p + 0.01 / c.size
    p, nu, ba_iters = _blahut_arimoto(p, c, noise, quad, e_target)
    p = np.where(p < SUPPORT_THRESHOLD, 0.0, p)
    p /= p.sum()
    try:
        p, nu, lam, grad, _, nt_iters = _newton_kkt(p, c, noise, quad, e_target, tol)
    except ConvergenceError:
        log.warning("Newton phase stalled; continuing multiplicative updates to tight tolerance")
        p, nu, ba_more = _blahut_arimoto(p, c, noise, quad, e_target, handoff=tol * 0.1)
        p = np.where(p < SUPPORT_THRESHOLD, 0.0, p)
        p /= p.sum()
        p, nu, lam, grad, _, nt_iters = _newton_kkt(p, c, noise, quad, e_target, tol)
        ba_iters += ba_more
    return p, nu, lam, grad, {"blahut_arimoto": ba_iters, "newton": nt_iters}


def solve_unconstrained(c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None,
                        tol: float = 1e-7) -> CapacitySolution:
    """Capacity-achieving PMF with no power constraint (cached per configuration)."""
    quad = quad or QuadratureSpec()
    key = _cache_key(c, noise, quad, tol)
    if key not in _UNCONSTRAINED_CACHE:
        p, nu, lam, grad, its = _solve(c, noise, quad, None, tol, None)
        _UNCONSTRAINED_CACHE[key] = _finish(p, 0.0, lam, grad, c, noise, quad, math.inf, tol, its)
    sol = _UNCONSTRAINED_CACHE[key]
    return CapacitySolution(**{**sol.__dict__, "pmf": sol.pmf.copy(), "mu": sol.mu.copy()})


def solve_capacity(c: Constellation, noise: NoiseModel, e_bar: float, quad: QuadratureSpec | None = None,
                   tol: float = 1e-7, init=None) -> CapacitySolution:
    """Capacity-achieving PMF for average power constraint ``e_bar``.

    Raises InfeasibleError when ``e_bar`` is below the smallest symbol energy
    and ConvergenceError (carrying the best iterate) when the KKT residual
    cannot be pushed below ``tol``.
    """
    quad = quad or QuadratureSpec()
    w_min, _ = feasible_energy_range(c)
    if not e_bar >= w_min - 1e-12:
        raise InfeasibleError(f"power constraint {e_bar} below minimum symbol energy {w_min}")
    free = solve_unconstrained(c, noise, quad, tol)
    if free.energy <= e_bar + 1e-12:
        free.e_bar = float(e_bar)
        return free
    if e_bar <= w_min + 1e-12:
        return _solve_min_energy(c, noise, quad, float(e_bar), tol)
    p, nu, lam, grad, its = _solve(c, noise, quad, float(e_bar), tol, init)
    return _finish(p, nu, lam, grad, c, noise, quad, float(e_bar), tol, its)


def _solve_min_energy(c, noise, quad, e_bar, tol):
    """Degenerate case: only minimum-energy symbols are admissible."""
    w = c.energies
    keep = w <= w.min() + 1e-12
    sub = Constellation(c.points[keep])
    inner = solve_unconstrained(sub, noise, quad, tol)
    p = np.zeros(c.size)
    p[keep] = inner.pmf
    grad = mi_gradient(p, c, noise, quad)
    supp = p > 0
    lam = float(grad[supp].mean())
    others = ~keep
    nu = float(max(0.0, ((grad[others] - lam) / (w[others] - e_bar)).max())) if others.any() else 0.0
    return _finish(p, nu, lam + nu * e_bar, grad, c, noise, quad, e_bar, tol, inner.iterations)


def capacity_curve(c: Constellation, noise: NoiseModel, energy_grid, quad: QuadratureSpec | None = None,
                   tol: float = 1e-7, return_solutions: bool = False, threads: int = 1):
    """Trace ``C(E)`` over ``energy_grid``.

    Each solve is warm-started from its left neighbour. With ``threads > 1``
    the grid is cut into contiguous pieces traced concurrently; results are
    returned in grid order.
    """
    quad = quad or QuadratureSpec()
    grid = [float(e) for e in energy_grid]
    solve_unconstrained(c, noise, quad, tol)  # populate the cache once, before any worker starts

    def trace(lo, hi):
        sols, prev = [], None
        for idx in range(lo, hi):
            try:
                sol = solve_capacity(c, noise, grid[idx], quad, tol, init=prev)
            except (ConvergenceError, InfeasibleError) as exc:
                exc.args = (f"grid point {idx} (E={grid[idx]}): {exc.args[0]}",)
                exc.grid_index = idx
                raise
            prev = sol.pmf
            sols.append(sol)
        return sols

    threads = max(1, min(int(threads), len(grid) or 1))
    if threads == 1:
        sols = trace(0, len(grid))
    else:
        from concurrent.futures import ThreadPoolExecutor

        cuts = np.linspace(0, len(grid), threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda ab: trace(*ab), zip(cuts[:-1], cuts[1:])))
        sols = [s for part in parts for s in part]
    points = [CapacityCurvePoint(e, s.mi, s.nu, s.power_constraint_active) for e, s in zip(grid, sols)]
    for msg in curve_shape_violations(points):
        log.warning("capacity curve: %s", msg)
    return (points, sols) if return_solutions else points


def curve_shape_violations(points, tol: float = 1e-6) -> list[str]:
    """Monotonicity and concavity checks on a traced curve; empty when the shape is as expected."""
    E = np.array([pt.energy for pt in points])
    C = np.array([pt.capacity for pt in points])
    nu = np.array([pt.nu for pt in points])
    out = []
    if E.size >= 2:
        if np.any(np.diff(C) < -tol):
            out.append("capacity decreases along the grid")
        if np.any(np.diff(nu) > tol):
            out.append("slope nu increases along the grid")
    if E.size >= 3:
        slopes = np.diff(C) / np.diff(E)
        if np.any(np.diff(slopes) > tol / np.diff(E).min()):
            out.append("chord slopes increase along the grid (curve not concave)")
    return out
