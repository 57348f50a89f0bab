"""Operating points in the (energy, mutual information) plane and identity checks."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from capshape.constellation import Constellation
from capshape.mi import NoiseModel, QuadratureSpec, as_pmf, mi_error_estimate, mutual_information, output_kl

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OperatingPoint:
    energy: float
    mi: float
    label: str = ""


def operating_point(p, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None,
                    label: str = "") -> OperatingPoint:
    p = as_pmf(p, c.size)
    return OperatingPoint(float(p @ c.energies), mutual_information(p, c, noise, quad), label)


def relative_error(realized: float, target: float) -> float:
    """Deviation of a realized value from its target, relative to the realized value."""
    return (realized - target) / realized


@dataclass(frozen=True)
class IdentityCheck:
    """Terms of ``I~ = I* + nu* (E~ - E*) - D(q~ || q*)`` evaluated independently."""

    energy: float
    mi: float
    output_kl: float
    predicted: float
    residual: float
    tolerance: float
    support_ok: bool

    @property
    def holds(self) -> bool:
        if self.support_ok:
            return abs(self.residual) <= self.tolerance
        return self.residual <= self.tolerance


def identity_check(p_tilde, sol, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None) -> IdentityCheck:
    """Check how an arbitrary PMF sits relative to the tangent of ``C(E)`` at ``sol``.

    The three ingredients come from separate code paths: exact energy
    arithmetic, the MI quadrature and the output-KL quadrature. If ``p_tilde``
    puts mass outside the support of ``sol.pmf`` the identity degrades to the
    one-sided bound ``residual <= tolerance``.

    The tolerance is three times the root-sum-square of the grid-refinement
    error of each integral, the KKT residual of ``sol`` (which bounds the
    error of the linear term) and a rounding floor.
    """
    quad = quad or QuadratureSpec()
    p = as_pmf(p_tilde, c.size)
    support_ok = not np.any(p[sol.pmf == 0] > 0)
    energy = float(p @ c.energies)
    mi = mutual_information(p, c, noise, quad)
    kl = output_kl(p, sol.pmf, c, noise, quad)
    predicted = sol.mi + sol.nu * (energy - sol.energy) - kl
    fine = quad.refined()
    errs = [
        abs(mi - mutual_information(p, c, noise, fine)),
        abs(kl - output_kl(p, sol.pmf, c, noise, fine)),
        abs(sol.mi - mutual_information(sol.pmf, c, noise, fine)),
        sol.kkt_residual,
        64 * np.finfo(float).eps * max(1.0, abs(mi), abs(sol.mi)),
    ]
    tol = 3.0 * math.sqrt(sum(e * e for e in errs))
    return IdentityCheck(energy, mi, kl, predicted, mi - predicted, tol, support_ok)


def identity_residual(p_tilde, sol, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None) -> float:
    """``I~ - [I* + nu* (E~ - E*) - D(q~ || q*)]`` in nats."""
    return identity_check(p_tilde, sol, c, noise, quad).residual


def slope_consistency(sol, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None,
                      delta: float = 0.05, tol: float = 1e-7) -> float:
    """Relative mismatch between ``nu*`` and a central difference of ``C(E)`` around ``E*``.

    On the plateau (inactive constraint, ``nu* = 0``) the relative measure is
    undefined: the function logs a notice and returns the absolute forward
    difference, which is 0 when the curve is flat there.
    """
    from capshape.solver import solve_capacity

    e = sol.energy
    up = solve_capacity(c, noise, e + delta, quad, tol, init=sol.pmf)
    if sol.nu <= tol:
        # E* sits at the kink where the constraint switches off, so only the
        # forward difference lies on the flat part
        fd = (up.mi - sol.mi) / delta
        log.info("power constraint inactive at E=%.4g; forward difference %.3g", e, fd)
        return 0.0 if abs(fd) <= tol else abs(fd)
    down = solve_capacity(c, noise, e - delta, quad, tol, init=sol.pmf)
    fd = (up.mi - down.mi) / (2.0 * delta)
    return abs(sol.nu - fd) / sol.nu


def below_capacity(op: OperatingPoint, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None,
                   tol: float = 1e-9) -> bool:
    """Whether ``op`` lies in the achievable region, i.e. ``I <= C(E)`` up to ``tol``."""
    from capshape.solver import solve_capacity

    cap = solve_capacity(c, noise, op.energy, quad)
    return op.mi <= cap.mi + tol


def random_support_pmfs(support_pmf, count: int, rng: np.random.Generator, concentration: float = 1.0):
    """Random PMFs supported inside the support of ``support_pmf``."""
    supp = np.flatnonzero(np.asarray(support_pmf) > 0)
    out = np.zeros((count, len(support_pmf)))
    out[:, supp] = rng.dirichlet(np.full(supp.size, concentration), size=count)
    return out
