"""Block shaping: GHC on n-fold product PMFs, reported per channel use."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from capshape.constellation import Constellation
from capshape.dyadic import DyadicPMF, ghc, kl_pmf
from capshape.mi import (
    NoiseModel,
    QuadratureSpec,
    as_pmf,
    block_mutual_information,
    check_block_size,
    mc_log_ratios,
    mutual_information,
)

log = logging.getLogger(__name__)


def product_pmf(p, n: int) -> np.ndarray:
    """Joint PMF of ``n`` IID symbols, indexed base-m with the first symbol most significant."""
    p = as_pmf(p)
    if n < 1:
        raise ValueError("block length must be >= 1")
    check_block_size(p.size, n)
    out = p
    for _ in range(n - 1):
        out = np.multiply.outer(out, p).ravel()
    return out


def block_energies(c: Constellation, n: int) -> np.ndarray:
    """``||x||^2`` for every tuple in the product alphabet, same order as :func:`product_pmf`."""
    check_block_size(c.size, n)
    out = c.energies
    for _ in range(n - 1):
        out = np.add.outer(out, c.energies).ravel()
    return out


def block_energy(pn, c: Constellation, n: int) -> float:
    """Average energy per block, a finite sum over the product alphabet."""
    return float(np.asarray(pn) @ block_energies(c, n))


@dataclass
class BlockDesign:
    n: int
    joint_dyadic: DyadicPMF
    per_symbol_energy: float
    per_symbol_mi: float
    per_symbol_mi_stderr: float
    per_symbol_kl: float
    target_energy: float
    target_mi: float

    @property
    def energy_error(self) -> float:
        """Relative excess of the realized energy over the target."""
        return (self.per_symbol_energy - self.target_energy) / self.target_energy

    @property
    def mi_error(self) -> float:
        return (self.per_symbol_mi - self.target_mi) / self.target_mi

    def to_json(self, include_lengths: bool = True) -> dict:
        out = {
            "n": self.n,
            "per_symbol_energy": self.per_symbol_energy,
            "per_symbol_mi": self.per_symbol_mi,
            "per_symbol_mi_stderr": self.per_symbol_mi_stderr,
            "per_symbol_kl": self.per_symbol_kl,
            "target_energy": self.target_energy,
            "target_mi": self.target_mi,
            "energy_error": self.energy_error,
            "mi_error": self.mi_error,
        }
        if include_lengths:
            out["lengths"] = self.joint_dyadic.to_json()
        return out


def design_block(sol, c: Constellation, noise: NoiseModel, n: int, quad: QuadratureSpec | None = None) -> BlockDesign:
    """GHC approximation of the n-fold product of ``sol.pmf``.

    Energy is exact. MI uses Gauss-Hermite quadrature for ``n = 1`` (unless
    ``quad`` asks for Monte Carlo) and Monte Carlo with ``quad.mc_samples``
    samples otherwise.
    """
    quad = quad or QuadratureSpec()
    joint = product_pmf(sol.pmf, n)
    dyadic = ghc(joint)
    dp = dyadic.probs
    if np.any(dp[joint == 0] > 0):
        raise AssertionError("GHC put mass outside the support of the product PMF")
    energy = block_energy(dp, c, n) / n
    if n == 1 and quad.scheme == "gauss-hermite":
        mi, err = mutual_information(dp, c, noise, quad), 0.0
    else:
        mc = QuadratureSpec(quad.nodes_per_axis, "monte-carlo", quad.mc_samples, quad.seed)
        log.info("Monte Carlo block MI: n=%d, %d samples", n, mc.mc_samples)
        est = block_mutual_information(dp, c, noise, n, mc)
        mi, err = est.value / n, est.stderr / n
    return BlockDesign(
        n=n,
        joint_dyadic=dyadic,
        per_symbol_energy=energy,
        per_symbol_mi=mi,
        per_symbol_mi_stderr=err,
        per_symbol_kl=kl_pmf(dyadic, joint) / n,
        target_energy=sol.energy,
        target_mi=sol.mi,
    )


@dataclass(frozen=True)
class BlockIdentityCheck:
    mi: float
    output_kl: float
    predicted: float
    residual: float
    stderr: float


def block_identity_check(sol, design: BlockDesign, c: Constellation, noise: NoiseModel,
                         quad: QuadratureSpec | None = None) -> BlockIdentityCheck:
    """Per-use form of the tangent identity for a block design.

    ``I~_n = I* + nu* (E~_n - E*) - D(q~^(n) || q*^(n)) / n`` where the slope of
    the n-fold capacity curve equals ``nu*`` of the single-letter solve. The MI
    and output KL share Monte Carlo samples, so their sum has a small error.
    """
    quad = quad or QuadratureSpec()
    n = design.n
    mc = QuadratureSpec(quad.nodes_per_axis, "monte-carlo", quad.mc_samples, quad.seed)
    target = product_pmf(sol.pmf, n)
    rows = mc_log_ratios(design.joint_dyadic.probs, c, noise, n, mc, others=(target,))
    mi = float(rows[0].mean()) / n
    kl = float((rows[1] - rows[0]).mean()) / n
    predicted = sol.mi + sol.nu * (design.per_symbol_energy - sol.energy) - kl
    stderr = float(rows[1].std(ddof=1)) / np.sqrt(rows.shape[1]) / n
    return BlockIdentityCheck(mi, kl, predicted, mi - predicted, stderr)
