"""Sampled-Gaussian (Maxwell-Boltzmann) inputs and Huffman shaping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from capshape.constellation import Constellation
from capshape.dyadic import huffman_lengths
from capshape.errors import InfeasibleError, InvalidInputError
from capshape.mi import NoiseModel, QuadratureSpec, mutual_information


@dataclass(frozen=True)
class SGCurvePoint:
    lam: float
    energy: float
    mi: float


def sampled_gaussian_pmf(c: Constellation, lam: float) -> np.ndarray:
    """``p_i proportional to exp(-lam * w_i)``; ``lam = 0`` is uniform.

    Negative ``lam`` tilts mass towards the outer symbols and reaches average
    energies above that of the uniform PMF.
    """
    if not np.isfinite(lam):
        raise InvalidInputError(f"lambda must be finite, got {lam}")
    a = -lam * c.energies
    a -= a.max()
    p = np.exp(a)
    return p / p.sum()


def sg_energy(c: Constellation, lam: float) -> float:
    return float(sampled_gaussian_pmf(c, lam) @ c.energies)


def sg_lambda_for_energy(c: Constellation, energy: float) -> float:
    """Invert the decreasing map ``lam -> E(lam)`` on the open range ``(min energy, max energy)``."""
    w = c.energies
    if not w.min() < energy < w.max():
        raise InfeasibleError(f"energy {energy} outside sampled-Gaussian range ({w.min()}, {w.max()})")
    e_uniform = float(w.mean())
    if energy == e_uniform:
        return 0.0
    step = 1.0 if energy < e_uniform else -1.0
    edge = step
    while (sg_energy(c, edge) - energy) * step > 0:
        edge *= 2.0
    lo, hi = sorted((0.0, edge))
    return brentq(lambda lam: sg_energy(c, lam) - energy, lo, hi, xtol=1e-15, rtol=1e-15)


def sg_curve(c: Constellation, noise: NoiseModel, energy_grid, quad: QuadratureSpec | None = None) -> list[SGCurvePoint]:
    out = []
    for e in energy_grid:
        lam = sg_lambda_for_energy(c, float(e))
        p = sampled_gaussian_pmf(c, lam)
        out.append(SGCurvePoint(lam, float(p @ c.energies), mutual_information(p, c, noise, quad)))
    return out


def sg_peak(c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None,
            xtol: float = 1e-4) -> SGCurvePoint:
    """Maximum of ``I_SG(E)`` over the open energy range, by bounded scalar search in ``E``."""
    w = c.energies
    span = float(w.max() - w.min())

    def neg(e):
        return -mutual_information(sampled_gaussian_pmf(c, sg_lambda_for_energy(c, e)), c, noise, quad)

    res = minimize_scalar(neg, bounds=(w.min() + 1e-3 * span, w.max() - 1e-3 * span), method="bounded",
                          options={"xatol": xtol})
    lam = sg_lambda_for_energy(c, float(res.x))
    return SGCurvePoint(lam, sg_energy(c, lam), -float(res.fun))


def huffman_shaping_pmf(c: Constellation, lam: float) -> np.ndarray:
    return huffman_lengths(sampled_gaussian_pmf(c, lam)).probs


def huffman_shaping_point(c: Constellation, noise: NoiseModel, lam: float, quad: QuadratureSpec | None = None):
    """Operating point of the Huffman code of the sampled Gaussian PMF."""
    from capshape.analysis import operating_point

    return operating_point(huffman_shaping_pmf(c, lam), c, noise, quad, label=f"huffman(sg, lam={lam:.6g})")
