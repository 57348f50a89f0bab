"""Mutual information, its derivatives and output-density divergences.

The channel is ``Y = X + Z`` with ``Z`` zero-mean circularly symmetric complex
Gaussian of total variance ``E|Z|^2``. All quantities are in nats.

Single-letter integrals over the complex plane use a 2D Gauss-Hermite tensor
grid centred on each signal point (``y = x_i + z``), which turns every
``E_{h_i}[.]`` into a weighted sum over the same noise nodes. Block integrals
(n >= 2) use Monte Carlo.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from numpy.polynomial.hermite import hermgauss

from capshape.constellation import Constellation
from capshape.errors import BlockTooLargeError, InvalidInputError

log = logging.getLogger(__name__)

MAX_BLOCK_ENTRIES = 2**24
PMF_SUM_TOL = 1e-9
DENSITY_FLOOR = 1e-300
# Tensor-grid nodes whose weight is below this fraction are skipped; their
# total contribution is far below double precision of the result.
_NODE_WEIGHT_CUTOFF = 1e-22
_ROW_CHUNK = 16


@dataclass(frozen=True)
class NoiseModel:
    variance: float = 1.0

    def __post_init__(self):
        if not self.variance > 0:
            raise InvalidInputError(f"noise variance must be > 0, got {self.variance}")


@dataclass(frozen=True)
class QuadratureSpec:
    nodes_per_axis: int = 48
    scheme: str = "gauss-hermite"
    mc_samples: int = 10**6
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in ("gauss-hermite", "monte-carlo"):
            raise InvalidInputError(f"unknown quadrature scheme {self.scheme!r}")
        if self.scheme == "gauss-hermite" and self.nodes_per_axis < 4:
            raise InvalidInputError("gauss-hermite needs at least 4 nodes per axis")
        if self.scheme == "monte-carlo" and self.mc_samples < 10**4:
            raise InvalidInputError("monte-carlo needs at least 1e4 samples")

    def refined(self) -> "QuadratureSpec":
        """Same spec with a denser grid, used for error estimation."""
        return QuadratureSpec(self.nodes_per_axis + 16, self.scheme, self.mc_samples, self.seed)


class MCEstimate(NamedTuple):
    value: float
    stderr: float


def as_pmf(p, size: int | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if size is not None and p.size != size:
        raise InvalidInputError(f"PMF has {p.size} entries, constellation has {size}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidInputError("PMF entries must be finite and nonnegative")
    if abs(p.sum() - 1.0) > PMF_SUM_TOL:
        raise InvalidInputError(f"PMF sums to {p.sum()!r}, not 1")
    return p


@lru_cache(maxsize=32)
def _gh_grid(nodes_per_axis: int, variance: float):
    t, w = hermgauss(nodes_per_axis)
    ta, tb = np.meshgrid(t, t, indexing="ij")
    weights = np.outer(w, w).ravel() / math.pi
    keep = weights > _NODE_WEIGHT_CUTOFF * weights.max()
    sigma = math.sqrt(variance)
    z = sigma * (ta.ravel()[keep] + 1j * tb.ravel()[keep])
    weights = weights[keep]
    weights /= weights.sum()
    z.setflags(write=False)
    weights.setflags(write=False)
    return z, weights


def _log_ratio(p, points, rows, z, variance, with_ratios=False):
    """``ln(q(y) / h_rows(y))`` at ``y = x_row + z`` for every row and node.

    Returns an array ``L`` of shape (len(rows), K). With ``with_ratios`` also
    returns ``h_j(y) / q(y)`` for support symbols ``j``, shape (rows, S, K).
    """
    supp = np.flatnonzero(p > 0)
    lp = np.log(p[supp])
    xs = points[supp]
    zr, zi = z.real, z.imag
    out = np.empty((rows.size, z.size))
    ratios = np.empty((rows.size, supp.size, z.size)) if with_ratios else None
    for start in range(0, rows.size, _ROW_CHUNK):
        sl = slice(start, start + _ROW_CHUNK)
        d = points[rows[sl], None] - xs[None, :]
        a = -(
            (d.real**2 + d.imag**2)[:, :, None]
            + 2.0 * (d.real[:, :, None] * zr + d.imag[:, :, None] * zi)
        ) / variance
        a += lp[None, :, None]
        peak = a.max(axis=1, keepdims=True)
        e = np.exp(a - peak)
        s = e.sum(axis=1, keepdims=True)
        out[sl] = (peak + np.log(s))[:, 0, :]
        if with_ratios:
            # h_j / q = exp(a - lp_j - L)
            ratios[sl] = e / s / p[supp][None, :, None]
    return (out, ratios) if with_ratios else out


def conditional_entropy(noise: NoiseModel) -> float:
    """Differential entropy ``h(Y|X) = ln(pi e sigma^2)`` of the complex Gaussian noise."""
    return math.log(math.pi * math.e * noise.variance)


def output_density(p, c: Constellation, noise: NoiseModel, y):
    """Gaussian-mixture density ``q(y) = sum_i p_i h(y - x_i)``; ``y`` may be an array."""
    p = as_pmf(p, c.size)
    y = np.asarray(y, dtype=np.complex128)
    d = y[..., None] - c.points
    h = np.exp(-(d.real**2 + d.imag**2) / noise.variance) / (math.pi * noise.variance)
    return h @ p


def symbol_divergences(p, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None):
    """``D(h_i || q)`` for every symbol ``i``, including those with ``p_i = 0``."""
    quad = quad or QuadratureSpec()
    p = as_pmf(p, c.size)
    z, wts = _gh_grid(quad.nodes_per_axis, noise.variance)
    L = _log_ratio(p, c.points, np.arange(c.size), z, noise.variance)
    return -(L @ wts)


def mutual_information(p, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None) -> float:
    """``I(X;Y)`` in nats for input PMF ``p``.

    A point mass returns exactly 0 without integrating.
    """
    quad = quad or QuadratureSpec()
    p = as_pmf(p, c.size)
    if np.count_nonzero(p) <= 1:
        return 0.0
    if quad.scheme == "monte-carlo":
        return max(0.0, block_mutual_information(p, c, noise, 1, quad).value)
    supp = np.flatnonzero(p > 0)
    z, wts = _gh_grid(quad.nodes_per_axis, noise.variance)
    L = _log_ratio(p, c.points, supp, z, noise.variance)
    return max(0.0, float(-(p[supp] @ (L @ wts))))


def mi_error_estimate(p, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None) -> float:
    """Quadrature error proxy: change in MI when the grid is refined."""
    quad = quad or QuadratureSpec()
    return abs(mutual_information(p, c, noise, quad) - mutual_information(p, c, noise, quad.refined()))


def mi_gradient(p, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None) -> np.ndarray:
    """Partial derivatives ``dI/dp_i = D(h_i || q) - 1`` (nats)."""
    return symbol_divergences(p, c, noise, quad) - 1.0


def mi_gradient_hessian(p, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None):
    """Gradient on all symbols and Hessian restricted to the support of ``p``.

    ``d2I/dp_i dp_j = -integral h_i h_j / q``. Returns ``(grad, hess, support)``
    where ``hess`` is indexed by positions in ``support``.
    """
    quad = quad or QuadratureSpec()
    p = as_pmf(p, c.size)
    supp = np.flatnonzero(p > 0)
    z, wts = _gh_grid(quad.nodes_per_axis, noise.variance)
    L, R = _log_ratio(p, c.points, np.arange(c.size), z, noise.variance, with_ratios=True)
    grad = -(L @ wts) - 1.0
    hess = -(R[supp] @ wts)
    hess = 0.5 * (hess + hess.T)
    return grad, hess, supp


def output_kl(p1, p2, c: Constellation, noise: NoiseModel, quad: QuadratureSpec | None = None) -> float:
    """``D(q1 || q2)`` between the output densities induced by ``p1`` and ``p2``."""
    quad = quad or QuadratureSpec()
    p1 = as_pmf(p1, c.size)
    p2 = np.asarray(p2, dtype=float).reshape(-1)
    if p2.size != c.size or not np.any(p2 > 0):
        raise InvalidInputError("second PMF has empty support")
    p2 = as_pmf(p2, c.size)
    if np.array_equal(p1, p2):
        return 0.0
    supp = np.flatnonzero(p1 > 0)
    z, wts = _gh_grid(quad.nodes_per_axis, noise.variance)
    L1 = _log_ratio(p1, c.points, supp, z, noise.variance)
    L2 = _log_ratio(p2, c.points, supp, z, noise.variance)
    kl = float(p1[supp] @ ((L1 - L2) @ wts))
    if kl < 0:
        if kl < -1e-6:
            raise ArithmeticError(f"output KL quadrature returned {kl:.3e}; grid too coarse")
        kl = 0.0
    return kl


def check_block_size(m: int, n: int) -> int:
    size = m**n
    if size > MAX_BLOCK_ENTRIES:
        raise BlockTooLargeError(f"block alphabet {m}^{n} = {size} exceeds cap {MAX_BLOCK_ENTRIES}")
    return size


def mc_log_ratios(pn, c: Constellation, noise: NoiseModel, n: int, quad: QuadratureSpec | None = None,
                  others=(), chunk: int = 16384) -> np.ndarray:
    """Per-sample ``ln h(z) - ln q_k(y)`` with ``(x, z)`` drawn from ``pn`` and the noise.

    Row 0 uses ``q`` induced by ``pn`` itself, row ``k`` by ``others[k-1]``.
    PMFs over the product alphabet are indexed base-m positionally, first
    symbol most significant. The Gaussian normalisation cancels in every row.
    """
    quad = quad or QuadratureSpec(scheme="monte-carlo")
    m = c.size
    size = check_block_size(m, n)
    pn = as_pmf(pn, size)
    tensors = [pn.reshape((m,) * n)] + [as_pmf(o, size).reshape((m,) * n) for o in others]
    supp = np.flatnonzero(pn > 0)
    rng = np.random.default_rng(quad.seed)
    N = quad.mc_samples
    var = noise.variance
    draws = rng.choice(supp, size=N, p=pn[supp] / pn[supp].sum())
    noise_draws = math.sqrt(var / 2.0) * (rng.standard_normal((N, n)) + 1j * rng.standard_normal((N, n)))
    out = np.empty((len(tensors), N))
    next_report = 0.1
    for start in range(0, N, chunk):
        if N >= 10 * chunk and start / N >= next_report:
            log.info("Monte Carlo n=%d: %d%% of %d samples", n, int(100 * next_report), N)
            next_report += 0.1
        sl = slice(start, start + chunk)
        zb = noise_draws[sl]
        digits = np.stack(np.unravel_index(draws[sl], (m,) * n), axis=1)
        y = c.points[digits] + zb
        d = y[:, :, None] - c.points[None, None, :]
        a = -(d.real**2 + d.imag**2) / var
        peak = a.max(axis=2)
        e = np.exp(a - peak[:, :, None])
        base = -(zb.real**2 + zb.imag**2).sum(axis=1) / var - peak.sum(axis=1)
        for k, tensor in enumerate(tensors):
            T = _contract(tensor, e, m, n)
            out[k, sl] = base - np.log(np.maximum(T, DENSITY_FLOOR))
    return out


def block_mutual_information(pn, c: Constellation, noise: NoiseModel, n: int,
                             quad: QuadratureSpec | None = None) -> MCEstimate:
    """Monte Carlo estimate of ``I(X^n; Y^n)`` per block (nats), with standard error.

    Uses the paired estimator ``ln h(z) - ln q(y)``, whose ``|z|^2`` part has
    expectation exactly ``n`` (the conditional entropy term) while cancelling
    most of the sampling noise.
    """
    quad = quad or QuadratureSpec(scheme="monte-carlo")
    size = check_block_size(c.size, n)
    pn = as_pmf(pn, size)
    if np.count_nonzero(pn) <= 1:
        return MCEstimate(0.0, 0.0)
    vals = mc_log_ratios(pn, c, noise, n, quad)[0]
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)))


def block_output_kl(p1n, p2n, c: Constellation, noise: NoiseModel, n: int,
                    quad: QuadratureSpec | None = None) -> MCEstimate:
    """Monte Carlo ``D(q1 || q2)`` between block output densities, per block."""
    quad = quad or QuadratureSpec(scheme="monte-carlo")
    rows = mc_log_ratios(p1n, c, noise, n, quad, others=(p2n,))
    diff = rows[1] - rows[0]
    return MCEstimate(float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(diff.size)))


def _contract(tensor, e, m, n):
    """``sum_k P[k] prod_j e[b, j, k_j]`` for each sample ``b``."""
    B = e.shape[0]
    R = tensor.reshape(m ** (n - 1), m) @ e[:, n - 1, :].T
    for j in range(n - 2, -1, -1):
        R = np.einsum("amb,bm->ab", R.reshape(m**j, m, B), e[:, j, :])
    return R.reshape(B)
