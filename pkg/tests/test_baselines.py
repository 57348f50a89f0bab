import numpy as np
import pytest

from capshape.baselines import (
    huffman_shaping_pmf,
    huffman_shaping_point,
    sampled_gaussian_pmf,
    sg_curve,
    sg_energy,
    sg_lambda_for_energy,
    sg_peak,
)
from capshape.dyadic import DyadicPMF
from capshape.errors import InfeasibleError, InvalidInputError
from capshape.mi import mutual_information
from capshape.solver import solve_capacity


def bisect_lambda(c, energy, lo=-50.0, hi=50.0):
    """Plain bisection on the decreasing map lambda -> E(lambda)."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if sg_energy(c, mid) > energy:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def entropy(p):
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def test_uniform_at_zero(qam16):
    assert np.allclose(sampled_gaussian_pmf(qam16, 0.0), 1 / 16)
    assert sg_lambda_for_energy(qam16, qam16.energies.mean()) == 0.0


def test_shape(qam16):
    p = sampled_gaussian_pmf(qam16, 0.4)
    order = np.argsort(qam16.energies)
    assert np.all(np.diff(p[order]) <= 1e-15)
    q = sampled_gaussian_pmf(qam16, -0.4)
    assert np.all(np.diff(q[order]) >= -1e-15)
    assert sampled_gaussian_pmf(qam16, 1e4).sum() == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        sampled_gaussian_pmf(qam16, np.inf)


@pytest.mark.parametrize("energy", [1.2, 2.0, 3.3, 5.0, 6.5, 8.0, 9.5])
def test_lambda_matches_bisection(qam16, energy):
    lam = sg_lambda_for_energy(qam16, energy)
    assert lam == pytest.approx(bisect_lambda(qam16, energy), abs=1e-9)
    assert sg_energy(qam16, lam) == pytest.approx(energy, abs=1e-12)


@pytest.mark.parametrize("energy", [0.1, 1.1, 10.5, 12.0])
def test_lambda_out_of_range(qam16, energy):
    with pytest.raises(InfeasibleError):
        sg_lambda_for_energy(qam16, energy)


def test_entropy_maximizer(qam16, rng):
    w = qam16.energies
    for _ in range(100):
        p = rng.dirichlet(np.ones(16))
        sg = sampled_gaussian_pmf(qam16, sg_lambda_for_energy(qam16, float(p @ w)))
        assert entropy(p) <= entropy(sg) + 1e-12


def test_sg_below_capacity(qam16, noise):
    for pt in sg_curve(qam16, noise, [1.5, 3.0, 5.0]):
        cap = solve_capacity(qam16, noise, pt.energy)
        assert pt.mi <= cap.mi + 1e-10
        assert pt.mi >= cap.mi - 0.05


def test_sg_peak_is_maximum(qam16, noise):
    peak = sg_peak(qam16, noise)
    for pt in sg_curve(qam16, noise, np.linspace(1.5, 9.5, 17)):
        assert pt.mi <= peak.mi + 1e-7
    assert mutual_information(sampled_gaussian_pmf(qam16, peak.lam), qam16, noise) == pytest.approx(peak.mi)


def test_huffman_shaping(qam16, noise):
    p = huffman_shaping_pmf(qam16, 0.3)
    assert p.sum() == pytest.approx(1.0)
    nz = p[p > 0]
    assert np.allclose(np.log2(nz), np.round(np.log2(nz)))
    op = huffman_shaping_point(qam16, noise, 0.3)
    assert op.energy == pytest.approx(p @ qam16.energies)
    assert isinstance(DyadicPMF(tuple(int(-np.log2(x)) for x in nz)), DyadicPMF)


def test_gibbs_limit(qam64):
    p = sampled_gaussian_pmf(qam64, 1e3)
    inner = np.isclose(qam64.energies, qam64.energies.min())
    assert np.allclose(p[inner], 0.25)
    assert p[~inner].sum() < 1e-100


def test_lambda_64qam_matches_bisection(qam64):
    lam = sg_lambda_for_energy(qam64, 5.0)
    assert lam == pytest.approx(bisect_lambda(qam64, 5.0), abs=1e-9)


def test_small_energy_close_to_capacity_and_gap_grows(noise):
    from capshape.constellation import make_square_qam

    c = make_square_qam(64, 10.0)
    pts = sg_curve(c, noise, [2.5, 6.0])
    caps = [solve_capacity(c, noise, p.energy).mi for p in pts]
    assert abs(pts[0].mi - caps[0]) / caps[0] < 0.01
    gaps = [cap - p.mi for cap, p in zip(caps, pts)]
    assert min(gaps) >= -1e-10
    assert gaps[1] > gaps[0]


def test_huffman_of_uniform(qam16, noise):
    p = huffman_shaping_pmf(qam16, 0.0)
    assert np.allclose(p, 1 / 16)
