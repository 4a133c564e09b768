import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from transfer_risk.data import synth_gaussian_samples
from transfer_risk.divergence import (
    Gaussian1D,
    GaussianDist,
    LinearRiskParams,
    combine_linear_risk,
    cross_entropy_bounds,
    kl_gaussian_1d,
    kl_gaussian_multi,
    w2sq_empirical_1d,
    w2sq_gaussian_1d,
    w2sq_gaussian_multi,
)
from transfer_risk.errors import (
    DimensionMismatch,
    EmptySample,
    InvalidProbabilityVector,
    NegativeRisk,
    NonPositiveVariance,
    NotSPD,
)

from conftest import make_rng, random_spd


def kl_quadrature(p: Gaussian1D, q: Gaussian1D) -> float:
    f = stats.norm(p.mean, p.std)
    g = stats.norm(q.mean, q.std)
    lo, hi = p.mean - 12 * p.std, p.mean + 12 * p.std
    val, _ = integrate.quad(lambda x: f.pdf(x) * (f.logpdf(x) - g.logpdf(x)), lo, hi, epsabs=1e-13, limit=200)
    return val


def test_kl_1d_examples():
    assert kl_gaussian_1d(Gaussian1D(0, 1), Gaussian1D(0, 1)) == 0.0
    assert kl_gaussian_1d(Gaussian1D(1, 1), Gaussian1D(0, 1)) == pytest.approx(0.5)
    assert kl_gaussian_1d(Gaussian1D(0, 0.64), Gaussian1D(0, 0.25)) == pytest.approx(0.3100, abs=1e-4)


def test_kl_1d_matches_quadrature():
    rng = make_rng(7)
    for _ in range(20):
        p = Gaussian1D(rng.normal(), rng.uniform(0.2, 3))
        q = Gaussian1D(rng.normal(), rng.uniform(0.2, 3))
        assert kl_gaussian_1d(p, q) == pytest.approx(kl_quadrature(p, q), abs=1e-8)


def test_nonpositive_variance():
    with pytest.raises(NonPositiveVariance):
        Gaussian1D(0.0, 0.0)
    with pytest.raises(NonPositiveVariance):
        Gaussian1D(0.0, -1.0)


def test_kl_multi_examples():
    rng = make_rng(8)
    cov = random_spd(rng, 3)
    p = GaussianDist(rng.normal(size=3), cov)
    assert kl_gaussian_multi(p, p) == pytest.approx(0.0, abs=1e-12)
    assert kl_gaussian_multi(GaussianDist([1, 0], np.eye(2)), GaussianDist([0, 0], np.eye(2))) == pytest.approx(0.5)


def test_kl_multi_factorizes_on_diagonal():
    rng = make_rng(9)
    mp, mq = rng.normal(size=4), rng.normal(size=4)
    vp, vq = rng.uniform(0.3, 2, 4), rng.uniform(0.3, 2, 4)
    total = kl_gaussian_multi(GaussianDist(mp, np.diag(vp)), GaussianDist(mq, np.diag(vq)))
    parts = sum(kl_gaussian_1d(Gaussian1D(mp[i], vp[i]), Gaussian1D(mq[i], vq[i])) for i in range(4))
    assert total == pytest.approx(parts, abs=1e-10)


def test_multi_dimension_and_spd_errors():
    with pytest.raises(DimensionMismatch):
        kl_gaussian_multi(GaussianDist([0], [[1]]), GaussianDist([0, 0], np.eye(2)))
    with pytest.raises(DimensionMismatch):
        w2sq_gaussian_multi(GaussianDist([0], [[1]]), GaussianDist([0, 0], np.eye(2)))
    with pytest.raises(NotSPD):
        GaussianDist([0, 0], [[1, 1], [1, 1]])


def test_w2_1d_examples():
    assert w2sq_gaussian_1d(Gaussian1D(0, 1), Gaussian1D(0, 1)) == 0.0
    assert w2sq_gaussian_1d(Gaussian1D(0, 4), Gaussian1D(0, 1)) == pytest.approx(1.0)
    assert w2sq_gaussian_1d(Gaussian1D(0, 0.64), Gaussian1D(0, 0.25)) == pytest.approx(0.09)


def test_w2_multi_examples():
    cov = random_spd(make_rng(10), 2)
    assert w2sq_gaussian_multi(GaussianDist([1, 2], cov), GaussianDist([1, 2], cov)) == pytest.approx(0.0, abs=1e-12)
    assert w2sq_gaussian_multi(GaussianDist([0, 0], cov), GaussianDist([3, 4], cov)) == pytest.approx(25.0, abs=1e-10)
    a = GaussianDist([0, 0], np.diag([4.0, 1.0]))
    b = GaussianDist([0, 0], np.diag([1.0, 4.0]))
    assert w2sq_gaussian_multi(a, b) == pytest.approx(2.0, abs=1e-10)


def test_w2_multi_reduces_to_1d():
    assert w2sq_gaussian_multi(GaussianDist([0.3], [[0.64]]), GaussianDist([-0.2], [[0.25]])) == pytest.approx(
        w2sq_gaussian_1d(Gaussian1D(0.3, 0.64), Gaussian1D(-0.2, 0.25)), abs=1e-12)


def test_empirical_examples():
    assert w2sq_empirical_1d([0, 1], [0, 1]) == 0.0
    assert w2sq_empirical_1d([0, 1], [1, 2]) == pytest.approx(1.0)
    assert w2sq_empirical_1d([0, 2], [1, 1]) == pytest.approx(1.0)
    with pytest.raises(EmptySample):
        w2sq_empirical_1d([], [1.0])


def test_empirical_unequal_sizes_uses_quantile_grid():
    # point masses: any grid gives the squared gap
    assert w2sq_empirical_1d([1.0], [3.0, 3.0, 3.0]) == pytest.approx(4.0)
    # [0,1] vs [0,0,1,1]: both quantile functions agree on the grid
    assert w2sq_empirical_1d([0.0, 1.0], [0.0, 0.0, 1.0, 1.0]) == pytest.approx(0.0)


def test_empirical_consistency_with_population():
    p, q = Gaussian1D(0.5, 1.0), Gaussian1D(-0.3, 2.25)
    xs = synth_gaussian_samples(GaussianDist([p.mean], [[p.var]]), 100_000, 1)[:, 0]
    ys = synth_gaussian_samples(GaussianDist([q.mean], [[q.var]]), 100_000, 2)[:, 0]
    truth = w2sq_gaussian_1d(p, q)
    assert abs(w2sq_empirical_1d(xs, ys) - truth) < 0.05 * (1 + truth)
    assert abs(w2sq_empirical_1d(xs, ys[:70_000]) - truth) < 0.05 * (1 + truth)


def test_cross_entropy_examples():
    lo, hi = cross_entropy_bounds(0.6931, [0.5, 0.5])
    assert (lo, hi) == pytest.approx((-0.6932, 2.0794), abs=1e-3)
    assert cross_entropy_bounds(0.0, [1.0]) == (0.0, 0.0)
    lo, hi = cross_entropy_bounds(1.0986, [1 / 3] * 3)
    assert (lo, hi) == pytest.approx((-2.1972, 4.3944), abs=1e-3)
    with pytest.raises(InvalidProbabilityVector):
        cross_entropy_bounds(1.0, [0.5, 0.6])
    with pytest.raises(InvalidProbabilityVector):
        cross_entropy_bounds(1.0, [1.0, 0.0])


def test_linear_risk():
    assert combine_linear_risk(0, 0, LinearRiskParams(1.0)) == 0
    assert combine_linear_risk(1, 2, LinearRiskParams(0.5)) == pytest.approx(2.0)
    assert combine_linear_risk(0.3, 0, LinearRiskParams(7.0)) == pytest.approx(0.3)
    with pytest.raises(NegativeRisk):
        combine_linear_risk(-1.0, 0.0, LinearRiskParams())
    with pytest.raises(NegativeRisk):
        LinearRiskParams(-0.1)


def _dist(seed, n, scale=1.0):
    rng = make_rng(seed)
    return GaussianDist(rng.normal(size=n), scale * random_spd(rng, n))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 5), s1=st.integers(0, 2**31), s2=st.integers(0, 2**31))
def test_nonnegative_and_identity(n, s1, s2):
    p, q = _dist(s1, n), _dist(s2, n)
    assert kl_gaussian_multi(p, q) >= 0.0
    assert w2sq_gaussian_multi(p, q) >= 0.0
    assert kl_gaussian_multi(p, p) == pytest.approx(0.0, abs=1e-9)
    assert w2sq_gaussian_multi(p, p) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 6), s1=st.integers(0, 2**31), s2=st.integers(0, 2**31))
def test_bures_symmetry(n, s1, s2):
    p, q = _dist(s1, n), _dist(s2, n)
    assert abs(w2sq_gaussian_multi(p, q) - w2sq_gaussian_multi(q, p)) < 1e-9


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 40))
def test_empirical_triangle(seed, n):
    rng = make_rng(seed)
    a, b, c = rng.normal(size=n), 2 * rng.normal(size=n) + 1, rng.standard_t(3, size=n)
    ac = math.sqrt(w2sq_empirical_1d(a, c))
    assert ac <= math.sqrt(w2sq_empirical_1d(a, b)) + math.sqrt(w2sq_empirical_1d(b, c)) + 1e-9


def random_bounded_gaussian(rng, n):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = rng.uniform(0.0, 4.0, n)
    eig = np.where(eig <= 1e-6, 1e-6, eig)
    return GaussianDist(rng.normal(size=n), (q * eig) @ q.T)


def test_talagrand_standard_reference():
    rng = make_rng(11)
    for _ in range(200):
        n = int(rng.integers(1, 6))
        nu = random_bounded_gaussian(rng, n)
        gamma = GaussianDist(np.zeros(n), np.eye(n))
        assert w2sq_gaussian_multi(nu, gamma) <= 2.0 * kl_gaussian_multi(nu, gamma) + 1e-9
