import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mirrorspec.birman_schwinger import (
    CutoffPotential,
    bs_counting_check,
    bs_eigenvalues,
    build_bs_matrix,
    h0_inverse_kernel,
)
from mirrorspec.errors import ParameterError, RangeError, UnsupportedFamilyError
from mirrorspec.model import ModelParams
from mirrorspec.spectrum import counting_function, trusted_lambda

ZETA1 = ModelParams.zeta_family(1.0, 1.0)


def kernel_oracle(b, d):
    # int e^{2 pi i d k} / (2 cosh(2 pi b k)) dk over the real line, as a cosine transform
    def f(k):
        e = math.exp(-2 * math.pi * b * k)
        return 2 * e / (1 + e * e)

    # sech is below 1e-18 past this cutoff
    top = 42.0 / (2 * math.pi * b)
    if d == 0:
        return integrate.quad(f, 0, top, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    return integrate.quad(f, 0, top, weight="cos", wvar=2 * math.pi * d, epsabs=1e-15, limit=400)[0]


def test_kernel_against_oscillatory_quadrature():
    rng = np.random.default_rng(7)
    for b, d in zip(rng.uniform(0.2, 1.5, 20), rng.uniform(-3, 3, 20)):
        assert abs(h0_inverse_kernel(b, d, 0.0) - kernel_oracle(b, d)) < 1e-10


@pytest.mark.parametrize("b", [0.25, 0.5, 1.0, 2.0])
def test_kernel_diagonal(b):
    assert h0_inverse_kernel(b, 0.3, 0.3) == pytest.approx(1 / (4 * b), rel=1e-15)
    assert kernel_oracle(b, 0.0) == pytest.approx(1 / (4 * b), rel=1e-10)


@given(st.floats(0.1, 3), st.floats(-5, 5), st.floats(-5, 5))
def test_kernel_symmetric_positive(b, x, y):
    k = h0_inverse_kernel(b, x, y)
    assert k == h0_inverse_kernel(b, y, x)
    assert 0 <= k <= 1 / (4 * b)


def test_kernel_decreasing():
    d = np.linspace(0, 10, 400)
    k = h0_inverse_kernel(0.7, d, 0.0)
    assert np.all(np.diff(k) < 0)
    with pytest.raises(ParameterError):
        h0_inverse_kernel(0.0, 1.0, 0.0)


def test_support_roots():
    for lam in (3.0, 10.0, 1e4):
        cut = CutoffPotential(ZETA1, lam)
        lo, hi = cut.support
        assert cut.potential(lo) == pytest.approx(lam, rel=1e-12)
        assert cut.potential(hi) == pytest.approx(lam, rel=1e-12)
        assert cut(0.5 * (lo + hi)) > 0
        assert cut(hi + 0.1) == 0 and cut(lo - 0.1) == 0


def test_empty_support():
    for lam in (1.0, 2.0):
        assert CutoffPotential(ZETA1, lam).support is None
        assert build_bs_matrix(ZETA1, lam).entries.shape == (0, 0)
        assert bs_eigenvalues(ZETA1, lam).size == 0


def test_family_and_parameter_errors():
    with pytest.raises(UnsupportedFamilyError):
        build_bs_matrix(ModelParams.mn_family(1.0, 1, 1), 10.0)
    with pytest.raises(ParameterError):
        build_bs_matrix(ModelParams.zeta_family(1.0, 0.0), 10.0)
    with pytest.raises(ParameterError):
        build_bs_matrix(ZETA1, 10.0, nodes=4)
    with pytest.raises(ParameterError):
        build_bs_matrix(ZETA1, 10.0, nodes=20.5)


@pytest.mark.parametrize("lam", [5.0, 10.0, 100.0])
def test_matrix_symmetric_psd(lam):
    k = build_bs_matrix(ZETA1, lam, 200).entries
    assert np.array_equal(k, k.T)
    ev = np.linalg.eigvalsh(k)
    assert ev[0] >= -1e-10 * np.linalg.norm(k, 2)


def test_eigenvalues_stable_under_doubling():
    mu200 = bs_eigenvalues(ZETA1, 10.0, 200)
    mu400 = bs_eigenvalues(ZETA1, 10.0, 400)
    keep = int(np.sum(mu400 > 1e-6))
    assert 3 <= keep < 200
    assert np.max(np.abs(mu200[:keep] - mu400[:keep]) / mu400[:keep]) < 1e-6


def test_counting_check(zeta_b1):
    rep = bs_counting_check(ZETA1, [20, 5, 10], zeta_b1)
    assert rep.passed
    assert [r.lam for r in rep.rows] == [5.0, 10.0, 20.0]
    for r in rep.rows:
        assert r.n_spec == counting_function(zeta_b1, r.lam)
        assert r.bs_count == r.bs_count_refined
        assert r.drift <= 1e-6
    # lambda_1 ~ 17.85: both sides vanish below it
    assert rep.rows[0].n_spec == 0 and rep.rows[1].n_spec == 0
    lines = rep.to_csv().split("\r\n")
    assert lines[0] == "lambda,N_spec,bs_count,verdict"
    assert lines[1].endswith(",pass")


def test_counts_nondecreasing(zeta_b1):
    lams = np.geomspace(3, min(trusted_lambda(zeta_b1), 3000), 12)
    rep = bs_counting_check(ZETA1, lams, zeta_b1, nodes=200)
    assert rep.passed
    n = [r.n_spec for r in rep.rows]
    k = [r.bs_count for r in rep.rows]
    assert n == sorted(n) and k == sorted(k)


@settings(max_examples=15, deadline=None)
@given(st.floats(4.5, 500), st.floats(1.01, 3))
def test_bs_count_monotone_property(lam, factor):
    assert np.sum(bs_eigenvalues(ZETA1, lam, 120) > 1) <= np.sum(bs_eigenvalues(ZETA1, lam * factor, 120) > 1)


def test_counting_check_errors(zeta_b1):
    with pytest.raises(RangeError):
        bs_counting_check(ZETA1, [2 * trusted_lambda(zeta_b1)], zeta_b1)
    with pytest.raises(ParameterError):
        bs_counting_check(ModelParams.zeta_family(1.0, 2.0), [10], zeta_b1)
