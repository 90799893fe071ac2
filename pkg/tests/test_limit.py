import itertools
from math import comb

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from gqlab.bundle import PrequantumBundle, is_bs_point
from gqlab.errors import TruncationError
from gqlab.limit import (apply_gaussian_laplacian, gaussian_spectrum,
                         hermite_profile_1d, lambda_k_b, level_index_N, targets,
                         verify_hermite_eigen, verify_limit_metric_eigenfunction)


def test_gaussian_spectrum_examples():
    lim = gaussian_spectrum(1, 1, 1, 3)
    assert lim.levels == ((0.0, 1), (1.0, 1), (2.0, 1), (3.0, 1))
    lim = gaussian_spectrum(2, 2, 4, 2)
    assert lim.levels[1] == (2.0, 8)
    for k, n, bs in itertools.product((1, 3), (1, 2, 3), (1, 5)):
        assert gaussian_spectrum(k, n, bs, 0).levels[0][1] == bs


def test_cumulative_identity():
    for n in range(1, 5):
        lim = gaussian_spectrum(1, n, 1, 20)
        assert lim.cumulative() == [comb(N + n, n) for N in range(21)]


def test_level_index_examples():
    assert [level_index_N(j, 1, 2) for j in (1, 2, 3, 4)] == [0, 0, 1, 1]
    assert level_index_N(2, 2, 1) == 1
    for n, bs in itertools.product((1, 2, 3), (1, 4)):
        assert level_index_N(1, n, bs) == 0
    assert targets(2, 1, 2, 6).tolist() == [0, 0, 2, 2, 4, 4]


@pytest.mark.parametrize("n, bs", [(1, 1), (2, 3), (3, 2)])
def test_level_index_inverts_cumulative(n, bs):
    for N in range(10):
        j = bs * comb(N + n, n)
        assert level_index_N(j, n, bs) == N
        assert level_index_N(j + 1, n, bs) == N + 1


def brute_lambda(k, b):
    return sum(min((m + k * bi) ** 2 for m in range(-50, 51)) for bi in np.atleast_1d(b))


@pytest.mark.parametrize("k, b, value, m", [(2, 0.5, 0.0, -1), (2, 0.3, 0.16, -1)])
def test_lambda_examples(k, b, value, m):
    lam, arg = lambda_k_b(k, b)
    assert np.isclose(lam, value, atol=1e-14) and arg[0] == m


def test_lambda_n2_example():
    # 0.5 is not an integer, so the second coordinate contributes 0.25
    lam, m = lambda_k_b(1, (0.4, 0.5))
    assert np.isclose(lam, 0.16 + 0.25) and np.isclose(lam, brute_lambda(1, (0.4, 0.5)))
    assert np.isclose(lambda_k_b(1, (0.4, 0.0))[0], 0.16)


@settings(max_examples=100, deadline=None)
@given(k=st.integers(1, 6), b=st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=3))
def test_lambda_matches_brute_force(k, b):
    assert np.isclose(lambda_k_b(k, b)[0], brute_lambda(k, b), atol=1e-12)


def test_lambda_zero_iff_bs():
    rng = np.random.default_rng(9)
    for _ in range(200):
        k = int(rng.integers(1, 6))
        b = rng.integers(0, k) / k if rng.random() < 0.5 else rng.random()
        assert (lambda_k_b(k, b)[0] < 1e-20) == is_bs_point(PrequantumBundle(1, k), b)


def test_hermite_profile_matches_sympy():
    y = sympy.symbols("y")
    for j in (1, 2, 3):
        for d in range(7):
            expr = sympy.expand(sympy.exp(j * y ** 2) * sympy.diff(sympy.exp(-j * y ** 2), y, d))
            ref = sympy.Poly(sympy.simplify(expr), y).all_coeffs()[::-1]
            assert hermite_profile_1d(d, j) == [int(c) for c in ref]


def test_hermite_leading_coefficient_and_degree():
    for j, d in itertools.product((1, 2, 5), range(8)):
        p = hermite_profile_1d(d, j)
        assert len(p) == d + 1 and p[-1] == (-2 * j) ** d


def test_hermite_examples():
    # phi = 1 and phi = y
    assert apply_gaussian_laplacian({(0,): 1}, 3, 1) == {}
    assert apply_gaussian_laplacian({(1,): 1}, 3, 1) == {(1,): 6}
    # y^2 - 1/(2k) has eigenvalue 4k; scale by 2k to stay integral
    k = 3
    phi = {(2,): 2 * k, (0,): -1}
    assert apply_gaussian_laplacian(phi, k, 1) == {key: 4 * k * c for key, c in phi.items()}


def test_verify_hermite_exact():
    for k, n in itertools.product((1, 2, 3), (1, 2)):
        assert verify_hermite_eigen(k, n, 6) == 0.0


@pytest.mark.parametrize("k, l, N", [(1, 1, (0,)), (2, 1, (1,)), (1, 2, (2,)), (2, 1, (1, 1)),
                                     (1, 1, (0, 2))])
def test_limit_metric_eigenfunction(k, l, N):
    assert verify_limit_metric_eigenfunction(k, l, N) <= 1e-3


def test_limit_metric_residual_second_order():
    r1 = verify_limit_metric_eigenfunction(1, 1, (1,), points=128)
    r2 = verify_limit_metric_eigenfunction(1, 1, (1,), points=256)
    assert r1 / r2 > 3


def test_truncation_error():
    with pytest.raises(TruncationError):
        verify_limit_metric_eigenfunction(1, 1, (0,), radius=3.0)
    with pytest.raises(TruncationError):
        verify_limit_metric_eigenfunction(4, 1, (0,), radius=1.9)
