import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import eval_hermite

from specwn.errors import SupportTooWide, UnknownKind
from specwn.noise import (
    FieldSpec,
    HermiteBasis,
    deterministic_tau,
    evaluate_stopping_time,
    fourier_of_product,
    hermite_eval,
    hermite_functions,
    hitting_tau,
    parseval_check,
    sample_driver,
    stopping_index,
    tau_from_config,
    uniform_tau,
)

GAUSS = FieldSpec("gaussian", {"sigma": 1.0})


def hermite_oracle(n, x):
    return eval_hermite(n, x) * np.exp(-x * x / 2) / math.sqrt(2.0**n * math.factorial(n) * math.sqrt(math.pi))


# ---------------------------------------------------------------- Hermite functions


def test_hermite_examples():
    assert hermite_eval(0, 0.0) == pytest.approx(np.pi**-0.25, rel=1e-15)
    assert hermite_eval(0, 0.0) == pytest.approx(0.751126, abs=1e-6)
    assert hermite_eval(1, 0.0) == 0.0
    assert hermite_eval(0, 40.0) == 0.0
    assert hermite_eval(0, -40.0) == 0.0
    assert quad(lambda x: hermite_eval(0, x) ** 2, -np.inf, np.inf)[0] == pytest.approx(1.0, abs=1e-10)


def test_hermite_negative_order_rejected():
    with pytest.raises(ValueError):
        hermite_eval(-1, 0.0)


@given(st.integers(0, 30), st.floats(-6, 6))
def test_hermite_matches_polynomial_formula(n, x):
    assert hermite_eval(n, x) == pytest.approx(hermite_oracle(n, x), rel=1e-9, abs=1e-13)


@given(st.integers(1, 60), st.floats(-10, 10))
def test_hermite_three_term_recurrence(n, x):
    e = hermite_functions(n + 1, x)
    rhs = math.sqrt(2.0 / (n + 1)) * x * e[n] - math.sqrt(n / (n + 1.0)) * e[n - 1]
    assert e[n + 1] == pytest.approx(rhs, abs=1e-15 * max(1.0, abs(x)))


@pytest.mark.parametrize("d,K", [(1, 64), (2, 36)])
def test_basis_gram_and_decay(d, K):
    basis = HermiteBasis(d, K)
    G = basis.gram()
    assert G.shape == (K, K)
    assert np.max(np.abs(G - np.eye(K))) <= 1e-8
    assert basis.boundary_max() <= 1e-12


# ---------------------------------------------------------------- fields and transforms


def test_fourier_of_zero_field():
    assert fourier_of_product(FieldSpec("zero"), 0, 1.3) == 0


def test_fourier_of_eta0_times_eta0():
    h = FieldSpec("hermite", {"n": 0})
    assert fourier_of_product(h, 0, 0.0) == pytest.approx((2 * np.pi) ** -0.5, abs=1e-12)
    assert abs(fourier_of_product(FieldSpec("hermite", {"n": 1}), 0, 0.0)) <= 1e-12


@pytest.mark.parametrize("k", [0, 1, 4])
@pytest.mark.parametrize("xi", [0.0, 1.5, -2.0])
def test_fourier_matches_scipy_quadrature(k, xi):
    def f(x, part):
        return part(np.exp(-1j * xi * x) * hermite_oracle(k, x) * np.exp(-x * x / 2)) / math.sqrt(2 * np.pi)

    oracle = quad(f, -20, 20, args=(np.real,), limit=200)[0] + 1j * quad(f, -20, 20, args=(np.imag,), limit=200)[0]
    assert fourier_of_product(GAUSS, k, xi) == pytest.approx(oracle, abs=1e-10)


def test_support_too_wide():
    wide = FieldSpec("bump", {"radius": 50.0})
    with pytest.raises(SupportTooWide):
        fourier_of_product(wide, 0, 0.0, basis=HermiteBasis(1, 4))


def test_unknown_field_kind():
    with pytest.raises(UnknownKind):
        FieldSpec("plaid")


def test_gaussian_norm_matches_quadrature():
    h = FieldSpec("gaussian", {"sigma": 0.7, "amp": 2.0})
    oracle = quad(lambda x: h.values(np.array([[x]]))[0] ** 2, -20, 20)[0]
    assert h.l2_norm_sq(1) == pytest.approx(oracle, rel=1e-10)


# ---------------------------------------------------------------- Parseval


def test_parseval_of_zero():
    assert tuple(parseval_check(FieldSpec("zero"), 0.0, 8)) == (0.0, 0.0, 1.0)


@pytest.mark.parametrize("xi", [0.0, 3.0])
def test_parseval_gaussian(xi):
    res = parseval_check(GAUSS, xi, 64)
    assert res.partial_sum == pytest.approx(np.sqrt(np.pi) / (2 * np.pi), abs=1e-3)
    assert res.ratio == pytest.approx(1.0, rel=1e-3)
    assert res.measured_constant == pytest.approx(1 / (2 * np.pi), rel=1e-3)


def test_parseval_brute_force_oracle_doubling_K():
    # direct quadrature of every coefficient, doubling K until stable
    def partial(K, xi):
        total = 0.0
        for k in range(K):
            f = lambda x, p: p(np.exp(-1j * xi * x) * hermite_oracle(k, x) * np.exp(-x * x / 2))
            c = quad(f, -25, 25, args=(np.real,), limit=400)[0] + 1j * quad(f, -25, 25, args=(np.imag,), limit=400)[0]
            total += abs(c) ** 2 / (2 * np.pi)
        return total

    K, prev = 8, -1.0
    while True:
        cur = partial(K, 3.0)
        if abs(cur - prev) < 1e-6:
            break
        prev, K = cur, 2 * K
    assert parseval_check(GAUSS, 3.0, 64).partial_sum == pytest.approx(cur, abs=1e-6)
    assert cur / np.sqrt(np.pi) == pytest.approx(1 / (2 * np.pi), rel=1e-5)


def test_parseval_ratio_nondecreasing_in_K():
    basis = HermiteBasis(1, 128)
    for xi in (0.0, 1.0, 3.0):
        ratios = [parseval_check(GAUSS, xi, K, basis=basis).ratio for K in (2, 4, 8, 16, 32, 64, 128)]
        assert all(b >= a - 1e-6 for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] == pytest.approx(1.0, abs=1e-6)


def test_parseval_two_dimensions():
    res = parseval_check(GAUSS, np.array([0.5, -1.0]), 64)
    assert res.d == 2
    assert res.ratio == pytest.approx(1.0, rel=1e-3)


# ---------------------------------------------------------------- drivers


def test_driver_is_deterministic_and_index_dependent():
    a = sample_driver(5, 0, 100, 3, 0.01)
    b = sample_driver(5, 0, 100, 3, 0.01)
    c = sample_driver(5, 1, 100, 3, 0.01)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, c.increments)
    assert np.all(a.B[0] == 0)
    assert np.allclose(a.B[1:], np.cumsum(a.increments, axis=0))


def test_driver_mode_draws_independent_of_K():
    a = sample_driver(5, 2, 64, 1, 0.01)
    b = sample_driver(5, 2, 64, 4, 0.01)
    assert np.array_equal(a.increments[:, 0], b.increments[:, 0])


def test_driver_bit_identical_across_processes():
    code = "from specwn.noise import sample_driver; print(sample_driver(9, 3, 50, 2, 0.02).increments.tobytes().hex())"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout.strip()
    assert out == sample_driver(9, 3, 50, 2, 0.02).increments.tobytes().hex()


def test_driver_statistics():
    N, K, dt, paths = 1000, 3, 0.001, 100
    z = np.concatenate([sample_driver(1, i, N, K, dt).increments for i in range(paths)]) / math.sqrt(dt)
    n = N * paths
    assert np.all(np.abs(z.mean(axis=0)) <= 5 / math.sqrt(n))
    var = z.var(axis=0)
    assert np.all(np.abs(var - 1) <= 5 * math.sqrt(2 / n))
    corr = np.corrcoef(z.T)
    assert np.max(np.abs(corr - np.eye(K))) <= 5 / math.sqrt(n)


def test_coarsen_preserves_running_sums():
    a = sample_driver(3, 0, 64, 2, 1 / 64)
    c = a.coarsen(4)
    assert c.N == 16 and c.dt == pytest.approx(1 / 16)
    assert np.allclose(c.B, a.B[::4])
    with pytest.raises(ValueError):
        a.coarsen(3)


def test_driver_rejects_empty():
    with pytest.raises(ValueError):
        sample_driver(0, 0, 0, 1, 0.1)


# ---------------------------------------------------------------- stopping times


def test_deterministic_tau():
    drv = sample_driver(0, 0, 100, 1, 0.01)
    assert evaluate_stopping_time(deterministic_tau(0.5), drv) == pytest.approx(0.5)
    assert evaluate_stopping_time(deterministic_tau(0.505), drv) == pytest.approx(0.51)


def test_unreachable_level_returns_cap():
    drv = sample_driver(0, 0, 100, 1, 0.01)
    assert evaluate_stopping_time(hitting_tau(0, 1e6, 1.0), drv) == pytest.approx(1.0)


@given(st.integers(0, 1000))
def test_tau_in_range(idx):
    drv = sample_driver(1, idx, 64, 2, 1 / 64)
    for tau in (hitting_tau(1, 0.3, 0.75), uniform_tau(0.25, 1.0), deterministic_tau(0.3)):
        v = evaluate_stopping_time(tau, drv)
        assert 0 < v <= 1.0
    assert evaluate_stopping_time(hitting_tau(1, 0.3, 0.75), drv) <= 0.75


@given(st.integers(0, 1000), st.floats(-1, 1).filter(lambda v: abs(v) > 0.05))
def test_hitting_time_ignores_later_increments(idx, level):
    drv = sample_driver(2, idx, 128, 1, 1 / 128)
    tau = hitting_tau(0, level, 1.0)
    n = stopping_index(tau, drv)
    drv.increments[n:] = np.random.default_rng(idx).standard_normal(drv.increments[n:].shape)
    assert stopping_index(tau, drv) == n


def test_hitting_time_is_the_first_crossing():
    drv = sample_driver(4, 0, 256, 1, 1 / 256)
    n = stopping_index(hitting_tau(0, 0.2, 1.0), drv)
    B = drv.B[:, 0]
    if n < 256:
        assert B[n] >= 0.2
    assert np.all(B[1:n] < 0.2)


def test_hitting_time_mean_against_refined_oracle():
    tau = hitting_tau(0, 0.5, 1.0)
    P = 10_000

    def sample(N, seed):
        v = np.array([evaluate_stopping_time(tau, sample_driver(seed, i, N, 1, 1 / N)) for i in range(P)])
        return v.mean(), v.std(ddof=1) / math.sqrt(P)

    m, se = sample(4096, 101)
    m4, se4 = sample(16384, 202)
    assert abs(m - m4) <= 3 * math.hypot(se, se4)


def test_tau_config():
    assert tau_from_config(None) is None
    assert tau_from_config({"kind": "UniformRandom", "a": 0.2, "b": 0.4}).params["b"] == 0.4
    with pytest.raises(ValueError):
        tau_from_config({"kind": "HittingLevel", "mode": 0, "level": 1, "cap": 1, "extra": 2})
    with pytest.raises(UnknownKind):
        tau_from_config({"kind": "Never"})
    with pytest.raises(ValueError):
        deterministic_tau(0.0)
