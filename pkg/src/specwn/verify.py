"""Structural checks: representation residual, uniqueness, Fubini swap, BDG bracket."""

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import sup_abs_cumsum
from .engine import FrequencyField, Plan, exponents, solve, solve_deterministic_symbol, solve_random_symbol
from .errors import DriverMismatch
from .noise import ORACLE_STREAM, path_generator, stopping_index
from .parallel import parallel_map
from .symbol import _ev, envelope_symbol, wrap_random


# ---------------------------------------------------------------------------
# representation from the equation


def representation_residual(traj, config, driver):
    """Residual of ``u(t) = u0 + int psi u + int f + sum G dB`` on the stored nodes.

    ``int psi u`` and ``int f`` use the trapezoid rule over the time nodes
    (the left value of each step includes that step's noise kick); the noise
    sum reuses the driver increments, so it carries no statistical error.

    Returns
    -------
    max_abs : float
    per_node : ndarray of shape ``(N + 1, M)``
    """
    if (traj.base_seed, traj.path_index) != (driver.base_seed, driver.path_index):
        raise DriverMismatch("trajectory and driver come from different paths")
    if len(traj.times) != driver.N + 1:
        raise DriverMismatch("trajectory and driver have different grids")
    X = config.grid.xi
    times = config.times
    dt = config.dt
    N, M = len(times) - 1, X.shape[0]
    tau_index = traj.tau_index
    u = traj.u
    psi = _ev(config.symbol, traj.symbol_seed, times[:, None], X[None, :, :])
    kicks = np.zeros((N, M), dtype=complex)
    if config.noise is not None and config.noise.K:
        plan_g = config.noise.spatial(X, config.grid.d)
        w = config.noise.time(times[:-1]) * driver.increments[:, : config.noise.K]
        w[tau_index:] = 0.0
        kicks = w @ plan_g
    left = psi[:-1] * (u[:-1] + kicks)
    right = psi[1:] * u[1:]
    steps = 0.5 * dt * (left + right)
    if config.forcing is not None and not config.forcing.is_zero:
        f = config.forcing.time(times)[:, None] * config.forcing.spatial(X)[None, :]
        fs = 0.5 * dt * (f[:-1] + f[1:])
        fs[tau_index:] = 0.0
        steps = steps + fs
    acc = np.zeros((N + 1, M), dtype=complex)
    np.cumsum(steps + kicks, axis=0, out=acc[1:])
    r = u - config.u0.spatial(X)[None, :] - acc
    return float(np.max(np.abs(r))), r


def observed_order(ns, residuals):
    """Least-squares slope of ``-log(residual)`` against ``log(N)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(residuals, dtype=float))
    return float(-np.polyfit(x, y, 1)[0])


def residual_convergence(config, path_index=0, ns=(64, 128, 256, 512)):
    """Residuals for several step counts on one driver coarsened from the finest grid."""
    ns = sorted(ns)
    fine = config.driver(path_index, N=ns[-1])
    out = []
    for n in ns:
        cfg = config.replace(N=n)
        drv = fine.coarsen(ns[-1] // n)
        traj = solve(cfg, drv)
        out.append(representation_residual(traj, cfg, drv)[0])
    return list(ns), out, observed_order(ns, out)


# ---------------------------------------------------------------------------
# uniqueness


@dataclass
class UniquenessResult:
    """Cross-pipeline discrepancy and the homogeneous-data maximum.

    ``envelope_growth`` is ``max exp(Re int_0^t psi_env)`` over the grid; the
    two-stage result loses about ``log10(envelope_growth)`` digits.
    """

    max_discrepancy: float
    homogeneous_max: float
    envelope_growth: float = 1.0

    def __float__(self):
        return self.max_discrepancy


def uniqueness_crosscheck(config, driver):
    """Compare the direct and the two-stage solution on one driver.

    The two-stage pipeline runs on the symbol wrapped as trivially random.
    Also solves the homogeneous problem (zero data) through both pipelines.
    """
    if not config.symbol.deterministic:
        raise ValueError("uniqueness cross-check needs a deterministic symbol")
    direct = solve_deterministic_symbol(config, driver)
    two = solve_random_symbol(config.replace(symbol=wrap_random(config.symbol)), driver)
    disc = float(np.max(np.abs(direct.u - two.u)))
    zero = config.replace(u0=FrequencyField("zero"), forcing=FrequencyField("zero"), noise=None)
    h1 = solve_deterministic_symbol(zero, driver)
    h2 = solve_random_symbol(zero.replace(symbol=wrap_random(config.symbol)), driver)
    hom = float(max(np.max(np.abs(h1.u)), np.max(np.abs(h2.u))))
    _, A_env = exponents(envelope_symbol(config.symbol), 0, config.times, config.grid.xi)
    with np.errstate(over="ignore"):
        growth = float(np.exp(np.max(A_env.real)))
    return UniquenessResult(disc, hom, growth)


# ---------------------------------------------------------------------------
# stochastic Fubini


def fubini_discrete_check(G, driver, weights=None):
    """Relative difference between the two orders of ``sum_x w_x sum_{m,k} G dB``.

    Parameters
    ----------
    G : ndarray, shape ``(N, K, cells)``
    driver : NoiseDriver
    weights : ndarray, optional
        Cell weights (default 1).
    """
    G = np.asarray(G)
    N, K, C = G.shape
    dB = driver.increments[:N, :K]
    w = np.ones(C) if weights is None else np.asarray(weights, dtype=float)
    inner_first = np.einsum("mkc,mk->c", G, dB)
    lhs = np.sum(w * inner_first)
    space_first = np.einsum("mkc,c->mk", G, w)
    rhs = np.sum(space_first * dB)
    return float(abs(lhs - rhs) / (1.0 + abs(rhs)))


def live_integrand(config, driver, plan=None):
    """``e^{-A(0,t_m,xi)} G^k(t_m, xi)`` gated by the stopping time, shape ``(N, K, M)``."""
    plan = plan or Plan(config)
    tau_index = stopping_index(config.tau, driver)
    G = plan.gtime[:, :, None] * plan.gspatial[None, :, :]
    G[tau_index:] = 0.0
    if plan.guarded:
        raise ValueError("exponent budget exceeded; live integrand would overflow")
    return plan.inv_kernel[:, None, :] * G


# ---------------------------------------------------------------------------
# BDG probe


def _g_unit(B, times, T):
    return np.ones((len(times) - 1, 1))


def _g_step(B, times, T):
    return (times[:-1] < 0.5 * T).astype(float)[:, None]


def _g_two_mode(B, times, T):
    return np.full((len(times) - 1, 2), 1.0 / math.sqrt(2.0))


def _g_sign(B, times, T):
    return np.sign(B[:-1, :1])


def _g_brownian(B, times, T):
    return B[:-1, :1].copy()


# name -> (modes, integrand(B, times, T) -> (N, K) evaluated at left points)
INTEGRANDS = {
    "unit": (1, _g_unit),
    "step": (1, _g_step),
    "two_mode": (2, _g_two_mode),
    "sign": (1, _g_sign),
    "brownian": (1, _g_brownian),
}


@dataclass
class BDGResult:
    """Measured ``E sup|int g dB|`` against ``E (int |g|^2)^{1/2}``.

    Unpacks as ``(lhs, rhs, ratio, se)`` with ``se`` the ratio's standard error.
    ``reference_sqrt_t`` is ``sqrt(T)`` and ``reference_closed_form`` is
    ``sqrt(pi T / 2)`` (both refer to the unit integrand).
    """

    name: str
    lhs: float
    rhs: float
    ratio: float
    se: float
    lhs_se: float
    rhs_se: float
    n_paths: int
    N: int
    T: float
    oracle_lhs: float = float("nan")
    oracle_se: float = float("nan")

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.ratio, self.se))

    @property
    def reference_sqrt_t(self):
        return math.sqrt(self.T)

    @property
    def reference_closed_form(self):
        return math.sqrt(math.pi * self.T / 2.0)

    def oracle_agrees(self, k=3.0):
        err = math.hypot(self.lhs_se, self.oracle_se)
        return abs(self.lhs - self.oracle_lhs) <= k * err


def _bdg_samples(name, n_paths, T, N, seed, stream, threads, chunk=256):
    K, gfun = INTEGRANDS[name]
    dt = T / N
    times = dt * np.arange(N + 1)
    sq = math.sqrt(dt)

    def block(b):
        lo, hi = b
        sup = np.empty(hi - lo)
        qv = np.empty(hi - lo)
        for i in range(lo, hi):
            z = path_generator(seed, i, stream).standard_normal((K, N))
            dB = z.T * sq
            B = np.zeros((N + 1, K))
            np.cumsum(dB, axis=0, out=B[1:])
            g = gfun(B, times, T)
            sup[i - lo] = sup_abs_cumsum(np.sum(g * dB, axis=1))
            qv[i - lo] = math.sqrt(dt * float(np.sum(g * g)))
        return sup, qv

    bounds = [(lo, min(n_paths, lo + chunk)) for lo in range(0, n_paths, chunk)]
    parts = parallel_map(lambda j: block(bounds[j]), len(bounds), threads, chunk=1)
    sup = np.concatenate([p[0] for p in parts])
    qv = np.concatenate([p[1] for p in parts])
    return sup, qv


def bdg_probe(g_spec, n_paths, T, N=4096, seed=0, oracle_paths=0, threads=None):
    """Monte Carlo bracket check for ``E sup_t |sum_k int_0^t g^k dB^k|``.

    Parameters
    ----------
    g_spec : str
        A key of :data:`INTEGRANDS`.
    n_paths : int
        At least 1000.
    T : float
    N : int
        Time steps; the supremum is the max over grid nodes.
    oracle_paths : int
        When positive, an independent reference run on a grid four times
        finer fills ``oracle_lhs`` and ``oracle_se``.
    """
    if n_paths < 1000:
        raise ValueError("need at least 1000 paths")
    if g_spec not in INTEGRANDS:
        raise KeyError(f"unknown integrand {g_spec!r}")
    sup, qv = _bdg_samples(g_spec, n_paths, T, N, seed, 0, threads)
    n = len(sup)
    L, Rr = float(np.mean(sup)), float(np.mean(qv))
    vL = float(np.var(sup, ddof=1))
    vR = float(np.var(qv, ddof=1))
    cov = float(np.cov(sup, qv)[0, 1]) if vR > 0 else 0.0
    ratio = L / Rr
    var_ratio = (vL / Rr**2 + L**2 * vR / Rr**4 - 2 * L * cov / Rr**3) / n
    res = BDGResult(
        g_spec, L, Rr, ratio, math.sqrt(max(var_ratio, 0.0)), math.sqrt(vL / n), math.sqrt(vR / n), n, N, T
    )
    if oracle_paths:
        osup, _ = _bdg_samples(g_spec, oracle_paths, T, 4 * N, seed, ORACLE_STREAM, threads)
        res.oracle_lhs = float(np.mean(osup))
        res.oracle_se = float(np.std(osup, ddof=1) / math.sqrt(len(osup)))
    return res
