"""Explicit constants and the a-priori inequalities checked on simulated paths.

Deterministic inequalities are checked pathwise (no statistical slack);
stochastic ones compare Monte Carlo means against right-hand sides built
from the explicit constants and ``C_BDG = 3``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import Plan, make_solver
from .errors import InsufficientPaths, TierError
from .noise import stopping_index
from .parallel import parallel_map
from .symbol import _ev, envelope_symbol

C_BDG = 3.0

# relative floating-point allowance for pathwise checks
PATHWISE_RTOL = 1e-12

DETERMINISTIC = ("deterministic_sup", "deterministic_abs_psi", "deterministic_kernel_free")
STOCHASTIC = ("main_a_priori", "main_a_priori_2", "linear_a_priori", "linear_a_priori_2", "stochastic_a_priori")


# ---------------------------------------------------------------------------
# constants


def _require_finite(constants, names):
    bad = [n for n in names if n in constants.diverged or not np.isfinite(getattr(constants, n))]
    if bad:
        raise TierError("explicit constants need finite " + ", ".join(bad))


def compute_script_constants(constants, T=None):
    """``(C1, C2, C3)`` from the symbol constants.

    ``C1 = c_sup_psi + 2 T psi_inf c_e_int_sup_abs_re``,
    ``C2 = c_e_int_sup_abs_re (1 + 2 T psi_inf c_e_int_sup_abs_re)`` and
    ``C3 = 1 + C1``.

    Parameters
    ----------
    constants : AssumptionConstants
    T : float, optional
        Horizon (defaults to ``constants.T``).

    Raises
    ------
    TierError
        If ``psi_inf`` or one of the other inputs diverged.
    """
    _require_finite(constants, ("psi_inf", "c_sup_psi", "c_e_int_sup_abs_re"))
    T = constants.T if T is None else float(T)
    e = constants.c_e_int_sup_abs_re
    p = constants.psi_inf
    c1 = constants.c_sup_psi + 2.0 * T * p * e
    c2 = e * (1.0 + 2.0 * T * p * e)
    c3 = 1.0 + c1
    return c1, c2, c3


def c2_variant(constants, T=None):
    """Alternative ``C2' = c_e_int_re + 2 T c_e_int_sup_abs_re^2 psi_inf`` (reported, never asserted)."""
    _require_finite(constants, ("psi_inf", "c_e_int_re", "c_e_int_sup_abs_re"))
    T = constants.T if T is None else float(T)
    e = constants.c_e_int_sup_abs_re
    return constants.c_e_int_re + 2.0 * T * e * e * constants.psi_inf


# ---------------------------------------------------------------------------
# reports


@dataclass
class EstimateReport:
    """One inequality evaluated on one run.

    ``passed`` holds iff ``lhs <= rhs + 3 se``; ``confident`` is the stricter
    ``lhs + 3 se <= rhs``. Pathwise reports have ``se = 0`` and allow a
    relative floating-point tolerance of ``PATHWISE_RTOL`` on ``rhs``.
    """

    inequality: str
    R: float
    T: float
    constants: dict
    lhs: float
    rhs: float
    se: float = 0.0
    paths: int = 1
    margin: float = field(init=False)
    passed: bool = field(init=False)
    confident: bool = field(init=False)

    def __post_init__(self):
        self.margin = float(self.rhs - self.lhs)
        if not math.isfinite(self.margin):
            raise ValueError(f"{self.inequality}: margin is not finite")
        slack = PATHWISE_RTOL * abs(self.rhs) if self.se == 0 else 0.0
        self.passed = bool(self.lhs <= self.rhs + 3.0 * self.se + slack)
        self.confident = bool(self.lhs + 3.0 * self.se <= self.rhs + slack)

    def as_row(self):
        return {
            "inequality": self.inequality,
            "R": self.R,
            "T": self.T,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "se": self.se,
            "margin": self.margin,
            "pass": self.passed,
            "paths": self.paths,
        }


# ---------------------------------------------------------------------------
# data norms and left-hand sides


@dataclass
class DataNorms:
    """Right-hand-side data quantities on one path.

    ``u0 = int_{B_R} |u0_hat|``, ``f = int_{B_R} int_0^tau |f_hat|``,
    ``h = (int_0^tau ||h||^2)^{1/2}`` (0 without a physical noise field) and
    ``g = int_{B_R} (int_0^tau sum_k |G_hat^k|^2)^{1/2}``.
    """

    u0: float
    f: float
    h: float
    g: float
    tau: float


class NormPlan:
    """Path-independent pieces of :func:`data_norms` for one configuration."""

    def __init__(self, config, plan=None):
        self.config = config
        grid = config.grid
        X = grid.xi
        dt = config.dt
        self.u0 = float(grid.integrate(np.abs(config.u0.spatial(X))))
        N = config.N
        if config.forcing is None or config.forcing.is_zero:
            self.fcum = np.zeros(N + 1)
        else:
            mids = config.times[:-1] + 0.5 * dt
            fabs = np.abs(config.forcing.time(mids))[:, None] * np.abs(config.forcing.spatial(X))[None, :]
            self.fcum = np.concatenate([[0.0], np.cumsum(dt * grid.integrate(fabs))])
        noise = config.noise
        if noise is None or noise.K == 0:
            self.gcum = None
        else:
            gs = plan.gspatial if plan is not None and plan.gspatial is not None else noise.spatial(X, grid.d)
            gt = noise.time(config.times[:-1])
            sq = (np.abs(gt) ** 2) @ (np.abs(gs) ** 2)
            self.gcum = np.zeros((N + 1, len(X)))
            np.cumsum(dt * sq, axis=0, out=self.gcum[1:])
        self.h_sq = 0.0 if noise is None or noise.h is None else noise.h.l2_norm_sq(grid.d)

    def norms(self, tau_index):
        cfg = self.config
        tau = tau_index * cfg.dt
        g = 0.0 if self.gcum is None else float(cfg.grid.integrate(np.sqrt(self.gcum[tau_index])))
        h = 0.0
        if self.h_sq:
            h = math.sqrt(self.h_sq * cfg.noise.h.time_sq_integral(0.0, tau))
        return DataNorms(self.u0, float(self.fcum[tau_index]), h, g, tau)


def data_norms(config, driver, norm_plan=None):
    """:class:`DataNorms` on the path of ``driver`` (gated by the grid-snapped stopping time)."""
    norm_plan = norm_plan or NormPlan(config)
    return norm_plan.norms(stopping_index(config.tau, driver))


@dataclass
class PathLHS:
    """``sup = int_{B_R} max_{t_n <= tau} |u_hat|`` and ``weighted = int_0^tau int_{B_R} |psi| |u_hat|``."""

    sup: float
    weighted: float


def path_lhs(traj, config):
    """Left-hand sides on one trajectory (time trapezoid, cell-weight quadrature)."""
    grid = config.grid
    n = traj.tau_index
    absu = np.abs(traj.u[: n + 1])
    sup = float(grid.integrate(absu.max(axis=0)))
    psi = _ev(config.symbol, traj.symbol_seed, traj.times[: n + 1, None], grid.xi[None, :, :])
    w = np.abs(psi) * absu
    inner = 0.5 * config.dt * (w[:-1] + w[1:]).sum(axis=0)
    return PathLHS(sup, float(grid.integrate(inner)))


# ---------------------------------------------------------------------------
# deterministic (pathwise) checks


def check_deterministic_bounds(traj, constants, norms, config):
    """Pathwise reports for an equation without noise.

    Returns three reports: the sup bound with ``c_e_int_re``, the weighted
    bound with ``c_abs_psi``, and the bound ``(1 + c_abs_psi)(u0 + f)`` on the
    sup integral that follows from the weighted one.
    """
    if config.K:
        raise ValueError("deterministic bounds need an equation without noise")
    lhs = path_lhs(traj, config)
    stats = EnsembleStatistics(
        constants.R, constants.T, False, *(np.array([v]) for v in (lhs.sup, lhs.weighted, norms.u0, norms.f, norms.h, norms.g, norms.tau))
    )
    return _pathwise_reports(stats, constants)


def _pathwise_reports(stats, constants):
    # inequalities whose constant is infinite are vacuous and left out
    _require_finite(constants, ("c_e_int_re",))
    a, b = constants.c_e_int_re, constants.c_abs_psi
    data = stats.u0 + stats.f
    consts = {"c_e_int_re": a, "c_abs_psi": b}
    cases = [("deterministic_sup", stats.sup, a * data)]
    if np.isfinite(b):
        cases.append(("deterministic_abs_psi", stats.weighted, b * data))
        cases.append(("deterministic_kernel_free", stats.sup, (1.0 + b) * stats.u0 + (1.0 + b) * stats.f))
    out = []
    for name, lhs, rhs in cases:
        rhs = np.where(data == 0, 0.0, rhs)
        # the path with the smallest allowed margin decides the report
        i = int(np.argmin(rhs * (1.0 + PATHWISE_RTOL) - lhs))
        out.append(EstimateReport(name, stats.R, stats.T, consts, float(lhs[i]), float(rhs[i]), 0.0, stats.paths))
    return out


# ---------------------------------------------------------------------------
# ensembles and stochastic checks


@dataclass
class EnsembleStatistics:
    """Per-path left-hand sides and data norms, in path-index order."""

    R: float
    T: float
    has_h: bool
    sup: np.ndarray
    weighted: np.ndarray
    u0: np.ndarray
    f: np.ndarray
    h: np.ndarray
    g: np.ndarray
    tau: np.ndarray

    @property
    def paths(self):
        return len(self.sup)


def ensemble_statistics(config, paths=None, threads=None, start=0):
    """Simulate ``paths`` paths and collect :class:`EnsembleStatistics`."""
    n = config.paths if paths is None else int(paths)
    solver = make_solver(config)
    sym = config.symbol if config.symbol.deterministic else envelope_symbol(config.symbol)
    norm_plan = NormPlan(config, Plan(config, sym) if config.K else None)

    def one(i):
        driver = config.driver(start + i)
        traj = solver(driver)
        lhs = path_lhs(traj, config)
        nm = norm_plan.norms(traj.tau_index)
        return (lhs.sup, lhs.weighted, nm.u0, nm.f, nm.h, nm.g, nm.tau)

    rows = np.array(parallel_map(one, n, threads), dtype=float).reshape(n, 7)
    has_h = config.noise is not None and config.noise.h is not None
    return EnsembleStatistics(config.grid.R, config.T, has_h, *rows.T)


def _mc_report(name, stats, lhs, rhs, consts):
    diff = lhs - rhs
    n = len(diff)
    se = float(np.std(diff, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    L, Rr = float(np.mean(lhs)), float(np.mean(rhs))
    if se > 0.1 * abs(Rr):
        raise InsufficientPaths(f"{name}: standard error {se:.3g} exceeds 10% of the bound {Rr:.3g}")
    return EstimateReport(name, stats.R, stats.T, consts, L, Rr, se, n)


def check_stochastic_bounds(stats, constants, c_bdg=C_BDG):
    """Monte Carlo reports for the stochastic inequalities.

    The linear-noise pair and the combined estimate (with ``C0 = C1 = C1_`` and
    ``C2 = C_BDG C1_``) are always reported; the ``h``-noise pair only when
    the noise comes from a physical field ``h``. ``se`` is the standard error
    of the paired difference ``lhs - rhs``.

    Raises
    ------
    TierError
        If the explicit constants are not finite.
    InsufficientPaths
        If a standard error exceeds 10% of its right-hand side.
    """
    if abs(constants.R - stats.R) > 1e-12 * max(1.0, stats.R):
        raise ValueError("constants and ensemble use different radii")
    c1, c2, c3 = compute_script_constants(constants, stats.T)
    cmin = min(c2, c3)
    consts = {"C1": c1, "C2": c2, "C3": c3, "C_BDG": c_bdg}
    try:
        consts["C2_variant"] = c2_variant(constants, stats.T)
    except TierError:
        pass
    data = stats.u0 + stats.f
    out = []
    if stats.has_h:
        R = stats.R
        out.append(_mc_report("main_a_priori", stats, stats.weighted, c1 * data + R * c_bdg * c1 * stats.h, consts))
        out.append(_mc_report("main_a_priori_2", stats, stats.sup, cmin * data + R * c_bdg * cmin * stats.h, consts))
    out.append(_mc_report("linear_a_priori", stats, stats.weighted, c1 * data + c_bdg * c1 * stats.g, consts))
    out.append(_mc_report("linear_a_priori_2", stats, stats.sup, cmin * data + c_bdg * cmin * stats.g, consts))
    rhs = (1.0 + c1) * stats.u0 + (1.0 + c1) * stats.f + (c_bdg + c_bdg * c1) * stats.g
    out.append(_mc_report("stochastic_a_priori", stats, stats.sup, rhs, consts))
    return out


def run_estimates(config, constants, paths=None, threads=None):
    """Ensemble statistics plus reports.

    With noise the stochastic inequalities are checked in mean; without
    noise every path is checked pathwise and the path with the smallest
    allowed margin is reported for each inequality.
    """
    stats = ensemble_statistics(config, paths, threads)
    if config.K:
        return check_stochastic_bounds(stats, constants), stats
    return _pathwise_reports(stats, constants), stats
