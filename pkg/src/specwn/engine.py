"""Fourier-space mild solutions on a truncated frequency grid.

For every frequency the solution is the sum of a kernel term, a Duhamel
forcing term and a stochastic convolution. Time stepping is exact in the
kernel: per-step exponents ``A(t_n, t_{n+1}, xi)`` come from the symbol
module; forcing enters through the midpoint rule and noise through
left-point Ito increments.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ._kernels import propagate
from .errors import DriverMismatch, MissingEnvelope, OverflowGuard, ValidationError
from .noise import FieldSpec, HermiteBasis, fourier_coefficients, sample_driver, stopping_index
from .symbol import (
    _closed_integral,
    _cplx,
    _ev,
    as_frequencies,
    envelope_symbol,
    integrate_symbol,
    step_integrals,
    tag_eval,
    time_breakpoints,
)

# largest |Re A| for which the global factorization e^{A} * sum e^{-A} ... is used
EXPONENT_BUDGET = 650.0


# ---------------------------------------------------------------------------
# frequency grid


class FrequencyGrid:
    """Uniform lattice in ``B_R`` offset by half a cell from the origin.

    Per axis, node ``j`` sits at ``(j - n // 2 + 1/2) h`` with ``h`` chosen so
    that the last node lies on ``|xi| = R``. In two dimensions only nodes with
    ``|xi| <= R`` are kept, in row-major order.

    Parameters
    ----------
    d : int
    R : float
    nodes : int
        Nodes per axis.
    """

    def __init__(self, d, R, nodes):
        if d not in (1, 2):
            raise ValueError("only d in {1, 2} is supported")
        if R <= 0 or nodes < 2:
            raise ValueError("need R > 0 and at least two nodes")
        self.d = int(d)
        self.R = float(R)
        self.nodes = int(nodes)
        half = nodes // 2
        self.h = R / (nodes - 1 - half + 0.5)
        ax = (np.arange(nodes) - half + 0.5) * self.h
        if d == 1:
            self.xi = ax[:, None]
        else:
            X, Y = np.meshgrid(ax, ax, indexing="ij")
            pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
            keep = np.sqrt(np.sum(pts**2, axis=1)) <= R * (1 + 1e-12)
            self.xi = pts[keep]
        self.radius = np.sqrt(np.sum(self.xi**2, axis=1))
        self.weights = np.full(len(self.xi), self.h**d)

    def __len__(self):
        return len(self.xi)

    def ball_measure(self):
        return 2.0 * self.R if self.d == 1 else np.pi * self.R**2

    def integrate(self, values, axis=-1):
        """Cell-weight quadrature of ``values`` over ``B_R``."""
        return np.tensordot(values, self.weights, axes=([axis], [0]))


# ---------------------------------------------------------------------------
# frequency-space data


@dataclass(frozen=True)
class FrequencyField:
    """Frequency-space data ``time(t) * spatial(xi)``.

    Kinds: ``zero``, ``constant`` (value), ``gaussian`` (amp, width:
    ``amp exp(-|xi|^2 / (2 width^2))``). ``time`` is an optional coefficient
    tag (see :func:`specwn.symbol.tag_eval`).
    """

    kind: str = "zero"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "gaussian"):
            raise ValueError(f"unknown frequency field kind {self.kind!r}")

    def spatial(self, xi):
        X = as_frequencies(xi)
        r2 = np.sum(X * X, axis=-1)
        if self.kind == "zero":
            return np.zeros(r2.shape, dtype=complex)
        if self.kind == "constant":
            return np.full(r2.shape, _cplx(self.params.get("value", 1.0)))
        w = float(self.params.get("width", 1.0))
        return _cplx(self.params.get("amp", 1.0)) * np.exp(-0.5 * r2 / w**2)

    def time(self, t):
        tag = self.params.get("time")
        t = np.asarray(t, dtype=float)
        if tag is None:
            return np.ones(t.shape, dtype=complex)
        return tag_eval(tag, t) + 0j

    @property
    def is_zero(self):
        if self.kind == "zero":
            return True
        key = "value" if self.kind == "constant" else "amp"
        return _cplx(self.params.get(key, 1.0)) == 0


ZERO = FrequencyField("zero")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise coefficients ``G^k(t, xi)``.

    Either explicit per-mode frequency fields (``modes``) or a physical field
    ``h`` expanded through ``K`` Hermite modes, ``G^k = F[eta_k h]``.
    """

    modes: tuple = ()
    h: FieldSpec = None
    K_h: int = 0
    dx: float = 0.05

    @property
    def K(self):
        return len(self.modes) if self.h is None else self.K_h

    def spatial(self, grid_xi, d):
        """Spatial coefficients, shape ``(K, M)``."""
        if self.h is None:
            return np.array([m.spatial(grid_xi) for m in self.modes]).reshape(self.K, -1)
        basis = HermiteBasis(d, self.K_h, dx=self.dx)
        if self.h.support() > basis.L:
            basis = HermiteBasis(d, self.K_h, dx=self.dx, L=self.h.support())
        return fourier_coefficients(self.h, basis, grid_xi)

    def time(self, t):
        """Time factors, shape ``(len(t), K)``."""
        t = np.asarray(t, dtype=float)
        if self.h is None:
            return np.stack([m.time(t) for m in self.modes], axis=-1).reshape(len(t), self.K)
        return np.repeat((self.h.time_factor(t) + 0j)[:, None], self.K, axis=1)


@dataclass
class SimulationConfig:
    """Everything that defines a run (see the configuration schema in the README)."""

    symbol: object
    grid: FrequencyGrid
    T: float
    N: int
    u0: FrequencyField = ZERO
    forcing: FrequencyField = ZERO
    noise: NoiseSpec = None
    tau: object = None
    paths: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValidationError("N must be at least 1")
        if not self.T > 0:
            raise ValidationError("T must be positive")
        if self.paths < 1:
            raise ValidationError("paths must be at least 1")

    @property
    def dt(self):
        return self.T / self.N

    @property
    def times(self):
        return self.dt * np.arange(self.N + 1)

    @property
    def K(self):
        return self.noise.K if self.noise is not None else 0

    @property
    def driver_modes(self):
        k = max(self.K, 1)
        if self.tau is not None and self.tau.kind == "HittingLevel":
            k = max(k, int(self.tau.params.get("mode", 0)) + 1)
        return k

    def driver(self, path_index, N=None):
        N = N or self.N
        return sample_driver(self.seed, path_index, N, self.driver_modes, self.T / N)

    def replace(self, **kw):
        vals = {k: getattr(self, k) for k in self.__dataclass_fields__}
        vals.update(kw)
        return SimulationConfig(**vals)


@dataclass
class FieldTrajectory:
    """One path of ``u_hat(t_n, xi_j)`` with its components.

    ``u = H1 + H2`` holds exactly; ``A`` is ``int_0^{t_n} psi``.
    """

    times: np.ndarray
    xi: np.ndarray
    u: np.ndarray
    A: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    base_seed: int
    path_index: int
    tau: float
    tau_index: int
    symbol_seed: int = 0
    correction: np.ndarray = None
    ftilde: np.ndarray = None

    def dump_ndjson(self, fh):
        """Records ``{path, t, xi, re, im, re_H2, im_H2}`` in lattice order."""
        for n, t in enumerate(self.times):
            for j in range(self.xi.shape[0]):
                x = self.xi[j]
                rec = {
                    "path": self.path_index,
                    "t": float(t),
                    "xi": float(x[0]) if len(x) == 1 else [float(v) for v in x],
                    "re": float(self.u[n, j].real),
                    "im": float(self.u[n, j].imag),
                    "re_H2": float(self.H2[n, j].real),
                    "im_H2": float(self.H2[n, j].imag),
                }
                fh.write(json.dumps(rec) + "\n")


def path_symbol_seed(base_seed, path_index):
    """Sample seed handed to random symbols on one path."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(path_index),))
    return int(ss.generate_state(1, np.uint32)[0])


# ---------------------------------------------------------------------------
# operators and exponents


def apply_operator(spec, seed, t, field, xi):
    """Frequency-wise action ``psi(t, xi_j) * field_j``.

    ``xi`` is a :class:`FrequencyGrid` or a frequency array.
    """
    X = xi.xi if isinstance(xi, FrequencyGrid) else as_frequencies(xi)
    return _ev(spec, seed, float(t), X) * np.asarray(field)


def exponents(spec, seed, times, xi):
    """Per-step exponents ``a[n] = A(t_n, t_{n+1})`` and cumulative ``A(0, t_n)``.

    ``A(0, t_n)`` is taken from the closed form when one exists so that it is
    exact rather than accumulated.
    """
    X = as_frequencies(xi)
    a = step_integrals(spec, seed, times, X)
    A0 = _closed_integral(spec, seed, np.zeros((len(times), 1)), np.asarray(times)[:, None], X)
    if A0 is None:
        A0 = np.vstack([np.zeros((1, X.shape[0]), dtype=complex), np.cumsum(a, axis=0)])
    else:
        A0 = np.broadcast_to(A0, (len(times), X.shape[0])).astype(complex)
    return a, A0


class Plan:
    """Path-independent arrays for a deterministic symbol on one config.

    Parameters
    ----------
    config : SimulationConfig
    symbol : SymbolSpec, optional
        Deterministic symbol to use (defaults to ``config.symbol``).
    seed : int
        Symbol seed (ignored by deterministic symbols).
    """

    def __init__(self, config, symbol=None, seed=0):
        self.config = config
        self.symbol = symbol if symbol is not None else config.symbol
        self.seed = seed
        grid = config.grid
        times = config.times
        dt = config.dt
        X = grid.xi
        self.times = times
        self.a, self.A0 = exponents(self.symbol, seed, times, X)
        if np.any(np.abs(self.a.real) > EXPONENT_BUDGET):
            raise OverflowGuard("a single step exponent exceeds the safe budget; refine the time grid")
        self.expa = np.exp(self.a)
        self.guarded = bool(np.max(np.abs(self.A0.real)) > EXPONENT_BUDGET)
        self.u0 = config.u0.spatial(X)
        mids = times[:-1] + 0.5 * dt
        self.mids = mids
        if config.forcing is None or config.forcing.is_zero:
            self.fkick = None
        else:
            Amid = _closed_integral(self.symbol, seed, mids[:, None], times[1:, None], X)
            if Amid is None:
                Amid = integrate_symbol(self.symbol, seed, mids[:, None], times[1:, None], X)
            fmid = config.forcing.time(mids)[:, None] * config.forcing.spatial(X)[None, :]
            # impulse dt * f(mid) carried to t_{n+1} by the exact kernel
            self.fimpulse = dt * fmid
            self.fkick = np.exp(Amid) * self.fimpulse
        if config.noise is None or config.noise.K == 0:
            self.gspatial = None
        else:
            self.gspatial = config.noise.spatial(X, grid.d)
            self.gtime = config.noise.time(times[:-1])
        if not self.guarded:
            self.kernel = np.exp(self.A0)
            self.inv_kernel = np.exp(-self.A0[:-1])

    def kicks(self, driver, tau_index):
        """Gated noise kicks ``sum_k G^k(t_m) dB^k_m``, shape ``(N, M)``."""
        N, M = self.a.shape
        if self.gspatial is None:
            return None
        K = self.gspatial.shape[0]
        w = self.gtime * driver.increments[:, :K]
        w[tau_index:] = 0.0
        return w @ self.gspatial

    def run(self, driver, tau_index=None):
        """Trajectory for one driver (deterministic symbol)."""
        cfg = self.config
        if driver.N != cfg.N or abs(driver.dt - cfg.dt) > 1e-15 * max(1.0, cfg.dt):
            raise DriverMismatch("driver grid does not match the configuration")
        if tau_index is None:
            tau_index = stopping_index(cfg.tau, driver)
        N, M = self.a.shape
        # H1: kernel applied to u0 plus Duhamel forcing
        if self.fkick is None:
            forcing = np.zeros((N, M), dtype=complex)
        else:
            forcing = self.fkick.copy()
            forcing[tau_index:] = 0.0
        if self.guarded:
            H1 = propagate(self.expa, forcing, self.u0)
        else:
            H1 = self.kernel * self.u0[None, :]
            if self.fkick is not None:
                H1 = H1 + propagate(self.expa, forcing, np.zeros(M, dtype=complex))
        kicks = self.kicks(driver, tau_index)
        if kicks is None:
            H2 = np.zeros((N + 1, M), dtype=complex)
        elif self.guarded:
            H2 = propagate(self.expa, self.expa * kicks, np.zeros(M, dtype=complex))
        else:
            Mn = np.zeros((N + 1, M), dtype=complex)
            np.cumsum(self.inv_kernel * kicks, axis=0, out=Mn[1:])
            H2 = self.kernel * Mn
        if not (np.all(np.isfinite(H1)) and np.all(np.isfinite(H2))):
            raise OverflowGuard("solution overflowed; the kernel growth exceeds floating range")
        return FieldTrajectory(
            times=self.times,
            xi=cfg.grid.xi,
            u=H1 + H2,
            A=self.A0,
            H1=H1,
            H2=H2,
            base_seed=driver.base_seed,
            path_index=driver.path_index,
            tau=tau_index * cfg.dt,
            tau_index=int(tau_index),
            symbol_seed=self.seed,
        )


def solve_deterministic_symbol(config, driver, plan=None):
    """Mild solution for a deterministic symbol on one driver.

    Kernel term ``e^{A(0,t_n)} u0``, Duhamel forcing by the midpoint rule with
    the exact kernel, and the stochastic convolution from
    :func:`stochastic_convolution`; forcing and noise act only on steps that
    start before the stopping time.
    """
    if not config.symbol.deterministic and plan is None:
        raise ValueError("use solve_random_symbol for random symbols")
    plan = plan or Plan(config)
    return plan.run(driver)


def stochastic_convolution(config, driver, det_symbol=None, plan=None):
    """``H2(t_n) = e^{A(0,t_n)} sum_{m<n} e^{-A(0,t_m)} G(t_m) dB_m`` (gated).

    Switches to the per-step recursion ``H2(t_{n+1}) = e^{a_n}(H2(t_n) +
    G(t_n) dB_n)`` once ``|Re A|`` exceeds the exponent budget.
    """
    if plan is None:
        sym = det_symbol if det_symbol is not None else config.symbol
        if not sym.deterministic:
            raise MissingEnvelope("stochastic convolution needs a deterministic symbol")
        plan = Plan(config, sym)
    N, M = plan.a.shape
    tau_index = stopping_index(config.tau, driver)
    kicks = plan.kicks(driver, tau_index)
    if kicks is None:
        return np.zeros((N + 1, M), dtype=complex)
    if plan.guarded:
        return propagate(plan.expa, plan.expa * kicks, np.zeros(M, dtype=complex))
    Mn = np.zeros((N + 1, M), dtype=complex)
    np.cumsum(plan.inv_kernel * kicks, axis=0, out=Mn[1:])
    return plan.kernel * Mn


# ---------------------------------------------------------------------------
# random symbols: envelope solution plus correction


_GL_NODES = 12


def _correction_panels(symbol, envelope, times):
    """Quadrature panels covering every half step, split at symbol kinks."""
    T = times[-1]
    dt = times[1] - times[0]
    edges = set(times.tolist())
    edges.update((times[:-1] + 0.5 * dt).tolist())
    edges.update(time_breakpoints(symbol, 0.0, T))
    edges.update(time_breakpoints(envelope, 0.0, T))
    e = np.array(sorted(edges))
    a, b = e[:-1], e[1:]
    keep = b - a > 1e-14 * max(T, 1.0)
    a, b = a[keep], b[keep]
    step = np.clip(np.searchsorted(times, 0.5 * (a + b), side="right") - 1, 0, len(times) - 2)
    return a, b, step


def _integral_pairs(spec, seed, s, t, X):
    out = _closed_integral(spec, seed, s[:, None], t[:, None], X)
    if out is None:
        out = integrate_symbol(spec, seed, s[:, None], t[:, None], X)
    return np.broadcast_to(out, (len(s), X.shape[0]))


def correction_stage(config, symbol, seed, env_traj, env_plan, kicks, forcing, a_real):
    """Correction ``v`` solving ``v' = psi v + (psi - psi_env) u_env`` with ``v(0) = 0``.

    The within-step envelope path is ``u_env(s) = e^{A_env(t_n, s)} (u_env(t_n)
    + kick_n)`` plus the forcing impulse carried from the midpoint, so the
    Duhamel integral over each step is evaluated by Gauss-Legendre panels
    split at the half step and at symbol kinks.
    """
    times = config.times
    X = config.grid.xi
    envelope = env_plan.symbol
    N, M = a_real.shape
    pa, pb, pstep = _correction_panels(symbol, envelope, times)
    x, w = np.polynomial.legendre.leggauss(_GL_NODES)
    half = 0.5 * (pb - pa)
    s = (0.5 * (pa + pb))[:, None] + half[:, None] * x[None, :]
    sf = s.ravel()
    stp = np.repeat(pstep, _GL_NODES)
    tn = times[stp]
    tn1 = times[stp + 1]
    mid = env_plan.mids[stp]
    A_to_end = _integral_pairs(symbol, seed, sf, tn1, X)
    Aenv_from_start = _integral_pairs(envelope, 0, tn, sf, X)
    diff = _ev(symbol, seed, sf[:, None], X[None, :, :]) - _ev(envelope, 0, sf[:, None], X[None, :, :])
    start = env_traj.u[:-1]
    if kicks is not None:
        start = start + kicks
    uenv = np.exp(Aenv_from_start) * start[stp]
    if forcing is not None:
        after = sf > mid
        if np.any(after):
            Aenv_mid = _integral_pairs(envelope, 0, mid[after], sf[after], X)
            uenv[after] += np.exp(Aenv_mid) * forcing[stp[after]]
    integrand = np.exp(A_to_end) * diff * uenv
    weights = (half[:, None] * w[None, :]).ravel()
    contrib = np.zeros((N, M), dtype=complex)
    np.add.at(contrib, stp, weights[:, None] * integrand)
    v = propagate(np.exp(a_real), contrib, np.zeros(M, dtype=complex))
    return v


def solve_random_symbol(config, driver, env_plan=None):
    """Two-stage solution for a random symbol.

    (i) solve with the deterministic envelope; (ii) form the correction
    forcing ``(psi - psi_env) u_env``; (iii) solve the correction with the
    realized symbol and no noise; (iv) add. Both stages use ``driver``.
    """
    sym = config.symbol
    if sym.envelope is None and not sym.deterministic:
        raise MissingEnvelope(f"{sym.kind} has no envelope")
    envelope = envelope_symbol(sym)
    if env_plan is None:
        env_plan = Plan(config, envelope)
    tau_index = stopping_index(config.tau, driver)
    env_traj = env_plan.run(driver, tau_index)
    seed = path_symbol_seed(driver.base_seed, driver.path_index)
    a, A0 = exponents(sym, seed, config.times, config.grid.xi)
    kicks = env_plan.kicks(driver, tau_index)
    forcing = None
    if env_plan.fkick is not None:
        forcing = env_plan.fimpulse.copy()
        forcing[tau_index:] = 0.0
    v = correction_stage(config, sym, seed, env_traj, env_plan, kicks, forcing, a)
    ftilde = np.stack(
        [apply_operator(sym, seed, t, env_traj.u[n], config.grid) - apply_operator(envelope, 0, t, env_traj.u[n], config.grid) for n, t in enumerate(config.times)]
    )
    H1 = env_traj.H1 + v
    H2 = env_traj.H2
    if not np.all(np.isfinite(H1)):
        raise OverflowGuard("correction stage overflowed")
    return FieldTrajectory(
        times=config.times,
        xi=config.grid.xi,
        u=H1 + H2,
        A=A0,
        H1=H1,
        H2=H2,
        base_seed=driver.base_seed,
        path_index=driver.path_index,
        tau=tau_index * config.dt,
        tau_index=int(tau_index),
        symbol_seed=seed,
        correction=v,
        ftilde=ftilde,
    )


def make_solver(config):
    """Return ``solve(driver) -> FieldTrajectory`` with shared precomputation."""
    if config.symbol.deterministic:
        plan = Plan(config)
        return plan.run
    env_plan = Plan(config, envelope_symbol(config.symbol))
    return lambda driver: solve_random_symbol(config, driver, env_plan)


def solve(config, driver):
    """Dispatch to the direct or two-stage solver."""
    return make_solver(config)(driver)


def run_ensemble(config, statistic, paths=None, threads=None, start=0):
    """Apply ``statistic(traj, driver)`` to ``paths`` independent paths.

    Results come back in path-index order whatever the worker count.
    """
    from .parallel import parallel_map

    solver = make_solver(config)
    n = paths if paths is not None else config.paths

    def one(i):
        driver = config.driver(start + i)
        return statistic(solver(driver), driver)

    return parallel_map(one, n, threads)
