"""Hermite-basis white noise, Brownian drivers and stopping times."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import first_passage
from .errors import SupportTooWide, UnknownKind
from .symbol import _cplx, tag_eval, tag_integral

NOISE_STREAM = 0
TAU_STREAM = 1
ORACLE_STREAM = 7

PI_QUARTER = np.pi ** (-0.25)


# ---------------------------------------------------------------------------
# Hermite functions


def hermite_functions(nmax, x):
    """Normalized Hermite functions ``eta_0 .. eta_nmax`` at points ``x``.

    Uses the stable three-term recurrence
    ``eta_{n+1} = sqrt(2/(n+1)) x eta_n - sqrt(n/(n+1)) eta_{n-1}``.

    Returns
    -------
    ndarray of shape ``(nmax + 1,) + x.shape``
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = PI_QUARTER * np.exp(-0.5 * x * x)
    if nmax >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, nmax):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1.0)) * out[n - 1]
    return out


def hermite_eval(n, x):
    """Value of the ``n``-th normalized Hermite function at ``x``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    v = hermite_functions(n, x)[n]
    return float(v) if np.ndim(v) == 0 else v


def hermite_decay_radius(n, eps=1e-12):
    """Smallest half-width ``L`` (step 0.25) with ``|eta_m(x)| < eps`` for ``|x| >= L``, all ``m <= n``."""
    L = math.sqrt(2 * n + 1) + 1.0
    while True:
        xs = L + np.linspace(0.0, 2.0, 9)
        if np.max(np.abs(hermite_functions(n, xs))) < eps:
            return L
        L += 0.25


def mode_indices(K, d):
    """First ``K`` multi-indices ordered by total degree (then lexicographically reversed)."""
    if d == 1:
        return [(k,) for k in range(K)]
    out = []
    deg = 0
    while len(out) < K:
        for i in range(deg, -1, -1):
            out.append((i, deg - i))
            if len(out) == K:
                break
        deg += 1
    return out


class HermiteBasis:
    """Tensor Hermite basis ``eta_k`` on a uniform quadrature grid ``[-L, L]^d``.

    Parameters
    ----------
    d : int
        Spatial dimension (1 or 2).
    K : int
        Number of modes.
    dx : float
        Target grid spacing; trapezoid weights are used per axis.
    L : float, optional
        Half-width; by default chosen so every used 1-d function is below
        ``1e-12`` at the boundary.
    """

    def __init__(self, d, K, dx=0.05, L=None):
        if d not in (1, 2):
            raise ValueError("only d in {1, 2} is supported")
        if K < 1:
            raise ValueError("K must be positive")
        self.d = d
        self.K = K
        self.modes = mode_indices(K, d)
        self.nmax = max(max(m) for m in self.modes)
        self.L = float(L) if L is not None else hermite_decay_radius(self.nmax)
        n = int(math.ceil(2 * self.L / dx)) + 1
        if n % 2 == 0:
            n += 1
        self.x = np.linspace(-self.L, self.L, n)
        self.dx = self.x[1] - self.x[0]
        self.w = np.full(n, self.dx)
        self.w[0] = self.w[-1] = 0.5 * self.dx
        self.table = hermite_functions(self.nmax, self.x)

    def points(self):
        """Quadrature points, shape ``(n,)`` in 1-d or ``(n, n, 2)`` in 2-d."""
        if self.d == 1:
            return self.x[:, None]
        X, Y = np.meshgrid(self.x, self.x, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def eta(self, k):
        """Values of ``eta_k`` on the grid."""
        m = self.modes[k]
        if self.d == 1:
            return self.table[m[0]]
        return np.outer(self.table[m[0]], self.table[m[1]])

    def gram(self):
        """Gram matrix of the ``K`` modes under the grid quadrature."""
        G1 = (self.table * self.w) @ self.table.T
        if self.d == 1:
            return G1[: self.K, : self.K]
        idx = np.array(self.modes)
        return G1[idx[:, 0]][:, idx[:, 0]] * G1[idx[:, 1]][:, idx[:, 1]]

    def boundary_max(self):
        return float(np.max(np.abs(self.table[:, [0, -1]])))


# ---------------------------------------------------------------------------
# physical-space data fields


@dataclass(frozen=True)
class FieldSpec:
    """Scalar field ``h(t, x) = time(t) * h(x)`` in physical space.

    Kinds are ``zero``, ``gaussian`` (amp, sigma, center), ``hermite``
    (mode order ``n``, 1-d tensor power in higher dimension) and ``bump``
    (amp, radius: ``amp * exp(-1 / (1 - |x/radius|^2))``). ``time`` is an
    optional coefficient tag.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("zero", "gaussian", "hermite", "bump"):
            raise UnknownKind(f"unknown field kind {self.kind!r}")

    def values(self, x):
        """Evaluate at points ``x`` of shape ``(..., d)``."""
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "zero":
            return np.zeros(x.shape[:-1])
        if self.kind == "gaussian":
            c = np.asarray(p.get("center", 0.0), dtype=float)
            r2 = np.sum((x - c) ** 2, axis=-1)
            return p.get("amp", 1.0) * np.exp(-0.5 * r2 / p.get("sigma", 1.0) ** 2)
        if self.kind == "hermite":
            n = int(p.get("n", 0))
            out = 1.0
            for i in range(x.shape[-1]):
                out = out * hermite_functions(n, x[..., i])[n]
            return out
        rho = p.get("radius", 1.0)
        r2 = np.sum(x * x, axis=-1) / rho**2
        inside = r2 < 1.0
        with np.errstate(divide="ignore", over="ignore"):
            v = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - r2, 1.0)), 0.0)
        return p.get("amp", 1.0) * v

    def support(self):
        """Radius outside which the field is negligible (below ~1e-10 relative)."""
        p = self.params
        if self.kind == "zero":
            return 0.0
        if self.kind == "gaussian":
            c = np.linalg.norm(np.atleast_1d(p.get("center", 0.0)))
            return float(c + 6.8 * p.get("sigma", 1.0))
        if self.kind == "hermite":
            return hermite_decay_radius(int(p.get("n", 0)), 1e-10)
        return float(p.get("radius", 1.0))

    def time_factor(self, t):
        tag = self.params.get("time")
        if tag is None:
            return np.ones_like(np.asarray(t, dtype=float))
        return tag_eval(tag, t)

    def time_sq_integral(self, s, t):
        """``int_s^t |time(r)|^2 dr`` (exact for const and step tags, quadrature otherwise)."""
        tag = self.params.get("time")
        if tag is None:
            return float(t - s)
        if tag["type"] in ("const", "step"):
            v = abs(_cplx(tag.get("value", 1.0))) ** 2
            return float(tag_integral({**tag, "value": v}, s, t).real)
        x, w = np.polynomial.legendre.leggauss(64)
        r = 0.5 * (s + t) + 0.5 * (t - s) * x
        return float(0.5 * (t - s) * np.sum(w * np.abs(tag_eval(tag, r)) ** 2))

    def l2_norm_sq(self, d, basis=None):
        """``||h(t, .)||^2_{L_2}`` at unit time factor."""
        p = self.params
        if self.kind == "zero":
            return 0.0
        if self.kind == "gaussian":
            s = p.get("sigma", 1.0)
            return float(p.get("amp", 1.0) ** 2 * (np.pi * s * s) ** (d / 2))
        if self.kind == "hermite":
            return 1.0
        rho = float(p.get("radius", 1.0))
        n = 4001
        r = np.linspace(-rho, rho, n)
        if d == 1:
            v = self.values(r[:, None])
            return float(np.trapezoid(v * v, r))
        X, Y = np.meshgrid(r, r, indexing="ij")
        v = self.values(np.stack([X, Y], -1)[::4, ::4])
        rr = r[::4]
        return float(np.trapezoid(np.trapezoid(v * v, rr, axis=1), rr))


def field_from_config(cfg):
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValueError("field entry needs a 'kind'")
    params = {k: v for k, v in cfg.items() if k != "kind"}
    allowed = {
        "zero": {"time"},
        "gaussian": {"amp", "sigma", "center", "time"},
        "hermite": {"n", "time"},
        "bump": {"amp", "radius", "time"},
    }.get(cfg["kind"])
    if allowed is None:
        raise UnknownKind(f"unknown field kind {cfg['kind']!r}")
    extra = set(params) - allowed
    if extra:
        raise ValueError(f"unknown keys for field {cfg['kind']}: {sorted(extra)}")
    return FieldSpec(cfg["kind"], params)


def _check_support(h, basis):
    if h.support() > basis.L:
        raise SupportTooWide(f"field support {h.support():.3g} exceeds basis half-width {basis.L:.3g}")


def fourier_coefficients(h, basis, xi):
    """``F[eta_k h](xi)`` for all basis modes, shape ``(K, n)``.

    Uses the ``(2 pi)^{-d/2}`` normalization and trapezoid quadrature on the
    basis grid.
    """
    _check_support(h, basis)
    X = np.asarray(xi, dtype=float)
    if X.ndim <= 1:
        X = X.reshape(-1, 1)
    d = basis.d
    if X.shape[-1] != d:
        raise ValueError("frequency dimension does not match the basis")
    x, w = basis.x, basis.w
    norm = (2.0 * np.pi) ** (-d / 2)
    if d == 1:
        hv = h.values(x[:, None])
        E = np.exp(-1j * np.outer(x, X[:, 0]))
        return norm * ((basis.table[: basis.K] * (w * hv)) @ E)
    hv = h.values(basis.points())
    idx = np.array(basis.modes)
    out = np.empty((basis.K, X.shape[0]), dtype=complex)
    for j, (a, b) in enumerate(X):
        A1 = basis.table * (w * np.exp(-1j * a * x))
        A2 = basis.table * (w * np.exp(-1j * b * x))
        F = A1 @ hv @ A2.T
        out[:, j] = F[idx[:, 0], idx[:, 1]]
    return norm * out


def fourier_of_product(h, k, xi, basis=None, quad=None):
    """``F[eta_k h](xi) = (2 pi)^{-d/2} int exp(-i xi.x) eta_k(x) h(x) dx``.

    Parameters
    ----------
    h : FieldSpec
    k : int
        Mode index.
    xi : float or array_like
        Frequency; 1-d unless ``basis.d == 2``.
    basis : HermiteBasis, optional
        Defaults to a 1-d basis with ``k + 1`` modes.
    quad : float, optional
        Grid spacing for a default basis.
    """
    if basis is None:
        basis = HermiteBasis(1, k + 1, dx=quad or 0.05)
        if h.support() > basis.L:
            basis = HermiteBasis(1, k + 1, dx=quad or 0.05, L=h.support())
    X = np.asarray(xi, dtype=float)
    scalar = X.ndim == 0 or (basis.d == 2 and X.ndim == 1)
    if basis.d == 2 and X.ndim == 1:
        X = X[None]
    vals = fourier_coefficients(h, basis, X)[k]
    return complex(vals[0]) if scalar else vals


@dataclass
class ParsevalResult:
    """Partial l2 sum, reference ``(2 pi)^{-d} ||h||^2`` and their ratio.

    Unpacks as ``(partial_sum, reference, ratio)``. ``measured_constant`` is
    ``partial_sum / ||h||^2`` and ``stated_ratio`` compares it with ``(2 pi d)^d``.
    """

    partial_sum: float
    reference: float
    ratio: float
    norm_sq: float
    d: int
    K: int

    def __iter__(self):
        return iter((self.partial_sum, self.reference, self.ratio))

    @property
    def measured_constant(self):
        return self.partial_sum / self.norm_sq if self.norm_sq > 0 else float("nan")

    @property
    def alternative_constant(self):
        return (2.0 * np.pi * self.d) ** self.d

    @property
    def stated_ratio(self):
        return self.measured_constant / self.alternative_constant


def parseval_check(h, xi, K, basis=None):
    """Compare ``sum_{k<K} |F[eta_k h](xi)|^2`` with ``(2 pi)^{-d} ||h||^2``."""
    if basis is None:
        X = np.asarray(xi, dtype=float)
        d = 2 if X.ndim >= 1 and X.shape[-1] == 2 and X.ndim == 1 else 1
        basis = HermiteBasis(d, K)
        if h.support() > basis.L:
            basis = HermiteBasis(d, K, L=h.support())
    if K > basis.K:
        raise ValueError("K exceeds the basis mode count")
    d = basis.d
    X = np.asarray(xi, dtype=float).reshape(1, d)
    coef = fourier_coefficients(h, basis, X)[:K, 0]
    partial = float(np.sum(np.abs(coef) ** 2))
    nsq = h.l2_norm_sq(d, basis)
    ref = (2.0 * np.pi) ** (-d) * nsq
    ratio = 1.0 if ref == 0 and partial == 0 else partial / ref
    return ParsevalResult(partial, ref, ratio, nsq, d, K)


# ---------------------------------------------------------------------------
# Brownian drivers


def path_generator(base_seed, path_index, stream):
    """Counter-based generator for ``(base_seed, path_index, stream)``."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(path_index), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class NoiseDriver:
    """Brownian increments ``dB[n, k]`` (mean 0, variance ``dt``) for one path."""

    base_seed: int
    path_index: int
    N: int
    K: int
    dt: float
    increments: np.ndarray
    stream: int = NOISE_STREAM
    coarsening: int = 1

    @property
    def T(self):
        return self.N * self.dt

    @property
    def times(self):
        return self.dt * np.arange(self.N + 1)

    @property
    def B(self):
        """Running sums ``B[n, k]`` with ``B[0] = 0``, shape ``(N + 1, K)``."""
        out = np.zeros((self.N + 1, self.K))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def coarsen(self, factor):
        """Driver on a grid ``factor`` times coarser built from the same path."""
        factor = int(factor)
        if factor < 1 or self.N % factor:
            raise ValueError("factor must divide N")
        inc = self.increments.reshape(self.N // factor, factor, self.K).sum(axis=1)
        return NoiseDriver(
            self.base_seed,
            self.path_index,
            self.N // factor,
            self.K,
            self.dt * factor,
            inc,
            self.stream,
            self.coarsening * factor,
        )

    def same_path(self, other):
        return (self.base_seed, self.path_index, self.stream) == (other.base_seed, other.path_index, other.stream)

    def dump_ndjson(self, fh):
        """Write one record per step and mode: path, step, mode, increment."""
        for n in range(self.N):
            for k in range(self.K):
                rec = {"path": self.path_index, "step": n, "mode": k, "increment": float(self.increments[n, k])}
                fh.write(json.dumps(rec) + "\n")


def sample_driver(base_seed, path_index, N, K, dt, stream=NOISE_STREAM):
    """Draw the increments of one path; a pure function of its arguments.

    Mode ``k`` always receives the same draws regardless of ``K``.
    """
    if N < 1 or K < 1:
        raise ValueError("N and K must be positive")
    g = path_generator(base_seed, path_index, stream)
    z = g.standard_normal((K, N))
    return NoiseDriver(int(base_seed), int(path_index), int(N), int(K), float(dt), np.ascontiguousarray(z.T) * math.sqrt(dt), stream)


# ---------------------------------------------------------------------------
# stopping times


@dataclass(frozen=True)
class StoppingTimeSpec:
    """``Deterministic(T0)``, ``HittingLevel(mode, level, cap)`` or ``UniformRandom(a, b)``.

    ``mode`` is a zero-based noise mode index.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("Deterministic", "HittingLevel", "UniformRandom"):
            raise UnknownKind(f"unknown stopping time {self.kind!r}")
        p = self.params
        if self.kind == "Deterministic" and not p.get("T0", 0) > 0:
            raise ValueError("Deterministic stopping time needs T0 > 0")
        if self.kind == "HittingLevel" and not p.get("cap", 0) > 0:
            raise ValueError("HittingLevel needs cap > 0")
        if self.kind == "UniformRandom" and not 0 < p.get("a", 0) <= p.get("b", 0):
            raise ValueError("UniformRandom needs 0 < a <= b")


def deterministic_tau(T0):
    return StoppingTimeSpec("Deterministic", {"T0": float(T0)})


def hitting_tau(mode, level, cap):
    return StoppingTimeSpec("HittingLevel", {"mode": int(mode), "level": float(level), "cap": float(cap)})


def uniform_tau(a, b):
    return StoppingTimeSpec("UniformRandom", {"a": float(a), "b": float(b)})


def _snap_up(t, dt, N):
    return max(1, min(N, int(math.ceil(t / dt - 1e-9))))


def stopping_index(tau, driver):
    """Grid index of the stopping time (between 1 and ``driver.N``)."""
    if tau is None:
        return driver.N
    p = tau.params
    if tau.kind == "Deterministic":
        return _snap_up(p["T0"], driver.dt, driver.N)
    if tau.kind == "UniformRandom":
        u = path_generator(driver.base_seed, driver.path_index, TAU_STREAM).uniform(p["a"], p["b"])
        return _snap_up(u, driver.dt, driver.N)
    cap = _snap_up(p["cap"], driver.dt, driver.N)
    mode = int(p.get("mode", 0))
    if mode >= driver.K:
        raise ValueError("hitting mode exceeds driver modes")
    Bk = np.zeros(driver.N + 1)
    np.cumsum(driver.increments[:, mode], out=Bk[1:])
    return first_passage(Bk, p["level"], cap)


def evaluate_stopping_time(tau, driver):
    """Value of ``tau`` on this path, snapped up to the driver's time grid."""
    return stopping_index(tau, driver) * driver.dt


def tau_from_config(cfg):
    if cfg is None:
        return None
    kind = cfg.get("kind")
    params = {k: v for k, v in cfg.items() if k != "kind"}
    allowed = {"Deterministic": {"T0"}, "HittingLevel": {"mode", "level", "cap"}, "UniformRandom": {"a", "b"}}
    if kind not in allowed:
        raise UnknownKind(f"unknown stopping time {kind!r}")
    extra = set(params) - allowed[kind]
    if extra:
        raise ValueError(f"unknown keys for {kind}: {sorted(extra)}")
    return StoppingTimeSpec(kind, params)
