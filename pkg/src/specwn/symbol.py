"""Symbols psi(t, xi): evaluation, time integration, envelopes and constants.

Frequency arrays follow one convention throughout the package: a scalar or a
1-d array is a batch of one-dimensional frequencies, and an array with
``ndim >= 2`` carries the components of each frequency along its last axis.
A single two-dimensional frequency is therefore passed as ``[[x, y]]``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergentConstant, DomainError, MissingEnvelope, QuadratureFailure, UnknownKind

KINDS = (
    "SecondOrder",
    "FractionalLaplacian",
    "LogLaplacian",
    "SignChangingSinusoid",
    "RandomScaled",
    "Tabulated",
)
_INTERNAL_KINDS = ("Envelope", "SampledEnvelope")

TIERS = ("Strong", "Main", "WeakDeterministicOnly", "Fails")

# stream id used to derive the random coefficient of a RandomScaled symbol
SYMBOL_STREAM = 3

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class SymbolSpec:
    """A symbol rule ``(seed, t, xi) -> complex``.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS` (or an internal envelope kind).
    params : dict
        Kind-specific parameters.
    deterministic : bool
        True iff the value does not depend on the sample seed.
    envelope : SymbolSpec or None
        Deterministic majorant with ``Re = sup|Re psi|`` and ``Im = sup|Im psi|``.
    certified : bool
        False for envelopes obtained by sampling (they under-approximate).
    """

    kind: str
    params: dict = field(default_factory=dict)
    deterministic: bool = True
    envelope: "SymbolSpec | None" = None
    certified: bool = True

    def __repr__(self):
        return f"SymbolSpec({self.kind}, {self.params!r}, deterministic={self.deterministic})"


@dataclass(frozen=True)
class Quadrature:
    """Adaptive Gauss-Legendre setting: absolute tolerance and bisection depth."""

    tol: float = 1e-12
    max_depth: int = 40
    order: int = 4


@dataclass
class AssumptionConstants:
    """The six symbol constants on ``B_R x (0, T)`` and the resulting tier.

    Diverged constants are stored as ``inf`` and listed in ``diverged``.
    """

    R: float
    T: float
    c_e_int_re: float
    c_e_abs_int_re: float
    c_e_int_sup_abs_re: float
    c_abs_psi: float
    c_sup_psi: float
    psi_inf: float
    tier: str = "Fails"
    diverged: frozenset = frozenset()
    certified: bool = True
    levels: int = 0

    NAMES = (
        "c_e_int_re",
        "c_e_abs_int_re",
        "c_e_int_sup_abs_re",
        "c_abs_psi",
        "c_sup_psi",
        "psi_inf",
    )

    def as_dict(self):
        out = {"R": self.R, "T": self.T}
        for name in self.NAMES:
            out[name] = getattr(self, name)
        out["tier"] = self.tier
        out["certified"] = self.certified
        return out


# ---------------------------------------------------------------------------
# constructors


def _cplx(v):
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(v[0], v[1])
    return complex(v)


def heat(c=1.0):
    """``psi = -c |xi|^2`` (fractional Laplacian with exponent 2)."""
    return fractional_laplacian(2.0, c)


def fractional_laplacian(alpha, c=1.0):
    """``psi = -c |xi|^alpha`` with a possibly complex exponent."""
    return SymbolSpec("FractionalLaplacian", {"alpha": _cplx(alpha), "c": _cplx(c)})


def log_laplacian(c=1.0):
    """``psi = c log |xi|^2``."""
    return SymbolSpec("LogLaplacian", {"c": float(c)})


def sinusoid(coef=1.0, freq=1.0, phase=0.0, power=2.0, bias=0.0):
    """``psi = (coef sin(2 pi freq t + phase) + bias) |xi|^power``."""
    return SymbolSpec(
        "SignChangingSinusoid",
        {
            "coef": _cplx(coef),
            "freq": float(freq),
            "phase": float(phase),
            "power": float(power),
            "bias": _cplx(bias),
        },
    )


def second_order(a, b=None, c=None):
    """``psi = -a^{ij}(t) xi_i xi_j + i b^i(t) xi_i + c(t)`` with coefficient tags.

    Each coefficient is a number or a tag dict understood by :func:`tag_eval`.
    """
    a = [[_norm_tag(x) for x in row] for row in a]
    d = len(a)
    if any(len(row) != d for row in a):
        raise ValueError("coefficient matrix must be square")
    params = {"a": a, "d": d}
    if b is not None:
        if len(b) != d:
            raise ValueError("drift vector has the wrong length")
        params["b"] = [_norm_tag(x) for x in b]
    if c is not None:
        params["c"] = _norm_tag(c)
    return SymbolSpec("SecondOrder", params)


def random_scaled(base, lo, hi, bound=None):
    """``psi = X(seed) * base`` with ``X`` uniform on ``[lo, hi]``.

    When ``bound`` (a declared ``sup |X|``) is given the analytic envelope
    ``bound * (|Re base| + i |Im base|)`` is attached.
    """
    if not base.deterministic:
        raise ValueError("base symbol must be deterministic")
    if hi < lo:
        raise ValueError("need lo <= hi")
    env = None
    if bound is not None:
        if bound < max(abs(lo), abs(hi)):
            raise ValueError("declared bound is smaller than max(|lo|, |hi|)")
        env = SymbolSpec("Envelope", {"source": base, "scale": float(bound)})
    params = {"base": base, "lo": float(lo), "hi": float(hi)}
    if bound is not None:
        params["bound"] = float(bound)
    return SymbolSpec("RandomScaled", params, deterministic=False, envelope=env)


def tabulated(knots, values, power=2.0):
    """Piecewise-constant in time: ``psi = v_i |xi|^power`` on ``[k_i, k_{i+1})``."""
    knots = np.asarray(knots, dtype=float)
    values = np.asarray([_cplx(v) for v in values], dtype=complex)
    if knots.ndim != 1 or len(knots) != len(values) + 1 or len(values) == 0:
        raise ValueError("need len(knots) == len(values) + 1 >= 2")
    if np.any(np.diff(knots) <= 0):
        raise ValueError("knots must be strictly increasing")
    return SymbolSpec("Tabulated", {"knots": knots, "values": values, "power": float(power)})


# ---------------------------------------------------------------------------
# coefficient tags


def _norm_tag(x):
    if isinstance(x, dict):
        if x.get("type") not in ("const", "linear", "sin", "cos", "step"):
            raise UnknownKind(f"unknown coefficient tag {x.get('type')!r}")
        return dict(x)
    return {"type": "const", "value": _cplx(x)}


def tag_eval(tag, t):
    """Evaluate a coefficient tag at time(s) ``t``.

    Tags are ``const`` (value), ``linear`` (a0 + a1 t), ``sin``/``cos``
    (amp * sin(2 pi freq t + phase) + offset) and ``step`` (value on [a, b)).
    """
    t = np.asarray(t, dtype=float)
    kind = tag["type"]
    if kind == "const":
        return _cplx(tag["value"]) + 0.0 * t
    if kind == "linear":
        return _cplx(tag.get("a0", 0.0)) + _cplx(tag.get("a1", 0.0)) * t
    if kind in ("sin", "cos"):
        fn = np.sin if kind == "sin" else np.cos
        arg = TWO_PI * float(tag.get("freq", 1.0)) * t + float(tag.get("phase", 0.0))
        return _cplx(tag.get("amp", 1.0)) * fn(arg) + _cplx(tag.get("offset", 0.0))
    if kind == "step":
        a, b = float(tag.get("a", 0.0)), float(tag.get("b", np.inf))
        return np.where((t >= a) & (t < b), _cplx(tag.get("value", 1.0)), 0.0 + 0.0j)
    raise UnknownKind(kind)


def tag_integral(tag, s, t):
    """Exact integral of a coefficient tag over ``[s, t]``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    kind = tag["type"]
    if kind == "const":
        return _cplx(tag["value"]) * (t - s)
    if kind == "linear":
        return _cplx(tag.get("a0", 0.0)) * (t - s) + 0.5 * _cplx(tag.get("a1", 0.0)) * (t * t - s * s)
    if kind in ("sin", "cos"):
        f = float(tag.get("freq", 1.0))
        ph = float(tag.get("phase", 0.0))
        amp = _cplx(tag.get("amp", 1.0))
        off = _cplx(tag.get("offset", 0.0)) * (t - s)
        if f == 0.0:
            fn = np.sin if kind == "sin" else np.cos
            return amp * fn(ph) * (t - s) + off
        w = TWO_PI * f
        if kind == "sin":
            return amp * (np.cos(w * s + ph) - np.cos(w * t + ph)) / w + off
        return amp * (np.sin(w * t + ph) - np.sin(w * s + ph)) / w + off
    if kind == "step":
        a, b = float(tag.get("a", 0.0)), float(tag.get("b", np.inf))
        lo = np.clip(s, a, b)
        hi = np.clip(t, a, b)
        return _cplx(tag.get("value", 1.0)) * (hi - lo)
    raise UnknownKind(kind)


def _tag_breaks(tag, s, t):
    if tag["type"] == "step":
        return [x for x in (float(tag.get("a", 0.0)), float(tag.get("b", np.inf))) if s < x < t]
    return []


# ---------------------------------------------------------------------------
# evaluation


def as_frequencies(xi):
    """Return ``xi`` as an array of shape ``batch + (d,)``."""
    X = np.asarray(xi, dtype=float)
    if X.ndim <= 1:
        X = X[..., None]
    return X


def _radius(X):
    if X.shape[-1] == 1:
        return np.abs(X[..., 0])
    return np.sqrt(np.sum(X * X, axis=-1))


def _power(r, p, kind):
    """``r ** p`` for complex ``p`` via the principal logarithm."""
    p = complex(p)
    zero = r == 0
    if np.any(zero):
        if p.real < 0 or (p.real == 0 and p.imag != 0):
            raise DomainError(f"{kind}: |xi| = 0 is outside the domain")
    if p.imag == 0.0:
        with np.errstate(divide="ignore"):
            return np.power(r, p.real) + 0j
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.log(np.where(zero, 1.0, r))
        mag = np.power(r, p.real)
        out = mag * (np.cos(p.imag * lr) + 1j * np.sin(p.imag * lr))
    return np.where(zero, 0.0 + 0.0j, out)


def _random_coefficient(spec, seed):
    lo, hi = spec.params["lo"], spec.params["hi"]
    if lo == hi:
        return lo
    ss = np.random.SeedSequence(int(seed), spawn_key=(SYMBOL_STREAM,))
    return float(np.random.Generator(np.random.Philox(ss)).uniform(lo, hi))


def _tab_cumulative(knots, values, t):
    widths = np.diff(knots)
    cum = np.concatenate(([0.0 + 0.0j], np.cumsum(values * widths)))[:-1]
    i = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, len(values) - 1)
    return cum[i] + values[i] * (t - knots[i])


def _tab_value(knots, values, t):
    i = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, len(values) - 1)
    return values[i]


def _ev(spec, seed, t, X):
    """Core evaluation; ``t`` broadcasts against ``X.shape[:-1]``."""
    kind = spec.kind
    p = spec.params
    if kind == "FractionalLaplacian":
        r = _radius(X)
        val = -p["c"] * _power(r, p["alpha"], kind)
        return np.broadcast_to(val, np.broadcast_shapes(np.shape(t), r.shape)).copy()
    if kind == "LogLaplacian":
        r = _radius(X)
        if np.any(r == 0):
            raise DomainError("LogLaplacian: |xi| = 0 is outside the domain")
        val = p["c"] * np.log(r * r) + 0j
        return np.broadcast_to(val, np.broadcast_shapes(np.shape(t), r.shape)).copy()
    if kind == "SignChangingSinusoid":
        r = _radius(X)
        mod = p["coef"] * np.sin(TWO_PI * p["freq"] * np.asarray(t) + p["phase"]) + p["bias"]
        return mod * _power(r, p["power"], kind)
    if kind == "SecondOrder":
        d = p["d"]
        if X.shape[-1] != d:
            raise DomainError(f"SecondOrder symbol of dimension {d} got {X.shape[-1]}-d frequencies")
        t = np.asarray(t, dtype=float)
        out = 0.0j
        for i in range(d):
            for j in range(d):
                out = out - tag_eval(p["a"][i][j], t) * X[..., i] * X[..., j]
            if "b" in p:
                out = out + 1j * tag_eval(p["b"][i], t) * X[..., i]
        if "c" in p:
            out = out + tag_eval(p["c"], t)
        return np.broadcast_to(out, np.broadcast_shapes(t.shape, X.shape[:-1])).copy()
    if kind == "RandomScaled":
        return _random_coefficient(spec, seed) * _ev(p["base"], seed, t, X)
    if kind == "Tabulated":
        r = _radius(X)
        v = _tab_value(p["knots"], p["values"], np.asarray(t, dtype=float))
        return v * _power(r, p["power"], kind)
    if kind == "Envelope":
        v = _ev(p["source"], seed, t, X)
        return p["scale"] * (np.abs(v.real) + 1j * np.abs(v.imag))
    if kind == "SampledEnvelope":
        re = im = 0.0
        for sd in p["seeds"]:
            v = _ev(p["source"], sd, t, X)
            re = np.maximum(re, np.abs(v.real))
            im = np.maximum(im, np.abs(v.imag))
        return re + 1j * im
    raise UnknownKind(f"unknown symbol kind {kind!r}")


def eval_symbol(spec, seed, t, xi):
    """Evaluate ``psi(seed, t, xi)``.

    Parameters
    ----------
    spec : SymbolSpec
    seed : int
        Sample seed; ignored by deterministic symbols.
    t : float or array_like
        Time(s). An array of shape ``(m,)`` yields output of shape ``(m, n)``.
    xi : float or array_like
        Frequencies (see module docstring).

    Returns
    -------
    complex or ndarray
    """
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    scalar_xi = np.ndim(xi) == 0
    X = as_frequencies(xi)
    t_arr = np.asarray(t, dtype=float)
    if t_arr.ndim > 0:
        t_arr = t_arr.reshape(t_arr.shape + (1,) * (X.ndim - 1))
    out = _ev(spec, seed, t_arr, X)
    if scalar_xi and t_arr.ndim == 0:
        return complex(out)
    if scalar_xi:
        return out[..., 0] if out.ndim > 1 else out
    return out


# ---------------------------------------------------------------------------
# integration in time


def _abs_sin_antiderivative(x):
    """Antiderivative of ``|sin x|`` vanishing at 0."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    k = np.floor(ax / np.pi)
    val = 2.0 * k + (1.0 - np.cos(ax - k * np.pi))
    return np.sign(x) * val


def _closed_integral(spec, seed, s, t, X):
    """Closed-form ``int_s^t psi``; returns None when not available."""
    kind = spec.kind
    p = spec.params
    if kind in ("FractionalLaplacian", "LogLaplacian"):
        return (np.asarray(t) - np.asarray(s)) * _ev(spec, seed, 0.0, X)
    if kind == "SignChangingSinusoid":
        r = _power(_radius(X), p["power"], kind)
        f, ph = p["freq"], p["phase"]
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if f == 0.0:
            m = (p["coef"] * np.sin(ph) + p["bias"]) * (t - s)
        else:
            w = TWO_PI * f
            m = p["coef"] * (np.cos(w * s + ph) - np.cos(w * t + ph)) / w + p["bias"] * (t - s)
        return m * r
    if kind == "SecondOrder":
        d = p["d"]
        if X.shape[-1] != d:
            raise DomainError(f"SecondOrder symbol of dimension {d} got {X.shape[-1]}-d frequencies")
        out = 0.0j
        for i in range(d):
            for j in range(d):
                out = out - tag_integral(p["a"][i][j], s, t) * X[..., i] * X[..., j]
            if "b" in p:
                out = out + 1j * tag_integral(p["b"][i], s, t) * X[..., i]
        if "c" in p:
            out = out + tag_integral(p["c"], s, t)
        return out + 0.0 * np.asarray(t) * X[..., 0]
    if kind == "RandomScaled":
        base = _closed_integral(p["base"], seed, s, t, X)
        if base is None:
            return None
        return _random_coefficient(spec, seed) * base
    if kind == "Tabulated":
        r = _power(_radius(X), p["power"], kind)
        V = _tab_cumulative(p["knots"], p["values"], np.asarray(t, dtype=float))
        V = V - _tab_cumulative(p["knots"], p["values"], np.asarray(s, dtype=float))
        return V * r
    if kind == "Envelope":
        return _envelope_closed(p["source"], p["scale"], s, t, X)
    return None


def _envelope_closed(src, scale, s, t, X):
    kind = src.kind
    p = src.params
    if kind in ("FractionalLaplacian", "LogLaplacian"):
        v = _ev(src, 0, 0.0, X)
        return scale * (np.asarray(t) - np.asarray(s)) * (np.abs(v.real) + 1j * np.abs(v.imag))
    if kind == "Tabulated":
        r = _power(_radius(X), p["power"], kind)
        if np.any(np.abs(r.imag) > 0):
            return None
        r = r.real
        vals = p["values"]
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        re = _tab_cumulative(p["knots"], np.abs(vals.real) + 0j, t) - _tab_cumulative(p["knots"], np.abs(vals.real) + 0j, s)
        im = _tab_cumulative(p["knots"], np.abs(vals.imag) + 0j, t) - _tab_cumulative(p["knots"], np.abs(vals.imag) + 0j, s)
        return scale * (re.real + 1j * im.real) * r
    if kind == "SignChangingSinusoid" and p["bias"] == 0:
        r = _power(_radius(X), p["power"], kind)
        if np.any(np.abs(r.imag) > 0):
            return None
        r = r.real
        f, ph = p["freq"], p["phase"]
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if f == 0.0:
            m = np.abs(np.sin(ph)) * (t - s)
        else:
            w = TWO_PI * f
            m = (_abs_sin_antiderivative(w * t + ph) - _abs_sin_antiderivative(w * s + ph)) / w
        c = p["coef"]
        return scale * m * (abs(c.real) + 1j * abs(c.imag)) * r
    if kind == "SecondOrder" and _second_order_signed(src):
        val = _closed_integral(src, 0, s, t, X)
        return scale * (np.abs(val.real) + 1j * np.abs(val.imag))
    return None


def _second_order_signed(spec):
    # constant coefficients keep the sign of Re and Im fixed in time
    p = spec.params
    tags = [x for row in p["a"] for x in row] + list(p.get("b", [])) + ([p["c"]] if "c" in p else [])
    return all(tag["type"] == "const" for tag in tags)


def time_breakpoints(spec, s, t):
    """Interior times in ``(s, t)`` where the symbol or its envelope may kink."""
    kind = spec.kind
    p = spec.params
    out = []
    if kind == "Tabulated":
        out = [float(k) for k in p["knots"] if s < k < t]
    elif kind == "SignChangingSinusoid":
        f, ph = p["freq"], p["phase"]
        if f != 0.0:
            w = TWO_PI * abs(f)
            sgn = 1.0 if f > 0 else -1.0
            lo, hi = sorted((sgn * w * s + ph, sgn * w * t + ph))
            k0 = int(np.ceil(lo / np.pi))
            k1 = int(np.floor(hi / np.pi))
            if k1 - k0 < 100000:
                out = [(k * np.pi - ph) / (sgn * w) for k in range(k0, k1 + 1)]
                out = [x for x in out if s < x < t]
    elif kind == "SecondOrder":
        tags = [x for row in p["a"] for x in row] + list(p.get("b", [])) + ([p["c"]] if "c" in p else [])
        for tag in tags:
            out.extend(_tag_breaks(tag, s, t))
    elif kind == "RandomScaled":
        out = time_breakpoints(p["base"], s, t)
    elif kind in ("Envelope", "SampledEnvelope"):
        out = time_breakpoints(p["source"], s, t)
    return sorted(set(out))


_GL_CACHE = {}


def _gauss(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def _panel_rule(spec, seed, a, b, X, order):
    x, w = _gauss(order)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    # shape (panels, order, batch)
    vals = _ev(spec, seed, nodes.reshape(nodes.shape + (1,) * (X.ndim - 1)), X[None, None])
    return half[:, None] * np.tensordot(w, np.moveaxis(vals, 1, 0), axes=(0, 0)).reshape(len(a), -1)


def _adaptive_integral(spec, seed, s, t, X, quad):
    """Adaptive composite Gauss-Legendre over ``[s, t]``, vectorized in ``xi``."""
    edges = [s] + time_breakpoints(spec, s, t) + [t]
    a = np.array(edges[:-1])
    b = np.array(edges[1:])
    batch = X.shape[:-1]
    Xf = X.reshape(-1, X.shape[-1])
    total = np.zeros(Xf.shape[0], dtype=complex)
    length = t - s
    depth = 0
    while len(a):
        m = 0.5 * (a + b)
        whole = _panel_rule(spec, seed, a, b, Xf, quad.order)
        left = _panel_rule(spec, seed, a, m, Xf, quad.order)
        right = _panel_rule(spec, seed, m, b, Xf, quad.order)
        halves = left + right
        err = np.max(np.abs(halves - whole), axis=1)
        ok = err <= quad.tol * (b - a) / length
        total += halves[ok].sum(axis=0)
        if np.all(ok):
            break
        depth += 1
        if depth > quad.max_depth:
            raise QuadratureFailure(
                f"adaptive quadrature did not reach tol={quad.tol} within depth {quad.max_depth}"
            )
        bad = ~ok
        a = np.concatenate([a[bad], m[bad]])
        b = np.concatenate([m[bad], b[bad]])
        order = np.argsort(a)
        a, b = a[order], b[order]
    return total.reshape(batch)


def integrate_symbol(spec, seed, s, t, xi, quad=None, method="auto"):
    """Exponent ``A(s, t, xi) = int_s^t psi(seed, r, xi) dr``.

    Closed forms are used where available; otherwise (or with
    ``method="quadrature"``) adaptive composite Gauss-Legendre with bisection.
    ``s`` and ``t`` may be arrays broadcasting against the frequency batch.
    """
    quad = quad or Quadrature()
    s_arr = np.asarray(s, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(s_arr < 0) or np.any(t_arr < s_arr):
        raise ValueError("need 0 <= s <= t")
    scalar_xi = np.ndim(xi) == 0
    X = as_frequencies(xi)
    out = None
    if method == "auto":
        out = _closed_integral(spec, seed, s_arr, t_arr, X)
    if out is None:
        if s_arr.ndim == 0 and t_arr.ndim == 0:
            if float(s_arr) == float(t_arr):
                out = np.zeros(X.shape[:-1], dtype=complex)
            else:
                out = _adaptive_integral(spec, seed, float(s_arr), float(t_arr), X, quad)
        else:
            shape = np.broadcast_shapes(s_arr.shape, t_arr.shape, X.shape[:-1])
            S = np.broadcast_to(s_arr, shape)
            Tt = np.broadcast_to(t_arr, shape)
            Xb = np.broadcast_to(X, shape + X.shape[-1:])
            out = np.zeros(shape, dtype=complex)
            for idx in np.ndindex(*shape):
                s0, t0 = float(S[idx]), float(Tt[idx])
                if s0 != t0:
                    out[idx] = _adaptive_integral(spec, seed, s0, t0, Xb[idx][None], quad)[0]
    out = np.where(s_arr == t_arr, 0.0 + 0.0j, out)
    if scalar_xi and out.size == 1 and s_arr.ndim == 0 and t_arr.ndim == 0:
        return complex(out.reshape(-1)[0])
    if scalar_xi and out.ndim >= 1 and out.shape[-1] == 1:
        return out[..., 0]
    return out


def step_integrals(spec, seed, times, xi, quad=None):
    """Per-step exponents ``A(t_n, t_{n+1}, xi)`` as an array ``(N, batch)``."""
    quad = quad or Quadrature()
    times = np.asarray(times, dtype=float)
    X = as_frequencies(xi)
    extra = (1,) * (X.ndim - 1)
    s = times[:-1].reshape((-1,) + extra)
    t = times[1:].reshape((-1,) + extra)
    out = _closed_integral(spec, seed, s, t, X)
    if out is not None:
        return np.broadcast_to(out, (len(times) - 1,) + X.shape[:-1]).astype(complex)
    res = np.empty((len(times) - 1,) + X.shape[:-1], dtype=complex)
    for n in range(len(times) - 1):
        res[n] = _adaptive_integral(spec, seed, float(times[n]), float(times[n + 1]), X, quad)
    return res


def has_closed_integral(spec):
    """True when :func:`integrate_symbol` avoids quadrature for this spec."""
    X = np.array([[0.5] * (spec.params.get("d", 1))])
    try:
        return _closed_integral(spec, 0, 0.0, 0.5, X) is not None
    except DomainError:
        return True


# ---------------------------------------------------------------------------
# envelopes


def envelope_symbol(spec, fallback_samples=0, base_seed=0):
    """Deterministic majorant ``sup|Re psi| + i sup|Im psi|``.

    Deterministic input yields ``|Re psi| + i |Im psi|`` of itself. Random
    input uses the attached analytic envelope when present; otherwise the
    pointwise max over ``fallback_samples`` seeds, marked non-certified.
    """
    if spec.deterministic:
        return SymbolSpec("Envelope", {"source": spec, "scale": 1.0})
    if spec.envelope is not None:
        return spec.envelope
    if fallback_samples < 1:
        raise MissingEnvelope(f"{spec.kind} has no declared envelope and no fallback samples")
    seeds = [int(x) for x in np.random.SeedSequence(base_seed).generate_state(fallback_samples)]
    return SymbolSpec("SampledEnvelope", {"source": spec, "seeds": seeds}, certified=False)


def wrap_random(spec):
    """Mark a deterministic symbol as random with itself as envelope source.

    The value is unchanged for every seed (``X`` is identically 1), so both
    solution pipelines apply to it.
    """
    env = SymbolSpec("Envelope", {"source": spec, "scale": 1.0})
    return SymbolSpec(
        "RandomScaled", {"base": spec, "lo": 1.0, "hi": 1.0, "bound": 1.0}, deterministic=False, envelope=env
    )


def is_radial(spec):
    """True when the symbol depends on ``xi`` only through ``|xi|``."""
    if spec.kind == "SecondOrder":
        return False
    if spec.kind == "RandomScaled":
        return is_radial(spec.params["base"])
    if spec.kind in _INTERNAL_KINDS:
        return is_radial(spec.params["source"])
    return True


def symbol_dimension(spec):
    """Intrinsic dimension of the symbol, or None if it works in any dimension."""
    if spec.kind == "SecondOrder":
        return spec.params["d"]
    if spec.kind == "RandomScaled":
        return symbol_dimension(spec.params["base"])
    if spec.kind in _INTERNAL_KINDS:
        return symbol_dimension(spec.params["source"])
    return None


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class ConstantGrid:
    """Nested-grid setting for :func:`compute_constants`.

    Level ``l`` uses ``n_t * 2**l`` time steps and ``n_xi * 2**l`` radial
    frequency nodes (per axis and sign for non-radial symbols).
    """

    n_t: int = 64
    n_xi: int = 32
    # n_t must be even (Simpson rule in time)
    max_levels: int = 7
    rtol: float = 1e-3
    d: int = 1


def _constant_frequencies(spec, R, M, d):
    if is_radial(spec):
        r = R * np.arange(1, M + 1) / M
        return r[:, None]
    h = R / M
    ax = np.arange(-M, M + 1) * h
    if d == 1:
        pts = ax[ax != 0][:, None]
        return pts
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    r = np.sqrt(np.sum(pts**2, axis=1))
    keep = (r <= R * (1 + 1e-12)) & (r > 0)
    return pts[keep]


def _simpson(w, dt):
    # composite Simpson along axis 0 (even number of steps)
    return dt / 3.0 * (w[0] + w[-1] + 4.0 * w[1:-1:2].sum(axis=0) + 2.0 * w[2:-1:2].sum(axis=0))


def _level_times(spec, T, N):
    """Uniform grid plus any off-grid breakpoints; None as the second item when uniform."""
    times = np.linspace(0.0, T, N + 1)
    extra = [b for b in time_breakpoints(spec, 0.0, T) if np.min(np.abs(times - b)) > 1e-12 * T]
    if not extra:
        return times, None
    return np.union1d(times, extra), True


def _level_constants(spec, env, R, T, N, M, d):
    times, merged = _level_times(spec, T, N)
    X = _constant_frequencies(spec, R, M, d)
    inc = step_integrals(spec, 0, times, X)
    P = np.vstack([np.zeros((1, X.shape[0])), np.cumsum(inc.real, axis=0)])
    einc = step_integrals(env, 0, times, X)
    Q = np.vstack([np.zeros((1, X.shape[0])), np.cumsum(einc.real, axis=0)])
    from ._kernels import running_extrema

    rmin, rmax = running_extrema(P)
    up = P - rmin
    both = np.maximum(up, rmax - P)
    abspsi = np.abs(_ev(spec, 0, times[:, None], X[None]))
    with np.errstate(over="ignore", invalid="ignore"):
        c_e_int_re = np.exp(np.max(up))
        c_e_abs = np.exp(np.max(both))
        c_e_sup = np.exp(np.max(Q))
        if merged is None:
            dt = T / N
            c_abs_psi = np.max(_simpson(abspsi * np.exp(both), dt))
            c_sup_psi = np.max(_simpson(abspsi * np.exp(Q), dt))
        else:
            # midpoint rule per cell so that no evaluation sits on a jump
            mid = 0.5 * (times[1:] + times[:-1])
            amid = np.abs(_ev(spec, 0, mid[:, None], X[None]))
            dts = np.diff(times)[:, None]
            eb = 0.5 * (np.exp(both[1:]) + np.exp(both[:-1]))
            eq = 0.5 * (np.exp(Q[1:]) + np.exp(Q[:-1]))
            c_abs_psi = np.max(np.sum(dts * amid * eb, axis=0))
            c_sup_psi = np.max(np.sum(dts * amid * eq, axis=0))
            abspsi = np.vstack([abspsi, amid])
    psi_inf = np.max(abspsi)
    return np.array([c_e_int_re, c_e_abs, c_e_sup, c_abs_psi, c_sup_psi, psi_inf], dtype=float)


def compute_constants(spec, R, T, resolution=None, strict=False):
    """Evaluate the six assumption constants on nested grids and classify.

    Random symbols are handled through their envelope. Each constant is
    refined until its relative change drops below ``resolution.rtol``; a
    constant whose increments stop shrinking by the last level is reported
    as ``inf`` and listed in ``diverged``.

    Parameters
    ----------
    spec : SymbolSpec
    R, T : float
        Ball radius and horizon.
    resolution : ConstantGrid, optional
    strict : bool
        Raise :class:`DivergentConstant` instead of reporting ``inf``.
    """
    if R <= 0 or T <= 0:
        raise ValueError("need R > 0 and T > 0")
    res = resolution or ConstantGrid()
    certified = True
    if not spec.deterministic:
        if spec.envelope is None:
            raise MissingEnvelope(f"{spec.kind} needs an envelope to compute constants")
        certified = spec.envelope.certified
        spec = spec.envelope
    elif not spec.certified:
        certified = False
    env = envelope_symbol(spec)
    d = symbol_dimension(spec) or res.d
    history = []
    converged = np.zeros(6, dtype=bool)
    for level in range(res.max_levels):
        N = res.n_t * 2**level
        M = res.n_xi * 2**level
        if not is_radial(spec) and d >= 2:
            M = max(4, res.n_xi // 4) * 2**level
        vals = _level_constants(spec, env, R, T, N, M, d)
        history.append(vals)
        if level >= 1:
            prev = history[-2]
            with np.errstate(invalid="ignore", divide="ignore"):
                rel = np.abs(vals - prev) / np.maximum(np.abs(vals), 1e-300)
            rel = np.where((vals == prev), 0.0, rel)
            converged = np.isfinite(vals) & (rel < res.rtol)
            if level >= 2 and np.all(converged):
                break
    final = history[-1].copy()
    diverged = set()
    for i, name in enumerate(AssumptionConstants.NAMES):
        if not np.isfinite(final[i]):
            diverged.add(name)
            continue
        if converged[i] or len(history) < 3:
            continue
        d1 = abs(history[-2][i] - history[-3][i])
        d2 = abs(history[-1][i] - history[-2][i])
        if d2 >= 0.75 * d1:
            diverged.add(name)
    for i, name in enumerate(AssumptionConstants.NAMES):
        if name in diverged:
            final[i] = np.inf
    if strict and diverged:
        raise DivergentConstant(sorted(diverged))
    consts = AssumptionConstants(
        R=float(R),
        T=float(T),
        c_e_int_re=float(final[0]),
        c_e_abs_int_re=float(final[1]),
        c_e_int_sup_abs_re=float(final[2]),
        c_abs_psi=float(final[3]),
        c_sup_psi=float(final[4]),
        psi_inf=float(final[5]),
        diverged=frozenset(diverged),
        certified=certified,
        levels=len(history),
    )
    consts.tier = classify_assumptions(consts)
    return consts


def classify_assumptions(constants):
    """Assumption tier from the finiteness pattern of the constants.

    ``Fails`` if the exponential real-part constant is infinite;
    ``WeakDeterministicOnly`` if it is finite but the exp-sup or product
    constant is not; ``Main`` if in addition only the sup norm is infinite;
    ``Strong`` when everything is finite.
    """

    def finite(name):
        return name not in constants.diverged and np.isfinite(getattr(constants, name))

    if not finite("c_e_int_re"):
        return "Fails"
    if not (finite("c_e_int_sup_abs_re") and finite("c_sup_psi")):
        return "WeakDeterministicOnly"
    if not finite("psi_inf"):
        return "Main"
    return "Strong"


# ---------------------------------------------------------------------------
# configuration round trip


def _cfg_c(z):
    z = complex(z)
    return [z.real, z.imag]


def spec_from_config(cfg):
    """Build a :class:`SymbolSpec` from its configuration dict."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValueError("symbol entry needs a 'kind'")
    kind = cfg["kind"]
    allowed = {
        "FractionalLaplacian": {"alpha", "c"},
        "LogLaplacian": {"c"},
        "SignChangingSinusoid": {"coef", "freq", "phase", "power", "bias"},
        "SecondOrder": {"a", "b", "c"},
        "RandomScaled": {"base", "lo", "hi", "bound"},
        "Tabulated": {"knots", "values", "power"},
    }
    if kind not in allowed:
        raise UnknownKind(f"unknown symbol kind {kind!r}")
    extra = set(cfg) - allowed[kind] - {"kind"}
    if extra:
        raise ValueError(f"unknown keys for {kind}: {sorted(extra)}")
    if kind == "FractionalLaplacian":
        return fractional_laplacian(_cplx(cfg.get("alpha", 2.0)), _cplx(cfg.get("c", 1.0)))
    if kind == "LogLaplacian":
        return log_laplacian(cfg.get("c", 1.0))
    if kind == "SignChangingSinusoid":
        return sinusoid(
            _cplx(cfg.get("coef", 1.0)),
            cfg.get("freq", 1.0),
            cfg.get("phase", 0.0),
            cfg.get("power", 2.0),
            _cplx(cfg.get("bias", 0.0)),
        )
    if kind == "SecondOrder":
        return second_order(cfg["a"], cfg.get("b"), cfg.get("c"))
    if kind == "RandomScaled":
        return random_scaled(spec_from_config(cfg["base"]), cfg["lo"], cfg["hi"], cfg.get("bound"))
    return tabulated(cfg["knots"], cfg["values"], cfg.get("power", 2.0))


def spec_to_config(spec):
    """Inverse of :func:`spec_from_config` for the public kinds."""
    p = spec.params
    k = spec.kind
    if k == "FractionalLaplacian":
        return {"kind": k, "alpha": _cfg_c(p["alpha"]), "c": _cfg_c(p["c"])}
    if k == "LogLaplacian":
        return {"kind": k, "c": p["c"]}
    if k == "SignChangingSinusoid":
        return {
            "kind": k,
            "coef": _cfg_c(p["coef"]),
            "freq": p["freq"],
            "phase": p["phase"],
            "power": p["power"],
            "bias": _cfg_c(p["bias"]),
        }
    if k == "SecondOrder":

        def tag(x):
            x = dict(x)
            for key, v in list(x.items()):
                if isinstance(v, complex):
                    x[key] = _cfg_c(v)
            return x

        out = {"kind": k, "a": [[tag(x) for x in row] for row in p["a"]]}
        if "b" in p:
            out["b"] = [tag(x) for x in p["b"]]
        if "c" in p:
            out["c"] = tag(p["c"])
        return out
    if k == "RandomScaled":
        out = {"kind": k, "base": spec_to_config(p["base"]), "lo": p["lo"], "hi": p["hi"]}
        if "bound" in p:
            out["bound"] = p["bound"]
        return out
    if k == "Tabulated":
        return {
            "kind": k,
            "knots": [float(x) for x in p["knots"]],
            "values": [_cfg_c(v) for v in p["values"]],
            "power": p["power"],
        }
    raise UnknownKind(k)
