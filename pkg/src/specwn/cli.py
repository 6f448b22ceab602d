"""Command-line front end: configuration loading, dispatch and report files.

Configuration files are JSON documents with ``schema_version`` 1; see the
README for the schema. Exit codes: 0 when every report row passes, 1 when
at least one row fails, 2 on configuration or usage errors.
"""

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .engine import FrequencyField, FrequencyGrid, NoiseSpec, Plan, SimulationConfig, make_solver
from .errors import ConfigError, IoError, MissingEnvelope, ParseError, SpecwnError, TierError, UnknownKind, UsageError, ValidationError
from .estimates import EstimateReport, path_lhs, run_estimates
from .noise import FieldSpec, field_from_config, parseval_check, tau_from_config
from .symbol import ConstantGrid, compute_constants, spec_from_config
from .verify import INTEGRANDS, bdg_probe, fubini_discrete_check, live_integrand, representation_residual, residual_convergence, uniqueness_crosscheck

SCHEMA_VERSION = 1
COMMANDS = ("classify", "simulate", "verify", "estimate", "bdg", "fubini", "parseval")
# above this kernel growth the two-stage pipeline cannot resolve 1e-9 differences
MAX_ENVELOPE_GROWTH = 1e6
HEADER = ("command", "check", "R", "T", "lhs", "rhs", "se", "margin", "pass", "paths", "note")

TOP_KEYS = {"schema_version", "symbol", "grid", "T", "N", "u0", "forcing", "noise", "tau", "paths", "seed", "constants"}
GRID_KEYS = {"d", "R", "nodes"}
NOISE_KEYS = {"modes", "h", "K", "dx"}
CONSTANT_KEYS = {"n_t", "n_xi", "max_levels", "rtol"}
FIELD_KEYS = {"zero": {"time"}, "constant": {"value", "time"}, "gaussian": {"amp", "width", "time"}}

DEFAULTS = {
    "grid": {"d": 1, "nodes": 257},
    "u0": {"kind": "zero"},
    "forcing": {"kind": "zero"},
    "noise": None,
    "tau": None,
    "paths": 1,
    "constants": {"n_t": 64, "n_xi": 32, "max_levels": 7, "rtol": 1e-3},
}


# ---------------------------------------------------------------------------
# configuration


def _frequency_field(cfg, where):
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValidationError(f"{where}: expected an object with a 'kind'")
    kind = cfg["kind"]
    if kind not in FIELD_KEYS:
        raise ValidationError(f"{where}: unknown field kind {kind!r}")
    extra = set(cfg) - FIELD_KEYS[kind] - {"kind"}
    if extra:
        raise ValidationError(f"{where}: unknown keys {sorted(extra)}")
    return FrequencyField(kind, {k: v for k, v in cfg.items() if k != "kind"})


def _check_keys(cfg, allowed, where):
    if not isinstance(cfg, dict):
        raise ValidationError(f"{where}: expected an object")
    extra = set(cfg) - allowed
    if extra:
        raise ValidationError(f"{where}: unknown keys {sorted(extra)}")


def resolve_config(raw):
    """Validate a parsed configuration and fill in defaults.

    Returns
    -------
    config : SimulationConfig
    resolved : dict
        The configuration with every default made explicit.
    resolution : ConstantGrid
    """
    _check_keys(raw, TOP_KEYS, "config")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(f"schema_version must be {SCHEMA_VERSION}")
    for key in ("symbol", "grid", "T", "N", "seed"):
        if key not in raw:
            raise ValidationError(f"missing required key {key!r}")
    res = copy.deepcopy(raw)
    for key, value in DEFAULTS.items():
        if isinstance(value, dict):
            res[key] = {**value, **res.get(key, {})}
        else:
            res.setdefault(key, value)
    _check_keys(res["grid"], GRID_KEYS, "grid")
    _check_keys(res["constants"], CONSTANT_KEYS, "constants")
    try:
        symbol = spec_from_config(res["symbol"])
        g = res["grid"]
        if "R" not in g:
            raise ValidationError("grid: missing 'R'")
        grid = FrequencyGrid(int(g["d"]), float(g["R"]), int(g["nodes"]))
        noise = None
        if res["noise"] is not None:
            nz = res["noise"]
            _check_keys(nz, NOISE_KEYS, "noise")
            if ("h" in nz) == ("modes" in nz):
                raise ValidationError("noise: give exactly one of 'modes' or 'h'")
            if "h" in nz:
                if int(nz.get("K", 0)) < 1:
                    raise ValidationError("noise: 'K' must be a positive mode count")
                noise = NoiseSpec(h=field_from_config(nz["h"]), K_h=int(nz["K"]), dx=float(nz.get("dx", 0.05)))
            else:
                if set(nz) - {"modes"}:
                    raise ValidationError("noise: 'K' and 'dx' only apply to 'h'")
                modes = tuple(_frequency_field(m, f"noise.modes[{i}]") for i, m in enumerate(nz["modes"]))
                noise = NoiseSpec(modes=modes)
        if not isinstance(res["N"], int) or isinstance(res["N"], bool):
            raise ValidationError("N must be an integer")
        if not isinstance(res["seed"], int) or res["seed"] < 0:
            raise ValidationError("seed must be a non-negative integer")
        config = SimulationConfig(
            symbol=symbol,
            grid=grid,
            T=float(res["T"]),
            N=res["N"],
            u0=_frequency_field(res["u0"], "u0"),
            forcing=_frequency_field(res["forcing"], "forcing"),
            noise=noise,
            tau=tau_from_config(res["tau"]),
            paths=int(res["paths"]),
            seed=int(res["seed"]),
        )
        resolution = ConstantGrid(**{k: res["constants"][k] for k in CONSTANT_KEYS}, d=grid.d)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError, UnknownKind) as exc:
        raise ValidationError(str(exc)) from exc
    return config, res, resolution


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _require_envelope(config, command):
    sym = config.symbol
    if not sym.deterministic and sym.envelope is None:
        raise TierError(f"{command}: random symbol {sym.kind} has no envelope (MissingEnvelope)")


def load_config(path, command=None):
    """Read, validate and default a configuration file.

    Parameters
    ----------
    path : str
    command : str, optional
        When given, command-specific preconditions are checked as well.

    Raises
    ------
    ParseError, ValidationError, TierError
    """
    config, _, _ = resolve_config(_read_json(path))
    if command in ("simulate", "verify", "estimate", "fubini"):
        _require_envelope(config, command)
    return config


# ---------------------------------------------------------------------------
# report files


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _json(obj):
    """Canonical JSON with floats printed to 17 significant digits."""
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else json.dumps(str(x))
    if isinstance(obj, complex):
        return _json([obj.real, obj.imag])
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(json.dumps(str(k)) + ":" + _json(obj[k]) for k in sorted(obj)) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _row(report, command=None):
    if isinstance(report, EstimateReport):
        r = report.as_row()
        return {"command": command or "estimate", "check": r.pop("inequality"), **r, "note": ""}
    return dict(report)


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([_fmt(r.get(k)) for k in HEADER])
    return buf.getvalue()


def write_report(reports, out_path, summary=None):
    """Write ``reports`` as CSV to ``out_path`` and a one-record NDJSON summary beside it.

    Parameters
    ----------
    reports : iterable
        :class:`EstimateReport` objects or row dicts keyed by :data:`HEADER`.
    out_path : str
        CSV path; the summary goes to the same path with suffix ``.ndjson``.
    summary : dict, optional
        Extra fields for the summary record.

    Raises
    ------
    IoError
        If either file cannot be written.
    """
    rows = [_row(r) for r in reports]
    record = dict(summary or {})
    record["rows"] = [{"check": r.get("check"), "margin": r.get("margin"), "pass": r.get("pass")} for r in rows]
    record["all_pass"] = all(bool(r.get("pass", True)) for r in rows)
    try:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(rows_to_csv(rows))
        with open(os.path.splitext(out_path)[0] + ".ndjson", "w", encoding="utf-8") as fh:
            fh.write(_json(record) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write report: {exc}") from exc


# ---------------------------------------------------------------------------
# commands


def _info(command, check, value, note="", R=None, T=None, passed=True, paths=None):
    return {"command": command, "check": check, "R": R, "T": T, "lhs": value, "pass": passed, "paths": paths, "note": note}


def _bound(command, check, lhs, rhs, R=None, T=None, se=0.0, paths=None, note=""):
    margin = rhs - lhs
    return {
        "command": command,
        "check": check,
        "R": R,
        "T": T,
        "lhs": lhs,
        "rhs": rhs,
        "se": se,
        "margin": margin,
        "pass": bool(lhs <= rhs + 3.0 * se),
        "paths": paths,
        "note": note,
    }


def _constants(config, resolution, R=None, T=None):
    return compute_constants(config.symbol, R or config.grid.R, T or config.T, resolution)


def cmd_classify(args, config, resolution):
    R = args.R or config.grid.R
    T = args.T or config.T
    c = compute_constants(config.symbol, R, T, resolution)
    rows = [_info("classify", name, getattr(c, name), R=R, T=T) for name in c.NAMES]
    rows.append(_info("classify", "tier", None, note=c.tier, R=R, T=T, passed=c.tier != "Fails"))
    return rows, {"constants": c.as_dict(), "diverged": sorted(c.diverged)}


def cmd_simulate(args, config, resolution):
    solver = make_solver(config)
    rows = []
    n = args.paths or config.paths
    traj_path = None if args.out is None else os.path.splitext(args.out)[0] + ".trajectories.ndjson"
    fh = open(traj_path, "w", encoding="utf-8") if traj_path else None
    try:
        for i in range(n):
            driver = config.driver(i)
            traj = solver(driver)
            lhs = path_lhs(traj, config)
            rows.append(_info("simulate", f"path_{i}_sup_integral", lhs.sup, R=config.grid.R, T=config.T, paths=1, note=f"tau={_fmt(traj.tau)}"))
            if fh is not None:
                traj.dump_ndjson(fh)
    finally:
        if fh is not None:
            fh.close()
    return rows, {}


def cmd_verify(args, config, resolution):
    R, T = config.grid.R, config.T
    rows = []
    N = config.N
    if N % 8 == 0 and N >= 32:
        ns, res, order = residual_convergence(config, 0, ns=(N // 8, N // 4, N // 2, N))
        final = res[-1]
        rows.append(_bound("verify", "residual_order", args.min_order, order, R, T, note="observed order"))
    else:
        driver = config.driver(0)
        final = representation_residual(make_solver(config)(driver), config, driver)[0]
    if args.residual_tol is None:
        rows.append(_info("verify", "residual", final, note=f"N={N}", R=R, T=T))
    else:
        rows.append(_bound("verify", "residual", final, args.residual_tol, R, T, note=f"N={N}"))
    if config.symbol.deterministic:
        u = uniqueness_crosscheck(config, config.driver(0))
        if u.envelope_growth > MAX_ENVELOPE_GROWTH:
            note = f"not assessable: envelope growth {_fmt(u.envelope_growth)}"
            rows.append(_info("verify", "uniqueness", u.max_discrepancy, note=note, R=R, T=T))
        else:
            rows.append(_bound("verify", "uniqueness", u.max_discrepancy, args.uniqueness_tol, R, T))
        rows.append(_bound("verify", "homogeneous", u.homogeneous_max, 0.0, R, T))
    if config.K and config.symbol.deterministic:
        rows.extend(_fubini_rows(config, args.paths or 1, "verify"))
    return rows, {}


def _fubini_rows(config, paths, command):
    plan = Plan(config)
    worst = 0.0
    for i in range(paths):
        driver = config.driver(i)
        worst = max(worst, fubini_discrete_check(live_integrand(config, driver, plan), driver, config.grid.weights))
    return [_bound(command, "fubini", worst, 1e-12, config.grid.R, config.T, paths=paths)]


def cmd_fubini(args, config, resolution):
    if not config.K:
        raise ValidationError("fubini needs a configuration with noise")
    if not config.symbol.deterministic:
        raise ValidationError("fubini needs a deterministic symbol")
    return _fubini_rows(config, args.paths or config.paths, "fubini"), {}


def cmd_estimate(args, config, resolution):
    c = _constants(config, resolution)
    reports, stats = run_estimates(config, c, paths=args.paths or config.paths, threads=args.threads)
    summary = {"constants": c.as_dict(), "report_constants": reports[0].constants if reports else {}}
    return [_row(r, "estimate") for r in reports], summary


def cmd_bdg(args, config, resolution):
    names = args.integrand or list(INTEGRANDS)
    seed = config.seed if config is not None else (args.seed if args.seed is not None else 0)
    rows = []
    extra = {}
    for name in names:
        if name not in INTEGRANDS:
            raise ValidationError(f"unknown integrand {name!r}")
        r = bdg_probe(name, args.paths or 100000, args.T or 1.0, N=args.N, seed=seed, oracle_paths=args.oracle_paths, threads=args.threads)
        rows.append(_bound("bdg", f"ratio_{name}", r.ratio, 3.0, T=r.T, se=r.se, paths=r.n_paths, note=f"lhs={_fmt(r.lhs)} rhs={_fmt(r.rhs)}"))
        if args.oracle_paths:
            err = math.hypot(r.lhs_se, r.oracle_se)
            rows.append(_bound("bdg", f"oracle_{name}", abs(r.lhs - r.oracle_lhs), 3.0 * err, T=r.T, paths=args.oracle_paths, note=f"oracle={_fmt(r.oracle_lhs)}"))
        extra[name] = {"lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio, "se": r.se, "oracle_lhs": r.oracle_lhs, "oracle_se": r.oracle_se}
    return rows, {"bdg": extra, "reference_closed_form": math.sqrt(math.pi * (args.T or 1.0) / 2.0)}


def cmd_parseval(args, config, resolution):
    if config is not None and config.noise is not None and config.noise.h is not None:
        h = config.noise.h
        d = config.grid.d
    else:
        h = FieldSpec("gaussian", {"sigma": args.sigma})
        d = 1
    xs = [float(v) for v in args.xi.split(",")] if args.xi else list(np.linspace(0.0, 5.0, 10))
    rows = []
    measured = []
    for x in xs:
        xi = [x] if d == 1 else [x, 0.0]
        p = parseval_check(h, np.array(xi), args.K)
        measured.append(p.measured_constant)
        rows.append(_bound("parseval", f"xi={_fmt(x)}", abs(p.ratio - 1.0), args.tol, note=f"constant={_fmt(p.measured_constant)}"))
    mean_c = float(np.mean(measured))
    alt = (2.0 * math.pi * d) ** d
    return rows, {"measured_constant": mean_c, "stated_constant": alt, "ratio_to_stated": mean_c / alt}


HANDLERS = {
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "estimate": cmd_estimate,
    "bdg": cmd_bdg,
    "fubini": cmd_fubini,
    "parseval": cmd_parseval,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="specwn", description="Spectral SPDE simulator and estimate checker.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        needs = name not in ("bdg", "parseval")
        s.add_argument("--config", required=needs)
        s.add_argument("--out", help="CSV report path (NDJSON summary written beside it)")
        s.add_argument("--threads", type=int, default=None)
        s.add_argument("--paths", type=int, default=None)
        s.add_argument("--R", type=float, default=None)
        s.add_argument("--T", type=float, default=None)
        s.add_argument("--seed", type=int, default=None)
        if name == "verify":
            s.add_argument("--residual-tol", type=float, default=None)
            s.add_argument("--min-order", type=float, default=1.9)
            s.add_argument("--uniqueness-tol", type=float, default=1e-9)
        if name == "bdg":
            s.add_argument("--integrand", action="append")
            s.add_argument("--N", type=int, default=4096)
            s.add_argument("--oracle-paths", type=int, default=0)
        if name == "parseval":
            s.add_argument("--K", type=int, default=64)
            s.add_argument("--xi", default=None, help="comma-separated frequencies")
            s.add_argument("--sigma", type=float, default=1.0)
            s.add_argument("--tol", type=float, default=1e-3)
    return p


def _apply_overrides(raw, args):
    raw = copy.deepcopy(raw)
    if args.command != "classify":
        if args.R is not None:
            raw.setdefault("grid", {})["R"] = args.R
        if args.T is not None:
            raw["T"] = args.T
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.paths is not None:
        raw["paths"] = args.paths
    return raw


def _config_hash(resolved):
    return hashlib.sha256(_json(resolved).encode("utf-8")).hexdigest()


def run_command(argv, stdout=None):
    """Run one subcommand; returns the exit code (0 pass, 1 failed check, 2 configuration error)."""
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(list(argv))
        if args.command is None:
            raise UsageError(f"expected a subcommand: {', '.join(COMMANDS)}")
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be positive")
        config = resolution = resolved = None
        if args.config is not None:
            raw = _apply_overrides(_read_json(args.config), args)
            config, resolved, resolution = resolve_config(raw)
            if args.command in ("simulate", "verify", "estimate", "fubini"):
                _require_envelope(config, args.command)
        rows, extra = HANDLERS[args.command](args, config, resolution)
    except ConfigError as exc:
        print(f"specwn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (TierError, MissingEnvelope) as exc:
        print(f"specwn: TierError: {exc}", file=sys.stderr)
        return 2
    except SpecwnError as exc:
        print(f"specwn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    summary = {"command": args.command, "version": __version__, **extra}
    if resolved is not None:
        summary["config"] = resolved
        summary["config_hash"] = _config_hash(resolved)
        summary["seed"] = resolved["seed"]
    else:
        summary["seed"] = args.seed if args.seed is not None else 0
    stdout.write(rows_to_csv(rows))
    if args.out:
        try:
            write_report(rows, args.out, summary)
        except IoError as exc:
            print(f"specwn: IoError: {exc}", file=sys.stderr)
            return 2
    return 0 if all(r.get("pass", True) for r in rows) else 1


def main(argv=None):
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))
