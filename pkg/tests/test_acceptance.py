"""Acceptance suite: one PASS/FAIL line per criterion.

The lines are printed after the pytest run (see ``conftest.py``) and when
this file is executed directly with ``python tests/test_acceptance.py``.
"""

import hashlib
import io
import math
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from specwn.cli import load_config, run_command
from specwn.engine import FrequencyField, FrequencyGrid, NoiseSpec, SimulationConfig, solve
from specwn.estimates import NormPlan, check_deterministic_bounds, compute_script_constants, data_norms, run_estimates
from specwn.noise import FieldSpec, hitting_tau, parseval_check, uniform_tau
from specwn.symbol import AssumptionConstants, compute_constants, fractional_laplacian, heat, sinusoid
from specwn.verify import INTEGRANDS, bdg_probe, fubini_discrete_check, live_integrand, residual_convergence, uniqueness_crosscheck

CONFIGS = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, "configs")
RESULTS = {}


@contextmanager
def criterion(number, title):
    """Record PASS or FAIL for one criterion; ``detail`` may be filled in by the body."""
    rec = {"detail": ""}
    try:
        yield rec
    except BaseException as exc:
        RESULTS[number] = (title, False, rec["detail"] or f"{type(exc).__name__}: {exc}")
        raise
    RESULTS[number] = (title, True, rec["detail"])


def summary_lines():
    return [f"acceptance {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}" for n, (title, ok, detail) in sorted(RESULTS.items())]


def frac_noise_config(N=128):
    return SimulationConfig(
        fractional_laplacian(1.5 + 0.5j),
        FrequencyGrid(1, 2.0, 65),
        1.0,
        N,
        u0=FrequencyField("gaussian", {"width": 1.0}),
        noise=NoiseSpec(modes=(FrequencyField("gaussian", {"width": 1.0}),)),
        seed=11,
    )


def test_1_heat_kernel_exactness():
    with criterion(1, "heat kernel exactness") as rec:
        t0 = time.perf_counter()
        cfg = SimulationConfig(heat(), FrequencyGrid(1, 8.0, 257), 1.0, 256, u0=FrequencyField("constant", {"value": 1.0}), seed=42)
        traj = solve(cfg, cfg.driver(0))
        elapsed = time.perf_counter() - t0
        err = float(np.max(np.abs(traj.u - np.exp(-np.outer(cfg.times, cfg.grid.radius**2)))))
        rec["detail"] = f"max error {err:.3g}, {elapsed:.3f} s"
        assert err <= 1e-12
        assert elapsed < 1.0


def test_2_representation_residual():
    with criterion(2, "representation residual order") as rec:
        t0 = time.perf_counter()
        ns, res, order = residual_convergence(frac_noise_config(), 0, (64, 128, 256, 512))
        elapsed = time.perf_counter() - t0
        rec["detail"] = f"order {order:.4f}, residual at N=512 {res[-1]:.3g}, {elapsed:.2f} s"
        assert order >= 1.9
        assert res[-1] <= 1e-6
        assert elapsed < 10.0


def test_3_uniqueness_crosscheck():
    with criterion(3, "uniqueness cross-check") as rec:
        one = FrequencyField("constant", {"value": 1.0})
        heat_cfg = SimulationConfig(heat(), FrequencyGrid(1, 2.0, 65), 1.0, 128, u0=one, forcing=FrequencyField("gaussian", {"amp": 0.5, "width": 1.0}), noise=NoiseSpec(modes=(one,)), seed=1)
        sin_cfg = SimulationConfig(sinusoid(), FrequencyGrid(1, 1.0, 65), 1.0, 256, u0=FrequencyField("gaussian", {"width": 0.5}), forcing=FrequencyField("gaussian", {"amp": 0.5, "width": 0.5}), noise=NoiseSpec(modes=(one,)), seed=2)
        a = uniqueness_crosscheck(heat_cfg, heat_cfg.driver(0))
        b = uniqueness_crosscheck(sin_cfg, sin_cfg.driver(0))
        rec["detail"] = f"heat {a.max_discrepancy:.3g}, sinusoid {b.max_discrepancy:.3g}, homogeneous {max(a.homogeneous_max, b.homogeneous_max)}"
        assert a.max_discrepancy <= 1e-9 and b.max_discrepancy <= 1e-9
        assert a.homogeneous_max == 0.0 and b.homogeneous_max == 0.0


def test_4_deterministic_bounds_sign_changing():
    with criterion(4, "deterministic bounds, sign-changing symbol") as rec:
        cfg = load_config(os.path.join(CONFIGS, "sin.json"))
        assert cfg.tau.kind == "UniformRandom" and cfg.K == 0
        c = compute_constants(cfg.symbol, 1.0, 1.0)
        # independent dense-grid oracle for the product constant at |xi| = R = 1
        s = np.linspace(0.0, 1.0, 200_001)
        P = (1 - np.cos(2 * np.pi * s)) / (2 * np.pi)
        both = np.maximum(P - np.minimum.accumulate(P), np.maximum.accumulate(P) - P)
        w = np.abs(np.sin(2 * np.pi * s)) * np.exp(both)
        oracle = float(np.sum(0.5 * (w[1:] + w[:-1]) * np.diff(s)))
        plan = NormPlan(cfg)
        failures = 0
        worst = np.inf
        for seed in range(100):
            drv = cfg.driver(seed)
            traj = solve(cfg, drv)
            for r in check_deterministic_bounds(traj, c, data_norms(cfg, drv, plan), cfg)[:2]:
                failures += not r.lhs <= r.rhs
                worst = min(worst, r.margin)
        rec["detail"] = f"C_eRe {c.c_e_int_re:.6f} (e^(1/pi) {math.exp(1 / math.pi):.6f}), C_abs {c.c_abs_psi:.6f} (oracle {oracle:.6f}), {failures} failures, min margin {worst:.4g}"
        assert abs(c.c_e_int_re - math.exp(1 / math.pi)) <= 1e-3
        assert abs(c.c_abs_psi - oracle) <= 1e-3 * oracle
        assert failures == 0


def test_5_stochastic_bound():
    with criterion(5, "stochastic a-priori bound") as rec:
        t0 = time.perf_counter()
        cfg = load_config(os.path.join(CONFIGS, "frac.json"))
        assert cfg.paths == 10_000 and cfg.grid.R == 2.0 and cfg.T == 1.0
        assert cfg.noise.h is not None and cfg.tau.kind == "HittingLevel"
        c = compute_constants(cfg.symbol, cfg.grid.R, cfg.T)
        reports, _ = run_estimates(cfg, c)
        elapsed = time.perf_counter() - t0
        r = {x.inequality: x for x in reports}["main_a_priori_2"]
        c1, c2, c3 = compute_script_constants(c)
        rec["detail"] = f"lhs {r.lhs:.5g} + 3se {3 * r.se:.3g} <= rhs {r.rhs:.5g} (min(C2,C3) = {min(c2, c3):.5g}), {elapsed:.1f} s"
        assert r.confident
        assert r.lhs + 3 * r.se <= r.rhs
        assert elapsed < 120.0


def test_6_constant_pipeline():
    with criterion(6, "explicit constant pipeline") as rec:
        sub = AssumptionConstants(R=2.0, T=1.0, c_e_int_re=1.0, c_e_abs_int_re=1.0, c_e_int_sup_abs_re=1.0, c_abs_psi=4.0, c_sup_psi=4.0, psi_inf=4.0)
        assert compute_script_constants(sub) == (12.0, 9.0, 13.0)
        rng = np.random.default_rng(2024)
        for _ in range(20):
            e, cs, p, T = 1 + 10 * rng.random(), 100 * rng.random(), 10 * rng.random(), 0.1 + 2 * rng.random()
            cc = AssumptionConstants(R=1.0, T=T, c_e_int_re=1.0, c_e_abs_int_re=e, c_e_int_sup_abs_re=e, c_abs_psi=cs, c_sup_psi=cs, psi_inf=p)
            c1, _, c3 = compute_script_constants(cc)
            assert c3 - c1 == 1.0
        live = compute_script_constants(compute_constants(heat(), 2.0, 1.0))
        rec["detail"] = "substitution gives (12, 9, 13); C3 - C1 = 1 on 20 random inputs; heat from computed constants " + ", ".join(f"{v:.5g}" for v in live)


def test_7_parseval_audit():
    with criterion(7, "Parseval constant audit") as rec:
        h = FieldSpec("gaussian", {"sigma": 1.0})
        results = [parseval_check(h, xi, 64) for xi in np.linspace(0.0, 5.0, 10)]
        worst = max(abs(r.ratio - 1.0) for r in results)
        measured = results[0].measured_constant
        rec["detail"] = f"max relative deviation {worst:.3g}, measured constant {measured:.9f} (1/(2 pi) = {1 / (2 * np.pi):.9f}), ratio to stated {results[0].stated_ratio:.5f}"
        assert worst <= 1e-3
        assert abs(measured - 1 / (2 * np.pi)) <= 1e-3 / (2 * np.pi)


def test_8_bdg_probe():
    with criterion(8, "BDG probe") as rec:
        unit = bdg_probe("unit", 100_000, 1.0, N=2048, seed=0, oracle_paths=10_000)
        err = math.hypot(unit.lhs_se, unit.oracle_se)
        ratios = {name: bdg_probe(name, 10_000, 1.0, N=512, seed=1) for name in INTEGRANDS if name != "unit"}
        ratios["unit"] = unit
        rec["detail"] = (
            f"E sup {unit.lhs:.5f} vs oracle {unit.oracle_lhs:.5f} (3se {3 * err:.3g}); ratios "
            + ", ".join(f"{k} {v.ratio:.3f}" for k, v in sorted(ratios.items()))
        )
        assert abs(unit.lhs - unit.oracle_lhs) <= 3 * err
        assert all(1 - 3 * v.se <= v.ratio <= 3.0 for v in ratios.values())


def test_9_fubini():
    with criterion(9, "discrete stochastic Fubini") as rec:
        one = FrequencyField("constant", {"value": 1.0})
        configs = [
            frac_noise_config(),
            load_config(os.path.join(CONFIGS, "frac.json")),
            load_config(os.path.join(CONFIGS, "heat_noise.json")),
            SimulationConfig(sinusoid(), FrequencyGrid(1, 1.0, 33), 1.0, 128, noise=NoiseSpec(modes=(one, FrequencyField("gaussian", {"width": 0.5}))), tau=uniform_tau(0.3, 1.0), seed=5),
            SimulationConfig(heat(), FrequencyGrid(2, 1.5, 15), 1.0, 64, noise=NoiseSpec(h=FieldSpec("gaussian", {"sigma": 1.0}), K_h=6), tau=hitting_tau(0, 0.4, 1.0), seed=6),
        ]
        worst = 0.0
        for cfg in configs:
            for i in range(5):
                drv = cfg.driver(i)
                worst = max(worst, fubini_discrete_check(live_integrand(cfg, drv), drv, cfg.grid.weights))
        rec["detail"] = f"max relative residual {worst:.3g} over {5 * len(configs)} live integrands"
        assert worst <= 1e-12


def _digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


@pytest.mark.parametrize("threads", [(1, 8)])
def test_10_reproducibility(tmp_path, threads):
    with criterion(10, "reproducibility across worker counts") as rec:
        jobs = [
            ["classify", "--config", os.path.join(CONFIGS, "heat.json"), "--R", "2"],
            ["verify", "--config", os.path.join(CONFIGS, "heat.json")],
            ["estimate", "--config", os.path.join(CONFIGS, "frac.json")],
            ["estimate", "--config", os.path.join(CONFIGS, "sin.json")],
            ["estimate", "--config", os.path.join(CONFIGS, "heat_noise.json"), "--paths", "2000"],
            ["fubini", "--config", os.path.join(CONFIGS, "heat_noise.json")],
            ["parseval"],
            ["bdg", "--paths", "2000", "--N", "256", "--seed", "3"],
        ]
        compared = 0
        for k, job in enumerate(jobs):
            digests = []
            for run in (0, 1):
                for w in threads:
                    out = str(tmp_path / f"job{k}_run{run}_w{w}.csv")
                    code = run_command(job + ["--threads", str(w), "--out", out], stdout=io.StringIO())
                    assert code == 0, job
                    digests.append((_digest(out), _digest(out[:-4] + ".ndjson")))
            assert len(set(digests)) == 1, job
            compared += len(digests)
        rec["detail"] = f"{len(jobs)} commands, {compared} runs at 1 and 8 workers, identical CSV and NDJSON"


if __name__ == "__main__":
    import sys

    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
