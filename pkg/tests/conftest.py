import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from specwn.engine import FrequencyField, FrequencyGrid, NoiseSpec, SimulationConfig
from specwn.symbol import fractional_laplacian, heat, sinusoid

settings.register_profile("specwn", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("specwn")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def heat_config():
    """Heat equation with constant initial data on B_8 (no noise)."""
    return SimulationConfig(heat(), FrequencyGrid(1, 8.0, 257), 1.0, 256, u0=FrequencyField("constant", {"value": 1.0}), seed=42)


@pytest.fixture
def noisy_heat_config():
    return SimulationConfig(
        heat(),
        FrequencyGrid(1, 2.0, 33),
        1.0,
        64,
        u0=FrequencyField("gaussian", {"width": 1.0}),
        forcing=FrequencyField("gaussian", {"amp": 0.5, "width": 0.7}),
        noise=NoiseSpec(modes=(FrequencyField("constant", {"value": 1.0}),)),
        seed=3,
    )


@pytest.fixture
def frac_config():
    return SimulationConfig(
        fractional_laplacian(1.5 + 0.5j),
        FrequencyGrid(1, 2.0, 33),
        1.0,
        64,
        u0=FrequencyField("gaussian", {"width": 1.0}),
        noise=NoiseSpec(modes=(FrequencyField("gaussian", {"width": 1.0}),)),
        seed=9,
    )


@pytest.fixture
def sin_config():
    return SimulationConfig(
        sinusoid(),
        FrequencyGrid(1, 1.0, 33),
        1.0,
        128,
        u0=FrequencyField("gaussian", {"width": 0.5}),
        forcing=FrequencyField("gaussian", {"amp": 0.5, "width": 0.5}),
        seed=4,
    )


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
