import json

import numpy as np
import pytest

from src.characteristics.paths import SimConfig
from src.models.builtins import builtin_model
from src.models.model_spec import ModelSpec
from src.models.sampling import SamplerConfig


def _zero_coefficient(x, theta, mu, w):
    return np.zeros_like(np.asarray(x, dtype=float))


def make_frozen_model(dim_theta: int = 1) -> ModelSpec:
    """F = G = b = 0, no noise, W0 = x, U0 = |x|²/2, H = 0: nothing moves."""
    return ModelSpec(
        name="frozen",
        dim_x=1,
        dim_theta=dim_theta,
        F=_zero_coefficient,
        G=_zero_coefficient,
        W0=lambda x, theta, mu: np.array(x, dtype=float),
        b=lambda theta, mu, f_values=None: np.zeros_like(np.asarray(theta, dtype=float)),
        U0=lambda x, theta, mu: 0.5 * np.asarray(x, dtype=float)[:, 0] ** 2,
        H=lambda x, theta, mu, p: np.zeros(np.asarray(x).shape[0]),
        sigma_x=0.0,
        sigma_theta=0.0,
    )


@pytest.fixture
def frozen_model():
    return make_frozen_model()


@pytest.fixture
def lq_model():
    return builtin_model("lq")


@pytest.fixture
def torus_model():
    return builtin_model("torus_monotone")


@pytest.fixture
def sampler():
    return SamplerConfig(cloud_size=8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_sim():
    # 4 paths of clouds with 8 particles, horizon set per test
    return SimConfig(dt=0.05, n_particles=8, n_paths=4, seed=0, n_tagged=4)


TINY_BUDGET = {
    "sim": {"dt": 0.1, "n_particles": 16, "n_paths": 8, "n_tagged": 4},
    "solver": {"horizon": 0.2, "fit_points": 2, "degree": 1, "audit_size": 8},
    "picard": {"max_iters": 5},
    "lipschitz": {"samples": 4},
    "probes": {"count": 5, "cloud_size": 6, "audit_budget": 8, "pairs": 0},
    "points": {"count": 3},
}


@pytest.fixture
def write_config(tmp_path):
    """Write a JSON config (tiny budget merged with `extra`) and return its path."""
    def _write(extra=None, name="config.json"):
        data = json.loads(json.dumps(TINY_BUDGET))
        for key, value in (extra or {}).items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key].update(value)
            else:
                data[key] = value
        path = tmp_path / name
        path.write_text(json.dumps(data, ensure_ascii=False, indent=2), encoding="utf-8")
        return path
    return _write
