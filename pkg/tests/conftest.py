"""
测试公共夹具
"""
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.foliation_ops import FoliationParams
from src.spectral_core import TORUS3, FourierField, sup_estimate


settings.register_profile("folitor", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("folitor")


def smooth_beltrami(rng: np.random.Generator, cutoff: int, target: float, dimension: str = TORUS3,
                    decay: float = 1.0) -> FourierField:
    """实值光滑随机 μ，过采样上确界缩放到 target"""
    raw = FourierField.random(rng, dimension, cutoff, decay=decay, real=True)
    return raw * (target / sup_estimate(raw, 4))


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def sqrt_params():
    return FoliationParams.from_strings("sqrt2", "sqrt3")


@pytest.fixture
def liouville_params():
    return FoliationParams.from_strings("liouville(5)", "0")


@pytest.fixture
def torus2_params():
    return FoliationParams.torus2()
