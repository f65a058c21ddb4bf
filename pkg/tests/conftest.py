import numpy as np
import pytest

from sctransnet.config import ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(**overrides) -> ModelConfig:
    """Small-channel config for gradient checks and structural tests."""
    base = dict(channels=(4, 8, 12, 16), bottleneck_channels=24,
                num_sctb=1, dtype="float64")
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def tiny_cfg():
    return tiny_config()
