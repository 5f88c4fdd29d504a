"""
Shared fixtures: seeded scenarios and small random channel instances
"""

import numpy as np
import pytest

from src.channels import build_statistical_csi, random_statistical_csi
from src.optimizer import random_phase_baseline
from src.scenario import (RngStream, ScenarioConfig, build_geometry, compute_path_losses,
                          rng_substream)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def default_cfg():
    return ScenarioConfig()


@pytest.fixture
def default_csi(default_cfg):
    losses = compute_path_losses(build_geometry(default_cfg), default_cfg)
    return build_statistical_csi(default_cfg, losses,
                                 rng_substream(default_cfg.seed, RngStream.ANGLES))


@pytest.fixture
def small_instance():
    """Unit-scale M=8, N=16, K=3 instance with random phases"""
    gen = np.random.default_rng(777)
    csi = random_statistical_csi(gen, M=8, N=16, K=3, delta=2.0)
    return csi, random_phase_baseline(16, gen)
