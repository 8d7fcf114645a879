# experiments/conftest.py
from __future__ import annotations

import numpy as np
import pytest

from core.riccati import GameSpec
from core.synthesis import ModelSet, synth_certificate
from experiments.run_experiments import example_models, example_spec


@pytest.fixture(scope="session")
def example_cert():
    """Double integrator sign pair, Q = R = I, gamma = 19."""
    return synth_certificate(example_models(), example_spec())


@pytest.fixture(scope="session")
def scalar_pair():
    models = ModelSet.sign_pair(np.array([[1.2]]), np.array([[1.0]]))
    spec = GameSpec(np.eye(1), np.eye(1), 6.0)
    return models, spec, synth_certificate(models, spec)


@pytest.fixture(scope="session")
def scalar_single():
    models = ModelSet(((np.array([[0.5]]), np.array([[1.0]])),))
    spec = GameSpec(np.eye(1), np.eye(1), 5.0)
    return models, spec, synth_certificate(models, spec)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))
