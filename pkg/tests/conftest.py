import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _seed_everything():
    torch.manual_seed(1234)
    np.random.seed(1234)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
