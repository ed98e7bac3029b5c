import numpy as np
import pytest
from hypothesis import settings

from pixart_desk.model.config import DIT_CLASS_CONDITIONAL, desk_preset
from pixart_desk.model.network import PixArtModel
from pixart_desk.reparam.checkpoint import Checkpoint

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def dit_checkpoint():
    """Randomly initialized desk DiT; every weight nonzero so surgery is non-trivial."""
    cfg = desk_preset(DIT_CLASS_CONDITIONAL)
    model = PixArtModel(cfg, seed=7, init="random")
    return Checkpoint(cfg, model.state_dict(), {"seed": "7"})
