"""
Shared fixtures: tiny networks at 8x8, a random proxy set and a victim-labelled test set.
"""

import sys
from pathlib import Path

import pytest
import torch
from torch.utils.data import TensorDataset

# Allow running the suite from a source checkout without installing
sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dfms.analysis.metrics import predict_labels
from dfms.attack.config import AttackConfig, build_config
from dfms.nets.builder import build_network
from dfms.nets.zoo import classifier_spec
from dfms.victim.ledger import QueryLedger
from dfms.victim.oracle import VictimModel, VictimOracle

NUM_CLASSES = 4
CHANNELS = 1
IMAGE_SIZE = 8
INPUT_SHAPE = (CHANNELS, IMAGE_SIZE, IMAGE_SIZE)

TINY_SETTINGS = {
    "seed": "0",
    "n_G": "3",
    "n_C": "40",
    "N_Q": "100",
    "batch_size": "16",
    "lambda_div": "500",
    "hist_samples": "32",
    "clone.init_epochs": "1",
    "clone.retrain_epochs": "1",
    "gan.pretrain_epochs": "1",
    "nets.latent_dim": "8",
    "nets.channels": str(CHANNELS),
    "nets.image_size": str(IMAGE_SIZE),
    "nets.num_classes": str(NUM_CLASSES),
    "nets.clone_arch": "cnn2",
    "nets.gen_width": "8",
    "nets.disc_width": "8",
}


def random_images(n: int, seed: int = 0) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.rand((n, *INPUT_SHAPE), generator=gen) * 2 - 1


@pytest.fixture
def victim_model():
    """An untrained cnn2 victim; random weights still give a fixed labelling."""
    network = build_network(classifier_spec("cnn2", CHANNELS, NUM_CLASSES, IMAGE_SIZE, role="victim"), 123)
    return VictimModel(network, NUM_CLASSES, INPUT_SHAPE)


@pytest.fixture
def make_oracle(victim_model):
    def _make(budget=None, log_path=None) -> VictimOracle:
        return VictimOracle(victim_model, QueryLedger(budget=budget, log_path=log_path))

    return _make


@pytest.fixture
def oracle(make_oracle):
    return make_oracle()


@pytest.fixture
def proxy_images():
    return random_images(64, seed=1)


@pytest.fixture
def test_set(victim_model):
    images = random_images(48, seed=2)
    return TensorDataset(images, predict_labels(victim_model, images))


@pytest.fixture
def tiny_config() -> AttackConfig:
    return build_config(TINY_SETTINGS)


@pytest.fixture
def tiny_overrides():
    def _build(**values) -> AttackConfig:
        settings = dict(TINY_SETTINGS)
        settings.update({k.replace("__", "."): str(v) for k, v in values.items()})
        return build_config(settings)

    return _build
