import numpy as np
import pytest
import torch

torch.set_num_threads(1)

from bridgepose.config import (AugmentPolicy, FixtureSpec, ModelConfig,
                               RunConfig, TrainSchedule)
from bridgepose.datasets import make_fixture


def tiny_model(**overrides) -> ModelConfig:
    kwargs = dict(levels=2, columns=4, num_joints=3, base_channels=4,
                  channel_multipliers=(1, 2), input_size=32, output_size=16)
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def tiny_fixture(tmp_path_factory):
    """A small synthetic dataset shared across tests (8 images, 3 joints)."""
    root = tmp_path_factory.mktemp("fixture")
    spec = FixtureSpec(n_samples=8, image_size=64, num_joints=3,
                       blob_sigma=2.0, seed=11)
    samples = make_fixture(spec, root)
    return root, spec, samples


def tiny_run_config(**train_overrides) -> RunConfig:
    train = dict(total_epochs=4, batch_size=4, milestones=(), eval_interval=1)
    train.update(train_overrides)
    return RunConfig(
        model=tiny_model(),
        train=TrainSchedule(**train),
        augment=AugmentPolicy(),
        fixture=FixtureSpec(n_samples=8, image_size=64, num_joints=3,
                            blob_sigma=2.0, seed=11),
    )
