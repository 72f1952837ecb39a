"""Shared fixtures for the CACRL scheduler tests."""

import numpy as np
import pytest

from src.utils.config import ExperimentConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config(tmp_path):
    """A run small enough to finish a couple of iterations in well under a second."""
    return ExperimentConfig(
        num_users=1,
        num_antennas=1,
        deadline_slots=2,
        num_paths=2,
        path_loss_db=0.0,
        hidden_sizes=[4],
        encoder_hidden_sizes=[4],
        latent_dim=2,
        batch_size=12,
        critic_batches=2,
        context_size=4,
        potential_samples=2,
        pretrain_episodes=1,
        episode_slots=12,
        iterations=2,
        eval_every=2,
        eval_slots=20,
        checkpoint_every=1,
        metrics_window=3,
        output_dir=str(tmp_path / "run"),
    )
