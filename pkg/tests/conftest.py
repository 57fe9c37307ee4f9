import sys
from pathlib import Path

import pytest
import torch
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from synth import split_dataset, write_dataset  # noqa: E402

settings.register_profile("suite", max_examples=25, deadline=None)
settings.load_profile("suite")

torch.manual_seed(0)


@pytest.fixture()
def tiny_dataset(tmp_path):
    """4 pairs at 32x32 (3 train / 1 val) for fast unit tests."""
    root = write_dataset(tmp_path / "data", n_pairs=4, size=32)
    manifest = split_dataset(root, train=3, val=1, seed=7)
    return root, manifest


@pytest.fixture(scope="session")
def smoke_dataset(tmp_path_factory):
    """The acceptance-scale dataset: 12 pairs at 128x128 (8 train / 4 val)."""
    root = write_dataset(tmp_path_factory.mktemp("smoke_data") / "rice", n_pairs=12, size=128)
    manifest = split_dataset(root, train=8, val=4, seed=7)
    return root, manifest


def smoke_train_config(variant: str, mode: str, epochs: int = 30, seed: int = 11):
    """Hyperparameters for the scaled smoke runs (single-core friendly)."""
    from cloudgan.losses import LossWeights
    from cloudgan.networks import DiscriminatorConfig, GeneratorConfig
    from cloudgan.training import TrainConfig

    return TrainConfig(
        epochs=epochs,
        batch_size=2,
        lr=1e-3,
        weights=LossWeights(),
        generator=GeneratorConfig(variant=variant, mode=mode, base_channels=16),
        discriminator=DiscriminatorConfig(layers=3, base_channels=32),
        seed=seed,
        crop=128,
    )


@pytest.fixture(scope="session")
def smoke_grid(smoke_dataset, tmp_path_factory):
    """Train the full variant x neighborhood grid once; shared by acceptance tests.

    Returns {(variant, mode): (run_dir, checkpoint, log)}.
    """
    from cloudgan.training import train

    _, manifest = smoke_dataset
    out_root = tmp_path_factory.mktemp("smoke_runs")
    results = {}
    for variant in ("baseline", "dual"):
        for mode in ("four", "eight"):
            cfg = smoke_train_config(variant, mode)
            run_dir = out_root / f"{variant}-{mode}"
            ckpt, log = train(cfg, manifest, run_dir, config_hash=f"smoke-{variant}-{mode}")
            results[(variant, mode)] = (run_dir, ckpt, log)
    return results
