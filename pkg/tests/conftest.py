import numpy as np
import pytest

from app.io.dataset import gen_synthetic
from app.models.config import (
    DataConfig,
    LossWeights,
    MiBenchConfig,
    ModelConfig,
    ProbeConfig,
    RunConfig,
    TrainConfig,
)

# P = 4 patches; ratio 0.75 → N = 4 máscaras ortogonais de 1 patch visível
SMALL_MODEL = dict(
    image_size=16,
    channels=1,
    patch_size=8,
    embed_dim=16,
    encoder_depth=1,
    decoder_dim=8,
    decoder_depth=1,
    num_heads=2,
    mlp_ratio=2,
    latent_dim=16,
    approx_hidden_dim=16,
)


def small_config(tmp_path=None, **train) -> RunConfig:
    train_fields = dict(epochs=2, batch_size=4, checkpoint_every=1, seed=3)
    train_fields.update(train)
    return RunConfig(
        model=ModelConfig(**SMALL_MODEL),
        train=TrainConfig(**train_fields),
        data=DataConfig(num_images=8, class_count=2, seed=1),
        probe=ProbeConfig(epochs=5, batch_size=4, holdout=0.25),
        mi=MiBenchConfig(rhos=(0.0, 0.5), samples=400, steps=30, batch=32, hidden=8),
        output_dir=str(tmp_path / "run") if tmp_path is not None else "runs/test",
    )


@pytest.fixture
def config(tmp_path) -> RunConfig:
    return small_config(tmp_path)


@pytest.fixture
def dataset(config):
    return gen_synthetic(config.data, config.model)


@pytest.fixture
def images(dataset) -> np.ndarray:
    return dataset.images[:4]


@pytest.fixture
def weights() -> LossWeights:
    return LossWeights()


@pytest.fixture
def make_config(tmp_path):
    """Fábrica de configurações pequenas com campos de treino sobrescritos."""
    return lambda **train: small_config(tmp_path, **train)
