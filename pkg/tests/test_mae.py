import numpy as np
import pytest

from app.autodiff.tensor import Tensor, precision
from app.errors import ShapeError
from app.masking import apply_mask, generate_masks
from app.models.config import ModelConfig
from app.nn.mae import DECODER_PREFIXES, MaskedAutoencoder, build_models


@pytest.fixture
def mae(config):
    return MaskedAutoencoder(config.model, np.random.default_rng(0))


def test_patchify_row_major_grid(config, mae):
    images = np.arange(16 * 16, dtype=np.float32).reshape(1, 1, 16, 16)
    patches = mae.patchify(images).data
    assert patches.shape == (1, 4, 64)
    # patch 1 é o canto superior direito
    np.testing.assert_array_equal(patches[0, 1, :8], images[0, 0, 0, 8:16])
    np.testing.assert_array_equal(patches[0, 2, :8], images[0, 0, 8, :8])


def test_patchify_rejects_wrong_shape(mae):
    with pytest.raises(ShapeError):
        mae.patchify(np.zeros((1, 1, 12, 12)))


def test_encode_decode_shapes(config, mae, images):
    tokens = mae.patch_embed(images)
    assert tokens.shape == (4, 4, 16)
    mask = generate_masks(4, 0.75, "complete", "orthogonal", 0).masks[0]
    visible, _ = apply_mask(tokens, mask)
    latent = mae.encode(visible, mask_id=2)
    assert latent.tokens.shape == (4, 2, 16)
    assert latent.z_vec.shape == (4, 16)
    assert latent.mask_id == 2
    assert mae.decode(latent, mask).shape == (4, 4, 64)


def test_decode_rejects_mismatched_mask(mae, images):
    tokens = mae.patch_embed(images)
    visible, _ = apply_mask(tokens, np.array([0, 1, 1, 1]))
    latent = mae.encode(visible)
    with pytest.raises(ShapeError):
        mae.decode(latent, np.array([0, 0, 1, 1]))


def test_mean_pooling(config, images):
    model = MaskedAutoencoder(config.model.model_copy(update={"pooling": "mean"}), np.random.default_rng(0))
    latent = model.encode(model.patch_embed(images))
    np.testing.assert_allclose(latent.z_vec.data, latent.tokens.data[:, 1:].mean(axis=1), rtol=1e-5, atol=1e-6)


def test_parameter_groups_partition_the_model(mae):
    everything = {n for n, _ in mae.named_parameters()}
    encoder = {n for n, _ in mae.encoder_parameters()}
    decoder = {n for n, _ in mae.decoder_parameters()}
    assert encoder | decoder == everything
    assert not encoder & decoder
    assert all(n.startswith(DECODER_PREFIXES) for n in decoder)
    assert "cls_token" in encoder and "mask_token" in decoder


def test_positional_embeddings_are_not_parameters(mae):
    names = {n for n, _ in mae.named_parameters()}
    assert "pos_embed" not in names and "decoder_pos_embed" not in names


def test_features_detached(mae, images):
    feats = mae.features(images)
    assert feats.shape == (4, 16)
    assert isinstance(feats, np.ndarray)


def test_build_models_is_deterministic(config):
    a, approx_a = build_models(config.model, 5)
    b, approx_b = build_models(config.model, 5)
    for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)
    assert approx_a.input_dim == config.model.input_dim == 256


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(image_size=30, patch_size=8)
    with pytest.raises(ValueError):
        ModelConfig(embed_dim=18, num_heads=2, latent_dim=18)
    with pytest.raises(ValueError):
        ModelConfig(latent_dim=32)


def test_mask_token_gradient_only_from_masked_positions(mae, images):
    tokens = mae.patch_embed(images)
    mask = np.array([1, 0, 1, 1])
    visible, _ = apply_mask(tokens, mask)
    out = mae.decode(mae.encode(visible), mask)
    out.sum().backward()
    assert np.abs(mae.mask_token.grad).sum() > 0
    assert isinstance(out, Tensor)


def test_class_token_ignores_order_of_visible_tokens(config, images):
    with precision(np.float64):
        model = MaskedAutoencoder(config.model, np.random.default_rng(0))
        tokens = model.patch_embed(images).data
        visible = tokens[:, [0, 2, 3]]
        z = model.encode(Tensor(visible)).z_vec.data
        shuffled = model.encode(Tensor(visible[:, [2, 0, 1]])).z_vec.data
    np.testing.assert_allclose(shuffled, z, atol=1e-5)
