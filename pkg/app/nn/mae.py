# nn/mae.py
import logging
from dataclasses import dataclass
from typing import Iterator, Tuple, Union

import numpy as np

from app.autodiff.functional import concat, scatter_rows
from app.autodiff.tensor import Tensor, as_tensor
from app.errors import ShapeError
from app.masking import VISIBLE
from app.models.config import ModelConfig
from app.nn.approx import ApproxNet
from app.nn.layers import Block, LayerNorm, Linear, Module, token
from app.nn.pos_embed import get_2d_sincos_pos_embed

logger = logging.getLogger(__name__)

DECODER_PREFIXES = ("decoder_", "mask_token")


@dataclass
class LatentBatch:
    """
    Saída do encoder para uma máscara.

    Attributes:
        tokens (Tensor): B×(V+1)×embed_dim, token de classe primeiro
        z_vec (Tensor): B×latent_dim, o latente ẑ usado pelas perdas de MI
        mask_id (int): Índice da máscara que gerou o lote
    """

    tokens: Tensor
    z_vec: Tensor
    mask_id: int = 0


class MaskedAutoencoder(Module):
    """
    Autoencoder mascarado pequeno: patch embed → encoder ViT → decoder → projetor de pixels.

    Embeddings de posição são seno-cosseno fixos; o token de classe não recebe posição.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        e, d = config.embed_dim, config.decoder_dim
        grid = config.grid_size

        self.patch_proj = Linear(config.patch_dim, e, rng)
        self.pos_embed = Tensor(get_2d_sincos_pos_embed(e, grid)[None])
        self.cls_token = token(rng, e)
        self.blocks = [Block(e, config.num_heads, config.mlp_ratio, rng) for _ in range(config.encoder_depth)]
        self.norm = LayerNorm(e)

        self.decoder_embed = Linear(e, d, rng)
        self.mask_token = token(rng, d)
        self.decoder_pos_embed = Tensor(
            np.concatenate([np.zeros((1, d)), get_2d_sincos_pos_embed(d, grid)], axis=0)[None]
        )
        self.decoder_blocks = [
            Block(d, config.num_heads, config.mlp_ratio, rng) for _ in range(config.decoder_depth)
        ]
        self.decoder_norm = LayerNorm(d)
        self.decoder_pred = Linear(d, config.patch_dim, rng)

    # grupos de parâmetros ----------------------------------------------------

    def encoder_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        return ((n, p) for n, p in self.named_parameters() if not n.startswith(DECODER_PREFIXES))

    def decoder_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        return ((n, p) for n, p in self.named_parameters() if n.startswith(DECODER_PREFIXES))

    # forward -----------------------------------------------------------------

    def patchify(self, images: Union[Tensor, np.ndarray]) -> Tensor:
        """B×C×H×W → B×P×(p²·C), patches em ordem de linha do grid."""
        images = as_tensor(images)
        cfg = self.config
        expected = (cfg.channels, cfg.image_size, cfg.image_size)
        if images.ndim != 4 or images.shape[1:] != expected:
            raise ShapeError(f"imagens {images.shape} não casam com B×{expected}")
        b, p, g = images.shape[0], cfg.patch_size, cfg.grid_size
        x = images.reshape(b, cfg.channels, g, p, g, p).transpose(0, 2, 4, 3, 5, 1)
        return x.reshape(b, g * g, cfg.patch_dim)

    def patch_embed(self, images: Union[Tensor, np.ndarray]) -> Tensor:
        """Projeção linear por patch mais o embedding de posição fixo."""
        return self.patch_proj(self.patchify(images)) + self.pos_embed

    def encode(self, visible_tokens: Tensor, mask_id: int = 0) -> LatentBatch:
        """
        Prefixa o token de classe, aplica os blocos e a norma final.

        Args:
            visible_tokens (Tensor): B×V×embed_dim
        """
        if visible_tokens.ndim != 3 or visible_tokens.shape[1] < 1:
            raise ShapeError(f"encode espera B×V×D com V ≥ 1, recebeu {visible_tokens.shape}")
        b = visible_tokens.shape[0]
        cls = self.cls_token * np.ones((b, 1, 1))
        x = concat([cls, visible_tokens], axis=1)
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        z = x[:, 0, :] if self.config.pooling == "cls" else x[:, 1:, :].mean(axis=1)
        return LatentBatch(tokens=x, z_vec=z, mask_id=mask_id)

    def decode(self, latent: LatentBatch, mask: np.ndarray) -> Tensor:
        """
        Reconstrói os pixels de todos os patches.

        Os tokens visíveis voltam às posições originais; as mascaradas recebem o
        token de máscara compartilhado.

        Returns:
            Tensor: B×P×(p²·C)
        """
        b = latent.tokens.shape[0]
        num_patches = self.config.num_patches
        mask = np.asarray(mask)
        if mask.ndim == 1:
            mask = np.broadcast_to(mask, (b, mask.shape[0]))
        if mask.shape != (b, num_patches):
            raise ShapeError(f"máscara {mask.shape} incompatível com B={b}, P={num_patches}")
        visible = int((mask[0] == VISIBLE).sum())
        if latent.tokens.shape[1] != visible + 1:
            raise ShapeError(f"máscara tem {visible} visíveis, latente tem {latent.tokens.shape[1] - 1}")
        index_map = np.argsort(mask, axis=1, kind="stable")[:, :visible]

        x = self.decoder_embed(latent.tokens)
        cls, vis = x[:, :1, :], x[:, 1:, :]
        placed = scatter_rows(vis, index_map, num_patches)
        masked = (mask != VISIBLE).astype(np.float64)[:, :, None]
        full = placed + self.mask_token * masked
        x = concat([cls, full], axis=1) + self.decoder_pos_embed
        for block in self.decoder_blocks:
            x = block(x)
        return self.decoder_pred(self.decoder_norm(x))[:, 1:, :]

    def features(self, images: np.ndarray) -> np.ndarray:
        """Latente ẑ das imagens sem máscara, sem histórico de gradiente."""
        return self.encode(self.patch_embed(images).detach()).z_vec.data


def build_models(config: ModelConfig, seed: int) -> Tuple[MaskedAutoencoder, ApproxNet]:
    """Cria autoencoder e rede de aproximação com streams de aleatoriedade separados."""
    mae = MaskedAutoencoder(config, np.random.default_rng([seed, 0]))
    approx = ApproxNet(
        config.input_dim,
        config.approx_hidden_dim,
        config.latent_dim,
        config.sigma_floor,
        np.random.default_rng([seed, 1]),
    )
    logger.debug("modelos criados: %d parâmetros no MAE", sum(p.size for p in mae.parameters()))
    return mae, approx
