# masking.py
from dataclasses import dataclass
from typing import Literal, Sequence, Tuple, Union

import numpy as np

from app.autodiff.functional import gather_rows, scatter_rows
from app.autodiff.tensor import Tensor
from app.errors import ContractError, ShapeError

Seed = Union[int, Sequence[int]]

MASKED = 1
VISIBLE = 0


@dataclass(frozen=True)
class MaskSet:
    """
    N máscaras binárias de patches para uma imagem (1 = mascarado, 0 = visível).

    Attributes:
        num_patches (int): P
        masks (np.ndarray): N×P, uint8
        strategy (str): orthogonal ou independent
        ratio (float): Fração mascarada alvo
        seed: Semente que gerou o conjunto
    """

    num_patches: int
    masks: np.ndarray
    strategy: Literal["orthogonal", "independent"]
    ratio: float
    seed: Seed

    @property
    def num_masks(self) -> int:
        return int(self.masks.shape[0])

    @property
    def visible_counts(self) -> np.ndarray:
        return (1 - self.masks).sum(axis=1)

    @property
    def is_disjoint(self) -> bool:
        """Conjuntos visíveis dois a dois disjuntos."""
        return bool((1 - self.masks).sum(axis=0).max() <= 1)

    @property
    def covers_all(self) -> bool:
        """A união dos visíveis cobre todos os patches (X₀ vazio)."""
        return bool((1 - self.masks).sum(axis=0).min() >= 1)


def mask_count(ratio: float, strategy: str = "complete") -> int:
    """
    Número de máscaras por imagem.

    complete → max(2, round(1/(1-ratio))); fixed4 → 4.

    Raises:
        ContractError: Razão fora de (0, 1) ou estratégia desconhecida
    """
    if not 0 < ratio < 1:
        raise ContractError(f"mask_ratio precisa estar em (0, 1), recebido {ratio}")
    if strategy == "complete":
        return max(2, int(round(1.0 / (1.0 - ratio))))
    if strategy == "fixed4":
        return 4
    raise ContractError(f"estratégia de máscara desconhecida: {strategy}")


def gen_orthogonal(num_patches: int, num_masks: int, seed: Seed, visible: int = 0) -> MaskSet:
    """
    Máscaras ortogonais: uma permutação aleatória dos patches é fatiada.

    Sem `visible`, os N pedaços têm tamanhos que diferem em no máximo 1 e
    cobrem todos os patches. Com `visible`, cada máscara recebe exatamente
    `visible` patches disjuntos e o restante fica fora de todas.

    Raises:
        ContractError: N < 2, P < N ou N·visible > P
    """
    if num_masks < 2:
        raise ContractError(f"são necessárias ao menos 2 máscaras, recebido {num_masks}")
    if num_patches < num_masks:
        raise ContractError(f"P={num_patches} menor que N={num_masks}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(num_patches)
    if visible:
        if visible * num_masks > num_patches:
            raise ContractError(f"{num_masks} máscaras de {visible} visíveis não cabem em {num_patches} patches")
        chunks = [perm[i * visible : (i + 1) * visible] for i in range(num_masks)]
        ratio = 1.0 - visible / num_patches
    else:
        chunks = np.array_split(perm, num_masks)
        ratio = 1.0 - 1.0 / num_masks
    masks = np.full((num_masks, num_patches), MASKED, dtype=np.uint8)
    for i, chunk in enumerate(chunks):
        masks[i, chunk] = VISIBLE
    return MaskSet(num_patches, masks, "orthogonal", ratio, seed)


def gen_independent(num_patches: int, ratio: float, num_masks: int, seed: Seed) -> MaskSet:
    """
    Cada máscara sorteia round(P·(1-ratio)) patches visíveis sem reposição.

    Raises:
        ContractError: Se a contagem de visíveis for zero
    """
    if not 0 < ratio < 1:
        raise ContractError(f"mask_ratio precisa estar em (0, 1), recebido {ratio}")
    visible = int(round(num_patches * (1.0 - ratio)))
    if visible < 1:
        raise ContractError(f"razão {ratio} deixa nenhum patch visível em P={num_patches}")
    rng = np.random.default_rng(seed)
    masks = np.full((num_masks, num_patches), MASKED, dtype=np.uint8)
    for i in range(num_masks):
        masks[i, rng.choice(num_patches, size=visible, replace=False)] = VISIBLE
    return MaskSet(num_patches, masks, "independent", ratio, seed)


def generate_masks(
    num_patches: int,
    ratio: float,
    strategy: str,
    generation: str,
    seed: Seed,
) -> MaskSet:
    """Resolve N pela estratégia e delega ao gerador escolhido."""
    n = mask_count(ratio, strategy)
    if generation == "independent":
        return gen_independent(num_patches, ratio, n, seed)
    if generation != "orthogonal":
        raise ContractError(f"geração de máscara desconhecida: {generation}")
    if strategy == "fixed4":
        return gen_orthogonal(num_patches, n, seed, visible=int(round(num_patches * (1 - ratio))))
    return gen_orthogonal(num_patches, n, seed)


def generate_batch_masks(
    batch_size: int,
    num_patches: int,
    ratio: float,
    strategy: str,
    generation: str,
    seed: Seed,
) -> np.ndarray:
    """
    Um MaskSet por imagem, empilhado como N×B×P.

    A imagem b usa a semente (seed..., b), então o lote inteiro é função de
    (seed, B, P, ratio).
    """
    base = [seed] if isinstance(seed, int) else list(seed)
    sets = [
        generate_masks(num_patches, ratio, strategy, generation, base + [b]).masks
        for b in range(batch_size)
    ]
    return np.stack(sets, axis=1)


def apply_mask(images: Tensor, mask: np.ndarray) -> Tuple[Tensor, np.ndarray]:
    """
    Junta as linhas visíveis de B×P×D em ordem crescente de patch.

    Args:
        images (Tensor): B×P×D
        mask (np.ndarray): P ou B×P (1 = mascarado)

    Returns:
        Tuple[Tensor, np.ndarray]: (B×V×D visíveis, índice B×V para o scatter inverso)

    Raises:
        ShapeError: Comprimento de máscara errado ou contagem visível diferente entre amostras
    """
    batch, patches = images.shape[0], images.shape[1]
    mask = np.asarray(mask)
    if mask.ndim == 1:
        mask = np.broadcast_to(mask, (batch, mask.shape[0]))
    if mask.shape != (batch, patches):
        raise ShapeError(f"máscara {mask.shape} incompatível com {images.shape}")
    counts = (mask == VISIBLE).sum(axis=1)
    if counts.min() != counts.max():
        raise ShapeError("todas as amostras do lote precisam ter o mesmo número de visíveis")
    if counts.min() < 1:
        raise ContractError("máscara sem nenhum patch visível")
    index_map = np.argsort(mask, axis=1, kind="stable")[:, : int(counts[0])]
    return gather_rows(images, index_map), index_map


def scatter_mask(visible: Tensor, index_map: np.ndarray, num_patches: int) -> Tensor:
    """Inverso de `apply_mask`: devolve B×P×D com zeros nas posições mascaradas."""
    return scatter_rows(visible, index_map, num_patches)


def mask_pixels(patches: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """
    Imagem achatada (ordem de patches) com os patches mascarados zerados.

    Args:
        patches (np.ndarray): B×P×K
        mask (np.ndarray): B×P

    Returns:
        np.ndarray: B×(P·K)
    """
    kept = patches * (1 - mask)[:, :, None].astype(patches.dtype)
    return kept.reshape(patches.shape[0], -1)
