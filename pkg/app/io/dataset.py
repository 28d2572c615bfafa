# io/dataset.py
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Tuple, Union

import numpy as np

from app.errors import ContractError, FormatError
from app.models.config import DataConfig, ModelConfig

logger = logging.getLogger(__name__)

MAGIC = b"MIMDS1"
HEADER = struct.Struct("<6sIIIII")

PathLike = Union[str, Path]


def record_dtype(channels: int, height: int, width: int) -> np.dtype:
    """Registro por imagem: pixels f32 C×H×W seguidos do rótulo u16, little-endian, sem padding."""
    return np.dtype([("pixels", "<f4", (channels, height, width)), ("label", "<u2")])


@dataclass
class ImageDataset:
    """
    Conjunto de imagens rotuladas em memória, compartilhável só para leitura.

    Attributes:
        images (np.ndarray): n×C×H×W float32 em [0, 1]
        labels (np.ndarray): n uint16
        class_count (int): Número de classes declarado no cabeçalho
    """

    images: np.ndarray
    labels: np.ndarray
    class_count: int

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def shuffled_indices(self, seed) -> np.ndarray:
        """Permutação dos índices determinada pela semente."""
        return np.random.default_rng(seed).permutation(len(self))

    def batches(self, batch_size: int, seed) -> Iterator[np.ndarray]:
        """
        Lotes embaralhados de imagens.

        O último lote só é emitido se tiver ao menos 2 imagens (o InfoNCE
        precisa de negativos).
        """
        order = self.shuffled_indices(seed)
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            if len(idx) >= 2:
                yield self.images[idx]


def steps_per_epoch(num_images: int, batch_size: int) -> int:
    if num_images < 2:
        raise ContractError("o conjunto precisa de ao menos 2 imagens")
    full, rest = divmod(num_images, batch_size)
    return full + (1 if rest >= 2 else 0)


def gen_synthetic(data: DataConfig, model: ModelConfig) -> ImageDataset:
    """
    Listras orientadas com uma mancha gaussiana, parametrizadas pela classe.

    A classe c fixa a orientação (π·c/K) e a frequência espacial; fase,
    posição da mancha e ruído são sorteados por imagem. Os rótulos são
    balanceados (contagens diferem em no máximo 1).
    """
    rng = np.random.default_rng(data.seed)
    n, k = data.num_images, data.class_count
    c, s = model.channels, model.image_size

    labels = rng.permutation(np.arange(n) % k).astype(np.uint16)
    theta = math.pi * labels / k + rng.normal(0.0, 0.05, n)
    freq = (1.5 + (labels % 3)) * (1.0 + rng.uniform(-0.1, 0.1, n))
    phase = rng.uniform(0.0, 2.0 * math.pi, (n, c))
    centers = rng.uniform(0.2, 0.8, (n, 2))
    width = 0.08 + 0.04 * (labels % 2) + rng.uniform(0.0, 0.02, n)

    coords = (np.arange(s) + 0.5) / s
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    proj = xx[None] * np.cos(theta)[:, None, None] + yy[None] * np.sin(theta)[:, None, None]
    arg = 2.0 * math.pi * freq[:, None, None, None] * proj[:, None] + phase[:, :, None, None]
    stripes = np.sin(arg)
    dist2 = (xx[None] - centers[:, 0, None, None]) ** 2 + (yy[None] - centers[:, 1, None, None]) ** 2
    blob = np.exp(-dist2 / (2.0 * width[:, None, None] ** 2))[:, None]
    noise = rng.normal(0.0, 0.03, (n, c, s, s))

    images = np.clip(0.5 + 0.3 * stripes + 0.2 * blob + noise, 0.0, 1.0).astype(np.float32)
    logger.debug("conjunto sintético gerado: %d imagens, %d classes", n, k)
    return ImageDataset(images=images, labels=labels, class_count=k)


def write_dataset(path: PathLike, dataset: ImageDataset) -> Path:
    """Grava no formato MIMDS1."""
    path = Path(path)
    n = len(dataset)
    c, h, w = dataset.shape
    records = np.empty(n, dtype=record_dtype(c, h, w))
    records["pixels"] = dataset.images
    records["label"] = dataset.labels
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, n, h, w, c, dataset.class_count))
        fh.write(records.tobytes())
    logger.info("conjunto gravado em %s (%d imagens)", path, n)
    return path


def load_dataset(path: PathLike) -> ImageDataset:
    """
    Lê um arquivo MIMDS1 validando cabeçalho e tamanho.

    Raises:
        FormatError: Magic errado, arquivo truncado, bytes sobrando ou rótulo fora do intervalo
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise FormatError(f"cabeçalho truncado ({len(raw)} de {HEADER.size} bytes)", path=str(path), offset=len(raw))
    magic, n, h, w, c, label_count = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"magic inválido {magic!r}", path=str(path), offset=0)
    if min(h, w, c) == 0:
        raise FormatError("dimensões de imagem nulas no cabeçalho", path=str(path), offset=6)
    dtype = record_dtype(c, h, w)
    expected = HEADER.size + n * dtype.itemsize
    if len(raw) < expected:
        record = (len(raw) - HEADER.size) // dtype.itemsize
        raise FormatError(
            f"arquivo truncado: {len(raw)} de {expected} bytes (registro {record})",
            path=str(path),
            offset=len(raw),
        )
    if len(raw) > expected:
        raise FormatError(f"{len(raw) - expected} bytes sobrando após os registros", path=str(path), offset=expected)
    records = np.frombuffer(raw, dtype=dtype, count=n, offset=HEADER.size)
    labels = records["label"].astype(np.uint16)
    if n and int(labels.max()) >= label_count:
        bad = int(np.argmax(labels >= label_count))
        raise FormatError(
            f"rótulo {int(labels[bad])} fora de [0, {label_count})",
            path=str(path),
            offset=HEADER.size + bad * dtype.itemsize + dtype.fields["label"][1],
        )
    images = records["pixels"].astype(np.float32)
    return ImageDataset(images=images, labels=labels, class_count=int(label_count))


def _read_idx(path: Path, ndim: int) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] != 0x08:
        raise FormatError("arquivo IDX sem magic de unsigned byte", path=str(path), offset=0)
    if raw[3] != ndim:
        raise FormatError(f"IDX com {raw[3]} dimensões, esperado {ndim}", path=str(path), offset=3)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError("cabeçalho IDX truncado", path=str(path), offset=len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = int(np.prod(dims))
    if len(raw) != header + count:
        raise FormatError(
            f"IDX com {len(raw) - header} bytes de dados, esperado {count}",
            path=str(path),
            offset=min(len(raw), header + count),
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def _fit_square(images: np.ndarray, size: int) -> np.ndarray:
    """Preenche com zeros ou recorta no centro até size×size."""
    n, h, w = images.shape
    out = np.zeros((n, size, size), dtype=np.float32)
    sh, sw = min(h, size), min(w, size)
    src_y, src_x = (h - sh) // 2, (w - sw) // 2
    dst_y, dst_x = (size - sh) // 2, (size - sw) // 2
    out[:, dst_y : dst_y + sh, dst_x : dst_x + sw] = images[:, src_y : src_y + sh, src_x : src_x + sw]
    return out


def import_idx(images_path: PathLike, labels_path: PathLike, model: ModelConfig) -> ImageDataset:
    """
    Converte um par IDX3/IDX1 (estilo MNIST) em ImageDataset de um canal.

    Raises:
        FormatError: Arquivos IDX inválidos ou contagens diferentes
        ContractError: Se o modelo não for de um canal
    """
    if model.channels != 1:
        raise ContractError("import_idx só produz imagens de um canal")
    images = _read_idx(Path(images_path), 3)
    labels = _read_idx(Path(labels_path), 1)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images.shape[0]} imagens e {labels.shape[0]} rótulos",
            path=str(labels_path),
            offset=4,
        )
    pixels = _fit_square(images.astype(np.float32) / 255.0, model.image_size)[:, None]
    labels = labels.astype(np.uint16)
    class_count = int(labels.max()) + 1 if len(labels) else 1
    logger.info("IDX importado: %d imagens, %d classes", len(labels), class_count)
    return ImageDataset(images=pixels, labels=labels, class_count=class_count)


def build_dataset(data: DataConfig, model: ModelConfig) -> ImageDataset:
    """Carrega `data.path`, importa IDX ou gera o conjunto sintético, nessa ordem."""
    if data.path:
        dataset = load_dataset(data.path)
    elif data.idx_images and data.idx_labels:
        dataset = import_idx(data.idx_images, data.idx_labels, model)
    else:
        dataset = gen_synthetic(data, model)
    expected = (model.channels, model.image_size, model.image_size)
    if dataset.shape != expected:
        raise ContractError(f"imagens {dataset.shape} não casam com o modelo {expected}")
    return dataset
