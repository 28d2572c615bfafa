# io/checkpoint.py
import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from app.errors import FormatError

logger = logging.getLogger(__name__)

MAGIC = b"MIMAE1"
VERSION = 1

_U32 = struct.Struct("<I")
_NAME = struct.Struct("<H")
_NDIM = struct.Struct("<B")

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    """
    Conteúdo de um arquivo MIMAE1.

    Attributes:
        config_text (str): Configuração completa no formato `key = value`
        scalars (Dict[str, Any]): Contadores e gate do TrainState
        tensors (Dict[str, np.ndarray]): Parâmetros e momentos, na ordem gravada
    """

    config_text: str
    scalars: Dict[str, Any] = field(default_factory=dict)
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    """
    Layout: magic | versão u32 | JSON u32+bytes | contagem u32 | tabela de tensores | CRC32 u32.

    Cada tensor: nome (u16 + utf-8), ndim u8, dims u32, payload f32 little-endian row-major.
    """
    meta = json.dumps(
        {"config": ckpt.config_text, "scalars": ckpt.scalars},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(meta)), meta, _U32.pack(len(ckpt.tensors))]
    for name, value in ckpt.tensors.items():
        raw_name = name.encode("utf-8")
        array = np.ascontiguousarray(value, dtype="<f4")
        parts.append(_NAME.pack(len(raw_name)))
        parts.append(raw_name)
        parts.append(_NDIM.pack(array.ndim))
        parts.extend(_U32.pack(d) for d in array.shape)
        parts.append(array.tobytes())
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


def decode_checkpoint(raw: bytes, path: str = "") -> Checkpoint:
    """
    Raises:
        FormatError: Magic, versão ou CRC inválidos, ou tabela truncada
    """
    minimum = len(MAGIC) + 4 * 4
    if len(raw) < minimum:
        raise FormatError(f"checkpoint truncado ({len(raw)} bytes)", path=path, offset=len(raw))
    if raw[: len(MAGIC)] != MAGIC:
        raise FormatError(f"magic inválido {raw[:len(MAGIC)]!r}", path=path, offset=0)
    body, (stored,) = raw[:-4], _U32.unpack_from(raw, len(raw) - 4)
    actual = zlib.crc32(body)
    if actual != stored:
        raise FormatError(
            f"CRC32 não confere (gravado {stored:08x}, calculado {actual:08x})",
            path=path,
            offset=len(raw) - 4,
        )

    offset = len(MAGIC)
    (version,) = _U32.unpack_from(body, offset)
    if version != VERSION:
        raise FormatError(f"versão {version} não suportada (esperado {VERSION})", path=path, offset=offset)
    offset += 4

    def take(size: int) -> int:
        nonlocal offset
        start = offset
        if start + size > len(body):
            raise FormatError("tabela de tensores truncada", path=path, offset=start)
        offset += size
        return start

    (meta_len,) = _U32.unpack_from(body, take(4))
    start = take(meta_len)
    meta = json.loads(body[start : start + meta_len].decode("utf-8"))
    (count,) = _U32.unpack_from(body, take(4))
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = _NAME.unpack_from(body, take(_NAME.size))
        start = take(name_len)
        name = body[start : start + name_len].decode("utf-8")
        (ndim,) = _NDIM.unpack_from(body, take(_NDIM.size))
        shape = tuple(_U32.unpack_from(body, take(4))[0] for _ in range(ndim))
        size = int(np.prod(shape, dtype=np.int64)) * 4
        start = take(size)
        if size == 0:
            tensors[name] = np.zeros(shape, dtype="<f4")
            continue
        tensors[name] = np.frombuffer(body, dtype="<f4", count=size // 4, offset=start).reshape(shape).copy()
    if offset != len(body):
        raise FormatError(f"{len(body) - offset} bytes sobrando após a tabela", path=path, offset=offset)
    return Checkpoint(config_text=meta["config"], scalars=meta["scalars"], tensors=tensors)


def save_checkpoint(path: PathLike, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(ckpt))
    logger.info("checkpoint salvo em %s", path)
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    return decode_checkpoint(path.read_bytes(), path=str(path))


def read_scalars(path: PathLike) -> Dict[str, Any]:
    """Só os escalares, para listagens que não precisam dos tensores."""
    return load_checkpoint(path).scalars
