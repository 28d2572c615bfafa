# autodiff/functional.py
from typing import Optional, Sequence, Tuple

import numpy as np

from app.autodiff.tensor import Tensor, as_tensor, matmul
from app.errors import ContractError, ShapeError

__all__ = [
    "matmul",
    "softmax",
    "logsumexp",
    "log1p_sumexp",
    "layer_norm",
    "activation",
    "concat",
    "stack",
    "gather_rows",
    "scatter_rows",
    "l2_normalize",
]

LEAKY_SLOPE = 0.01
LN_EPS = 1e-6
_GELU_C = float(np.sqrt(2.0 / np.pi))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """
    Softmax estável (subtrai o máximo antes da exponencial).

    Args:
        x (Tensor): Entrada
        axis (int): Eixo normalizado

    Returns:
        Tensor: Valores em (0, 1) que somam 1 ao longo de `axis`
    """
    if not -x.ndim <= axis < x.ndim:
        raise ContractError(f"eixo {axis} inválido para shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), grad_fn, "softmax")


def logsumexp(x: Tensor, axis: int = -1, where: Optional[np.ndarray] = None) -> Tensor:
    """
    log Σ exp(x) ao longo de `axis`, considerando só as posições de `where`.

    Args:
        x (Tensor): Entrada
        axis (int): Eixo reduzido
        where (Optional[np.ndarray]): Máscara booleana com o shape de `x`

    Raises:
        ContractError: Se alguma linha não tiver posição válida
    """
    data = x.data
    keep = np.ones(data.shape, dtype=bool) if where is None else np.broadcast_to(where, data.shape)
    if not np.all(keep.any(axis=axis)):
        raise ContractError("logsumexp sem nenhum termo em alguma linha")
    m = np.where(keep, data, -np.inf).max(axis=axis, keepdims=True)
    e = np.where(keep, np.exp(np.where(keep, data - m, 0.0)), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    out = (m + np.log(s)).squeeze(axis)
    weights = e / s

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        return (np.expand_dims(g, axis) * weights,)

    return Tensor._from_op(out, (x,), grad_fn, "logsumexp")


def log1p_sumexp(x: Tensor, axis: int = -1, where: Optional[np.ndarray] = None) -> Tensor:
    """
    log(1 + Σ exp(x)) ao longo de `axis`, só nas posições de `where`.

    Com x = s_c − s_positivo isto é a perda InfoNCE sem o cancelamento de
    logsumexp(s) − s_positivo. Linhas sem posição válida valem 0.
    """
    data = x.data
    keep = np.ones(data.shape, dtype=bool) if where is None else np.broadcast_to(where, data.shape)
    m = np.maximum(np.where(keep, data, -np.inf).max(axis=axis, keepdims=True), 0.0)
    e = np.where(keep, np.exp(np.where(keep, data - m, 0.0)), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    base = np.exp(-m)
    out = np.where(m > 0, m + np.log(base + s), np.log1p(s)).squeeze(axis).astype(data.dtype)
    weights = e / (base + s)

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        return (np.expand_dims(g, axis) * weights,)

    return Tensor._from_op(out, (x,), grad_fn, "log1p_sumexp")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    """
    Normalização por linha (variância populacional + eps) seguida de afim.

    Raises:
        ShapeError: Se ganho/viés não casarem com a última dimensão
    """
    n = x.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(f"layer_norm: ganho {gain.shape} / viés {bias.shape} para dimensão {n}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    w = gain.data

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        dxhat = g * w
        dx = (
            inv_std
            / n
            * (
                n * dxhat
                - dxhat.sum(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
            )
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._from_op(xhat * w + bias.data, (x, gain, bias), grad_fn, "layer_norm")


def activation(x: Tensor, kind: str) -> Tensor:
    """
    Não-linearidade elemento a elemento.

    Args:
        x (Tensor): Entrada
        kind (str): gelu (aproximação tanh), relu ou leaky_relu (inclinação 0.01)
    """
    a = x.data
    if kind == "gelu":
        inner = _GELU_C * (a + 0.044715 * a**3)
        t = np.tanh(inner)
        out = 0.5 * a * (1.0 + t)
        local = 0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * a * a)
    elif kind == "relu":
        out = np.maximum(a, 0.0)
        local = (a > 0).astype(a.dtype)
    elif kind == "leaky_relu":
        out = np.where(a > 0, a, LEAKY_SLOPE * a)
        local = np.where(a > 0, 1.0, LEAKY_SLOPE).astype(a.dtype)
    else:
        raise ContractError(f"ativação desconhecida: {kind}")
    return Tensor._from_op(out, (x,), lambda g: (g * local,), kind)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(
        np.concatenate([t.data for t in tensors], axis=axis), tensors, grad_fn, "concat"
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    count = len(tensors)

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(np.take(g, i, axis=axis) for i in range(count))

    return Tensor._from_op(np.stack([t.data for t in tensors], axis=axis), tensors, grad_fn, "stack")


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """
    Seleciona linhas por amostra: x[b, index[b, v], :].

    Args:
        x (Tensor): B×P×D
        index (np.ndarray): B×V inteiros em [0, P)
    """
    if x.ndim != 3 or index.ndim != 2 or index.shape[0] != x.shape[0]:
        raise ShapeError(f"gather_rows: x {x.shape}, índice {index.shape}")
    rows = np.arange(x.shape[0])[:, None]
    shape, dtype = x.shape, x.data.dtype

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, (rows, index), g)
        return (full,)

    return Tensor._from_op(x.data[rows, index], (x,), grad_fn, "gather_rows")


def scatter_rows(x: Tensor, index: np.ndarray, num_rows: int) -> Tensor:
    """
    Inverso de `gather_rows`: espalha B×V×D em B×num_rows×D com zeros no resto.

    Índices repetidos numa mesma amostra não são permitidos.
    """
    if x.ndim != 3 or index.shape != x.shape[:2]:
        raise ShapeError(f"scatter_rows: x {x.shape}, índice {index.shape}")
    rows = np.arange(x.shape[0])[:, None]
    out = np.zeros((x.shape[0], num_rows, x.shape[2]), dtype=x.data.dtype)
    out[rows, index] = x.data
    return Tensor._from_op(out, (x,), lambda g: (g[rows, index],), "scatter_rows")


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    """
    Divide cada vetor pela sua norma L2.

    Raises:
        ContractError: Para vetores de norma zero
    """
    norms = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    if np.any(norms == 0):
        raise ContractError("vetor de norma zero não tem similaridade de cosseno")
    return x / (x * x).sum(axis=axis, keepdims=True).sqrt()

