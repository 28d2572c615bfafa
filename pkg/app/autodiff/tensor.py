# autodiff/tensor.py
import contextvars
import logging
from contextlib import contextmanager
from typing import Any, Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import ContractError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

_DTYPE: contextvars.ContextVar = contextvars.ContextVar("mimae_dtype", default=np.float32)

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]
GradFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


def get_dtype() -> type:
    """Retorna o dtype de ponto flutuante ativo (float32 por padrão)."""
    return _DTYPE.get()


@contextmanager
def precision(dtype: Any) -> Iterator[None]:
    """
    Troca a precisão dos tensores criados dentro do bloco.

    O valor vive numa contextvar, então cada thread enxerga o seu.

    Args:
        dtype: np.float32 ou np.float64
    """
    token = _DTYPE.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _DTYPE.reset(token)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Soma as dimensões expandidas por broadcasting até voltar a `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for dim, size in enumerate(shape):
        if size == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad


class Tensor:
    """
    Array denso com gradiente opcional, base de toda a matemática do projeto.

    Attributes:
        data (np.ndarray): Valores em ordem row-major
        grad (Optional[np.ndarray]): Gradiente acumulado, mesmo shape de `data`
        requires_grad (bool): Se o tensor participa do backward
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str = ""):
        self.data = np.array(data, dtype=get_dtype())
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._grad_fn: Optional[GradFn] = None

    @classmethod
    def _from_op(
        cls,
        out: np.ndarray,
        parents: Sequence["Tensor"],
        grad_fn: GradFn,
        op: str,
    ) -> "Tensor":
        out = np.asarray(out, dtype=get_dtype())
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"{op} produziu valores não finitos")
        tensor = cls.__new__(cls)
        tensor.data = out
        tensor.grad = None
        tensor.name = ""
        tensor.requires_grad = any(p.requires_grad for p in parents)
        if tensor.requires_grad:
            tensor._parents = tuple(parents)
            tensor._grad_fn = grad_fn
        else:
            tensor._parents = ()
            tensor._grad_fn = None
        return tensor

    # propriedades -----------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._grad_fn is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() exige um escalar, shape={self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Cópia sem histórico: o gradiente não atravessa este ponto."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.name = self.name
        out.requires_grad = False
        out._parents = ()
        out._grad_fn = None
        return out

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self, retain_graph: bool = False) -> None:
        backward(self, retain_graph=retain_graph)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # aritmética -------------------------------------------------------------

    def __add__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._from_op(
            self.data + other.data,
            (self, other),
            lambda g: (unbroadcast(g, a_shape), unbroadcast(g, b_shape)),
            "add",
        )

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._from_op(
            self.data - other.data,
            (self, other),
            lambda g: (unbroadcast(g, a_shape), unbroadcast(-g, b_shape)),
            "sub",
        )

    def __rsub__(self, other: Any) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._from_op(
            a * b,
            (self, other),
            lambda g: (unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._from_op(
            a / b,
            (self, other),
            lambda g: (
                unbroadcast(g / b, a.shape),
                unbroadcast(-g * a / (b * b), b.shape),
            ),
            "div",
        )

    def __rtruediv__(self, other: Any) -> "Tensor":
        return as_tensor(other) / self

    def __neg__(self) -> "Tensor":
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float) -> "Tensor":
        a = self.data
        return Tensor._from_op(
            a**exponent,
            (self,),
            lambda g: (g * exponent * a ** (exponent - 1),),
            "pow",
        )

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * out,), "exp")

    def log(self) -> "Tensor":
        a = self.data
        return Tensor._from_op(np.log(a), (self,), lambda g: (g / a,), "log")

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * 0.5 / out,), "sqrt")

    # reduções ---------------------------------------------------------------

    def sum(self, axis: Union[int, Tuple[int, ...], None] = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), grad_fn, "sum")

    def mean(self, axis: Union[int, Tuple[int, ...], None] = None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # forma ------------------------------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"reshape inválido de {original} para {shape}") from exc
        return Tensor._from_op(out, (self,), lambda g: (g.reshape(original),), "reshape")

    def transpose(self, *axes: int) -> "Tensor":
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor._from_op(
            self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),), "transpose"
        )

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(*axes)

    def __getitem__(self, key: Any) -> "Tensor":
        if isinstance(key, Tensor):
            raise ContractError("indexação por Tensor não é suportada")
        shape = self.shape
        dtype = self.data.dtype

        def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
            full = np.zeros(shape, dtype=dtype)
            np.add.at(full, key, g)
            return (full,)

        return Tensor._from_op(self.data[key], (self,), grad_fn, "getitem")


def as_tensor(value: Any) -> Tensor:
    """Converte escalares e arrays em tensores constantes."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Produto matricial (com dimensões de lote à esquerda).

    Backward: dA = dC·Bᵀ e dB = Aᵀ·dC, somando as dimensões de lote
    quando um dos operandos é 2-D.

    Raises:
        ShapeError: Se as dimensões internas não coincidirem
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul exige operandos com ao menos 2 dimensões: {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul com dimensões internas diferentes: {a.shape} x {b.shape}")
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul com lotes diferentes: {a.shape} x {b.shape}")
    x, y = a.data, b.data

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ga = np.matmul(g, np.swapaxes(y, -1, -2))
        gb = np.matmul(np.swapaxes(x, -1, -2), g)
        return unbroadcast(ga, x.shape), unbroadcast(gb, y.shape)

    return Tensor._from_op(np.matmul(x, y), (a, b), grad_fn, "matmul")


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, retain_graph: bool = False) -> None:
    """
    Propaga ∂loss/∂t para todo tensor folha com requires_grad alcançável.

    Gradientes se acumulam nas folhas entre chamadas; a fita é descartada
    ao final, a menos que `retain_graph` seja verdadeiro. Uma folha que a
    perda não alcança mantém o grad que tinha: None (gradiente zero) ou os
    zeros deixados por `zero_grad`.

    Raises:
        ContractError: Se `loss` não for escalar
    """
    if loss.data.size != 1:
        raise ContractError(f"backward exige uma perda escalar, shape={loss.shape}")
    if not loss.requires_grad:
        return

    order = _topological_order(loss)
    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._grad_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg

    if not retain_graph:
        for node in order:
            if node._grad_fn is not None:
                node._parents = ()
                node._grad_fn = None
