# nn/layers.py
from typing import Dict, Iterator, List, Tuple

import numpy as np

from app.autodiff.functional import activation, layer_norm, softmax
from app.autodiff.tensor import Tensor, get_dtype
from app.errors import ShapeError


class Module:
    """
    Base das camadas: descobre parâmetros pelos atributos, na ordem em que foram criados.

    Parâmetros são tensores com requires_grad; submódulos podem estar em
    atributos diretos ou em listas.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Copia os valores para os parâmetros existentes.

        Raises:
            ShapeError: Chave faltando, sobrando ou shape diferente
        """
        own = dict(self.named_parameters())
        if set(own) != set(state):
            faltando = sorted(set(own) - set(state))
            sobrando = sorted(set(state) - set(own))
            raise ShapeError(f"state_dict incompatível: faltando {faltando}, sobrando {sobrando}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ShapeError(f"{name}: shape {value.shape} != {p.shape}")
            p.data[...] = value


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear(Module):
    """y = x·W + b, com W (entrada × saída) inicializado por Xavier uniforme."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias_init: float = 0.0):
        self.weight = Tensor(xavier_uniform(rng, in_dim, out_dim), requires_grad=True)
        self.bias = Tensor(np.full(out_dim, bias_init), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(f"Linear espera última dimensão {self.weight.shape[0]}, recebeu {x.shape}")
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(activation(self.fc1(x), "gelu"))


class MultiHeadAttention(Module):
    """Autoatenção multi-cabeça sem máscara sobre B×T×D."""

    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator):
        if dim % num_heads:
            raise ShapeError(f"dim {dim} não divisível por {num_heads} cabeças")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        qkv = self.qkv(x).reshape(b, t, 3, self.num_heads, self.head_dim).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = (q @ k.swapaxes(-1, -2)) * (self.head_dim**-0.5)
        out = softmax(scores, axis=-1) @ v
        return self.proj(out.transpose(0, 2, 1, 3).reshape(b, t, d))


class Block(Module):
    """Bloco transformer pré-norma: atenção e MLP com GELU, ambos residuais."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: int, rng: np.random.Generator):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, num_heads, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, dim * mlp_ratio, rng)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


def token(rng: np.random.Generator, dim: int, std: float = 0.02) -> Tensor:
    """Token aprendível 1×1×dim (classe ou máscara)."""
    return Tensor(rng.normal(0.0, std, size=(1, 1, dim)).astype(get_dtype()), requires_grad=True)
