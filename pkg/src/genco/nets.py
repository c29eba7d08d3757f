"""MLP generator/discriminator, weight flattening and generator EMA."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import binio
from . import tensor as T

HIDDEN = (64, 64)
LEAK = 0.2


@dataclass(frozen=True)
class Arch:
    """Layer widths from input to output plus activations."""

    sizes: tuple[int, ...]
    out_act: str = "linear"  # "linear" or "tanh"
    slope: float = LEAK

    def __post_init__(self):
        if len(self.sizes) < 2 or any(int(s) < 1 for s in self.sizes):
            raise ValueError(f"layer widths must be >= 1 and at least two: {self.sizes}")
        if self.out_act not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {self.out_act!r}")

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))


def generator_arch(latent_dim: int, out_dim: int, image: bool, hidden: Sequence[int] = HIDDEN) -> Arch:
    return Arch((latent_dim, *hidden, out_dim), out_act="tanh" if image else "linear")


def discriminator_arch(in_dim: int, hidden: Sequence[int] = HIDDEN) -> Arch:
    return Arch((in_dim, *hidden, 1))


@dataclass
class NetworkParams:
    arch: Arch
    entries: list[tuple[str, T.Tensor]] = field(default_factory=list)

    def tensors(self) -> list[T.Tensor]:
        return [t for _, t in self.entries]

    def names(self) -> list[str]:
        return [n for n, _ in self.entries]

    def arrays(self) -> list[np.ndarray]:
        return [t.data for _, t in self.entries]

    def flatten(self) -> T.Tensor:
        return flatten_weights(self)

    def zero_grad(self) -> None:
        for t in self.tensors():
            t.zero_grad()

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, [(n, T.tensor(t.data, requires_grad=True))
                                         for n, t in self.entries])

    def load_arrays(self, arrays: Sequence[np.ndarray]) -> None:
        if len(arrays) != len(self.entries):
            raise ValueError(f"expected {len(self.entries)} arrays, got {len(arrays)}")
        for (name, t), a in zip(self.entries, arrays):
            if np.shape(a) != t.shape:
                raise ValueError(f"{name}: shape {np.shape(a)} != {t.shape}")
            t.data[...] = a


def init_network(arch: Arch, seed) -> NetworkParams:
    """Weights ~ Normal(0, 1/sqrt(fan_in)), biases zero.

    ``seed`` is anything ``numpy.random.default_rng`` accepts, including a
    ``SeedSequence`` spawned from the experiment seed.
    """
    rng = np.random.default_rng(seed)
    entries = []
    for i, (fan_in, fan_out) in enumerate(zip(arch.sizes[:-1], arch.sizes[1:])):
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        entries.append((f"l{i}.weight", T.tensor(w, requires_grad=True)))
        entries.append((f"l{i}.bias", T.tensor(np.zeros((1, fan_out)), requires_grad=True)))
    return NetworkParams(arch, entries)


def forward(params: NetworkParams, x: T.Tensor) -> T.Tensor:
    """Run a ``B x in`` batch through the MLP, returning ``B x out``."""
    arch = params.arch
    if x.data.ndim != 2 or x.shape[1] != arch.sizes[0]:
        raise T.ShapeError(f"network input: expected (B, {arch.sizes[0]}), got {x.shape}")
    ones = T.Tensor(np.ones((x.shape[0], 1)))
    h = x
    tensors = params.tensors()
    n_layers = len(tensors) // 2
    for i in range(n_layers):
        w, b = tensors[2 * i], tensors[2 * i + 1]
        h = T.add(T.matmul(h, w), T.matmul(ones, b))
        if i < n_layers - 1:
            h = T.leaky_relu(h, arch.slope)
        elif arch.out_act == "tanh":
            h = T.tanh(h)
    return h


def predict(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Graph-free forward pass on a plain array, for evaluation."""
    arch = params.arch
    h = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    arrays = params.arrays()
    n_layers = len(arrays) // 2
    for i in range(n_layers):
        h = h @ arrays[2 * i] + arrays[2 * i + 1]
        if i < n_layers - 1:
            h = np.where(h > 0, h, arch.slope * h)
        elif arch.out_act == "tanh":
            h = np.tanh(h)
    return h


def flatten_weights(params: NetworkParams) -> T.Tensor:
    return T.concat(params.tensors())


# ---------------------------------------------------------------- EMA

@dataclass
class EmaShadow:
    decay: float
    shadow: list[np.ndarray]

    @classmethod
    def of(cls, params: NetworkParams, decay: float) -> "EmaShadow":
        if not 0.0 <= decay <= 1.0:
            raise ValueError(f"EMA decay must lie in [0, 1], got {decay}")
        return cls(decay, [a.copy() for a in params.arrays()])

    def as_params(self, like: NetworkParams) -> NetworkParams:
        out = like.copy()
        out.load_arrays(self.shadow)
        return out


def ema_update(shadow: EmaShadow, current: NetworkParams) -> EmaShadow:
    """shadow <- decay * shadow + (1 - decay) * current, in place."""
    arrays = current.arrays()
    if len(arrays) != len(shadow.shadow):
        raise ValueError("EMA shadow and network have different layer counts")
    d = shadow.decay
    for s, a in zip(shadow.shadow, arrays):
        if s.shape != a.shape:
            raise ValueError(f"EMA shape mismatch {s.shape} vs {a.shape}")
        s *= d
        s += (1.0 - d) * a
    return shadow


# ---------------------------------------------------------------- checkpoints

def save_networks(path, nets: dict[str, NetworkParams], meta: dict | None = None) -> None:
    arrays = {f"{key}/{name}": t.data for key, p in nets.items() for name, t in p.entries}
    binio.save(path, arrays, meta)


def load_networks(path, nets: dict[str, NetworkParams]) -> dict:
    arrays, meta = binio.load(path)
    for key, p in nets.items():
        p.load_arrays([arrays[f"{key}/{name}"] for name in p.names()])
    return meta
