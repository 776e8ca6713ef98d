"""Layers, a parameter registry and the checkpoint format."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .tensor import Tensor, batch_norm, linear


class Module:
    """Minimal container: parameters are discovered from attributes in definition order."""

    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self):
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, (Tensor, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Tensor, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in self._children():
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield prefix + name, value
            else:
                yield from value.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in getattr(self, "_buffer_names", ()):
            yield prefix + name, getattr(self, name)
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(prefix + name + ".")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        for name, p in params.items():
            if state[name].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {state[name].shape} vs {p.data.shape}")
            p.data[...] = state[name]
        for name, buf in self.named_buffers():
            buf[...] = state[name]


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        limit = np.sqrt(6.0 / (n_in + n_out))
        self.weight = Tensor(rng.uniform(-limit, limit, size=(n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class BatchNorm(Module):
    """Per-column batch normalization; running statistics follow ``r <- m*r + (1-m)*batch``."""

    _buffer_names = ("running_mean", "running_var")

    def __init__(self, n: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(n), requires_grad=True)
        self.beta = Tensor(np.zeros(n), requires_grad=True)
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        if self.training:
            out, mean, var = batch_norm(x, self.gamma, self.beta, self.eps)
            self.running_mean *= self.momentum
            self.running_mean += (1.0 - self.momentum) * mean
            self.running_var *= self.momentum
            self.running_var += (1.0 - self.momentum) * var
            return out
        out, _, _ = batch_norm(x, self.gamma, self.beta, self.eps, self.running_mean, self.running_var)
        return out


class MLP(Module):
    """Input batch norm, then fully-connected tanh layers and a linear head.

    ``mask`` (broadcastable to the batch) multiplies the normalized input, so
    a zero entry removes a feature regardless of its raw scale.
    """

    def __init__(self, n_in: int, widths: Sequence[int], n_out: int, rng: np.random.Generator):
        self.n_in = n_in
        self.bn = BatchNorm(n_in)
        sizes = [n_in, *widths]
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.head = Linear(sizes[-1], n_out, rng)

    def normalize(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"expected input of width {self.n_in}, got shape {x.shape}")
        return self.bn(x)

    def hidden(self, h: Tensor) -> Tensor:
        for layer in self.layers:
            h = layer(h).tanh()
        return self.head(h)

    def forward(self, x, mask=None) -> Tensor:
        h = self.normalize(x)
        if mask is not None:
            h = h * mask
        return self.hidden(h)


class Ranker(MLP):
    """Scores documents: one real per row."""

    def __init__(self, n_in: int, widths: Sequence[int], rng: np.random.Generator):
        super().__init__(n_in, widths, 1, rng)

    def forward(self, x, mask=None) -> Tensor:
        return super().forward(x, mask).reshape(-1)


def save_checkpoint(module: Module, path) -> tuple[Path, Path]:
    """Write ``<path>.json`` (names, shapes, dtype) and ``<path>.bin`` (little-endian float64)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = module.state_dict()
    manifest = {
        "dtype": "float64",
        "byte_order": "little",
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in state.items()],
    }
    json_path = path.with_suffix(".json")
    bin_path = path.with_suffix(".bin")
    json_path.write_text(json.dumps(manifest, indent=1) + "\n")
    with open(bin_path, "wb") as fh:
        for v in state.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
    return json_path, bin_path


def load_checkpoint(module: Module, path) -> None:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    blob = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    state, offset = {}, 0
    for entry in manifest["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        state[entry["name"]] = blob[offset:offset + n].reshape(entry["shape"]).astype(np.float64)
        offset += n
    if offset != blob.size:
        raise ValueError(f"checkpoint blob has {blob.size} values, manifest describes {offset}")
    module.load_state_dict(state)
