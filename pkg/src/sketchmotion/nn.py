"""Layers, parameter registry, Adam, checkpoint IO, and gradient checking."""

from __future__ import annotations

import json

import numpy as np

from .autodiff import Tensor, conv1d_same, matmul, no_grad, softmax, sqrt, tanh

CHECKPOINT_VERSION = 1


class Module:
    """Base class with recursive named-parameter discovery."""

    def named_params(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor):
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.named_params(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Tensor):
                        out[f"{key}.{i}"] = item
                    elif isinstance(item, Module):
                        out.update(item.named_params(f"{key}.{i}."))
        return out

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.named_params().values():
            p.requires_grad = flag

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_params().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_params()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int):
        self.w = Tensor(glorot(rng, d_in, d_out, (d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.w) + self.b


class Conv1d(Module):
    """Same-padded stride-1 convolution over the time axis of (..., T, Cin)."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, k: int = 3):
        fan_in = c_in * k
        self.w = Tensor(glorot(rng, fan_in, c_out, (k, c_in, c_out)), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d_same(x, self.w, self.b)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / sqrt(var + self._eps) * self.gain + self.bias


class FeedForward(Module):
    def __init__(self, rng: np.random.Generator, dim: int, hidden: int):
        self.fc1 = Linear(rng, dim, hidden)
        self.fc2 = Linear(rng, hidden, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(tanh(self.fc1(x)))


class DotProductSelfAttention(Module):
    """Single-head scaled dot-product self-attention (no positional terms)."""

    def __init__(self, rng: np.random.Generator, dim: int):
        self.q = Linear(rng, dim, dim)
        self.k = Linear(rng, dim, dim)
        self.v = Linear(rng, dim, dim)
        self._scale = 1.0 / np.sqrt(dim)

    def __call__(self, x: Tensor) -> Tensor:
        q, k, v = self.q(x), self.k(x), self.v(x)
        att = softmax(matmul(q, k.swap_last()) * self._scale, axis=-1)
        return matmul(att, v)


def sinusoid_table(positions: np.ndarray, dim: int) -> np.ndarray:
    """Standard sine/cosine embedding of integer positions, shape (len, dim)."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = positions * freqs
    table = np.zeros((positions.shape[0], dim))
    table[:, 0::2] = np.sin(angles)[:, : (dim + 1) // 2]
    table[:, 1::2] = np.cos(angles)[:, : dim // 2]
    return table


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            m = self._m[k] = self.b1 * self._m[k] + (1.0 - self.b1) * p.grad
            v = self._v[k] = self.b2 * self._v[k] + (1.0 - self.b2) * p.grad**2
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# -- checkpoint IO --------------------------------------------------------------


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Versioned record of named arrays plus a JSON metadata blob."""
    payload = {f"arr::{k}": np.asarray(v) for k, v in arrays.items()}
    header = {"version": CHECKPOINT_VERSION, "meta": meta,
              "shapes": {k: list(np.asarray(v).shape) for k, v in arrays.items()}}
    payload["__meta__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path) as z:
        header = json.loads(bytes(z["__meta__"]).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        arrays = {k[5:]: z[k] for k in z.files if k.startswith("arr::")}
    for k, shape in header["shapes"].items():
        if list(arrays[k].shape) != shape:
            raise ValueError(f"corrupt checkpoint: {k} shape {arrays[k].shape} != {shape}")
    return arrays, header["meta"]


# -- finite-difference gradient checking ----------------------------------------


def fd_check_params(loss_fn, params: dict[str, Tensor], entries_per_param: int = 6,
                    h: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between analytic grads and central differences.

    Checks a seeded sample of entries from every parameter array. The relative
    error denominator is floored at 1e-3 so vanishing gradients are compared
    absolutely (plain relative error is undefined at zero).
    """
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    for name, p in params.items():
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        n = flat.size
        idxs = rng.choice(n, size=min(entries_per_param, n), replace=False)
        for i in idxs:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                dn = loss_fn().item()
            flat[i] = orig
            fd = (up - dn) / (2.0 * h)
            an = grad.reshape(-1)[i]
            denom = max(abs(fd), abs(an), 1e-3)
            worst = max(worst, abs(fd - an) / denom)
    return worst


def fd_check_tensor(loss_fn, x: Tensor, entries: int = 24, h: float = 1e-5,
                    seed: int = 0) -> float:
    """Same as fd_check_params but for a single non-parameter leaf tensor."""
    return fd_check_params(loss_fn, {"x": x}, entries_per_param=entries, h=h, seed=seed)
