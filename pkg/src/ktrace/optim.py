"""Parameter registry, uniform fan-based initialization, and Adam updates."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor


def xavier_init(fan_in: int, fan_out: int, shape, rng: np.random.Generator) -> Tensor:
    """Uniform init on (-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be >= 1, got ({fan_in}, {fan_out})")
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape))


class ParamStore:
    """Named trainable tensors plus per-tensor Adam moments and a shared step.

    `constants` holds tensors that are part of the model but excluded from
    optimization (e.g. a frozen memory matrix); they are checkpointed with
    everything else but never receive updates.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.constants: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, tensor: Tensor, trainable: bool = True) -> Tensor:
        if name in self.params or name in self.constants:
            raise ValueError(f"duplicate parameter name: {name}")
        if trainable:
            tensor.requires_grad = True
            self.params[name] = tensor
            self.m[name] = np.zeros_like(tensor.data)
            self.v[name] = np.zeros_like(tensor.data)
        else:
            tensor.requires_grad = False
            self.constants[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        if name in self.params:
            return self.params[name]
        return self.constants[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params or name in self.constants

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Collect gradients after backward; parameters never touched get zeros."""
        out = {}
        for name, p in self.params.items():
            out[name] = np.zeros_like(p.data) if p.grad is None else p.grad
        return out

    def copy_values(self) -> dict[str, np.ndarray]:
        vals = {n: p.data.copy() for n, p in self.params.items()}
        vals.update({n: p.data.copy() for n, p in self.constants.items()})
        return vals

    def load_values(self, values: dict[str, np.ndarray]):
        for name, arr in values.items():
            self[name].data = np.array(arr, dtype=np.float64)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients down so their joint L2 norm is at most `max_norm`."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


def adam_step(store: ParamStore, grads: dict[str, np.ndarray], hyper) -> None:
    """Standard bias-corrected Adam update, applied in place.

    `grads` must cover exactly the trainable parameters; any missing key or
    non-finite gradient is rejected before touching the parameters.
    """
    missing = set(store.params) - set(grads)
    if missing:
        raise KeyError(f"missing gradients for: {sorted(missing)}")
    extra = set(grads) - set(store.params)
    if extra:
        raise KeyError(f"gradients for unknown parameters: {sorted(extra)}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter '{name}'")

    store.step += 1
    t = store.step
    b1, b2 = hyper.beta1, hyper.beta2
    for name, g in grads.items():
        m = store.m[name]
        v = store.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        store.params[name].data -= hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
