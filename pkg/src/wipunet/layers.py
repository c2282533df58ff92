"""Trainable building blocks assembled from engine ops.

Modules register parameters and submodules automatically on attribute
assignment (lists of modules included), so checkpoints and optimizers can
walk a deterministic, insertion-ordered name space.
"""

from __future__ import annotations

import numpy as np

from . import engine as en
from .engine import ShapeError, Tensor
from .rng import Rng


class Module:
    """Base class: assigning a Tensor registers a parameter, a Module a child."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            self._children[name] = list(value)
        else:
            self._params.pop(name, None)
            self._children.pop(name, None)
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            if isinstance(child, list):
                for i, m in enumerate(child):
                    yield from m.named_parameters(f"{prefix}{name}.{i}.")
            else:
                yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def param_count(self) -> int:
        return sum(p.numel for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Conv2d(Module):
    """Square-kernel convolution layer; pad defaults to k//2 (shape-preserving)."""

    def __init__(self, c_in, c_out, k=3, stride=1, pad=None, bias=True, init="he", rng=None):
        super().__init__()
        self.k = int(k)
        self.stride = int(stride)
        self.pad = self.k // 2 if pad is None else int(pad)
        if init == "he":
            if rng is None:
                raise ValueError("he init needs an rng")
            fan_in = c_in * k * k
            data = rng.normal((c_out, c_in, k, k)) * np.sqrt(2.0 / fan_in)
        elif init == "zero":
            data = np.zeros((c_out, c_in, k, k))
        else:
            raise ValueError(f"unknown init {init!r}")
        self.w = Tensor(data.astype(np.float32), requires_grad=True)
        self.b = Tensor.zeros((1, c_out, 1, 1), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return en.conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)


class SEBlock(Module):
    """Channel gating: squeeze by global average pool, excite via a sigmoid MLP.

    The two 1x1 convs act on the pooled (n, c, 1, 1) vector. The expand bias
    starts at +2 so gates open near pass-through and the block perturbs a
    freshly initialized network only mildly.
    """

    def __init__(self, channels, reduction=8, rng=None, gate_bias=2.0):
        super().__init__()
        hidden = channels // reduction
        if hidden < 1:
            raise ValueError(f"SE reduction {reduction} leaves no hidden channels for c={channels}")
        self.reduce = Conv2d(channels, hidden, k=1, pad=0, rng=rng)
        self.expand = Conv2d(hidden, channels, k=1, pad=0, rng=rng)
        self.expand.b.data[:] = gate_bias

    def forward(self, x: Tensor) -> Tensor:
        s = en.global_avg_pool(x)
        s = en.relu(self.reduce(s))
        s = en.sigmoid(self.expand(s))
        return en.mul(x, s)


class ResBlock(Module):
    """Two 3x3 convs plus a skip; optional 2x down- or upsampling.

    mode "same": identity skip when channels match, 1x1 projection otherwise.
    mode "down": first conv and the 1x1 projection use stride 2.
    mode "up":   nearest 2x upsampling is applied before both paths.

    The second conv is zero-initialized, so a shape-preserving block with
    matching channels is bitwise the identity at init.
    """

    def __init__(self, c_in, c_out, mode="same", rng=None):
        super().__init__()
        if mode not in ("same", "down", "up"):
            raise ValueError(f"unknown ResBlock mode {mode!r}")
        self.mode = mode
        stride = 2 if mode == "down" else 1
        self.conv1 = Conv2d(c_in, c_out, 3, stride=stride, pad=1, rng=rng)
        self.conv2 = Conv2d(c_out, c_out, 3, pad=1, init="zero")
        if mode == "down" or c_in != c_out:
            self.proj = Conv2d(c_in, c_out, 1, stride=stride, pad=0, rng=rng)
        else:
            self.proj = None

    def forward(self, x: Tensor) -> Tensor:
        if self.mode == "up":
            x = en.nearest_up2(x)
        h = en.relu(self.conv1(x))
        h = self.conv2(h)
        s = self.proj(x) if self.proj is not None else x
        return en.add(s, h)


def make_sigma_channel(n: int, h: int, w: int, sigma: float) -> Tensor:
    """Constant noise-level plane sigma/255 with shape (n, 1, h, w)."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    return Tensor.full((n, 1, h, w), float(sigma) / 255.0)
