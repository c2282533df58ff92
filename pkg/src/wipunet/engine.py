"""Minimal reverse-mode autodiff engine over rank-4 float32 tensors.

Everything in the package that trains flows through this module. The design
trades generality for auditability:

  * one tensor layout, (n, c, h, w) float32; scalars are (1, 1, 1, 1)
  * an explicit Tape that records op applications in execution order and
    replays registered backward closures in exact reverse order
  * deterministic numerics: no threading, no op fusion, accumulation order
    fixed by recording order

Gradients accumulate (sum) into the .grad buffer of leaf tensors that were
created with requires_grad=True. Intermediate gradients live only inside the
backward pass. A tape is consumed by backward() and cannot be reused.

Convolution is im2col plus a single sgemm per call; its backward rebuilds the
column matrix from the saved padded input instead of caching it, which keeps
live tape memory proportional to activations rather than to unrolled patches.
"""

from __future__ import annotations

import threading

import numpy as np

__all__ = [
    "ShapeError",
    "NumericError",
    "Tensor",
    "Tape",
    "backward",
    "conv2d",
    "activation",
    "relu",
    "sigmoid",
    "softplus",
    "ewise",
    "add",
    "sub",
    "mul",
    "scale",
    "global_avg_pool",
    "resample",
    "avgpool2",
    "nearest_up2",
    "concat_channels",
    "slice_channels",
    "pad_reflect",
    "crop",
    "mse",
    "reflect_indices",
]


class ShapeError(ValueError):
    """Operand shapes violate an op contract."""


class NumericError(ArithmeticError):
    """Non-finite values reached a numerically sensitive op."""


class Tensor:
    """A rank-4 float32 array plus an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_live", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim != 4:
            raise ShapeError(f"tensors are rank-4 (n, c, h, w); got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._live = False
        self._tape = None

    @staticmethod
    def zeros(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=np.float32), requires_grad)

    @staticmethod
    def full(shape, value: float, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.full(shape, value, dtype=np.float32), requires_grad)

    @staticmethod
    def scalar(value: float, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.full((1, 1, 1, 1), value, dtype=np.float32), requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def numel(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A view of the same data with no autodiff history."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flags = []
        if self.requires_grad:
            flags.append("requires_grad")
        if self.grad is not None:
            flags.append("grad")
        tail = (", " + ", ".join(flags)) if flags else ""
        return f"Tensor(shape={self.shape}{tail})"


_tls = threading.local()


def _active_tape():
    return getattr(_tls, "tape", None)


class Tape:
    """Records op applications; replays their backwards in reverse order."""

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _tls.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tls.tape = None

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss) = 1 and accumulate grads into leaf tensors.

        The tape is consumed: a second backward raises.
        """
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward()")
        if loss.data.shape != (1, 1, 1, 1):
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
        if not self._nodes:
            raise RuntimeError("tape is empty; loss was not recorded on it")
        self._consumed = True

        grads = {id(loss): np.ones((1, 1, 1, 1), dtype=np.float32)}
        leaves = {}
        leaf_order = []
        for name, inputs, out, fn in reversed(self._nodes):
            g_out = grads.pop(id(out), None)
            if g_out is None:
                continue
            in_grads = fn(g_out)
            for t, g in zip(inputs, in_grads):
                if g is None or not (t.requires_grad or t._live):
                    continue
                prev = grads.get(id(t))
                grads[id(t)] = g if prev is None else prev + g
                if t.requires_grad and not t._live and id(t) not in leaves:
                    leaves[id(t)] = t
                    leaf_order.append(id(t))
        for key in leaf_order:
            t = leaves[key]
            g = grads.get(key)
            if g is None:
                continue
            t.grad = g.astype(np.float32, copy=False) if t.grad is None else t.grad + g
        self._nodes.clear()


def backward(loss: Tensor) -> None:
    """Run backward on the tape that recorded the loss."""
    tape = loss._tape
    if tape is None:
        raise RuntimeError("loss has no recorded history; compute it under a Tape")
    tape.backward(loss)


def _track(name: str, inputs: tuple, out: Tensor, fn) -> Tensor:
    tape = _active_tape()
    if tape is None or tape._consumed:
        return out
    if not any(t.requires_grad or t._live for t in inputs):
        return out
    out._live = True
    out._tape = tape
    tape._nodes.append((name, inputs, out, fn))
    return out


# ---------------------------------------------------------------------------
# convolution


def _im2col(xp: np.ndarray, k: int, stride: int):
    """Unroll k x k patches of a padded (n,c,h,w) array into a 2d matrix."""
    view = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    view = view[:, :, ::stride, ::stride]
    n, c, ho, wo = view.shape[:4]
    cols = np.ascontiguousarray(view.transpose(0, 2, 3, 1, 4, 5))
    return cols.reshape(n * ho * wo, c * k * k), ho, wo


def _col2im(dcols: np.ndarray, xp_shape, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Scatter-add column gradients back onto the padded input layout."""
    n, c, hp, wp = xp_shape
    dxp = np.zeros(xp_shape, dtype=np.float32)
    dd = dcols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 1, 2, 4, 5)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dd[:, :, :, :, i, j]
    return dxp


def conv2d(x: Tensor, w: Tensor, b=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2d cross-correlation with a square kernel, optional (1,co,1,1) bias."""
    n, ci, h, wd = x.shape
    co, ci_w, k, k2 = w.shape
    if k != k2:
        raise ShapeError(f"conv kernels are square; got {k}x{k2}")
    if ci_w != ci:
        raise ShapeError(f"conv expects {ci_w} input channels, got {ci}")
    if stride < 1 or pad < 0:
        raise ShapeError(f"bad conv geometry: stride={stride} pad={pad}")
    if h + 2 * pad < k or wd + 2 * pad < k:
        raise ShapeError(f"kernel {k} exceeds padded input {h + 2 * pad}x{wd + 2 * pad}")
    if b is not None and b.shape != (1, co, 1, 1):
        raise ShapeError(f"conv bias must be (1,{co},1,1), got {b.shape}")
    if not np.isfinite(x.data).all() or not np.isfinite(w.data).all():
        raise NumericError("non-finite values in conv2d input")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols, ho, wo = _im2col(xp, k, stride)
    w2 = w.data.reshape(co, ci * k * k)
    y = cols @ w2.T
    y = np.ascontiguousarray(y.reshape(n, ho, wo, co).transpose(0, 3, 1, 2))
    if b is not None:
        y += b.data
    out = Tensor(y)

    def fn(g: np.ndarray):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, co)
        cols_b, _, _ = _im2col(xp, k, stride)
        dw = (g2.T @ cols_b).reshape(w.shape)
        dcols = g2 @ w2
        dxp = _col2im(dcols, xp.shape, k, stride, ho, wo)
        dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
        if b is None:
            return dx, dw
        db = g.sum(axis=(0, 2, 3)).reshape(1, co, 1, 1)
        return dx, dw, db

    inputs = (x, w) if b is None else (x, w, b)
    return _track("conv2d", inputs, out, fn)


# ---------------------------------------------------------------------------
# activations


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))

    def fn(g):
        return ((x.data > 0.0).astype(np.float32) * g,)

    return _track("relu", (x,), out, fn)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    out = Tensor(s)

    def fn(g):
        return (s * (1.0 - s) * g,)

    return _track("sigmoid", (x,), out, fn)


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), computed as logaddexp(0, x) so large x does not overflow."""
    out = Tensor(np.logaddexp(0.0, x.data.astype(np.float64)).astype(np.float32))

    def fn(g):
        return (_sigmoid(x.data) * g,)

    return _track("softplus", (x,), out, fn)


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "softplus": softplus}


def activation(kind: str, x: Tensor) -> Tensor:
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic with (broadcast) reduction-aware backward


def _broadcast_check(a: Tensor, b: Tensor) -> tuple:
    out_shape = []
    for da, db in zip(a.shape, b.shape):
        if da == db or db == 1:
            out_shape.append(da)
        elif da == 1:
            out_shape.append(db)
        else:
            raise ShapeError(f"shapes {a.shape} and {b.shape} do not broadcast")
    return tuple(out_shape)


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    return g.sum(axis=axes, keepdims=True) if axes else g


def ewise(kind: str, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add/sub/mul; either operand may carry size-1 broadcast axes."""
    out_shape = _broadcast_check(a, b)
    if kind == "add":
        out = Tensor(a.data + b.data)

        def fn(g):
            return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    elif kind == "sub":
        out = Tensor(a.data - b.data)

        def fn(g):
            return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    elif kind == "mul":
        out = Tensor(a.data * b.data)

        def fn(g):
            return (
                _reduce_to(g * np.broadcast_to(b.data, out_shape), a.shape),
                _reduce_to(g * np.broadcast_to(a.data, out_shape), b.shape),
            )

    else:
        raise ValueError(f"unknown ewise kind {kind!r}")
    return _track(f"ewise.{kind}", (a, b), out, fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    return ewise("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return ewise("sub", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return ewise("mul", a, b)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(x.data * np.float32(c))

    def fn(g):
        return (g * np.float32(c),)

    return _track("scale", (x,), out, fn)


# ---------------------------------------------------------------------------
# pooling and resampling


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial axes; output is (n, c, 1, 1)."""
    n, c, h, w = x.shape
    out = Tensor(x.data.mean(axis=(2, 3), keepdims=True))

    def fn(g):
        return (np.broadcast_to(g / np.float32(h * w), x.shape).astype(np.float32),)

    return _track("global_avg_pool", (x,), out, fn)


def avgpool2(x: Tensor) -> Tensor:
    """2x2 average pooling, stride 2; spatial dims must be even."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avgpool2 needs even spatial dims, got {h}x{w}")
    out = Tensor(x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5)))

    def fn(g):
        gg = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)
        return (gg * np.float32(0.25),)

    return _track("avgpool2", (x,), out, fn)


def nearest_up2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling."""
    n, c, h, w = x.shape
    out = Tensor(np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3))

    def fn(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _track("nearest_up2", (x,), out, fn)


_RESAMPLERS = {"avgpool2": avgpool2, "nearest_up2": nearest_up2}


def resample(kind: str, x: Tensor) -> Tensor:
    try:
        return _RESAMPLERS[kind](x)
    except KeyError:
        raise ValueError(f"unknown resample kind {kind!r}") from None


# ---------------------------------------------------------------------------
# shape surgery


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat_channels needs matching n/h/w, got {a.shape} and {b.shape}")
    ca = a.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1))

    def fn(g):
        return np.ascontiguousarray(g[:, :ca]), np.ascontiguousarray(g[:, ca:])

    return _track("concat_channels", (a, b), out, fn)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    c = x.shape[1]
    if not (0 <= start < stop <= c):
        raise ShapeError(f"bad channel slice [{start}:{stop}] for {c} channels")
    out = Tensor(np.ascontiguousarray(x.data[:, start:stop]))

    def fn(g):
        gx = np.zeros(x.shape, dtype=np.float32)
        gx[:, start:stop] = g
        return (gx,)

    return _track("slice_channels", (x,), out, fn)


def reflect_indices(n: int, before: int, after: int) -> np.ndarray:
    """Source indices for edge-excluding reflection padding of a length-n axis.

    Folding with period 2(n-1) makes any pad amount legal, including pads
    larger than the axis itself.
    """
    if n < 1 or before < 0 or after < 0:
        raise ShapeError(f"bad reflection geometry: n={n} before={before} after={after}")
    if n == 1:
        return np.zeros(before + 1 + after, dtype=np.intp)
    pos = np.arange(-before, n + after)
    period = 2 * (n - 1)
    m = np.mod(pos, period)
    return np.where(m < n, m, period - m).astype(np.intp)


def pad_reflect(x: Tensor, pads) -> Tensor:
    """Reflection-pad the spatial axes by (top, bottom, left, right)."""
    top, bottom, left, right = (int(p) for p in pads)
    n, c, h, w = x.shape
    ih = reflect_indices(h, top, bottom)
    iw = reflect_indices(w, left, right)
    out = Tensor(np.ascontiguousarray(x.data[:, :, ih][:, :, :, iw]))

    def fn(g):
        gx = np.zeros((n, c, h, w), dtype=np.float32)
        # fold the padded grad back: scatter-add along each axis in turn
        gh = np.zeros((n, c, h, g.shape[3]), dtype=np.float32)
        np.add.at(gh, (slice(None), slice(None), ih), g)
        np.add.at(gx, (slice(None), slice(None), slice(None), iw), gh)
        return (gx,)

    return _track("pad_reflect", (x,), out, fn)


def crop(x: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    n, c, h, w = x.shape
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise ShapeError(f"crop ({top},{left},{height},{width}) exceeds input {h}x{w}")
    out = Tensor(np.ascontiguousarray(x.data[:, :, top : top + height, left : left + width]))

    def fn(g):
        gx = np.zeros(x.shape, dtype=np.float32)
        gx[:, :, top : top + height, left : left + width] = g
        return (gx,)

    return _track("crop", (x,), out, fn)


# ---------------------------------------------------------------------------
# loss


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error, mean-reduced over every element; scalar output."""
    if a.shape != b.shape:
        raise ShapeError(f"mse needs matching shapes, got {a.shape} and {b.shape}")
    d = a.data - b.data
    val = np.mean(d.astype(np.float64) ** 2)
    if not np.isfinite(val):
        raise NumericError("non-finite mse")
    out = Tensor(np.full((1, 1, 1, 1), val, dtype=np.float32))
    inv = np.float32(2.0 / d.size)

    def fn(g):
        da = (inv * np.float32(g.reshape(-1)[0])) * d
        return da, -da

    return _track("mse", (a, b), out, fn)
