"""The tape in isolation: record a few ops, run backward, check by hand.

Everything is a rank-4 float32 tensor; a scalar is shape (1,1,1,1).
Ops executed under a `with Tape()` block are recorded; tape.backward(loss)
fills .grad on every requires_grad leaf, then the tape is consumed.
"""

import numpy as np

from wipunet import Tape, Tensor
from wipunet.engine import conv2d, mse, relu

rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(1, 1, 5, 5)), requires_grad=True)
w = Tensor(0.5 * rng.normal(size=(2, 1, 3, 3)), requires_grad=True)
target = Tensor.zeros((1, 2, 5, 5))

with Tape() as tape:
    y = relu(conv2d(x, w, pad=1))
    loss = mse(y, target)
print(f"loss = {loss.item():.6f}  ({len(tape)} ops on the tape)")

tape.backward(loss)
print(f"dL/dw: shape {w.grad.shape}, |g| max {np.abs(w.grad).max():.4f}")
print(f"dL/dx: shape {x.grad.shape}, |g| max {np.abs(x.grad).max():.4f}")


def f():
    # forward only -- no tape active, nothing is recorded
    return mse(relu(conv2d(x, w, pad=1)), target).item()


# spot-check one weight coordinate against central differences
i, eps = (0, 0, 1, 1), 1e-3
keep = float(w.data[i])
w.data[i] = keep + eps
fp = f()
w.data[i] = keep - eps
fm = f()
w.data[i] = keep
fd = (fp - fm) / (2 * eps)
print(f"w{list(i)}: analytic {w.grad[i]:+.6f} vs finite-difference {fd:+.6f}")
assert abs(w.grad[i] - fd) <= 1e-3 * max(abs(fd), abs(w.grad[i])) + 1e-4
print("gradient agrees with finite differences.")
