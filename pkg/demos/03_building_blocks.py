"""Shapes and init behaviour of the conv / SE / residual building blocks.

The design invariant worth seeing once: every ResBlock's second conv is
zero-initialized, so a shape-preserving block is bitwise the identity at
init, and whole residual denoisers start as the identity map.
"""

import numpy as np

from wipunet import Tensor
from wipunet.layers import Conv2d, ResBlock, SEBlock, make_sigma_channel
from wipunet.rng import Rng

rng = Rng(3)
x = Tensor(rng.uniform((2, 16, 12, 12)))

conv = Conv2d(16, 32, rng=rng.split(1))
print(f"Conv2d 16->32: {x.shape} -> {conv(x).shape}, {conv.param_count()} params")

se = SEBlock(16, reduction=8, rng=rng.split(2))
gated = se(x)
ratio = gated.data / x.data
print(f"SEBlock: gates in [{ratio.min():.3f}, {ratio.max():.3f}] "
      f"(start near 1: expand bias {se.expand.b.data.ravel()[0]:+.0f})")

same = ResBlock(16, 16, mode="same", rng=rng.split(4))
print(f"ResBlock same: identity at init -> {np.array_equal(same(x).data, x.data)}")

down = ResBlock(16, 32, mode="down", rng=rng.split(5))
up = ResBlock(32, 16, mode="up", rng=rng.split(6))
mid = down(x)
print(f"ResBlock down: {x.shape} -> {mid.shape}; up: {mid.shape} -> {up(mid).shape}")

smap = make_sigma_channel(2, 12, 12, 25.0)
print(f"sigma plane for sigma=25: constant {smap.data.ravel()[0]:.6f} (= 25/255), "
      f"shape {smap.shape}")
