"""Every architecture in the registry, plus the conservation property.

All residual models compute s_hat = y - n_hat by actual subtraction, so the
decomposition is exact in float32, not just close. The mixture head
(punet_pp) instead predicts the restoration and defines the noise map by
the same subtraction, with its gates constrained to (0,1).
"""

import numpy as np

from wipunet import Tensor
from wipunet.layers import make_sigma_channel
from wipunet.models import ARCH_NAMES, SIGMA_AWARE_ARCHS, ModelSpec, build
from wipunet.rng import Rng

y = Tensor(Rng(5).uniform((1, 3, 32, 32)))

print(f"{'arch':>13}  {'params':>8}  {'divisor':>7}  {'sigma-aware':>11}  conservation")
for arch in ARCH_NAMES:
    model = build(ModelSpec(arch, base_width=16))
    smap = make_sigma_channel(1, 32, 32, 25.0) if model.sigma_aware else None
    out = model(y, sigma_map=smap)
    if arch == "punet_pp":
        exact = np.array_equal(out.n_hat.data, y.data - out.s_hat.data)
        kind = "n = y - s"
    else:
        exact = np.array_equal(out.s_hat.data, y.data - out.n_hat.data)
        kind = "s = y - n"
    print(f"{arch:>13}  {model.param_count():8d}  {model.divisor:7d}  "
          f"{str(arch in SIGMA_AWARE_ARCHS):>11}  {kind}: {exact}")

pp = build(ModelSpec("punet_pp", base_width=16))(y)
rho, m, g = (pp.aux[k].data for k in ("rho", "m", "g"))
print(f"mixture head ranges: rho >= 0 ({rho.min():.4f}), "
      f"m in (0,1) [{m.min():.4f}, {m.max():.4f}], "
      f"g in (0,1) [{g.min():.4f}, {g.max():.4f}]")
