"""PSNR and SSIM do what the formulas promise.

For unit-range images corrupted by AWGN of std sigma/255, the expected
PSNR of the noisy input is 20*log10(255/sigma) -- provided nothing gets
clamped. That closed form is used everywhere as the noisy baseline.
"""

import numpy as np

from _common import dataset

from wipunet.data_noise import add_awgn
from wipunet.metrics import psnr, ssim
from wipunet.rng import Rng

_, test = dataset(limit_test=128)
rng = Rng(11)

img = test.images[0]
print(f"psnr(img, img) = {psnr(img, img):.1f} dB (capped), ssim = {ssim(img, img):.4f}")

print(f"{'sigma':>5}  {'theory':>7}  {'measured':>8}  {'ssim':>6}")
for sigma in (15, 25, 50, 100):
    srng = rng.split(sigma)
    ps, ss = [], []
    for i, clean in enumerate(test.images):
        pair = add_awgn(clean, sigma, srng.split(i))
        ps.append(psnr(pair.clean, pair.noisy, clamp=False))
        ss.append(ssim(pair.clean, pair.noisy))
    theory = 20.0 * np.log10(255.0 / sigma)
    print(f"{sigma:5d}  {theory:7.2f}  {np.mean(ps):8.2f}  {np.mean(ss):6.4f}")

# clamping the noisy signal biases the measurement upward at high sigma
pair = add_awgn(img, 100, rng.split(999))
print(f"sigma=100 single image: clamp-free {psnr(pair.clean, pair.noisy, clamp=False):.2f} dB, "
      f"clamped {psnr(pair.clean, pair.noisy, clamp=True):.2f} dB")
