"""Load the corpus and corrupt an image at several noise levels.

The corruption model is additive white Gaussian noise with standard
deviation sigma/255; the noisy observation is deliberately NOT clamped
to [0,1], so its statistics stay exactly Gaussian.
"""

from _common import OUT_DIR, dataset

from wipunet.data_noise import add_awgn, save_image
from wipunet.report import build_grid
from wipunet.rng import Rng

train, test = dataset()
print(f"train: {len(train)} images from {train.source}")
print(f"test:  {len(test)} images; first is {test.names[0]}")

img = test.images[0]
print(f"one image: shape {img.shape}, range [{img.data.min():.3f}, {img.data.max():.3f}]")

rng = Rng(7)
strip = [img]
for sigma in (15, 25, 50, 100):
    pair = add_awgn(img, sigma, rng.split(sigma))
    eps = pair.noisy.data - pair.clean.data
    print(
        f"sigma={sigma:3d}: measured noise std {eps.std() * 255:6.2f}/255, "
        f"mean {eps.mean() * 255:+6.3f}/255, "
        f"noisy range [{pair.noisy.data.min():+.2f}, {pair.noisy.data.max():+.2f}]"
    )
    strip.append(pair.noisy)

out = OUT_DIR / "noise_strip.png"
save_image(build_grid([strip]), out)
print(f"wrote clean|noisy strip to {out}")
