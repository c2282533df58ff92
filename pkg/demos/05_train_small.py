"""Train the sigma-conditioned UNet for two short epochs and watch it learn.

Uses the library API directly (the `wipunet train` CLI wraps exactly this).
Also shows the checkpoint roundtrip: save, reload, identical parameters.
"""

from _common import OUT_DIR, dataset

from wipunet.metrics import evaluate
from wipunet.models import IdentityModel, ModelSpec, param_checksum
from wipunet.rng import Rng
from wipunet.training import TrainConfig, load_checkpoint, save_checkpoint, split_history, train

train_set, test_set = dataset(limit_train=256, limit_test=64)
config = TrainConfig(ModelSpec("punet_g", base_width=16), sigma=25.0,
                     epochs=2, batch_size=32)

baseline = evaluate(IdentityModel(), test_set, config.sigma, Rng(config.seed, stream=1),
                    clamp_outputs=False, max_images=64)
print(f"noisy input baseline at sigma={config.sigma:g}: {baseline.psnr_db:.2f} dB")

model, history = train(config, train_set, eval_set=test_set, eval_images=64)
steps, epochs = split_history(history)
print(f"{len(steps)} steps: loss {steps[0].loss:.5f} (= sigma^2 at the identity init) "
      f"-> {steps[-1].loss:.5f}")
for row in epochs:
    print(f"epoch {row.epoch}: mean loss {row.loss:.5f}, "
          f"psnr {row.psnr:.2f} dB, ssim {row.ssim:.4f}")

ckpt = OUT_DIR / "punet_g_demo.ckpt"
save_checkpoint(model, ckpt, step=steps[-1].step)
clone, step = load_checkpoint(ckpt)
print(f"checkpoint roundtrip: step {step}, params identical -> "
      f"{param_checksum(clone) == param_checksum(model)}")
