"""Training loop: AdamW with decoupled decay, gradient clipping, checkpoints.

The protocol is deliberately rigid so that two runs of the same config are
byte-identical: data order comes from a per-epoch permutation derived from
(seed, epoch), the noise on sample i in epoch e comes from the substream
split(i) of the epoch stream, and history rows carry a 0.0 wall-time
placeholder (real timestamps live in the run manifest, not in artifacts
that must reproduce exactly).
"""

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import engine as en
from .data_noise import ImageSet, add_awgn
from .engine import NumericError, Tape, Tensor
from .layers import make_sigma_channel
from .metrics import evaluate
from .models import ForwardOut, ModelSpec, build
from .rng import Rng

LOSS_MODES = ("l2_only", "eq2_dual")

CHECKPOINT_MAGIC = b"WIPU"
CHECKPOINT_VERSION = 1

HISTORY_SCHEMA = "wipunet-history-v1"
HISTORY_HEADER = "epoch,step,loss,psnr,ssim,wall_s"


@dataclass(frozen=True)
class TrainConfig:
    model_spec: ModelSpec
    sigma: float
    epochs: int
    batch_size: int = 64
    lr: float = 5e-4
    weight_decay: float = 1e-2
    clip_norm: float = 1.0
    seed: int = 1234
    loss_mode: str = "l2_only"
    lambda_img: float = 1.0
    lambda_res: float = 0.1

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass
class HistoryRow:
    """One CSV row. Step rows leave psnr/ssim empty; epoch rows fill them."""

    epoch: int
    step: int
    loss: float
    psnr: float = None
    ssim: float = None
    wall_s: float = 0.0


def loss(out: ForwardOut, clean: Tensor, noisy: Tensor, mode: str = "l2_only",
         lambda_img: float = 1.0, lambda_res: float = 0.1) -> Tensor:
    """Training objective: plain l2 on the signal, or the dual signal+background form."""
    if mode == "l2_only":
        return en.mse(out.s_hat, clean)
    if mode == "eq2_dual":
        if out.n_hat is None:
            raise ValueError("eq2_dual needs a model that exposes a background estimate")
        b_true = en.sub(noisy, clean)
        img_term = en.scale(en.mse(out.s_hat, clean), lambda_img)
        res_term = en.scale(en.mse(out.n_hat, b_true), lambda_res)
        return en.add(img_term, res_term)
    raise ValueError(f"unknown loss mode {mode!r}")


def clip_grad_norm(params, max_norm: float = 1.0) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the scale that was applied (1.0 when no clipping happened).
    The norm is accumulated in float64 so clipping decisions do not depend
    on parameter ordering at float32 precision.
    """
    total = 0.0
    grads = [p.grad for p in params if p.grad is not None]
    for g in grads:
        total += float(np.sum(np.square(g, dtype=np.float64)))
    norm = float(np.sqrt(total))
    if norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    s32 = np.float32(scale)
    for g in grads:
        g *= s32
    return scale


class AdamW:
    """AdamW with decoupled weight decay: p <- p*(1 - lr*wd), then Adam.

    Moments are kept in float32 to match the parameters; the bias-corrected
    step uses python-float corrections, which numpy keeps in float32 under
    value-based promotion.
    """

    def __init__(self, params, lr: float = 5e-4, weight_decay: float = 1e-2,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        decay = 1.0 - self.lr * self.weight_decay
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise en.ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
            p.data *= np.float32(decay)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _batch_tensors(image_set: ImageSet, indices, sigma: float, ep_rng: Rng):
    """Corrupt one minibatch; sample i's noise comes from ep_rng.split(i)."""
    pairs = [add_awgn(image_set.images[int(i)], sigma, ep_rng.split(int(i))) for i in indices]
    clean = Tensor(np.concatenate([p.clean.data for p in pairs]))
    noisy = Tensor(np.concatenate([p.noisy.data for p in pairs]))
    return clean, noisy


def train(config: TrainConfig, train_set: ImageSet, eval_set: ImageSet = None,
          eval_images: int = 512):
    """Run the optimization loop; returns (model, history rows).

    History gets one row per step (batch loss only) plus one row per epoch
    carrying the epoch-mean loss and, when eval_set is given, PSNR/SSIM on
    it. Evaluation noise is regenerated from the same substreams each epoch
    so the metric trajectory is comparable across epochs.
    """
    if len(train_set) == 0:
        raise ValueError("train_set is empty")
    model = build(config.model_spec)
    params = model.parameters()
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    root = Rng(config.seed)
    history = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        ep_rng = root.split(epoch)
        perm = ep_rng.permutation(len(train_set))
        epoch_losses = []
        for lo in range(0, len(perm), config.batch_size):
            indices = perm[lo:lo + config.batch_size]
            clean, noisy = _batch_tensors(train_set, indices, config.sigma, ep_rng)
            smap = None
            if model.sigma_aware:
                smap = make_sigma_channel(
                    noisy.shape[0], noisy.shape[2], noisy.shape[3], config.sigma)
            model.zero_grad()
            with Tape() as tape:
                out = model(noisy, sigma_map=smap)
                batch_loss = loss(out, clean, noisy, config.loss_mode,
                                  config.lambda_img, config.lambda_res)
            lv = float(batch_loss.item())
            if not np.isfinite(lv):
                d = noisy.data
                raise NumericError(
                    f"non-finite loss {lv} at epoch {epoch} step {step + 1}; "
                    f"batch min={d.min():.6g} max={d.max():.6g} mean={d.mean():.6g}")
            tape.backward(batch_loss)
            clip_grad_norm(params, config.clip_norm)
            opt.step()
            step += 1
            epoch_losses.append(lv)
            history.append(HistoryRow(epoch=epoch, step=step, loss=lv))
        row = HistoryRow(epoch=epoch, step=step, loss=float(np.mean(epoch_losses)))
        if eval_set is not None:
            m = evaluate(model, eval_set, config.sigma, Rng(config.seed, stream=1),
                         max_images=eval_images)
            row.psnr = m.psnr_db
            row.ssim = m.ssim
        history.append(row)
    return model, history


def split_history(rows):
    """Separate per-step rows from epoch-summary rows.

    An epoch summary repeats the step number of the row before it, which is
    how the two kinds share one CSV schema.
    """
    step_rows, epoch_rows = [], []
    prev = None
    for r in rows:
        if prev is not None and prev.step == r.step and prev.epoch == r.epoch:
            epoch_rows.append(r)
        else:
            step_rows.append(r)
        prev = r
    return step_rows, epoch_rows


def write_history(rows, path) -> None:
    lines = [f"# schema: {HISTORY_SCHEMA}", HISTORY_HEADER]
    for r in rows:
        psnr = "" if r.psnr is None else repr(float(r.psnr))
        ssim = "" if r.ssim is None else repr(float(r.ssim))
        lines.append(f"{r.epoch},{r.step},{float(r.loss)!r},{psnr},{ssim},{float(r.wall_s)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_history(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != f"# schema: {HISTORY_SCHEMA}":
        raise ValueError(f"{path}: missing or unknown history schema")
    if len(lines) < 2 or lines[1] != HISTORY_HEADER:
        raise ValueError(f"{path}: unexpected history header")
    rows = []
    for line in lines[2:]:
        if not line:
            continue
        epoch, step, lv, psnr, ssim, wall = line.split(",")
        rows.append(HistoryRow(
            epoch=int(epoch), step=int(step), loss=float(lv),
            psnr=None if psnr == "" else float(psnr),
            ssim=None if ssim == "" else float(ssim),
            wall_s=float(wall)))
    return rows


def save_checkpoint(model, path, step: int = 0) -> None:
    """Binary snapshot: magic, version, JSON header, raw little-endian f32 blobs,
    then a trailing 8-byte blake2b checksum over everything before it."""
    spec = model.spec
    named = list(model.named_parameters())
    header = {
        "arch": spec.arch,
        "base_width": spec.base_width,
        "scales": spec.scales,
        "depth": spec.depth,
        "seed": spec.seed,
        "step": int(step),
        "params": [{"name": n, "shape": list(t.shape)} for n, t in named],
    }
    hb = json.dumps(header, separators=(",", ":")).encode("utf-8")
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<H", CHECKPOINT_VERSION)
    buf += struct.pack("<I", len(hb))
    buf += hb
    for _, t in named:
        buf += np.ascontiguousarray(t.data, dtype="<f4").tobytes()
    buf += hashlib.blake2b(bytes(buf), digest_size=8).digest()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path, into=None):
    """Verify the checksum, then rebuild (or fill `into`); returns (model, step)."""
    raw = Path(path).read_bytes()
    if len(raw) < 18:
        raise ValueError(f"{path}: checkpoint checksum failed (file truncated)")
    body, digest = raw[:-8], raw[-8:]
    if hashlib.blake2b(body, digest_size=8).digest() != digest:
        raise ValueError(f"{path}: checkpoint checksum failed")
    if body[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad magic, not a checkpoint")
    (version,) = struct.unpack_from("<H", body, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<I", body, 6)
    header = json.loads(body[10:10 + hlen].decode("utf-8"))
    spec = ModelSpec(arch=header["arch"], base_width=header["base_width"],
                     scales=header["scales"], depth=header["depth"], seed=header["seed"])
    if into is not None:
        if into.spec != spec:
            raise ValueError(f"{path}: checkpoint spec {spec} does not match target model")
        model = into
    else:
        model = build(spec)
    named = list(model.named_parameters())
    metas = header["params"]
    if len(named) != len(metas):
        raise ValueError(f"{path}: parameter list mismatch")
    off = 10 + hlen
    for (name, t), meta in zip(named, metas):
        if name != meta["name"] or list(t.shape) != list(meta["shape"]):
            raise ValueError(f"{path}: parameter {name} does not match checkpoint entry {meta}")
        n = t.data.size
        if off + 4 * n > len(body):
            raise ValueError(f"{path}: checkpoint data ends early at {name}")
        t.data[...] = np.frombuffer(body, dtype="<f4", count=n, offset=off).reshape(t.shape)
        off += 4 * n
    if off != len(body):
        raise ValueError(f"{path}: {len(body) - off} trailing bytes after parameters")
    return model, int(header["step"])
