"""Model zoo: plain-CNN and UNet denoisers plus the physics-inspired family.

Every architecture except punet_pp is a residual denoiser: the backbone
predicts the noise field n_hat and the estimate is s_hat = y - n_hat, so the
decomposition s_hat + n_hat = y holds by construction for any parameters.
punet_pp instead predicts a mixture decomposition (density rho, mask m, gate
g) and forms s_hat = (g * m) * (y - rho) with background b = y - s_hat.

Architectures share one 3-scale UNet backbone so that each physics prior is
an isolated, composable modification:

    dncnn, simple_pu_cnn   8-layer plain conv stack
    unet, wipunet1         UNet, fixed resampling
    ffdnet, wipunet2       UNet + sigma-map input channel
    wipunet3               UNet + SE gating on skip connections
    wipunet4, punet_g      UNet with ResBlock down/up resampling
                           (punet_g also takes the sigma map)
    wipunet                UNet + sigma map + SE skips + ResBlock resampling
    punet_pp               2-scale UNet trunk + rho/m/g heads

Final output convs are zero-initialized, so every residual model starts as
the identity map, and training begins from the noisy baseline rather than
from a random perturbation of it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import engine as en
from .engine import ShapeError, Tensor
from .layers import Conv2d, Module, ResBlock, SEBlock
from .rng import Rng

ARCH_NAMES = (
    "dncnn",
    "ffdnet",
    "unet",
    "simple_pu_cnn",
    "punet_g",
    "punet_pp",
    "wipunet1",
    "wipunet2",
    "wipunet3",
    "wipunet4",
    "wipunet",
)

SIGMA_AWARE_ARCHS = frozenset({"ffdnet", "punet_g", "wipunet2", "wipunet"})

_SE_ARCHS = frozenset({"wipunet3", "wipunet"})
_LEARNED_RESAMPLE_ARCHS = frozenset({"punet_g", "wipunet4", "wipunet"})
_CONV_STACK_ARCHS = frozenset({"dncnn", "simple_pu_cnn"})


@dataclass(frozen=True)
class ModelSpec:
    """Constructor recipe for one model; seed pins the parameter init."""

    arch: str
    base_width: int = 32
    scales: int = 3
    depth: int = 8
    seed: int = 1234

    def __post_init__(self):
        if self.arch not in ARCH_NAMES:
            raise ValueError(f"unknown arch {self.arch!r}; known: {', '.join(ARCH_NAMES)}")
        if self.base_width < 1:
            raise ValueError("base_width must be positive")
        if self.scales < 2:
            raise ValueError("UNet needs at least 2 scales")
        if self.depth < 3:
            raise ValueError("conv stacks need at least 3 layers")

    @property
    def sigma_aware(self) -> bool:
        return self.arch in SIGMA_AWARE_ARCHS


@dataclass
class ForwardOut:
    """Denoised estimate plus the decomposition that produced it."""

    s_hat: Tensor
    n_hat: Tensor | None = None
    aux: dict | None = None


class ConvPair(Module):
    """conv3x3 + relu, twice."""

    def __init__(self, c_in, c_out, rng):
        super().__init__()
        self.conv1 = Conv2d(c_in, c_out, 3, rng=rng)
        self.conv2 = Conv2d(c_out, c_out, 3, rng=rng)

    def forward(self, x):
        return en.relu(self.conv2(en.relu(self.conv1(x))))


class AvgPoolDown(Module):
    """Fixed 2x downsampling; no parameters."""

    def forward(self, x):
        return en.avgpool2(x)


class NearestUpsample(Module):
    """Fixed 2x upsampling followed by a channel-reducing conv."""

    def __init__(self, c_in, c_out, rng):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, 3, rng=rng)

    def forward(self, x):
        return en.relu(self.conv(en.nearest_up2(x)))


class ConvStack(Module):
    """Plain deep conv stack mapping the input to a 3-channel field."""

    def __init__(self, in_ch, width, depth, rng):
        super().__init__()
        convs = [Conv2d(in_ch, width, 3, rng=rng)]
        for _ in range(depth - 2):
            convs.append(Conv2d(width, width, 3, rng=rng))
        convs.append(Conv2d(width, 3, 3, init="zero"))
        self.convs = convs

    def forward(self, x):
        h = x
        for conv in self.convs[:-1]:
            h = en.relu(conv(h))
        return self.convs[-1](h)


class UNetBackbone(Module):
    """Encoder/decoder with skip concat; widths double per scale.

    out_ch None returns the decoder features (used by the mixture trunk);
    otherwise a zero-initialized 3x3 conv maps features to out_ch planes.
    """

    def __init__(self, in_ch, out_ch, width, scales, se_skips, learned_resample, rng):
        super().__init__()
        self.scales = scales
        widths = [width << i for i in range(scales)]
        enc = [ConvPair(in_ch, widths[0], rng)]
        for i in range(1, scales):
            enc.append(ConvPair(widths[i - 1], widths[i], rng))
        self.enc = enc
        if learned_resample:
            self.down = [ResBlock(widths[i], widths[i], "down", rng) for i in range(scales - 1)]
            self.up = [ResBlock(widths[i + 1], widths[i], "up", rng) for i in range(scales - 1)]
        else:
            self.down = [AvgPoolDown() for _ in range(scales - 1)]
            self.up = [NearestUpsample(widths[i + 1], widths[i], rng) for i in range(scales - 1)]
        self.se = [SEBlock(widths[i], rng=rng) for i in range(scales - 1)] if se_skips else None
        self.dec = [ConvPair(2 * widths[i], widths[i], rng) for i in range(scales - 1)]
        self.out = Conv2d(widths[0], out_ch, 3, init="zero") if out_ch else None

    def forward(self, x):
        skips = []
        h = self.enc[0](x)
        for i in range(self.scales - 1):
            skips.append(h)
            h = self.down[i](h)
            h = self.enc[i + 1](h)
        for i in reversed(range(self.scales - 1)):
            h = self.up[i](h)
            skip = self.se[i](skips[i]) if self.se is not None else skips[i]
            h = self.dec[i](en.concat_channels(h, skip))
        return self.out(h) if self.out is not None else h


def _pad_to_divisor(x: Tensor, divisor: int):
    """Reflection-pad bottom/right so spatial dims divide evenly; returns uncropper."""
    n, c, h, w = x.shape
    ph = (-h) % divisor
    pw = (-w) % divisor
    if ph == 0 and pw == 0:
        return x, lambda t: t
    padded = en.pad_reflect(x, (0, ph, 0, pw))
    return padded, lambda t: en.crop(t, 0, 0, h, w)


class ResidualDenoiser(Module):
    """Backbone predicts the noise field; the estimate is y minus that field."""

    def __init__(self, spec: ModelSpec, backbone: Module, divisor: int):
        super().__init__()
        self.spec = spec
        self.sigma_aware = spec.sigma_aware
        self.divisor = divisor
        self.backbone = backbone

    def forward(self, y, sigma_map=None):
        return forward_residual(self, y, sigma_map)


class MixtureDenoiser(Module):
    """2-scale trunk with rho/m/g heads; conserves y = s_hat + b by subtraction."""

    def __init__(self, spec: ModelSpec, rng: Rng):
        super().__init__()
        self.spec = spec
        self.sigma_aware = False
        self.divisor = 2
        self.trunk = UNetBackbone(3, None, spec.base_width, 2, False, False, rng)
        self.head_rho = Conv2d(spec.base_width, 3, 1, pad=0, rng=rng)
        self.head_m = Conv2d(spec.base_width, 3, 1, pad=0, rng=rng)
        self.head_g = Conv2d(spec.base_width, 3, 1, pad=0, rng=rng)
        # start near identity: rho ~ 0, gates mostly open
        self.head_rho.b.data[:] = -4.0
        self.head_m.b.data[:] = 2.0
        self.head_g.b.data[:] = 2.0

    def forward(self, y, sigma_map=None):
        if sigma_map is not None:
            raise ValueError("punet_pp is sigma-blind; it does not take a sigma_map")
        return forward_punetpp(self, y)


class IdentityModel(Module):
    """Passes the input through; n_hat is the zero field."""

    def __init__(self):
        super().__init__()
        self.spec = ModelSpec(arch="unet")
        self.arch = "identity"
        self.sigma_aware = False
        self.divisor = 1

    def forward(self, y, sigma_map=None):
        n_hat = Tensor.zeros(y.shape)
        return ForwardOut(s_hat=en.sub(y, n_hat), n_hat=n_hat)


def build(spec: ModelSpec) -> Module:
    """Construct a model with parameters drawn deterministically from spec.seed."""
    rng = Rng(spec.seed)
    if spec.arch in _CONV_STACK_ARCHS:
        backbone = ConvStack(3, spec.base_width, spec.depth, rng)
        return ResidualDenoiser(spec, backbone, divisor=1)
    if spec.arch == "punet_pp":
        return MixtureDenoiser(spec, rng)
    in_ch = 4 if spec.sigma_aware else 3
    backbone = UNetBackbone(
        in_ch,
        3,
        spec.base_width,
        spec.scales,
        se_skips=spec.arch in _SE_ARCHS,
        learned_resample=spec.arch in _LEARNED_RESAMPLE_ARCHS,
        rng=rng,
    )
    return ResidualDenoiser(spec, backbone, divisor=1 << (spec.scales - 1))


def forward_residual(model, y: Tensor, sigma_map: Tensor | None = None) -> ForwardOut:
    """n_hat = backbone(y [+ sigma plane]); s_hat = y - n_hat."""
    if isinstance(model, MixtureDenoiser):
        raise ValueError("punet_pp uses forward_punetpp, not the residual path")
    if model.sigma_aware:
        if sigma_map is None:
            raise ValueError(f"{model.spec.arch} is sigma-aware and needs a sigma_map")
        if sigma_map.shape != (y.shape[0], 1, y.shape[2], y.shape[3]):
            raise ShapeError(f"sigma_map shape {sigma_map.shape} does not match input {y.shape}")
        x = en.concat_channels(y, sigma_map)
    else:
        if sigma_map is not None:
            raise ValueError(f"{model.spec.arch} is sigma-blind; it does not take a sigma_map")
        x = y
    x, uncrop = _pad_to_divisor(x, model.divisor)
    n_hat = uncrop(model.backbone(x))
    s_hat = en.sub(y, n_hat)
    return ForwardOut(s_hat=s_hat, n_hat=n_hat)


def forward_punetpp(model, y: Tensor) -> ForwardOut:
    """Mixture decomposition: s_hat = (g * m) * (y - rho), b = y - s_hat."""
    if not isinstance(model, MixtureDenoiser):
        raise ValueError(f"forward_punetpp needs a punet_pp model, got {model.spec.arch}")
    x, uncrop = _pad_to_divisor(y, model.divisor)
    f = model.trunk(x)
    rho = uncrop(en.softplus(model.head_rho(f)))
    m = uncrop(en.sigmoid(model.head_m(f)))
    g = uncrop(en.sigmoid(model.head_g(f)))
    s_hat = en.mul(en.mul(g, m), en.sub(y, rho))
    b = en.sub(y, s_hat)
    return ForwardOut(s_hat=s_hat, n_hat=b, aux={"rho": rho, "m": m, "g": g})


def describe(model) -> str:
    """Stable structural summary: layer list, channel plan, parameter count."""
    spec = model.spec
    arch = getattr(model, "arch", spec.arch)
    lines = [
        f"arch={arch} base_width={spec.base_width} scales={spec.scales} "
        f"depth={spec.depth} sigma_aware={model.sigma_aware} params={model.param_count()}"
    ]

    def walk(mod, name, depth):
        label = type(mod).__name__
        if isinstance(mod, Conv2d):
            co, ci, k, _ = mod.w.shape
            label += f"({ci}->{co}, k={k}, stride={mod.stride}, pad={mod.pad})"
        elif isinstance(mod, SEBlock):
            c = mod.reduce.w.shape[1]
            label += f"(c={c}, hidden={mod.reduce.w.shape[0]})"
        elif isinstance(mod, ResBlock):
            label += f"({mod.conv1.w.shape[1]}->{mod.conv1.w.shape[0]}, mode={mod.mode})"
        lines.append("  " * depth + f"{name}: {label}")
        for child_name, child in mod._children.items():
            if isinstance(child, list):
                for i, sub in enumerate(child):
                    walk(sub, f"{child_name}.{i}", depth + 1)
            else:
                walk(child, child_name, depth + 1)

    walk(model, "model", 0)
    return "\n".join(lines)


def param_checksum(model) -> int:
    """64-bit digest of every parameter's name, shape, and bytes, in walk order."""
    h = hashlib.blake2b(digest_size=8)
    for name, p in model.named_parameters():
        h.update(name.encode())
        h.update(np.asarray(p.shape, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(p.data).tobytes())
    return int.from_bytes(h.digest(), "little")
