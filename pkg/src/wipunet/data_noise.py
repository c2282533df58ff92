"""Dataset ingestion, AWGN corruption, and patch sampling.

CIFAR-10 is read from the standard binary batch layout: six files of 10000
records, each record 3073 bytes (1 label byte followed by 3072 pixel bytes in
channel-planar R, G, B order). Labels are discarded; pixels map u8 -> [0, 1].

The corruption model is Y = S + eps with eps ~ N(0, (sigma/255)^2), drawn
i.i.d. per pixel from the deterministic counter-based generator. The noisy
observation is intentionally NOT clamped to [0, 1]: clamping at high sigma
destroys Gaussianity and biases every downstream statistic. Denoised outputs
are clamped at save and metric time instead.

When no real CIFAR-10 download is available, write_synthetic_cifar10() emits
a corpus of smooth random images in the exact same binary layout, so every
loader code path stays format-faithful.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import Tensor
from .layers import make_sigma_channel
from .rng import Rng

TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILES = ("test_batch.bin",)
RECORD_BYTES = 3073
RECORDS_PER_FILE = 10000


@dataclass
class ImageSet:
    """An ordered collection of (1,3,H,W) images in [0,1]."""

    images: list
    names: list
    source: str

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class NoisyPair:
    """One corruption event: clean, noisy = clean + eps, and the sigma plane."""

    clean: Tensor
    noisy: Tensor
    sigma: float
    sigma_map: Tensor


def _read_batch_file(path: Path, take: int) -> np.ndarray:
    if not path.is_file():
        raise FileNotFoundError(f"missing CIFAR-10 batch file: {path}")
    size = path.stat().st_size
    if size % RECORD_BYTES != 0:
        raise ValueError(f"{path} size {size} is not a multiple of {RECORD_BYTES}")
    records = size // RECORD_BYTES
    if records != RECORDS_PER_FILE:
        raise ValueError(f"{path} holds {records} records, expected {RECORDS_PER_FILE}")
    raw = np.fromfile(path, dtype=np.uint8, count=take * RECORD_BYTES)
    recs = raw.reshape(take, RECORD_BYTES)
    pixels = recs[:, 1:].reshape(take, 3, 32, 32).astype(np.float32) / 255.0
    return pixels


def _load_split(root: Path, files, prefix: str, source: str, limit=None) -> ImageSet:
    total = RECORDS_PER_FILE * len(files)
    need = total if limit is None else min(int(limit), total)
    images, names = [], []
    for fname in files:
        take = min(RECORDS_PER_FILE, need - len(images))
        if take <= 0:
            # still validate presence/size of the remaining files
            _read_batch_file(root / fname, 0)
            continue
        pixels = _read_batch_file(root / fname, take)
        base = len(images)
        for j in range(take):
            images.append(Tensor(pixels[j : j + 1]))
            names.append(f"{prefix}_{base + j:05d}")
    return ImageSet(images=images, names=names, source=source)


def load_cifar10(root, limit_train=None, limit_test=None):
    """Load (train, test) ImageSets from the binary batch directory.

    limit_train/limit_test read only a prefix of each split; file presence and
    record counts are validated for the whole directory regardless.
    """
    root = Path(root)
    train = _load_split(root, TRAIN_FILES, "train", "cifar10_train", limit_train)
    test = _load_split(root, TEST_FILES, "test", "cifar10_test", limit_test)
    return train, test


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize over the last two axes, pixel-center aligned."""
    h, w = arr.shape[-2:]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    fy = (ys - y0).astype(arr.dtype if arr.dtype.kind == "f" else np.float64)
    fx = (xs - x0).astype(arr.dtype if arr.dtype.kind == "f" else np.float64)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = arr[..., y0c, :]
    bot = arr[..., y1c, :]
    tl, tr = top[..., x0c], top[..., x1c]
    bl, br = bot[..., x0c], bot[..., x1c]
    wy = fy[:, None]
    wx = fx[None, :]
    return (
        tl * (1 - wy) * (1 - wx)
        + tr * (1 - wy) * wx
        + bl * wy * (1 - wx)
        + br * wy * wx
    )


def write_synthetic_cifar10(root, seed: int = 1234) -> None:
    """Write a deterministic stand-in corpus in the CIFAR-10 binary layout.

    Images are smooth two-scale random fields (bilinear upsampling of 4x4 and
    8x8 uniform grids), so they carry learnable spatial structure. File names,
    record counts, and byte layout match the real dataset exactly.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for file_index, fname in enumerate(TRAIN_FILES + TEST_FILES):
        rng = Rng(seed, stream=file_index)
        n = RECORDS_PER_FILE
        low4 = rng.uniform((n, 3, 4, 4)).astype(np.float32)
        low8 = rng.uniform((n, 3, 8, 8)).astype(np.float32)
        labels = rng.integers(0, 10, n).astype(np.uint8)
        out = np.empty((n, RECORD_BYTES), dtype=np.uint8)
        out[:, 0] = labels
        chunk = 2000
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            img = 0.65 * resize_bilinear(low4[lo:hi], 32, 32) + 0.35 * resize_bilinear(
                low8[lo:hi], 32, 32
            )
            q = np.floor(img * 255.0 + 0.5).astype(np.uint8)
            out[lo:hi, 1:] = q.reshape(hi - lo, 3072)
        out.tofile(root / fname)


def add_awgn(clean: Tensor, sigma: float, rng: Rng) -> NoisyPair:
    """Corrupt with i.i.d. Gaussian noise of standard deviation sigma/255."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    eps = (rng.normal(clean.shape) * (float(sigma) / 255.0)).astype(np.float32)
    noisy = Tensor(clean.data + eps)
    n, _, h, w = clean.shape
    return NoisyPair(clean=clean, noisy=noisy, sigma=float(sigma), sigma_map=make_sigma_channel(n, h, w, sigma))


def sample_patches(image_set: ImageSet, size: int, count: int, rng: Rng) -> list:
    """Draw random square crops; images smaller than size are resized first.

    Resizing (bilinear) scales the image so its minimum side equals size,
    then a uniformly random top-left corner is drawn.
    """
    if len(image_set) == 0:
        raise ValueError("cannot sample patches from an empty image set")
    patches = []
    for _ in range(count):
        idx = int(rng.integers(0, len(image_set), 1)[0])
        img = image_set.images[idx].data
        h, w = img.shape[2], img.shape[3]
        if min(h, w) < size:
            s = size / min(h, w)
            nh = max(size, int(round(h * s)))
            nw = max(size, int(round(w * s)))
            img = resize_bilinear(img, nh, nw).astype(np.float32)
            h, w = nh, nw
        top = int(rng.integers(0, h - size + 1, 1)[0])
        left = int(rng.integers(0, w - size + 1, 1)[0])
        patches.append(Tensor(np.ascontiguousarray(img[:, :, top : top + size, left : left + size])))
    return patches


def _quantize(data: np.ndarray) -> np.ndarray:
    """Clamp to [0,1] then round half up to bytes."""
    clamped = np.clip(data, 0.0, 1.0)
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8)


def save_image(tensor: Tensor, path) -> None:
    """Write a (1,3,H,W) tensor as 8-bit RGB PNG or binary PPM by extension."""
    path = Path(path)
    if tensor.shape[0] != 1 or tensor.shape[1] != 3:
        raise ValueError(f"save_image needs a (1,3,H,W) tensor, got {tensor.shape}")
    q = _quantize(tensor.data[0])  # (3,h,w)
    hwc = np.ascontiguousarray(q.transpose(1, 2, 0))
    if path.suffix.lower() == ".ppm":
        h, w = hwc.shape[:2]
        with open(path, "wb") as f:
            f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            f.write(hwc.tobytes())
    elif path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(hwc, mode="RGB").save(path)
    else:
        raise ValueError(f"unsupported image format {path.suffix!r} (use .png or .ppm)")


def _load_ppm(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    # header: magic, width, height, maxval, single whitespace, then raster
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1
    if fields[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 PPMs are supported")
    raster = np.frombuffer(data, dtype=np.uint8, count=h * w * 3, offset=pos)
    return raster.reshape(h, w, 3)


def load_image(path) -> Tensor:
    """Read one 8-bit RGB PNG or PPM file as a (1,3,H,W) tensor in [0,1]."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        hwc = _load_ppm(path)
    elif path.suffix.lower() == ".png":
        from PIL import Image

        with Image.open(path) as img:
            if img.mode != "RGB":
                raise ValueError(f"{path}: expected an RGB image, got mode {img.mode}")
            hwc = np.asarray(img, dtype=np.uint8)
    else:
        raise ValueError(f"unsupported image format {path.suffix!r} (use .png or .ppm)")
    chw = hwc.transpose(2, 0, 1).astype(np.float32) / 255.0
    return Tensor(chw[None])


def load_folder(directory) -> ImageSet:
    """Load every .png/.ppm in a directory, sorted by file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".png", ".ppm"))
    if not paths:
        raise ValueError(f"no .png or .ppm images in {directory}")
    images = [load_image(p) for p in paths]
    names = [p.stem for p in paths]
    return ImageSet(images=images, names=names, source="folder")


def default_data_root() -> str:
    """Dataset directory: $WIPUNET_DATA_ROOT or ./data/cifar-10-batches-bin."""
    return os.environ.get("WIPUNET_DATA_ROOT", os.path.join("data", "cifar-10-batches-bin"))
