"""Image I/O, synthetic degradations, patch sampling and augmentation.

Images are float32 numpy arrays laid out ``[3, H, W]`` with values in [0, 1].
Every random choice takes an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

IMAGE_SUFFIXES = (".png", ".ppm")


@dataclasses.dataclass
class ImagePair:
    degraded: np.ndarray
    clean: np.ndarray
    id: str = ""

    def __post_init__(self):
        if self.degraded.shape != self.clean.shape:
            raise ValueError(f"pair {self.id!r}: shapes differ {self.degraded.shape} vs {self.clean.shape}")


@dataclasses.dataclass
class HazeParams:
    transmission: np.ndarray  # [1, H, W] (or broadcastable) in [0, 1]
    atmosphere: np.ndarray  # [3]

    def to_json(self):
        return {"kind": "haze", "m": self.transmission.tolist(), "A": self.atmosphere.tolist()}


@dataclasses.dataclass
class BlurParams:
    kernel: np.ndarray  # [kh, kw], nonnegative, sums to 1
    noise_sigma: float = 0.0

    def to_json(self):
        return {"kind": "blur", "kernel": self.kernel.tolist(), "noise_sigma": self.noise_sigma}


# -- image I/O ----------------------------------------------------------------
def to_unit(u8):
    """uint8 -> float32 in [0, 1] (exact inverse of :func:`to_uint8` on the 1/255 grid)."""
    return np.asarray(u8, dtype=np.float32) / np.float32(255)


def to_uint8(x):
    """Clamp to [0, 1] and quantize with round-half-up."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def load_image(path, gray="broadcast"):
    """Read an 8-bit PNG or binary PPM into a ``[3, H, W]`` float32 array.

    ``gray="broadcast"`` repeats single-channel images over RGB;
    ``gray="reject"`` raises instead.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode in ("L", "P", "1", "I;16", "I"):
                if mode == "P":
                    im = im.convert("RGB")
                    arr = np.asarray(im)
                elif gray == "reject":
                    raise ValueError(f"{path}: grayscale image rejected")
                else:
                    arr = np.repeat(np.asarray(im.convert("L"))[..., None], 3, axis=2)
            else:
                arr = np.asarray(im.convert("RGB"))
    except (OSError, UnidentifiedImageError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return to_unit(arr.transpose(2, 0, 1))


def save_image(x, path):
    """Write ``[3, H, W]`` values in [0, 1] as 8-bit RGB (format from the suffix)."""
    arr = np.asarray(x)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected [3, H, W] image, got {arr.shape}")
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() == ".ppm" else "PNG"
    try:
        Image.fromarray(to_uint8(arr).transpose(1, 2, 0), mode="RGB").save(path, format=fmt)
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


def load_pair_dir(root, gray="broadcast"):
    """Load ``<root>/degraded/<id>.png`` with ``<root>/clean/<id>.png`` counterparts."""
    root = Path(root)
    deg_dir, clean_dir = root / "degraded", root / "clean"
    if not deg_dir.is_dir() or not clean_dir.is_dir():
        raise FileNotFoundError(f"{root}: expected 'degraded/' and 'clean/' subdirectories")
    pairs = []
    for p in sorted(deg_dir.iterdir()):
        if p.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        c = clean_dir / p.name
        if not c.exists():
            raise FileNotFoundError(f"{root}: no clean counterpart for {p.name}")
        pairs.append(ImagePair(load_image(p, gray), load_image(c, gray), p.stem))
    if not pairs:
        raise FileNotFoundError(f"{root}: no image pairs found")
    return pairs


# -- degradation models ----------------------------------------------------------
def synth_haze(clean, params):
    """Atmospheric scattering: ``clean * m + A * (1 - m)``."""
    m = np.asarray(params.transmission, dtype=np.float32)
    if m.size and (m.min() < 0 or m.max() > 1):
        raise ValueError("transmission map must lie in [0, 1]")
    if m.ndim == 2:
        m = m[None]
    a = np.asarray(params.atmosphere, dtype=np.float32).reshape(-1, 1, 1)
    clean = np.asarray(clean, dtype=np.float32)
    return (clean * m + a * (1 - m)).astype(np.float32)


def invert_haze(hazy, params):
    """Recover the clean image from a hazy one given the true parameters (m > 0)."""
    m = np.asarray(params.transmission, dtype=np.float64)
    if m.ndim == 2:
        m = m[None]
    a = np.asarray(params.atmosphere, dtype=np.float64).reshape(-1, 1, 1)
    return (np.asarray(hazy, dtype=np.float64) - a * (1 - m)) / m


def synth_blur(clean, params, rng=None):
    """``clean (*) k + n`` per channel with reflect padding, clamped to [0, 1]."""
    k = np.asarray(params.kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ValueError(f"blur kernel must be 2-D with odd sides, got {k.shape}")
    if k.min() < 0 or abs(k.sum() - 1.0) > 1e-6:
        raise ValueError("blur kernel must be nonnegative and sum to 1")
    clean = np.asarray(clean, dtype=np.float64)
    out = np.stack([ndimage.convolve(ch, k, mode="mirror") for ch in clean])
    if params.noise_sigma > 0:
        rng = np.random.default_rng() if rng is None else rng
        out = out + rng.normal(0.0, params.noise_sigma, out.shape)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def resize_bilinear(a, height, width):
    """Bilinear resize of a 2-D array with half-pixel centres and edge clamping."""
    h, w = a.shape

    def axis_weights(n_in, n_out):
        src = np.clip((np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = axis_weights(h, height)
    x0, x1, fx = axis_weights(w, width)
    rows = a[y0] * (1 - fy)[:, None] + a[y1] * fy[:, None]
    return rows[:, x0] * (1 - fx) + rows[:, x1] * fx


def random_haze_params(rng, height, width):
    """Smooth transmission in [0.2, 0.9] from upsampled 8x8 noise; A ~ U[0.6, 1]^3."""
    field = resize_bilinear(rng.uniform(0.0, 1.0, (8, 8)), height, width)
    m = 0.2 + 0.7 * np.clip(field, 0.0, 1.0)
    a = rng.uniform(0.6, 1.0, 3)
    return HazeParams(m[None].astype(np.float32), a.astype(np.float32))


def motion_kernel(length, angle):
    """Normalized linear motion-blur kernel drawn with bilinear splatting."""
    size = length if length % 2 else length + 1
    k = np.zeros((size, size))
    c = (size - 1) / 2
    n = 4 * size
    for t in np.linspace(-(length - 1) / 2, (length - 1) / 2, n):
        y, x = c - t * math.sin(angle), c + t * math.cos(angle)
        y0, x0 = int(math.floor(y)), int(math.floor(x))
        fy, fx = y - y0, x - x0
        for yy, xx, wgt in ((y0, x0, (1 - fy) * (1 - fx)), (y0, x0 + 1, (1 - fy) * fx),
                            (y0 + 1, x0, fy * (1 - fx)), (y0 + 1, x0 + 1, fy * fx)):
            if 0 <= yy < size and 0 <= xx < size:
                k[yy, xx] += wgt
    return k / k.sum()


def random_blur_params(rng):
    """Random linear motion kernel (3-9 px, any angle), noise sigma ~ U[0, 0.01]."""
    length = int(rng.integers(3, 10))
    angle = float(rng.uniform(0.0, math.pi))
    sigma = float(rng.uniform(0.0, 0.01))
    return BlurParams(motion_kernel(length, angle), sigma)


def synthetic_clean_image(rng, size=64):
    """Procedural clean RGB image: smooth colour gradients, discs, bars and fine texture."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = np.stack([
        resize_bilinear(rng.uniform(0.1, 0.9, (4, 4)), size, size) for _ in range(3)
    ])
    img = base.copy()
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(0, 1, 2)
        r = rng.uniform(0.05, 0.25)
        colour = rng.uniform(0, 1, 3)[:, None, None]
        disc = ((yy - cy) ** 2 + (xx - cx) ** 2) < r**2
        img = np.where(disc, colour, img)
    for _ in range(int(rng.integers(1, 4))):
        freq = rng.uniform(4, 12)
        theta = rng.uniform(0, math.pi)
        stripes = 0.5 + 0.5 * np.sin(2 * math.pi * freq * (xx * math.cos(theta) + yy * math.sin(theta)))
        y0, x0 = rng.integers(0, size // 2, 2)
        h, w = rng.integers(size // 6, size // 2, 2)
        box = np.zeros((size, size), bool)
        box[y0 : y0 + h, x0 : x0 + w] = True
        colour = rng.uniform(0, 1, 3)[:, None, None]
        img = np.where(box, img * (1 - 0.6 * stripes) + colour * 0.6 * stripes, img)
    return np.clip(img, 0, 1).astype(np.float32)


def synthetic_pairs(kind, count, size, seed):
    """``count`` deterministic (degraded, clean) pairs of a synthetic degradation."""
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        clean = synthetic_clean_image(rng, size)
        if kind == "haze":
            degraded = synth_haze(clean, random_haze_params(rng, size, size))
        elif kind == "blur":
            degraded = synth_blur(clean, random_blur_params(rng), rng)
        else:
            raise ValueError(f"unknown synthetic degradation {kind!r}")
        pairs.append(ImagePair(degraded, clean, f"{kind}{i:04d}"))
    return pairs


# -- sampling --------------------------------------------------------------------
def sample_patch(pair, size, rng, multiple=4):
    """Crop the same uniformly placed ``size`` x ``size`` window from both images."""
    _, h, w = pair.clean.shape
    if size > min(h, w):
        raise ValueError(f"patch {size} larger than image {h}x{w}")
    if size % multiple:
        raise ValueError(f"patch size {size} must be divisible by {multiple}")
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    win = (slice(None), slice(y, y + size), slice(x, x + size))
    return ImagePair(pair.degraded[win], pair.clean[win], pair.id)


def dihedral(x, index):
    """Apply dihedral transform ``index`` in 0..7: ``index % 4`` quarter turns, then a
    horizontal flip if ``index >= 4``."""
    if not 0 <= index < 8:
        raise ValueError(f"dihedral index must be in 0..7, got {index}")
    if index % 2 and x.shape[-1] != x.shape[-2]:
        raise ValueError("90-degree rotation needs a square patch")
    out = np.rot90(x, index % 4, axes=(-2, -1))
    if index >= 4:
        out = out[..., ::-1]
    return np.ascontiguousarray(out)


def augment(pair, rng):
    """One of the 8 dihedral transforms, chosen uniformly, applied to both images."""
    index = int(rng.integers(0, 8))
    return ImagePair(dihedral(pair.degraded, index), dihedral(pair.clean, index), pair.id)


class PairSource:
    """Deterministic batch sampler over a list of image pairs."""

    def __init__(self, pairs, patch=64, augment=True, multiple=4):
        self.pairs = list(pairs)
        if not self.pairs:
            raise ValueError("empty dataset")
        self.patch = patch
        self.augment = augment
        self.multiple = multiple

    def __len__(self):
        return len(self.pairs)

    def sample_batch(self, rng, batch_size):
        degraded, clean = [], []
        for _ in range(batch_size):
            pair = self.pairs[int(rng.integers(0, len(self.pairs)))]
            pair = sample_patch(pair, self.patch, rng, self.multiple)
            if self.augment:
                pair = augment(pair, rng)
            degraded.append(pair.degraded)
            clean.append(pair.clean)
        return np.stack(degraded).astype(np.float32), np.stack(clean).astype(np.float32)
