"""Two-class image datasets: packed file format, synthetic generator, splitting.

Packed file layout (little-endian)::

    b"LVDS1\\0"  u16 version=1  u32 N  u16 H  u16 W  u16 C(=3)  u8 encoding(0)
    N x ( u8 label, H*W*C pixel bytes, row-major, channel-interleaved )
    u32 CRC-32 of everything above

Encoding 0 is uint8 RGB; samples are exposed as float64 in [0, 1]
(value / 255).
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from ._binio import Reader, atomic_write, split_crc, with_crc
from .errors import CorruptionError, FormatError, InputError, ShapeError, SplitError

DATASET_MAGIC = b"LVDS1\x00"
DATASET_VERSION = 1
ENCODING_UINT8_RGB = 0
_HEADER = struct.Struct("<HIHHHB")

BONAFIDE = 0
ATTACKER = 1
CLASS_NAMES = {BONAFIDE: "bonafide", ATTACKER: "attacker"}

# synthetic generator constants
_RADIAL_LOW, _RADIAL_HIGH = 0.2, 0.8
_NOISE_BLUR_SIGMA = 2.0
_STRIPE_AMPLITUDE = 0.12


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled uint8 RGB images. ``samples`` gives the normalised float view."""

    pixels: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    source: str = ""
    _samples: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if pixels.ndim != 4:
            raise ShapeError(f"pixels must be [N, H, W, C], got {pixels.shape}")
        if len(pixels) < 1:
            raise InputError("a dataset needs at least one sample")
        if labels.shape != (len(pixels),):
            raise InputError(f"{len(pixels)} samples but labels have shape {labels.shape}")
        if np.any(labels > ATTACKER):
            raise InputError("labels must be 0 (bonafide) or 1 (attacker)")
        pixels.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    @property
    def samples(self):
        if self._samples is None:
            s = self.pixels / 255.0
            s.flags.writeable = False
            object.__setattr__(self, "_samples", s)
        return self._samples

    @property
    def image_shape(self):
        return self.pixels.shape[1:]

    @property
    def manifest(self):
        counts = np.bincount(self.labels, minlength=2)
        return {
            "name": self.name,
            "source": self.source,
            "counts": {"bonafide": int(counts[BONAFIDE]), "attacker": int(counts[ATTACKER])},
            "image_shape": list(self.image_shape),
        }

    def subset(self, indices, name=None):
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(self.pixels[indices], self.labels[indices],
                       name=name or self.name, source=self.source)


# -- packed format -----------------------------------------------------------

def encode_dataset(dataset):
    n, h, w, c = dataset.pixels.shape
    if c != 3:
        raise ShapeError(f"packed format stores RGB only, got {c} channels")
    if max(h, w) > 0xFFFF:
        raise ShapeError("image dimensions exceed the u16 header fields")
    header = DATASET_MAGIC + _HEADER.pack(DATASET_VERSION, n, h, w, c, ENCODING_UINT8_RGB)
    records = np.empty((n, 1 + h * w * c), dtype=np.uint8)
    records[:, 0] = dataset.labels
    records[:, 1:] = dataset.pixels.reshape(n, -1)
    return with_crc(header + records.tobytes())


def decode_dataset(blob, name="dataset", source=""):
    if len(blob) < len(DATASET_MAGIC) or blob[:len(DATASET_MAGIC)] != DATASET_MAGIC:
        raise FormatError("not a packed dataset file (bad magic)")
    r = Reader(blob, len(DATASET_MAGIC))
    if r.remaining < _HEADER.size:
        raise FormatError("packed dataset header is incomplete")
    version, n, h, w, c, encoding = r.unpack("HIHHHB")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    if encoding != ENCODING_UINT8_RGB:
        raise FormatError(f"unknown pixel encoding tag {encoding}")
    if c != 3:
        raise FormatError(f"packed datasets must have 3 channels, header says {c}")
    record = 1 + h * w * c
    expected = r.pos + n * record + 4
    if len(blob) != expected:
        raise CorruptionError(
            f"header declares {n} samples ({expected} bytes) but file has {len(blob)} bytes")
    payload = split_crc(blob)
    records = np.frombuffer(payload, dtype=np.uint8, offset=r.pos).reshape(n, record)
    labels = records[:, 0].copy()
    if np.any(labels > ATTACKER):
        raise CorruptionError("label byte outside {0, 1}")
    try:
        return Dataset(records[:, 1:].reshape(n, h, w, c).copy(), labels, name=name, source=source)
    except InputError as exc:
        raise CorruptionError(str(exc)) from exc


def save_packed_dataset(dataset, path):
    atomic_write(path, encode_dataset(dataset))


def load_packed_dataset(path, name=None):
    path = os.fspath(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    return decode_dataset(blob, name=name, source=f"packed file {path}")


# -- synthetic data ----------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    per_class: int = 256
    height: int = 64
    width: int = 64
    noise_sigma: float = 0.05
    stripe_period: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.per_class < 1:
            raise InputError("per_class must be positive")
        if self.height < 4 or self.width < 4 or self.height % 4 or self.width % 4:
            raise ShapeError(f"synthetic size {self.height}x{self.width} must be divisible by 4")
        if self.noise_sigma < 0:
            raise InputError("noise_sigma must be non-negative")
        if self.stripe_period < 1:
            raise InputError("stripe_period must be positive")


def radial_gradient(height, width):
    """Bright centre fading linearly to the corners, in [0.2, 0.8]."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    r = np.hypot(yy - cy, xx - cx)
    return _RADIAL_HIGH - (_RADIAL_HIGH - _RADIAL_LOW) * r / np.hypot(cy, cx)


def stripe_pattern(height, width, period):
    """Vertical sinusoidal stripes, constant down each column."""
    phase = 2.0 * np.pi * np.arange(width) / period
    return np.broadcast_to(_STRIPE_AMPLITUDE * np.sin(phase), (height, width))


def _quantise(field_):
    return np.round(np.clip(field_, 0.0, 1.0) * 255.0).astype(np.uint8)


def generate_synthetic(spec, name="synthetic"):
    """Bonafide: radial gradient plus a blurred noise field with std ``noise_sigma``.
    Attacker: an independent draw of the same plus periodic stripes."""
    rng = np.random.default_rng(spec.seed)
    n = 2 * spec.per_class
    h, w = spec.height, spec.width
    base = radial_gradient(h, w)[:, :, None]
    stripes = stripe_pattern(h, w, spec.stripe_period)[:, :, None]

    pixels = np.empty((n, h, w, 3), dtype=np.uint8)
    labels = np.repeat(np.array([BONAFIDE, ATTACKER], dtype=np.uint8), spec.per_class)
    for i in range(n):
        img = np.repeat(base, 3, axis=2)
        if spec.noise_sigma > 0:
            noise = gaussian_filter(rng.standard_normal((h, w, 3)),
                                    sigma=(_NOISE_BLUR_SIGMA, _NOISE_BLUR_SIGMA, 0), mode="wrap")
            noise *= spec.noise_sigma / noise.std()
            img = img + noise
        if labels[i] == ATTACKER:
            img = img + stripes
        pixels[i] = _quantise(img)

    source = (f"synthetic per_class={spec.per_class} size={h}x{w} "
              f"noise_sigma={spec.noise_sigma} stripe_period={spec.stripe_period} "
              f"seed={spec.seed}")
    return Dataset(pixels, labels, name=name, source=source)


# -- splitting ---------------------------------------------------------------

def split_dataset(dataset, holdout_fraction, seed):
    """Stratified, disjoint split into ``(train, holdout)``."""
    if not 0.0 < holdout_fraction < 1.0:
        raise SplitError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, hold_idx = [], []
    for cls in (BONAFIDE, ATTACKER):
        members = np.flatnonzero(dataset.labels == cls)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        n_hold = int(round(holdout_fraction * members.size))
        if n_hold == 0 or n_hold == members.size:
            raise SplitError(
                f"holdout fraction {holdout_fraction} leaves an empty {CLASS_NAMES[cls]} "
                f"partition ({members.size} samples)")
        hold_idx.append(members[:n_hold])
        train_idx.append(members[n_hold:])
    train = np.sort(np.concatenate(train_idx))
    hold = np.sort(np.concatenate(hold_idx))
    return (dataset.subset(train, f"{dataset.name}-train"),
            dataset.subset(hold, f"{dataset.name}-holdout"))
