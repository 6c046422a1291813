"""Synthetic jet-image dataset: generation, on-disk format, splits and
auxiliary-feature scaling.

Samples are class-balanced 3-channel images (tracks / ecal / hcal
analogues) of Gaussian energy deposits around a jet axis.  Label 0
("quark-like") draws few, collimated deposits with an ecal-leaning
channel mix; label 1 ("gluon-like") draws more, wider deposits leaning
hcal.  The two jet-level scalars, effective mass m0 and transverse
momentum pT, come from class-conditional log-normal distributions with
overlapping supports, so the task is learnable but not trivial.

On disk a dataset is a directory holding a human-readable `manifest`
plus flat little-endian binary blobs (`images.bin`, `aux.bin` as
float32, `labels.bin` one byte per label), sample-major, row-major,
stored in split order: the train block first, then val, then test.
Aux features are stored raw; the manifest carries the min-max scaling
parameters fitted on the train block, and the loader applies them.
Image channels are never rescaled.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

FORMAT_VERSION = 1
CHANNEL_NAMES = ("tracks", "ecal", "hcal")

DESK_SAMPLES = 2000
DESK_IMAGE_SIZE = 16
# full-scale detector-image geometry; constructible for shape tests but
# far too slow for desk-scale training
FULL_IMAGE_SIZE = 125
FULL_PATCH_SIZE = 25

TRAIN_FRACTION = 0.70
VAL_FRACTION = 0.15


class DatasetFormatError(ValueError):
    """On-disk dataset is missing, corrupt, or inconsistent."""


@dataclass(frozen=True)
class ScalingParams:
    minima: tuple[float, ...]  # per-feature train minimum
    maxima: tuple[float, ...]  # per-feature train maximum


@dataclass(frozen=True)
class DatasetManifest:
    format_version: int
    n_samples: int
    image_size: int
    channels: tuple[str, ...]
    n_train: int
    n_val: int
    n_test: int
    seed: int
    scaling: ScalingParams


def split_counts(n: int) -> tuple[int, int, int]:
    """70/15/15 by count: train and val floor, test takes the remainder."""
    n_train = int(np.floor(TRAIN_FRACTION * n))
    n_val = int(np.floor(VAL_FRACTION * n))
    return n_train, n_val, n - n_train - n_val


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded shuffle then partition; disjoint and exhaustive."""
    if n < 10:
        raise ValueError("need at least 10 samples to split")
    order = np.random.default_rng(seed).permutation(n)
    n_train, n_val, _ = split_counts(n)
    return (
        order[:n_train],
        order[n_train : n_train + n_val],
        order[n_train + n_val :],
    )


def split_dataset(samples: list, seed: int) -> tuple[list, list, list]:
    """Split any indexable collection into (train, val, test) lists."""
    idx_train, idx_val, idx_test = split_indices(len(samples), seed)
    return (
        [samples[i] for i in idx_train],
        [samples[i] for i in idx_val],
        [samples[i] for i in idx_test],
    )


def fit_minmax(train_features: np.ndarray) -> ScalingParams:
    """Per-feature min/max from the train split only."""
    feats = np.asarray(train_features, dtype=float)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ValueError("expected a non-empty (n, features) array")
    minima = feats.min(axis=0)
    maxima = feats.max(axis=0)
    if np.any(maxima <= minima):
        bad = int(np.argmax(maxima <= minima))
        raise ValueError(f"feature {bad} is constant; min-max scaling undefined")
    return ScalingParams(
        minima=tuple(float(v) for v in minima),
        maxima=tuple(float(v) for v in maxima),
    )


def apply_minmax(features: np.ndarray, params: ScalingParams) -> np.ndarray:
    """Map to [0, 1] on the train extremes; out-of-range values are NOT
    clamped (val/test may fall outside)."""
    feats = np.asarray(features, dtype=float)
    lo = np.asarray(params.minima)
    hi = np.asarray(params.maxima)
    return (feats - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# generation

# class-conditional recipe constants; tuned so a logistic regression on
# (m0, pT) alone lands around AUC 0.85 and the images add further signal
_BLOB_COUNT = {0: (1, 3), 1: (3, 8)}
_BLOB_SIGMA = {0: (0.05, 0.11), 1: (0.08, 0.18)}
_AXIS_SPREAD = {0: 0.055, 1: 0.12}
_CHANNEL_MIX = {0: np.array([0.50, 0.35, 0.15]), 1: np.array([0.30, 0.25, 0.45])}
_M0_LOGNORM = {0: (3.0, 0.35), 1: (3.5, 0.35)}
_PT_LOGNORM = {0: (4.80, 0.30), 1: (4.65, 0.30)}


def _render_sample(
    label: int, image_size: int, rng: np.random.Generator
) -> tuple[np.ndarray, float, float]:
    h = image_size
    yy, xx = np.mgrid[0:h, 0:h].astype(float)
    lo, hi = _BLOB_COUNT[label]
    n_blobs = int(rng.integers(lo, hi + 1))
    center = h / 2.0 + rng.normal(0.0, 0.03 * h, size=2)
    mix = _CHANNEL_MIX[label] + rng.uniform(-0.05, 0.05, size=3)
    mix = np.clip(mix, 0.02, None)
    mix /= mix.sum()
    image = np.zeros((h, h, 3))
    for _ in range(n_blobs):
        offset = rng.normal(0.0, _AXIS_SPREAD[label] * h, size=2)
        sigma = rng.uniform(*_BLOB_SIGMA[label]) * h
        amp = rng.uniform(0.3, 0.8)
        cy, cx = center + offset
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
        image += (amp * blob)[:, :, None] * mix[None, None, :]
    mu, sd = _M0_LOGNORM[label]
    m0 = float(np.exp(rng.normal(mu, sd)))
    mu, sd = _PT_LOGNORM[label]
    pt = float(np.exp(rng.normal(mu, sd)))
    return image, m0, pt


def generate_samples(
    n_samples: int, image_size: int, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw generation, before splitting: (images, aux, labels).

    Classes are balanced by alternating labels 0,1,0,1,... (class 0 gets
    the extra sample when n is odd).
    """
    if n_samples < 10:
        raise ValueError("n_samples must be >= 10")
    if image_size < 4:
        raise ValueError("image_size must be >= 4")
    rng = np.random.default_rng(seed)
    images = np.empty((n_samples, image_size, image_size, 3), dtype=np.float32)
    aux = np.empty((n_samples, 2), dtype=np.float32)
    labels = np.empty(n_samples, dtype=np.uint8)
    for i in range(n_samples):
        label = i % 2
        image, m0, pt = _render_sample(label, image_size, rng)
        images[i] = image.astype(np.float32)
        aux[i] = (m0, pt)
        labels[i] = label
    return images, aux, labels


def generate_dataset(
    out_dir: str,
    n_samples: int = DESK_SAMPLES,
    image_size: int = DESK_IMAGE_SIZE,
    seed: int = 0,
) -> DatasetManifest:
    """Generate, split and write a dataset directory; returns its manifest."""
    content_seed, split_seed = [
        int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(2)
    ]
    images, aux, labels = generate_samples(n_samples, image_size, content_seed)
    idx_train, idx_val, idx_test = split_indices(n_samples, split_seed)
    order = np.concatenate([idx_train, idx_val, idx_test])
    images, aux, labels = images[order], aux[order], labels[order]

    n_train = len(idx_train)
    scaling = fit_minmax(aux[:n_train].astype(float))
    manifest = DatasetManifest(
        format_version=FORMAT_VERSION,
        n_samples=n_samples,
        image_size=image_size,
        channels=CHANNEL_NAMES,
        n_train=n_train,
        n_val=len(idx_val),
        n_test=len(idx_test),
        seed=seed,
        scaling=scaling,
    )
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "manifest"), "w") as fh:
        fh.write(_format_manifest(manifest))
    images.astype("<f4").tofile(os.path.join(out_dir, "images.bin"))
    aux.astype("<f4").tofile(os.path.join(out_dir, "aux.bin"))
    labels.tofile(os.path.join(out_dir, "labels.bin"))
    return manifest


def _format_manifest(m: DatasetManifest) -> str:
    lines = [
        f"format_version = {m.format_version}",
        f"n_samples = {m.n_samples}",
        f"image_size = {m.image_size}",
        f"channels = {','.join(m.channels)}",
        f"n_train = {m.n_train}",
        f"n_val = {m.n_val}",
        f"n_test = {m.n_test}",
        f"seed = {m.seed}",
        f"m0_min = {float(m.scaling.minima[0])!r}",
        f"m0_max = {float(m.scaling.maxima[0])!r}",
        f"pt_min = {float(m.scaling.minima[1])!r}",
        f"pt_max = {float(m.scaling.maxima[1])!r}",
    ]
    return "\n".join(lines) + "\n"


def _parse_manifest(path: str) -> DatasetManifest:
    values: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise DatasetFormatError(f"malformed manifest line: {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    required = {
        "format_version", "n_samples", "image_size", "channels",
        "n_train", "n_val", "n_test", "seed",
        "m0_min", "m0_max", "pt_min", "pt_max",
    }
    missing = required - values.keys()
    if missing:
        raise DatasetFormatError(f"manifest is missing keys: {sorted(missing)}")
    version = int(values["format_version"])
    if version != FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported format_version {version} (expected {FORMAT_VERSION})"
        )
    return DatasetManifest(
        format_version=version,
        n_samples=int(values["n_samples"]),
        image_size=int(values["image_size"]),
        channels=tuple(values["channels"].split(",")),
        n_train=int(values["n_train"]),
        n_val=int(values["n_val"]),
        n_test=int(values["n_test"]),
        seed=int(values["seed"]),
        scaling=ScalingParams(
            minima=(float(values["m0_min"]), float(values["pt_min"])),
            maxima=(float(values["m0_max"]), float(values["pt_max"])),
        ),
    )


@dataclass(frozen=True)
class Dataset:
    """In-memory dataset; arrays are stored in split order."""

    manifest: DatasetManifest
    images: np.ndarray  # (n, H, W, 3) float32, as stored
    aux_raw: np.ndarray  # (n, 2) float32, as stored
    labels: np.ndarray  # (n,) uint8

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(images, min-max scaled aux as float64, labels) for one split."""
        m = self.manifest
        offsets = {
            "train": (0, m.n_train),
            "val": (m.n_train, m.n_train + m.n_val),
            "test": (m.n_train + m.n_val, m.n_samples),
        }
        if name not in offsets:
            raise ValueError(f"unknown split {name!r}")
        lo, hi = offsets[name]
        aux_scaled = apply_minmax(self.aux_raw[lo:hi].astype(float), m.scaling)
        return self.images[lo:hi], aux_scaled, self.labels[lo:hi]


def load_dataset(directory: str) -> Dataset:
    """Load and validate a dataset directory."""
    manifest_path = os.path.join(directory, "manifest")
    if not os.path.isfile(manifest_path):
        raise FileNotFoundError(f"no dataset manifest under {directory}")
    m = _parse_manifest(manifest_path)
    if m.n_train + m.n_val + m.n_test != m.n_samples:
        raise DatasetFormatError(
            f"split counts {m.n_train}+{m.n_val}+{m.n_test} != n_samples {m.n_samples}"
        )
    h = m.image_size
    expected = {
        "images.bin": m.n_samples * h * h * len(m.channels) * 4,
        "aux.bin": m.n_samples * 2 * 4,
        "labels.bin": m.n_samples,
    }
    for fname, size in expected.items():
        path = os.path.join(directory, fname)
        if not os.path.isfile(path):
            raise DatasetFormatError(f"missing blob {fname}")
        actual = os.path.getsize(path)
        if actual != size:
            raise DatasetFormatError(
                f"{fname} holds {actual} bytes, manifest implies {size}"
            )
    images = np.fromfile(os.path.join(directory, "images.bin"), dtype="<f4")
    images = images.reshape(m.n_samples, h, h, len(m.channels))
    aux = np.fromfile(os.path.join(directory, "aux.bin"), dtype="<f4").reshape(
        m.n_samples, 2
    )
    labels = np.fromfile(os.path.join(directory, "labels.bin"), dtype=np.uint8)
    if not np.all((labels == 0) | (labels == 1)):
        raise DatasetFormatError("labels.bin contains values outside {0, 1}")
    return Dataset(manifest=m, images=images, aux_raw=aux, labels=labels)
