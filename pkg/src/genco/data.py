"""Synthetic limited-data datasets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import binio

KINDS = ("points2d", "tinyimage")
FAMILIES = ("gratings", "blobs", "mixed")
MODE_RADIUS = 2.0
MODE_STD = 0.05


@dataclass
class Dataset:
    kind: str
    train: np.ndarray  # (n_train, *sample_shape)
    holdout: np.ndarray  # (n_holdout, *sample_shape)
    provenance: dict[str, Any] = field(default_factory=dict)

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return tuple(self.train.shape[1:])

    @property
    def dim(self) -> int:
        return int(np.prod(self.sample_shape))

    @property
    def image_shape(self) -> tuple[int, int, int]:
        """H x W x C view used by the frequency operator; a 2-D point is a 1 x 2 image."""
        if self.kind == "points2d":
            return (1, 2, 1)
        return tuple(self.sample_shape)  # type: ignore[return-value]

    @property
    def is_image(self) -> bool:
        return self.kind == "tinyimage"

    def flat_train(self) -> np.ndarray:
        return self.train.reshape(len(self.train), -1)

    def flat_holdout(self) -> np.ndarray:
        return self.holdout.reshape(len(self.holdout), -1)


def make_mixture2d(n_modes: int = 8, n_train: int = 32, n_holdout: int = 256,
                   seed: int = 0) -> Dataset:
    """Gaussian modes evenly spaced on a circle of radius 2, std 0.05.

    Sample ``i`` belongs to mode ``i % n_modes``.
    """
    if n_modes < 1:
        raise ValueError(f"n_modes must be >= 1, got {n_modes}")
    angles = 2 * np.pi * np.arange(n_modes) / n_modes
    centers = MODE_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    rng = np.random.default_rng(seed)

    def draw(n):
        return centers[np.arange(n) % n_modes] + rng.normal(0.0, MODE_STD, size=(n, 2))

    train, holdout = draw(n_train), draw(n_holdout)
    prov = {"generator": "mixture2d", "n_modes": n_modes, "radius": MODE_RADIUS,
            "std": MODE_STD, "seed": seed}
    return Dataset("points2d", train, holdout, prov)


def grating(size: int, kx: int, ky: int, phase: float, amplitude: float = 1.0) -> np.ndarray:
    """cos(2*pi*(kx*i + ky*j)/size + phase) on a size x size grid."""
    i, j = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    return amplitude * np.cos(2 * np.pi * (kx * i + ky * j) / size + phase)


def _blob(size: int, rng: np.random.Generator) -> np.ndarray:
    i, j = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    ci, cj = rng.uniform(0, size - 1, size=2)
    sigma = rng.uniform(0.8, size / 4)
    amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.4, 0.8)
    return amp * np.exp(-((i - ci) ** 2 + (j - cj) ** 2) / (2 * sigma ** 2))


def _wavevector(size: int, rng: np.random.Generator) -> tuple[int, int]:
    kmax = max(1, size // 4)
    while True:
        kx, ky = (int(v) for v in rng.integers(-kmax, kmax + 1, size=2))
        if (kx, ky) != (0, 0):
            return kx, ky


def make_tinyimages(pattern_family: str = "mixed", size: int = 8, n_train: int = 64,
                    n_holdout: int = 256, seed: int = 0) -> Dataset:
    """Procedural grayscale patterns in [-1, 1]: oriented gratings, Gaussian blobs, or both."""
    if size not in (8, 16):
        raise ValueError(f"size must be 8 or 16, got {size}")
    if pattern_family not in FAMILIES:
        raise ValueError(f"unknown pattern family {pattern_family!r}; expected one of {FAMILIES}")
    rng = np.random.default_rng(seed)
    images, waves = [], []
    for _ in range(n_train + n_holdout):
        img = np.zeros((size, size))
        kx = ky = 0
        if pattern_family in ("gratings", "mixed"):
            kx, ky = _wavevector(size, rng)
            amp = 0.9 if pattern_family == "gratings" else 0.6
            img += grating(size, kx, ky, rng.uniform(0, 2 * np.pi), amp)
        if pattern_family in ("blobs", "mixed"):
            for _ in range(int(rng.integers(1, 3))):
                img += _blob(size, rng)
        images.append(np.clip(img, -1.0, 1.0))
        waves.append([kx, ky])
    arr = np.stack(images)[..., None]
    prov = {"generator": "tinyimages", "family": pattern_family, "size": size, "seed": seed,
            "wavevectors": waves}
    return Dataset("tinyimage", arr[:n_train], arr[n_train:], prov)


def subsample(dataset: Dataset, fraction: float, seed: int = 0) -> Dataset:
    """Keep round(fraction * n) training samples, drawn without replacement; holdout untouched."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    n = len(dataset.train)
    count = int(np.floor(fraction * n + 0.5))
    if count == 0:
        raise ValueError(f"fraction {fraction} of {n} samples leaves an empty training set")
    idx = np.sort(np.random.default_rng(seed).choice(n, size=count, replace=False))
    prov = dict(dataset.provenance, subsample={"fraction": fraction, "seed": seed})
    waves = prov.get("wavevectors")
    if waves is not None:
        prov["wavevectors"] = [waves[i] for i in idx] + waves[n:]
    return Dataset(dataset.kind, dataset.train[idx].copy(), dataset.holdout, prov)


def make_dataset(kind: str, *, n_modes: int = 8, n_train: int = 32, n_holdout: int = 256,
                 size: int = 8, family: str = "mixed", seed: int = 0,
                 fraction: float = 1.0) -> Dataset:
    if kind == "points2d":
        ds = make_mixture2d(n_modes, n_train, n_holdout, seed)
    elif kind == "tinyimage":
        ds = make_tinyimages(family, size, n_train, n_holdout, seed)
    else:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")
    return ds if fraction == 1.0 else subsample(ds, fraction, seed)


def save_dataset(path, ds: Dataset) -> None:
    meta = {"format": "genco-dataset/1", "kind": ds.kind, "sample_shape": list(ds.sample_shape),
            "n_train": len(ds.train), "n_holdout": len(ds.holdout), "provenance": ds.provenance}
    binio.save(path, {"train": ds.train, "holdout": ds.holdout}, meta)


def load_dataset(path) -> Dataset:
    arrays, meta = binio.load(path)
    if meta.get("format") != "genco-dataset/1":
        raise binio.FormatError(f"{path}: not a dataset file")
    return Dataset(meta["kind"], arrays["train"], arrays["holdout"], meta.get("provenance", {}))
