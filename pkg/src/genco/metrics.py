"""Over-fitting diagnostics and a pixel/projection-space Frechet distance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nets

HIST_BINS = 64
HIST_RANGE = (-4.0, 4.0)
PROJ_DIM = 32
PROJ_SEED = 20211
POPULATIONS = ("real", "fake", "holdout")


@dataclass
class ScoreHistogram:
    """64 equal bins over [-4, 4] plus underflow, overflow and NaN buckets."""

    edges: np.ndarray
    counts: dict[str, np.ndarray] = field(default_factory=dict)
    underflow: dict[str, int] = field(default_factory=dict)
    overflow: dict[str, int] = field(default_factory=dict)
    nonfinite: dict[str, int] = field(default_factory=dict)

    def total(self, population: str) -> int:
        return (int(self.counts[population].sum()) + self.underflow[population]
                + self.overflow[population] + self.nonfinite[population])

    def row(self, population: str) -> list[int]:
        """underflow, 64 bins, overflow, non-finite."""
        return ([self.underflow[population], *self.counts[population].tolist(),
                 self.overflow[population], self.nonfinite[population]])


def score_histogram(scores: dict[str, np.ndarray]) -> ScoreHistogram:
    lo, hi = HIST_RANGE
    hist = ScoreHistogram(np.linspace(lo, hi, HIST_BINS + 1))
    for name, s in scores.items():
        s = np.asarray(s, dtype=np.float64).reshape(-1)
        if s.size == 0:
            raise ValueError(f"score_histogram: empty population {name!r}")
        finite = np.isfinite(s)
        f = s[finite]
        under, over = f < lo, f > hi
        inside = f[~under & ~over]
        idx = np.minimum(np.floor((inside - lo) / (hi - lo) * HIST_BINS).astype(np.int64),
                         HIST_BINS - 1)
        hist.counts[name] = np.bincount(idx, minlength=HIST_BINS)
        hist.underflow[name] = int(under.sum())
        hist.overflow[name] = int(over.sum())
        hist.nonfinite[name] = int((~finite).sum())
    return hist


# ---------------------------------------------------------------- Frechet distance

def projection_matrix(dim: int, out_dim: int = PROJ_DIM, seed: int = PROJ_SEED) -> np.ndarray:
    """Fixed ``dim x out_dim`` matrix with orthonormal columns."""
    g = np.random.default_rng(seed).normal(size=(dim, out_dim))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def features(samples: np.ndarray, feature: str = "identity") -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).reshape(len(samples), -1)
    if feature == "identity":
        return x
    if feature == "projection":
        if x.shape[1] <= PROJ_DIM:
            return x
        return x @ projection_matrix(x.shape[1])
    raise ValueError(f"unknown feature map {feature!r}")


def default_feature(is_image: bool) -> str:
    return "projection" if is_image else "identity"


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _moments(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    d = x.shape[1]
    if len(x) >= d + 1:
        cov = np.cov(x, rowvar=False).reshape(d, d)
    else:
        var = x.var(axis=0, ddof=1) if len(x) > 1 else np.zeros(d)
        cov = np.diag(var)
    return mu, cov


def frechet_distance(mu_a, cov_a, mu_b, cov_b) -> float:
    """|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))."""
    root_a = _psd_sqrt(cov_a)
    inner = root_a @ cov_b @ root_a
    w = np.linalg.eigvalsh((inner + inner.T) / 2)
    cross = np.sqrt(np.clip(w, 0.0, None)).sum()
    diff = mu_a - mu_b
    return float(max(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * cross, 0.0))


def proxy_fid(samples_a: np.ndarray, samples_b: np.ndarray, feature: str = "identity") -> float:
    fa, fb = features(samples_a, feature), features(samples_b, feature)
    if not (np.all(np.isfinite(fa)) and np.all(np.isfinite(fb))):
        raise ValueError("proxy_fid: non-finite samples")
    if fa.shape[1] != fb.shape[1]:
        raise ValueError(f"proxy_fid: feature dims differ {fa.shape[1]} vs {fb.shape[1]}")
    return frechet_distance(*_moments(fa), *_moments(fb))


# ---------------------------------------------------------------- over-fit gap

@dataclass(frozen=True)
class OverfitGap:
    real_minus_holdout: float
    real_minus_fake: float


def overfit_gap(d: nets.NetworkParams, train: np.ndarray, holdout: np.ndarray,
                fake: np.ndarray) -> OverfitGap:
    if len(holdout) == 0:
        raise ValueError("overfit_gap: holdout set is empty")
    real = nets.predict(d, train).mean()
    return OverfitGap(float(real - nets.predict(d, holdout).mean()),
                      float(real - nets.predict(d, fake).mean()))
