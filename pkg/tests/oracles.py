"""Independent reference implementations used as test oracles.

Nothing here imports the package's numerics: forwards are re-derived in
numpy extended precision, transforms use numpy.fft or naive loops, and
gradients come from central finite differences.
"""

from __future__ import annotations

import math

import numpy as np

LD = np.longdouble
EPS = 1e-5


def naive_dft2(x: np.ndarray) -> np.ndarray:
    """O(n^4) double loop over a single ``H x W`` channel."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            acc = 0j
            for m in range(h):
                for n in range(w):
                    acc += x[m, n] * complex(math.cos(-2 * math.pi * (u * m / h + v * n / w)),
                                             math.sin(-2 * math.pi * (u * m / h + v * n / w)))
            out[u, v] = acc
    return out


def naive_idft2(xf: np.ndarray) -> np.ndarray:
    h, w = xf.shape
    return np.conj(naive_dft2(np.conj(xf))) / (h * w)


def radial_band(h: int, w: int, n_bands: int) -> np.ndarray:
    """Band id of each bin: floor(N * rho), rho the centered radius over its max."""
    def signed(n):
        k = np.arange(n)
        return np.where(k <= n // 2, k, k - n) / max(n / 2.0, 1.0)

    r = np.hypot(*np.meshgrid(signed(h), signed(w), indexing="ij"))
    if r.max() > 0:
        r = r / r.max()
    return np.minimum((r * n_bands).astype(int), n_bands - 1)


def reject_fft(x: np.ndarray, band: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Rejection through numpy.fft on ``[B, H, W, C]`` with per-image keep bits ``[B, N]``."""
    keep = bits[:, band][..., None].astype(float)
    return np.fft.ifft2(np.fft.fft2(x, axes=(1, 2)) * keep, axes=(1, 2)).real


# ---------------------------------------------------------------- extended-precision nets

def softplus(x):
    x = np.asarray(x, dtype=LD)
    return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))


def mlp(params: list[np.ndarray], x, slope: float = 0.2, tanh_out: bool = False):
    """``params`` alternates weight ``in x out`` and bias ``1 x out``."""
    h = np.asarray(x, dtype=LD)
    n = len(params) // 2
    for i in range(n):
        h = h @ params[2 * i].astype(LD) + params[2 * i + 1].astype(LD)
        if i < n - 1:
            h = np.where(h > 0, h, LD(slope) * h)
        elif tanh_out:
            h = np.tanh(h)
    return h


def adv_d(real, fake):
    return softplus(-np.asarray(real, dtype=LD)).mean() + softplus(fake).mean()


def adv_g(fake, mode="non-saturating"):
    if mode == "non-saturating":
        return softplus(-np.asarray(fake, dtype=LD)).mean()
    return -softplus(fake).mean()


def cosine(a, b, absolute=False):
    a = np.asarray(a, dtype=LD).ravel()
    b = np.asarray(b, dtype=LD).ravel()
    c = (a @ b) / (np.sqrt(a @ a) * np.sqrt(b @ b))
    return abs(c) if absolute else c


def flat(params):
    return np.concatenate([np.asarray(p, dtype=LD).ravel() for p in params])


# ---------------------------------------------------------------- finite differences

def central_diff(f, arrays: list[np.ndarray], eps: float = EPS) -> list[np.ndarray]:
    """d f / d arrays by central differences; ``f`` reads the arrays in place."""
    grads = []
    for a in arrays:
        g = np.zeros(a.shape, dtype=np.float64)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = a[i]
            a[i] = orig + eps
            up = f()
            a[i] = orig - eps
            down = f()
            a[i] = orig
            g[i] = float((LD(up) - LD(down)) / LD(2 * eps))
        grads.append(g)
    return grads


def rel_errors(analytic: list[np.ndarray], numeric: list[np.ndarray],
               floor: float = 1e-10) -> np.ndarray:
    a = np.concatenate([x.ravel() for x in analytic])
    n = np.concatenate([x.ravel() for x in numeric])
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


# ---------------------------------------------------------------- Adam

def scalar_adam(w0: float, grad, lr: float, beta1: float, beta2: float, eps: float,
                steps: int) -> list[float]:
    w, m, v = w0, 0.0, 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad(w)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mh = m / (1 - beta1 ** t)
        vh = v / (1 - beta2 ** t)
        w = w - lr * mh / (math.sqrt(vh) + eps)
        out.append(w)
    return out
