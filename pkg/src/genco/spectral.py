"""Random frequency-component rejection.

An image is moved to the frequency domain, split into ``N`` radial bands, a
random subset of the bands is zeroed and the remainder is transformed back.
The composite is a real, symmetric, idempotent linear projection, so it is its
own adjoint.

Images are ``H x W x C`` arrays; batched helpers take ``B x H x W x C``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T

IMAG_TOL = 1e-9


class SymmetryError(RuntimeError):
    """Reconstruction left an imaginary residue; the band masks are not symmetric."""


# ---------------------------------------------------------------- transforms

def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def _fft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x.astype(np.complex128)
    even = _fft_last(x[..., 0::2])
    odd = _fft_last(x[..., 1::2])
    tw = np.exp(-2j * np.pi * np.arange(n // 2) / n) * odd
    return np.concatenate([even + tw, even - tw], axis=-1)


def _dft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    k = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x.astype(np.complex128) @ mat.T


def dft_axis(x: np.ndarray, axis: int, inverse: bool = False) -> np.ndarray:
    """Unnormalized forward DFT along one axis; ``inverse`` applies 1/n.

    Radix-2 when the length is a power of two, direct summation otherwise.
    """
    x = np.moveaxis(np.asarray(x), axis, -1)
    n = x.shape[-1]
    if inverse:
        x = np.conj(x)
    y = _fft_last(x) if _is_pow2(n) else _dft_last(x)
    if inverse:
        y = np.conj(y) / n
    return np.moveaxis(y, -1, axis)


def dft2(image: np.ndarray) -> np.ndarray:
    """2-D DFT over the spatial axes of ``[..., H, W, C]``."""
    image = np.asarray(image)
    if image.ndim < 3 or image.shape[-3] < 1 or image.shape[-2] < 1:
        raise ValueError(f"dft2: expected [..., H, W, C] with H, W >= 1, got {image.shape}")
    return dft_axis(dft_axis(image, -3), -2)


def idft2(spectrum: np.ndarray) -> np.ndarray:
    return dft_axis(dft_axis(spectrum, -3, inverse=True), -2, inverse=True)


# ---------------------------------------------------------------- filter bank

@dataclass(frozen=True)
class FilterBank:
    n_bands: int
    height: int
    width: int
    band_index: np.ndarray  # H x W, band id of every frequency bin

    @property
    def masks(self) -> np.ndarray:
        """``N x H x W`` binary masks, one per band."""
        return (self.band_index[None] == np.arange(self.n_bands)[:, None, None]).astype(np.int64)

    def mask(self, k: int) -> np.ndarray:
        return (self.band_index == k).astype(np.int64)


def radial_frequency(height: int, width: int) -> np.ndarray:
    """Centered frequency magnitude of every DFT bin, scaled so the maximum is 1."""
    def signed(n: int) -> np.ndarray:
        k = np.arange(n)
        return np.abs(np.where(k <= n // 2, k, k - n)).astype(np.float64) / max(n / 2.0, 1.0)

    fu, fv = signed(height), signed(width)
    r = np.sqrt(fu[:, None] ** 2 + fv[None, :] ** 2)
    top = r.max()
    return r / top if top > 0 else r


def build_filter_bank(height: int, width: int, n_bands: int = 64) -> FilterBank:
    """Split the frequency grid into ``n_bands`` equal-width radial annuli."""
    if n_bands < 1:
        raise ValueError(f"n_bands must be >= 1, got {n_bands}")
    rho = radial_frequency(height, width)
    band = np.minimum(np.floor(rho * n_bands).astype(np.int64), n_bands - 1)
    return FilterBank(n_bands, height, width, band)


def decompose(x_f: np.ndarray, bank: FilterBank) -> np.ndarray:
    """Split a transform ``[H, W, C]`` into its ``N`` band components ``[N, H, W, C]``."""
    x_f = np.asarray(x_f)
    if x_f.shape[-3:-1] != (bank.height, bank.width):
        raise ValueError(f"decompose: spectrum {x_f.shape} does not match bank "
                         f"{bank.height}x{bank.width}")
    return bank.masks[..., None] * x_f[None]


# ---------------------------------------------------------------- rejection

def rejected_count(n_bands: int, p: float) -> int:
    # half-up rounding of P*N
    return int(np.floor(p * n_bands + 0.5))


def sample_rejection_mask(n_bands: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Binary keep-vector of length ``n_bands`` with exactly round(P*N) zeros."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"P must lie in [0, 1], got {p}")
    bits = np.ones(n_bands, dtype=np.int64)
    bits[rng.choice(n_bands, size=rejected_count(n_bands, p), replace=False)] = 0
    return bits


def sample_rejection_masks(batch: int, n_bands: int, p: float,
                           rng: np.random.Generator) -> np.ndarray:
    """One independent keep-vector per image, ``B x N``."""
    return np.stack([sample_rejection_mask(n_bands, p, rng) for _ in range(batch)]) \
        if batch else np.ones((0, n_bands), dtype=np.int64)


def keep_grid(bank: FilterBank, bits: np.ndarray) -> np.ndarray:
    """Frequency-domain keep mask(s) ``[..., H, W]`` for keep-vector(s) ``[..., N]``."""
    bits = np.asarray(bits)
    if bits.shape[-1] != bank.n_bands:
        raise ValueError(f"mask has {bits.shape[-1]} bits, bank has {bank.n_bands} bands")
    return bits[..., bank.band_index].astype(np.float64)


def reject_and_reconstruct(x: np.ndarray, bank: FilterBank, bits: np.ndarray) -> np.ndarray:
    """Apply the rejection operator to ``[H, W, C]`` (one keep-vector) or
    ``[B, H, W, C]`` (one keep-vector per image)."""
    x = np.asarray(x, dtype=np.float64)
    bits = np.asarray(bits)
    if x.ndim == 4 and bits.ndim == 1:
        bits = np.broadcast_to(bits, (x.shape[0], bits.shape[0]))
    if x.ndim == 4 and bits.shape[0] != x.shape[0]:
        raise ValueError(f"{bits.shape[0]} masks for a batch of {x.shape[0]}")
    if x.shape[-3:-1] != (bank.height, bank.width):
        raise ValueError(f"image {x.shape} does not match bank {bank.height}x{bank.width}")
    keep = keep_grid(bank, bits)
    y = idft2(dft2(x) * keep[..., None])
    residue = np.max(np.abs(y.imag)) if y.size else 0.0
    if residue >= IMAG_TOL:
        raise SymmetryError(f"imaginary residue {residue:.3e} after reconstruction")
    return np.ascontiguousarray(y.real)


def adjoint_reject(grad_out: np.ndarray, bank: FilterBank, bits: np.ndarray) -> np.ndarray:
    # symmetric real projector: the adjoint is the operator itself
    return reject_and_reconstruct(grad_out, bank, bits)


def reject_tensor(x: T.Tensor, image_shape: tuple[int, int, int], bank: FilterBank,
                  bits: np.ndarray) -> T.Tensor:
    """Differentiable rejection of a flattened batch ``B x (H*W*C)``."""
    b = x.shape[0]
    shape = (b, *image_shape)

    def fwd(v):
        return reject_and_reconstruct(v.reshape(shape), bank, bits).reshape(b, -1)

    def adj(g):
        return adjoint_reject(g.reshape(shape), bank, bits).reshape(b, -1)

    return T.linear_map(x, fwd, adj, name="reject")
