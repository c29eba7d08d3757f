"""Adversarial, weight-discrepancy and co-training losses.

Every quantity here is *minimized*. The discriminator loss is the negated
log-likelihood objective written in logit space (``log D = -softplus(-s)``,
``log(1 - D) = -softplus(s)``), and the weight-discrepancy term is the cosine
similarity of two flattened weight vectors, so descending on it pushes the
discriminators apart.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T


class DegenerateWeightsError(ValueError):
    """A flattened weight vector has zero norm; cosine similarity is undefined."""


class EmptyBatchError(ValueError):
    pass


GEN_MODES = ("non-saturating", "saturating")


def _check_batch(name: str, logits: T.Tensor) -> None:
    if logits.size == 0:
        raise EmptyBatchError(f"{name}: empty batch")


def adv_d_loss(real_logits: T.Tensor, fake_logits: T.Tensor) -> T.Tensor:
    """mean softplus(-s_real) + mean softplus(s_fake)."""
    _check_batch("adv_d_loss(real)", real_logits)
    _check_batch("adv_d_loss(fake)", fake_logits)
    return T.add(T.mean(T.softplus(-real_logits)), T.mean(T.softplus(fake_logits)))


def adv_g_loss(fake_logits: T.Tensor, mode: str = "non-saturating") -> T.Tensor:
    """Generator loss on discriminator logits of generated samples.

    ``non-saturating``: mean softplus(-s) = -E[log D(G(z))].
    ``saturating``: -mean softplus(s) = E[log(1 - D(G(z)))].
    """
    _check_batch("adv_g_loss", fake_logits)
    if mode == "non-saturating":
        return T.mean(T.softplus(-fake_logits))
    if mode == "saturating":
        return -T.mean(T.softplus(fake_logits))
    raise ValueError(f"unknown generator loss mode {mode!r}; expected one of {GEN_MODES}")


def weight_discrepancy(w1: T.Tensor, w2: T.Tensor, absolute: bool = False) -> T.Tensor:
    """Cosine similarity of two flat weight vectors (``|cos|`` if ``absolute``)."""
    if w1.shape != w2.shape:
        raise T.ShapeError(f"weight_discrepancy: lengths differ {w1.shape} vs {w2.shape}")
    if not np.any(w1.data) or not np.any(w2.data):
        raise DegenerateWeightsError("weight vector with zero norm")
    cos = T.div(T.dot(w1, w2), T.mul(T.norm(w1), T.norm(w2)))
    if absolute:
        # |c| as sign(c) * c keeps the gradient exact away from c = 0
        cos = T.scale(cos, 1.0 if cos.data >= 0 else -1.0)
    return cos


@dataclass
class LossBundle:
    """Per-step scalar losses; absent branches are ``None``."""

    d1: T.Tensor
    d2: T.Tensor | None = None
    d3: T.Tensor | None = None
    wd: T.Tensor | None = None
    weco: T.Tensor | None = None
    daco: T.Tensor | None = None
    g_total: T.Tensor | None = None

    def values(self) -> dict[str, float]:
        return {k: (float(v.data) if v is not None else float("nan"))
                for k, v in (("loss_d1", self.d1), ("loss_d2", self.d2), ("loss_d3", self.d3),
                             ("loss_wd", self.wd), ("loss_g_total", self.g_total))}


def weco_loss(d1_real: T.Tensor, d1_fake: T.Tensor, d2_real: T.Tensor, d2_fake: T.Tensor,
              w1: T.Tensor, w2: T.Tensor, lam: float = 1.0,
              absolute: bool = False) -> tuple[T.Tensor, T.Tensor, T.Tensor, T.Tensor]:
    """Returns ``(L_D1, L_D2, L_WeCo, L_wd)``; the discrepancy term sits in L_D2 only."""
    l1 = adv_d_loss(d1_real, d1_fake)
    wd = weight_discrepancy(w1, w2, absolute)
    l2 = T.add(adv_d_loss(d2_real, d2_fake), T.scale(wd, lam))
    return l1, l2, T.add(l1, l2), wd


def daco_loss(d1_real: T.Tensor, d1_fake: T.Tensor, d3_real_rejected: T.Tensor,
              d3_fake_rejected: T.Tensor) -> tuple[T.Tensor, T.Tensor, T.Tensor]:
    """Returns ``(L_D1, L_D3, L_DaCo)``; D3 sees the frequency-rejected views."""
    l1 = adv_d_loss(d1_real, d1_fake)
    l3 = adv_d_loss(d3_real_rejected, d3_fake_rejected)
    return l1, l3, T.add(l1, l3)


def generator_total_loss(fake_logits: Sequence[T.Tensor], mode: str = "non-saturating") -> T.Tensor:
    """Sum of generator losses over every discriminator path."""
    if not fake_logits:
        raise EmptyBatchError("generator_total_loss: no discriminator paths")
    total = adv_g_loss(fake_logits[0], mode)
    for s in fake_logits[1:]:
        total = T.add(total, adv_g_loss(s, mode))
    return total


def pairwise_terms(weights: Sequence[T.Tensor], lam: float = 1.0, absolute: bool = False,
                   detach_lower: bool = False) -> list[T.Tensor | None]:
    """Discrepancy term attached to each discriminator.

    Entry ``j`` holds ``lam * sum_{i<j} cos(w_i, w_j)``; entry 0 is ``None``.
    With ``detach_lower`` the lower-indexed vector of each pair is a constant.
    """
    if len(weights) < 2:
        raise ValueError("pairwise discrepancy needs at least two discriminators")
    terms: list[T.Tensor | None] = [None]
    for j in range(1, len(weights)):
        acc = None
        for i in range(j):
            wi = weights[i].detach() if detach_lower else weights[i]
            c = weight_discrepancy(wi, weights[j], absolute)
            acc = c if acc is None else T.add(acc, c)
        terms.append(T.scale(acc, lam))
    return terms


def pairwise_discrepancy(weights: Sequence[T.Tensor], lam: float = 1.0,
                         absolute: bool = False) -> T.Tensor:
    """``lam * sum_{i<j} cos(w_i, w_j)`` over all pairs."""
    terms = [t for t in pairwise_terms(weights, lam, absolute) if t is not None]
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return total
