import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genco import losses as L
from genco import tensor as T

import oracles

LN2 = math.log(2)


def t(x):
    return T.tensor(np.asarray(x, dtype=float))


def test_adv_d_examples():
    assert L.adv_d_loss(t([0.0, 0.0]), t([0.0])).item() == pytest.approx(2 * LN2, abs=1e-15)
    assert L.adv_d_loss(t([800.0]), t([-800.0])).item() == 0.0
    expected = float(oracles.softplus(-1) / 2 + oracles.softplus(1) / 2 + oracles.softplus(0))
    got = L.adv_d_loss(t([1.0, -1.0]), t([0.0])).item()
    assert got == pytest.approx(expected, abs=1e-15)
    assert got == pytest.approx(1.506409, abs=1e-6)
    with pytest.raises(L.EmptyBatchError):
        L.adv_d_loss(t(np.zeros(0)), t([0.0]))


def test_adv_g_examples():
    assert L.adv_g_loss(t([0.0])).item() == pytest.approx(LN2, abs=1e-15)
    assert L.adv_g_loss(t([800.0])).item() == 0.0
    assert L.adv_g_loss(t([2.0]), "saturating").item() == pytest.approx(-2.126928, abs=1e-6)
    assert L.adv_g_loss(t([2.0]), "saturating").item() == pytest.approx(
        math.log(1 - 1 / (1 + math.exp(-2))), abs=1e-14)
    with pytest.raises(ValueError):
        L.adv_g_loss(t([0.0]), "hinge")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8),
       st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.floats(0.01, 3))
def test_adv_d_monotone_in_separation(real, fake, c):
    base = L.adv_d_loss(t(real), t(fake)).item()
    moved = L.adv_d_loss(t(np.add(real, c)), t(np.subtract(fake, c))).item()
    assert moved < base


def test_weight_discrepancy_examples():
    v = t([0.3, -1.0, 2.0])
    assert L.weight_discrepancy(v, v).item() == pytest.approx(1.0, abs=1e-15)
    assert L.weight_discrepancy(v, -v).item() == pytest.approx(-1.0, abs=1e-15)
    assert L.weight_discrepancy(v, -v, absolute=True).item() == pytest.approx(1.0, abs=1e-15)
    assert L.weight_discrepancy(t([1, 0]), t([1, 1])).item() == pytest.approx(0.707107, abs=1e-6)
    with pytest.raises(L.DegenerateWeightsError):
        L.weight_discrepancy(t([0, 0]), t([1, 1]))
    with pytest.raises(T.ShapeError):
        L.weight_discrepancy(t([1, 0]), t([1, 1, 1]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_weight_discrepancy_scale_invariant(seed, a, b):
    rng = np.random.default_rng(seed)
    w1, w2 = rng.normal(size=20), rng.normal(size=20)
    base = L.weight_discrepancy(t(w1), t(w2)).item()
    assert abs(L.weight_discrepancy(t(a * w1), t(b * w2)).item() - base) < 1e-12


def test_weco_examples():
    rng = np.random.default_rng(0)
    s = [t(rng.normal(size=4)) for _ in range(4)]
    w1, w2 = t(rng.normal(size=6)), t(rng.normal(size=6))
    l1, l2, weco, wd = L.weco_loss(*s, w1, w2, lam=0.0)
    assert weco.item() == L.adv_d_loss(s[0], s[1]).item() + L.adv_d_loss(s[2], s[3]).item()

    z = t(np.zeros(3))
    _, _, weco, wd = L.weco_loss(z, z, z, z, w1, w1, lam=1.0)
    assert weco.item() == pytest.approx(2 * (2 * LN2) + 1, abs=1e-14)
    assert wd.item() == pytest.approx(1.0, abs=1e-15)


def test_daco_examples():
    rng = np.random.default_rng(1)
    z = t(np.zeros(4))
    assert L.daco_loss(z, z, z, z)[2].item() == pytest.approx(4 * LN2, abs=1e-14)
    s = [t(rng.normal(size=5)) for _ in range(4)]
    l1, l3, daco = L.daco_loss(*s)
    assert daco.item() == L.adv_d_loss(s[0], s[1]).item() + L.adv_d_loss(s[2], s[3]).item()
    assert l1.item() == L.adv_d_loss(s[0], s[1]).item()


def test_generator_total_examples():
    z = t(np.zeros(3))
    assert L.generator_total_loss([z, z, z]).item() == pytest.approx(3 * LN2, abs=1e-14)
    big = t(np.full(3, 800.0))
    got = L.generator_total_loss([z, big, z]).item()
    assert got == pytest.approx(2 * LN2, abs=1e-14)
    with pytest.raises(L.EmptyBatchError):
        L.generator_total_loss([])


def test_pairwise_examples():
    rng = np.random.default_rng(2)
    w = [t(rng.normal(size=7)) for _ in range(4)]
    assert L.pairwise_discrepancy(w[:2], lam=0.5).item() == 0.5 * L.weight_discrepancy(w[0], w[1]).item()
    same = t(rng.normal(size=7))
    assert L.pairwise_discrepancy([same, same, same]).item() == pytest.approx(3.0, abs=1e-14)
    brute = sum(float(oracles.cosine(w[i].data, w[j].data))
                for i, j in itertools.combinations(range(4), 2))
    assert L.pairwise_discrepancy(w).item() == pytest.approx(brute, abs=1e-14)
    with pytest.raises(ValueError):
        L.pairwise_terms(w[:1])


def test_pairwise_terms_assign_each_pair_to_higher_index():
    rng = np.random.default_rng(3)
    w = [t(rng.normal(size=5)) for _ in range(3)]
    terms = L.pairwise_terms(w, lam=2.0)
    assert terms[0] is None
    c = {(i, j): float(oracles.cosine(w[i].data, w[j].data)) for i, j in itertools.combinations(range(3), 2)}
    assert terms[1].item() == pytest.approx(2 * c[0, 1], abs=1e-14)
    assert terms[2].item() == pytest.approx(2 * (c[0, 2] + c[1, 2]), abs=1e-14)


def test_bundle_values_and_composition_are_exact():
    rng = np.random.default_rng(4)
    s = [t(rng.normal(size=5)) for _ in range(4)]
    w1, w2 = t(rng.normal(size=6)), t(rng.normal(size=6))
    l1, l2, weco, wd = L.weco_loss(*s, w1, w2, lam=0.7)
    assert weco.item() == l1.item() + l2.item()
    bundle = L.LossBundle(d1=l1, d2=l2, wd=wd, weco=weco)
    vals = bundle.values()
    assert vals["loss_d1"] == l1.item() and math.isnan(vals["loss_d3"])


def test_weco_gradient_wrt_second_weights():
    """Small standalone check; the full criterion lives in the acceptance suite."""
    rng = np.random.default_rng(5)
    w1, w2 = rng.normal(size=12), rng.normal(size=12)
    s = rng.normal(size=(4, 3))
    tw2 = T.tensor(w2, requires_grad=True)
    _, _, weco, _ = L.weco_loss(t(s[0]), t(s[1]), T.tensor(s[2]), T.tensor(s[3]), t(w1), tw2, lam=1.0)
    T.backward(weco)
    num = oracles.central_diff(lambda: oracles.cosine(w1, w2), [w2])
    assert oracles.rel_errors([tw2.grad], num).max() < 1e-4
