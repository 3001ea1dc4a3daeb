"""Compiled and pure-Python kernels must agree to float tolerance."""

import random

import numpy as np
import pytest

from monoseq.pcrf import kernels
from monoseq.pcrf.lattice import build_plan, pack_features
from monoseq.pcrf.model import WeightTable

pytestmark = pytest.mark.skipif(
    "compiled" not in kernels.available_backends(),
    reason="compiled kernel not built",
)


def random_setup(seed, order):
    rng = random.Random(seed)
    labels = ["", "a", "b", "c"][: rng.randint(2, 4)]
    T = rng.randint(1, 6)
    n_feats = rng.randint(1, 5)
    feat_ids = [[rng.randrange(6) for _ in range(n_feats)] for _ in range(T)]
    flat, off = pack_features(feat_ids)
    cand = [sorted(rng.sample(range(len(labels)), rng.randint(1, len(labels))))
            for _ in range(T)]
    gold = [rng.choice(cand[t]) for t in range(T)]
    entries = []
    return labels, cand, flat, off, gold, rng


def build_pair(seed, order):
    labels, cand, flat, off, gold, rng = random_setup(seed, order)
    out = []
    for name in ("python", "compiled"):
        be = kernels.get_backend(name)
        table = WeightTable(order, labels, backend=be)
        plan = build_plan(table, cand, flat, off, gold_ids=gold, grow=True)
        # identical random weights on both stores, keyed identically
        wrng = random.Random(seed * 7 + order)
        for p in range(int(plan.pair_off[plan.T])):
            kbv = int(plan.kb[p])
            if kbv < 0:
                continue
            for f in set(flat.tolist()):
                table.store.set(f | kbv, wrng.gauss(0, 1))
        out.append((be, table, plan))
    return out


@pytest.mark.parametrize("order", [1, 2, 3])
@pytest.mark.parametrize("seed", [1, 2, 3, 4])
def test_fb_parity(order, seed):
    (be_p, tab_p, plan_p), (be_c, tab_c, plan_c) = build_pair(seed, order)
    rp = be_p.fb(tab_p.store, 1.0, plan_p, want_posteriors=True)
    rc = be_c.fb(tab_c.store, 1.0, plan_c, want_posteriors=True)
    assert rp[0] == pytest.approx(rc[0], rel=1e-12)  # logZ fwd
    assert rp[1] == pytest.approx(rc[1], rel=1e-12)  # logZ bwd
    assert rp[2] == pytest.approx(rc[2], rel=1e-12)  # gold score
    np.testing.assert_allclose(rp[3], rc[3], atol=1e-12)
    np.testing.assert_allclose(rp[4], rc[4], atol=1e-12)


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("seed", [5, 6])
def test_viterbi_parity(order, seed):
    (be_p, tab_p, plan_p), (be_c, tab_c, plan_c) = build_pair(seed, order)
    vp = be_p.viterbi(tab_p.store, 1.0, plan_p)
    vc = be_c.viterbi(tab_c.store, 1.0, plan_c)
    np.testing.assert_array_equal(vp, vc)


@pytest.mark.parametrize("seed", [7, 8])
def test_sgd_step_parity(seed):
    (be_p, tab_p, plan_p), (be_c, tab_c, plan_c) = build_pair(seed, 2)
    llp = be_p.sgd_step(tab_p.store, 0.9, 0.05, plan_p)
    llc = be_c.sgd_step(tab_c.store, 0.9, 0.05, plan_c)
    assert llp == pytest.approx(llc, rel=1e-12)
    kp, vp = tab_p.store.items_arrays()
    kc, vc = tab_c.store.items_arrays()
    dp = dict(zip(kp.tolist(), vp.tolist()))
    dc = dict(zip(kc.tolist(), vc.tolist()))
    assert set(dp) == set(dc)
    for k in dp:
        assert dp[k] == pytest.approx(dc[k], abs=1e-12)


def test_store_contract_both_backends():
    for name in kernels.available_backends():
        be = kernels.get_backend(name)
        s = be.WeightStore()
        assert s.get(42) == 0.0
        s.set(42, 1.5)
        s.add(42, 0.25)
        s.add(7, -1.0)
        assert s.get(42) == pytest.approx(1.75)
        assert len(s) == 2
        assert s.sumsq() == pytest.approx(1.75**2 + 1.0)
        s.mul_all(2.0)
        assert s.get(7) == pytest.approx(-2.0)
        keys, vals = s.items_arrays()
        assert sorted(keys.tolist()) == [7, 42]


def test_store_many_keys_resize():
    for name in kernels.available_backends():
        be = kernels.get_backend(name)
        s = be.WeightStore()
        rng = random.Random(0)
        ref = {}
        for _ in range(5000):
            k = rng.randrange(1 << 60)
            v = rng.uniform(-1, 1)
            s.add(k, v)
            ref[k] = ref.get(k, 0.0) + v
        assert len(s) == len(ref)
        for k, v in list(ref.items())[:200]:
            assert s.get(k) == pytest.approx(v, abs=1e-12)
