"""Pure-Python kernel backend.

Same interface as the compiled `_kernels` extension: a weight store keyed by
packed int64 triples plus forward-backward, SGD, gradient-accumulation and
Viterbi passes over a LatticePlan.  Selected automatically when the compiled
kernel is unavailable (or forced via MONOSEQ_BACKEND=python); results agree
with the compiled backend to float tolerance, not bit-for-bit.
"""

from __future__ import annotations

import math

import numpy as np

NEG_INF = float("-inf")


class WeightStore:
    """Dict-backed sparse weight table; absent keys read as 0.0."""

    __slots__ = ("_d",)

    def __init__(self):
        self._d: dict[int, float] = {}

    def get(self, key) -> float:
        return self._d.get(int(key), 0.0)

    def set(self, key, value) -> None:
        self._d[int(key)] = float(value)

    def add(self, key, delta) -> None:
        k = int(key)
        self._d[k] = self._d.get(k, 0.0) + delta

    def __len__(self) -> int:
        return len(self._d)

    def items_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        n = len(self._d)
        keys = np.fromiter(self._d.keys(), dtype=np.int64, count=n)
        vals = np.fromiter(self._d.values(), dtype=np.float64, count=n)
        return keys, vals

    def sumsq(self) -> float:
        return float(sum(v * v for v in self._d.values()))

    def mul_all(self, c: float) -> None:
        for k in self._d:
            self._d[k] *= c


class _PyView:
    """Plain-int mirror of a plan's arrays (avoids numpy scalar overhead)."""

    __slots__ = ("kb", "nxt", "feats", "feat_off", "pair_off", "k", "n_states",
                 "cand_off", "state_off", "gold")

    def __init__(self, plan):
        self.kb = plan.kb.tolist()
        self.nxt = plan.nxt.tolist()
        self.feats = plan.feats.tolist()
        self.feat_off = plan.feat_off.tolist()
        self.pair_off = plan.pair_off.tolist()
        self.k = plan.k.tolist()
        self.n_states = plan.n_states.tolist()
        self.cand_off = plan.cand_off.tolist()
        self.state_off = plan.state_off.tolist()
        self.gold = plan.gold_pair.tolist()


def _view(plan) -> _PyView:
    if plan._pyv is None:
        plan._pyv = _PyView(plan)
    return plan._pyv


def _scores(store: WeightStore, scale: float, plan, pv: _PyView) -> list[float]:
    scores = [0.0] * pv.pair_off[-1]
    get = store._d.get
    feats = pv.feats
    kb = pv.kb
    for t in range(plan.T):
        fl = feats[pv.feat_off[t] : pv.feat_off[t + 1]]
        for p in range(pv.pair_off[t], pv.pair_off[t + 1]):
            kbv = kb[p]
            if kbv < 0:
                continue
            acc = 0.0
            for f in fl:
                acc += get(f | kbv, 0.0)
            scores[p] = acc * scale
    return scores


def _lse_update(cur: float, v: float) -> float:
    if cur == NEG_INF:
        return v
    if v > cur:
        return v + math.log1p(math.exp(cur - v))
    return cur + math.log1p(math.exp(v - cur))


def _forward(plan, pv, scores):
    T = plan.T
    alpha = [0.0] * pv.state_off[T + 1]
    log1p, exp = math.log1p, math.exp
    for b in range(1, pv.state_off[T + 1]):
        alpha[b] = NEG_INF
    for t in range(T):
        base_a = pv.state_off[t]
        base_n = pv.state_off[t + 1]
        kt = pv.k[t]
        poff = pv.pair_off[t]
        nxt = pv.nxt
        for si in range(pv.n_states[t]):
            a = alpha[base_a + si]
            if a == NEG_INF:
                continue
            row = poff + si * kt
            for yi in range(kt):
                p = row + yi
                v = a + scores[p]
                tgt = base_n + nxt[p]
                cur = alpha[tgt]
                if cur == NEG_INF:
                    alpha[tgt] = v
                elif v > cur:
                    alpha[tgt] = v + log1p(exp(cur - v))
                else:
                    alpha[tgt] = cur + log1p(exp(v - cur))
    acc = NEG_INF
    for b in range(pv.state_off[T], pv.state_off[T + 1]):
        acc = _lse_update(acc, alpha[b])
    return alpha, acc


def _backward(plan, pv, scores):
    T = plan.T
    beta = [0.0] * pv.state_off[T + 1]
    log1p, exp = math.log1p, math.exp
    for b in range(pv.state_off[T]):
        beta[b] = NEG_INF
    for t in range(T - 1, -1, -1):
        base_b = pv.state_off[t]
        base_n = pv.state_off[t + 1]
        kt = pv.k[t]
        poff = pv.pair_off[t]
        nxt = pv.nxt
        for si in range(pv.n_states[t]):
            acc = NEG_INF
            row = poff + si * kt
            for yi in range(kt):
                p = row + yi
                v = scores[p] + beta[base_n + nxt[p]]
                if acc == NEG_INF:
                    acc = v
                elif v > acc:
                    acc = v + log1p(exp(acc - v))
                else:
                    acc = acc + log1p(exp(v - acc))
            beta[base_b + si] = acc
    return beta, beta[0]


def _gold_score(pv, scores) -> float:
    if pv.gold and pv.gold[0] >= 0:
        return sum(scores[pv.pair_off[t] + pv.gold[t]] for t in range(len(pv.gold)))
    return float("nan")


def fb(store: WeightStore, scale: float, plan, want_posteriors: bool = False):
    """Forward-backward over the plan.

    Returns (logZ_forward, logZ_backward, gold_path_score, label_marginals,
    pair_posteriors_or_None); marginals are flat in the plan's cand layout,
    posteriors flat in pair layout.
    """
    pv = _view(plan)
    scores = _scores(store, scale, plan, pv)
    alpha, logz_f = _forward(plan, pv, scores)
    beta, logz_b = _backward(plan, pv, scores)
    T = plan.T
    marg = np.zeros(pv.cand_off[T], dtype=np.float64)
    post = np.empty(pv.pair_off[T], dtype=np.float64) if want_posteriors else None
    exp = math.exp
    for t in range(T):
        base_a = pv.state_off[t]
        base_n = pv.state_off[t + 1]
        kt = pv.k[t]
        poff = pv.pair_off[t]
        coff = pv.cand_off[t]
        for si in range(pv.n_states[t]):
            a = alpha[base_a + si]
            if a == NEG_INF:
                continue
            row = poff + si * kt
            for yi in range(kt):
                p = row + yi
                pr = exp(a + scores[p] + beta[base_n + pv.nxt[p]] - logz_f)
                if want_posteriors:
                    post[p] = pr
                marg[coff + yi] += pr
    return logz_f, logz_b, _gold_score(pv, scores), marg, post


def sgd_step(store: WeightStore, scale: float, eta: float, plan) -> float:
    """One SGD update: w += eta*(gold - expected)/scale on every touched key.

    The caller applies L2 decay by shrinking `scale` beforehand.  Returns the
    example conditional log-likelihood under the pre-update weights.
    """
    pv = _view(plan)
    scores = _scores(store, scale, plan, pv)
    alpha, logz_f = _forward(plan, pv, scores)
    beta, _ = _backward(plan, pv, scores)
    gold = _gold_score(pv, scores)
    T = plan.T
    d = store._d
    exp = math.exp
    feats = pv.feats
    for t in range(T):
        base_a = pv.state_off[t]
        base_n = pv.state_off[t + 1]
        kt = pv.k[t]
        poff = pv.pair_off[t]
        fl = feats[pv.feat_off[t] : pv.feat_off[t + 1]]
        gp = pv.gold[t]
        for si in range(pv.n_states[t]):
            a = alpha[base_a + si]
            if a == NEG_INF:
                continue
            row = si * kt
            for yi in range(kt):
                p = poff + row + yi
                coef = -exp(a + scores[p] + beta[base_n + pv.nxt[p]] - logz_f)
                if row + yi == gp:
                    coef += 1.0
                kbv = pv.kb[p]
                if kbv < 0:
                    continue
                delta = eta * coef / scale
                for f in fl:
                    key = f | kbv
                    d[key] = d.get(key, 0.0) + delta
    return gold - logz_f


def accumulate_grad(store: WeightStore, scale: float, plan, grad: WeightStore) -> float:
    """Add this example's (gold - expected) counts into `grad`; returns loglik."""
    pv = _view(plan)
    scores = _scores(store, scale, plan, pv)
    alpha, logz_f = _forward(plan, pv, scores)
    beta, _ = _backward(plan, pv, scores)
    gold = _gold_score(pv, scores)
    gd = grad._d
    exp = math.exp
    feats = pv.feats
    for t in range(plan.T):
        base_a = pv.state_off[t]
        base_n = pv.state_off[t + 1]
        kt = pv.k[t]
        poff = pv.pair_off[t]
        fl = feats[pv.feat_off[t] : pv.feat_off[t + 1]]
        gp = pv.gold[t]
        for si in range(pv.n_states[t]):
            a = alpha[base_a + si]
            if a == NEG_INF:
                continue
            row = si * kt
            for yi in range(kt):
                p = poff + row + yi
                coef = -exp(a + scores[p] + beta[base_n + pv.nxt[p]] - logz_f)
                if row + yi == gp:
                    coef += 1.0
                kbv = pv.kb[p]
                if kbv < 0:
                    continue
                for f in fl:
                    key = f | kbv
                    gd[key] = gd.get(key, 0.0) + coef
    return gold - logz_f


def viterbi(store: WeightStore, scale: float, plan) -> np.ndarray:
    """Max-scoring path; ties resolved toward the lexicographically smallest
    label sequence (candidate ids ascend in label order)."""
    pv = _view(plan)
    scores = _scores(store, scale, plan, pv)
    T = plan.T
    best = [NEG_INF] * pv.state_off[T + 1]
    for b in range(pv.state_off[T], pv.state_off[T + 1]):
        best[b] = 0.0
    ptotal = [0.0] * pv.pair_off[T]
    for t in range(T - 1, -1, -1):
        base_b = pv.state_off[t]
        base_n = pv.state_off[t + 1]
        kt = pv.k[t]
        poff = pv.pair_off[t]
        for si in range(pv.n_states[t]):
            row = poff + si * kt
            acc = NEG_INF
            for yi in range(kt):
                p = row + yi
                tot = scores[p] + best[base_n + pv.nxt[p]]
                ptotal[p] = tot
                if tot > acc:
                    acc = tot
            best[base_b + si] = acc
    out = np.empty(T, dtype=np.int32)
    si = 0
    for t in range(T):
        kt = pv.k[t]
        row = pv.pair_off[t] + si * kt
        target = best[pv.state_off[t] + si]
        for yi in range(kt):
            if ptotal[row + yi] == target:
                out[t] = yi
                si = pv.nxt[row + yi]
                break
        else:
            raise AssertionError("viterbi reconstruction failed")
    return out
