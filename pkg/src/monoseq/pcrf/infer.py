"""Inference over pruned lattices: marginals, coarse-to-fine decoding, ensembles."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from ..features import extract
from .lattice import BOS_SLOT, LatticePlan, PrunedLattice, build_plan, pack_features
from .model import BOS, ModelStack, WeightTable


def _state_labels(table: WeightTable, state: tuple[int, ...]) -> tuple:
    return tuple(BOS if s == BOS_SLOT else table.labels[s] for s in state)


def forward_backward(
    table: WeightTable,
    lattice: PrunedLattice,
    features: Sequence[Sequence[int]],
    return_all: bool = False,
):
    """Exact forward-backward on a candidate lattice.

    `features` holds interned feature ids per position (unknown ids are
    ignored).  Returns (logZ, marginals) where marginals[t] maps
    (history label tuple, label) to its posterior probability.  With
    return_all=True also returns the backward logZ and the per-position
    label marginals, for normalization checks.
    """
    if len(lattice) != len(features):
        raise ValueError("lattice and features disagree on length")
    cand_ids = [
        sorted(table.label_index[lab] for lab in cands) for cands in lattice.candidates
    ]
    feats_flat, feat_off = pack_features(features)
    plan = build_plan(table, cand_ids, feats_flat, feat_off, grow=True)
    logz_f, logz_b, _, marg, post = table.backend.fb(
        table.store, 1.0, plan, want_posteriors=True
    )
    marginals = []
    for t in range(plan.T):
        kt = int(plan.k[t])
        poff = int(plan.pair_off[t])
        cands = [table.labels[i] for i in cand_ids[t]]
        m: dict[tuple, float] = {}
        for si, state in enumerate(plan.states[t]):
            hist = _state_labels(table, state)
            for yi in range(kt):
                m[(hist, cands[yi])] = float(post[poff + si * kt + yi])
        marginals.append(m)
    if return_all:
        label_marg = [
            {
                table.labels[cand_ids[t][yi]]: float(
                    marg[int(plan.cand_off[t]) + yi]
                )
                for yi in range(int(plan.k[t]))
            }
            for t in range(plan.T)
        ]
        return float(logz_f), marginals, float(logz_b), label_marg
    return float(logz_f), marginals


def label_marginals(marginals: Sequence[Mapping[tuple, float]]) -> list[dict[str, float]]:
    """Collapse (history, label) posteriors to per-position label marginals."""
    out = []
    for m in marginals:
        d: dict[str, float] = {}
        for (_, lab), p in m.items():
            d[lab] = d.get(lab, 0.0) + p
        out.append(d)
    return out


def prune(
    marginals: Sequence[Mapping[str, float]],
    tau: float,
    top_k: int,
    gold: Sequence[str] | None = None,
) -> PrunedLattice:
    """Keep labels with marginal >= tau, cap at top_k by marginal (ties by
    label order), always keep the argmax, and always keep gold if given."""
    if gold is not None and len(gold) != len(marginals):
        raise ValueError("gold length must match marginals")
    positions = []
    for t, m in enumerate(marginals):
        if not m:
            raise ValueError(f"no marginals at position {t}")
        items = sorted(m.items())
        best_p = max(p for _, p in items)
        argmax_lab = next(lab for lab, p in items if p == best_p)
        kept = [(lab, p) for lab, p in items if p >= tau]
        kept.sort(key=lambda lp: (-lp[1], lp[0]))
        labs = {lab for lab, _ in kept[:top_k]}
        labs.add(argmax_lab)
        if gold is not None:
            labs.add(gold[t])
        positions.append(tuple(sorted(labs)))
    return PrunedLattice(tuple(positions))


def _prune_ids(
    cand_ids: Sequence[int],
    probs: np.ndarray,
    tau: float,
    top_k: int,
    gold_id: int | None,
) -> list[int]:
    """Id-level pruning; candidate ids ascend in label order."""
    kept = [i for i in range(len(cand_ids)) if probs[i] >= tau]
    if not kept:
        kept = [int(np.argmax(probs))]
    if len(kept) > top_k:
        kept.sort(key=lambda i: (-probs[i], i))
        kept = kept[:top_k]
    keep_set = {cand_ids[i] for i in kept}
    keep_set.add(cand_ids[int(np.argmax(probs))])
    if gold_id is not None:
        keep_set.add(gold_id)
    return sorted(keep_set)


def features_for_source(stack: ModelStack, source: str) -> tuple[np.ndarray, np.ndarray]:
    """Interned, packed window features for every position of `source`."""
    ids = [
        stack.features.intern_many(extract(source, p, stack.feature_config))
        for p in range(len(source))
    ]
    return pack_features(ids)


def decode_labels(stack: ModelStack, source: str, caches: list[dict] | None = None) -> list[str]:
    """Coarse-to-fine decode returning one output label per source symbol."""
    T = len(source)
    if T == 0:
        return []
    feats_flat, feat_off = features_for_source(stack, source)
    n_labels = len(stack.labels)
    cand: list[list[int]] = [list(range(n_labels))] * T
    tcfg = stack.train_config
    if caches is None:
        caches = [{} for _ in stack.tables]
    for idx, table in enumerate(stack.tables):
        last = idx == len(stack.tables) - 1
        plan = build_plan(
            table, cand, feats_flat, feat_off, grow=False, cache=caches[idx]
        )
        if last:
            picks = table.backend.viterbi(table.store, 1.0, plan)
            return [stack.labels[cand[t][int(picks[t])]] for t in range(T)]
        _, _, _, marg, _ = table.backend.fb(table.store, 1.0, plan)
        cand = [
            _prune_ids(
                cand[t],
                marg[int(plan.cand_off[t]) : int(plan.cand_off[t + 1])],
                tcfg.prune_threshold,
                tcfg.top_k,
                None,
            )
            for t in range(T)
        ]
    raise AssertionError("stack has no tables")


def decode(stack: ModelStack, source: str, caches: list[dict] | None = None) -> str:
    """Decode a source string; epsilon labels are dropped from the output."""
    return "".join(decode_labels(stack, source, caches))


def decode_corpus(stack: ModelStack, sources: Sequence[str], threads: int = 1) -> list[str]:
    """Decode many sources; order-preserving, optionally thread-parallel."""
    caches: list[dict] = [{} for _ in stack.tables]
    if threads <= 1:
        return [decode(stack, src, caches) for src in sources]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: decode(stack, s, caches), sources))


def ensemble_combine(distributions: Sequence[Mapping[str, float]]) -> dict[str, float]:
    """Geometric-mean combination of k distributions over one label support:
    p(y) = (1/Z) * prod_i p_i(y)^(1/k), renormalized to sum to 1."""
    if not distributions:
        raise ValueError("need at least one distribution")
    support = set(distributions[0])
    for d in distributions[1:]:
        if set(d) != support:
            raise ValueError("distributions must share an identical label support")
    for d in distributions:
        total = sum(d.values())
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"distribution sums to {total}, not 1")
        if any(p < 0.0 for p in d.values()):
            raise ValueError("negative probability")
    k = len(distributions)
    logs: dict[str, float] = {}
    for lab in support:
        acc = 0.0
        for d in distributions:
            p = d[lab]
            if p == 0.0:
                acc = float("-inf")
                break
            acc += math.log(p)
        logs[lab] = acc / k
    m = max(logs.values())
    if m == float("-inf"):
        raise ValueError("all labels have zero combined probability")
    expd = {lab: math.exp(v - m) for lab, v in logs.items()}
    z = sum(expd.values())
    return {lab: expd[lab] / z for lab in sorted(expd)}
