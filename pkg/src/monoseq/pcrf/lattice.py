"""Candidate lattices and the packed DP plans consumed by the kernels.

A plan flattens one example at one model order into contiguous arrays:
per position t there is a block of (previous state, candidate label) pairs,
where a state is the window of the last `order` label ids (begin-of-sequence
slots pad short windows).  Weight keys pack (feature, history, label) into a
single non-negative int64:

    key = (feature_id << 39) | (history_id << 16) | label_id

so feature ids are limited to 24 bits, history ids to 23, label ids to 16
(0xFFFF is the reserved begin-of-sequence slot inside history tuples).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

BOS_SLOT = 0xFFFF
H_SHIFT = 16
F_SHIFT = 39
MAX_HISTORIES = 1 << 23
MAX_LABEL_ID = 0xFFFF  # exclusive upper bound for real label ids
KB_SKIP = -1  # history unseen in a frozen table: all its weights are zero


@dataclass(frozen=True)
class PrunedLattice:
    """Per-position candidate output labels (lexicographically sorted)."""

    candidates: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        for i, cands in enumerate(self.candidates):
            if not cands:
                raise ValueError(f"empty candidate set at position {i}")

    def __len__(self) -> int:
        return len(self.candidates)


class LatticePlan:
    """Flat arrays for one example at one order.  See module docstring."""

    __slots__ = (
        "T",
        "n_states",
        "state_off",
        "k",
        "pair_off",
        "kb",
        "nxt",
        "cand",
        "cand_off",
        "feats",
        "feat_off",
        "gold_pair",
        "states",
        "_pyv",
    )

    def __init__(self, T, n_states, state_off, k, pair_off, kb, nxt, cand, cand_off,
                 feats, feat_off, gold_pair, states):
        self.T = T
        self.n_states = n_states
        self.state_off = state_off
        self.k = k
        self.pair_off = pair_off
        self.kb = kb
        self.nxt = nxt
        self.cand = cand
        self.cand_off = cand_off
        self.feats = feats
        self.feat_off = feat_off
        self.gold_pair = gold_pair
        self.states = states
        self._pyv = None


def pack_features(feat_ids_per_pos: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Flatten per-position feature ids, pre-shifted for key packing.

    Unknown ids (negative) are dropped: they carry weight zero by contract.
    """
    offs = [0]
    vals: list[int] = []
    for ids in feat_ids_per_pos:
        vals.extend(f << F_SHIFT for f in ids if f >= 0)
        offs.append(len(vals))
    return np.asarray(vals, dtype=np.int64), np.asarray(offs, dtype=np.int64)


def build_plan(
    table,
    cand_ids: Sequence[Sequence[int]],
    feats_flat: np.ndarray,
    feat_off: np.ndarray,
    gold_ids: Sequence[int] | None = None,
    grow: bool = False,
    cache: dict | None = None,
) -> LatticePlan:
    """Pack one example's lattice for `table` (which fixes the order).

    `cand_ids` must be ascending per position (label ids sorted so that id
    order equals lexicographic label order).  `cache` memoizes per-position
    pair templates; it must be private to one (table, grow-mode) pairing.
    """
    order = table.order
    T = len(cand_ids)
    if T < 1:
        raise ValueError("plan requires at least one position")
    if cache is None:
        cache = {}

    cand_tuples = [tuple(c) for c in cand_ids]
    bos_opts = (BOS_SLOT,)

    n_states = np.empty(T + 1, dtype=np.int32)
    n_states[0] = 1
    k = np.empty(T, dtype=np.int32)
    kb_pieces = []
    nxt_pieces = []
    states: list[list[tuple[int, ...]]] = [[(BOS_SLOT,) * order]]
    strides_by_pos = []

    for t in range(T):
        prev_opts = tuple(
            cand_tuples[j] if j >= 0 else bos_opts for j in range(t - order, t)
        )
        key = (prev_opts, cand_tuples[t])
        tpl = cache.get(key)
        if tpl is None:
            prev_states = list(itertools.product(*prev_opts))
            h_arr = np.fromiter(
                (table.hist_id(s, grow) for s in prev_states),
                dtype=np.int64,
                count=len(prev_states),
            )
            kt = len(cand_tuples[t])
            st0 = 1
            for c in prev_opts[1:]:
                st0 *= len(c)
            y_arr = np.asarray(cand_tuples[t], dtype=np.int64)
            kb = np.where(
                h_arr[:, None] >= 0,
                (h_arr[:, None] << H_SHIFT) | y_arr[None, :],
                np.int64(KB_SKIP),
            ).ravel()
            nxt = (
                ((np.arange(len(prev_states), dtype=np.int64) % st0) * kt)[:, None]
                + np.arange(kt, dtype=np.int64)[None, :]
            ).astype(np.int32).ravel()
            next_states = list(itertools.product(*prev_opts[1:], cand_tuples[t]))
            strides = []
            acc = 1
            for c in reversed(prev_opts):
                strides.append(acc)
                acc *= len(c)
            strides.reverse()
            tpl = (kb, nxt, next_states, strides)
            cache[key] = tpl
        kb, nxt, next_states, strides = tpl
        kb_pieces.append(kb)
        nxt_pieces.append(nxt)
        states.append(next_states)
        strides_by_pos.append(strides)
        k[t] = len(cand_tuples[t])
        n_states[t + 1] = len(next_states)

    state_off = np.zeros(T + 2, dtype=np.int64)
    np.cumsum(n_states, out=state_off[1:])
    pair_sizes = n_states[:-1].astype(np.int64) * k
    pair_off = np.zeros(T + 1, dtype=np.int64)
    np.cumsum(pair_sizes, out=pair_off[1:])
    cand_off = np.zeros(T + 1, dtype=np.int64)
    np.cumsum(k, out=cand_off[1:])
    cand = np.concatenate([np.asarray(c, dtype=np.int32) for c in cand_tuples])

    gold_pair = np.full(T, -1, dtype=np.int64)
    if gold_ids is not None:
        pos_index = [{y: i for i, y in enumerate(c)} for c in cand_tuples]
        for t in range(T):
            try:
                yi = pos_index[t][gold_ids[t]]
            except KeyError:
                raise ValueError(
                    f"gold label id {gold_ids[t]} missing from candidates at position {t}"
                ) from None
            si = 0
            strides = strides_by_pos[t]
            for d, j in enumerate(range(t - order, t)):
                digit = pos_index[j][gold_ids[j]] if j >= 0 else 0
                si += digit * strides[d]
            gold_pair[t] = si * int(k[t]) + yi

    return LatticePlan(
        T=T,
        n_states=n_states,
        state_off=state_off,
        k=k,
        pair_off=pair_off,
        kb=np.concatenate(kb_pieces) if kb_pieces else np.zeros(0, dtype=np.int64),
        nxt=np.concatenate(nxt_pieces) if nxt_pieces else np.zeros(0, dtype=np.int32),
        cand=cand,
        cand_off=cand_off,
        feats=feats_flat,
        feat_off=feat_off,
        gold_pair=gold_pair,
        states=states,
    )
