"""Coarse-to-fine SGD training for the pruned higher-order CRF.

Each order in the schedule is trained on lattices pruned with the previous
order's marginals (the first order sees the full label alphabet); gold labels
are force-included during training so the pruned objective never assigns the
training data zero probability.  The stochastic gradient of one example is
(gold feature counts - expected feature counts) - l2 * weights; L2 decay is
applied through a running scale factor so each step stays O(touched keys).
"""

from __future__ import annotations

import math
import random
from typing import Sequence

import numpy as np

from ..aligner import AlignedPair, AlignmentModel
from ..errors import DataError, TrainingError
from ..features import FeatureConfig, InternTable, extract
from . import kernels
from .infer import _prune_ids
from .lattice import PrunedLattice, build_plan, pack_features
from .model import ModelStack, TrainConfig, WeightTable


class _Example:
    __slots__ = ("T", "gold", "feats_flat", "feat_off", "source")

    def __init__(self, source, gold, feats_flat, feat_off):
        self.source = source
        self.T = len(gold)
        self.gold = gold
        self.feats_flat = feats_flat
        self.feat_off = feat_off


def _epoch_rng(seed: int, order: int, epoch: int) -> random.Random:
    # independent per (order, epoch): stage results do not depend on the
    # schedule tail, so an order-k run reproduces the first k stages exactly
    return random.Random(f"{seed}:{order}:{epoch}")


def _prepare_examples(
    aligned: Sequence[AlignedPair],
    fcfg: FeatureConfig,
    features: InternTable,
    label_index: dict[str, int],
) -> list[_Example]:
    examples = []
    for ap in aligned:
        source = ap.source
        ids = [
            features.intern_many(extract(source, p, fcfg)) for p in range(len(source))
        ]
        feats_flat, feat_off = pack_features(ids)
        gold = [label_index[lab] for lab in ap.labels()]
        examples.append(_Example(source, gold, feats_flat, feat_off))
    return examples


def _objective(backend, store, scale, plans, l2) -> float:
    """Exact regularized mean NLL at the current weights."""
    nll = 0.0
    for plan in plans:
        logz_f, _, gold_score, _, _ = backend.fb(store, scale, plan)
        nll -= gold_score - logz_f
    return nll / len(plans) + 0.5 * l2 * store.sumsq() * scale * scale


def sgd_train(
    aligned: Sequence[AlignedPair],
    cfg: TrainConfig,
    fcfg: FeatureConfig,
    label_alphabet: Sequence[str] | None = None,
    alignment: AlignmentModel | None = None,
    backend=None,
    threads: int = 1,
    track_objective: bool = False,
) -> ModelStack:
    """Train a ModelStack on aligned pairs.

    label_alphabet (if given) must cover every aligned label; otherwise the
    alphabet is derived from the data.  The epsilon label is always included.
    """
    aligned = list(aligned)
    if not aligned:
        raise ValueError("aligned corpus is empty")
    backend = backend if backend is not None else kernels.get_backend()

    seen = {lab for ap in aligned for lab in ap.labels()}
    if label_alphabet is not None:
        alphabet = set(label_alphabet) | {""}
        extra = seen - alphabet
        if extra:
            raise DataError(f"labels outside alphabet: {sorted(extra)[:5]}")
    else:
        alphabet = seen | {""}
    labels = sorted(alphabet)
    label_index = {lab: i for i, lab in enumerate(labels)}

    if alignment is not None:
        too_long = [lab for lab in seen if len(lab) > alignment.L]
        if too_long:
            raise DataError(f"labels exceed span bound L={alignment.L}: {too_long[:5]}")

    src_symbols = {ch for ap in aligned for ch in ap.source}
    if fcfg.boundary_symbol in src_symbols:
        raise DataError(
            f"boundary symbol {fcfg.boundary_symbol!r} occurs in the data; "
            "configure a different one"
        )

    features = InternTable()
    examples = _prepare_examples(aligned, fcfg, features, label_index)
    n = len(examples)
    n_labels = len(labels)

    tables: list[WeightTable] = []
    cand_by_ex: list[list[list[int]]] = [
        [list(range(n_labels))] * ex.T for ex in examples
    ]
    objective_history: list[list[float]] = []
    epoch_nll: list[list[float]] = []

    for stage, order in enumerate(cfg.schedule):
        table = WeightTable(order, labels, backend=backend)
        cache: dict = {}
        plans = [
            build_plan(
                table,
                cand_by_ex[i],
                examples[i].feats_flat,
                examples[i].feat_off,
                gold_ids=examples[i].gold,
                grow=True,
                cache=cache,
            )
            for i in range(n)
        ]
        scale = 1.0
        stage_obj: list[float] = []
        stage_nll: list[float] = []
        for epoch in range(cfg.epochs):
            eta = cfg.learning_rate / (1.0 + epoch)
            order_idx = list(range(n))
            _epoch_rng(cfg.seed, order, epoch).shuffle(order_idx)
            total_ll = 0.0
            if cfg.batch_size == 1:
                for i in order_idx:
                    scale *= 1.0 - eta * cfg.l2
                    if scale <= 0.0:
                        raise TrainingError("learning_rate * l2 too large; scale collapsed")
                    ll = backend.sgd_step(table.store, scale, eta, plans[i])
                    if not math.isfinite(ll):
                        raise TrainingError(f"non-finite objective at example {i}")
                    total_ll += ll
            else:
                for b0 in range(0, n, cfg.batch_size):
                    batch = order_idx[b0 : b0 + cfg.batch_size]
                    grads = _batch_grads(backend, table.store, scale, plans, batch, threads)
                    scale *= 1.0 - eta * cfg.l2 * len(batch)
                    if scale <= 0.0:
                        raise TrainingError("learning_rate * l2 too large; scale collapsed")
                    for i, (ll, gstore) in zip(batch, grads):
                        if not math.isfinite(ll):
                            raise TrainingError(f"non-finite objective at example {i}")
                        total_ll += ll
                        keys, vals = gstore.items_arrays()
                        idx = np.argsort(keys, kind="stable")
                        for key, g in zip(keys[idx].tolist(), vals[idx].tolist()):
                            table.store.add(key, eta * g / scale)
            stage_nll.append(-total_ll / n)
            if track_objective:
                stage_obj.append(_objective(backend, table.store, scale, plans, cfg.l2))
        table.store.mul_all(scale)
        tables.append(table)
        epoch_nll.append(stage_nll)
        objective_history.append(stage_obj)

        if stage < len(cfg.schedule) - 1:
            for i in range(n):
                _, _, _, marg, _ = backend.fb(table.store, 1.0, plans[i])
                plan = plans[i]
                cand_by_ex[i] = [
                    _prune_ids(
                        cand_by_ex[i][t],
                        marg[int(plan.cand_off[t]) : int(plan.cand_off[t + 1])],
                        cfg.prune_threshold,
                        cfg.top_k,
                        gold_id=examples[i].gold[t],
                    )
                    for t in range(plan.T)
                ]
        plans = None  # free before the next stage

    features.freeze()
    stack = ModelStack(
        feature_config=fcfg,
        train_config=cfg,
        labels=labels,
        features=features,
        tables=tables,
        alignment=alignment,
    )
    stack.epoch_nll = epoch_nll
    stack.objective_history = objective_history
    return stack


def _batch_grads(backend, store, scale, plans, batch, threads):
    def one(i):
        gstore = backend.WeightStore()
        ll = backend.accumulate_grad(store, scale, plans[i], gstore)
        return ll, gstore

    if threads <= 1 or len(batch) == 1:
        return [one(i) for i in batch]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, batch))


def grad_check(
    table: WeightTable,
    features: InternTable,
    example: AlignedPair,
    fcfg: FeatureConfig,
    epsilon: float = 1e-5,
    lattice: PrunedLattice | None = None,
) -> float:
    """Max relative error between the analytic gradient and central finite
    differences, over every weight touched by the example."""
    source = example.source
    ids = [features.intern_many(extract(source, p, fcfg)) for p in range(len(source))]
    feats_flat, feat_off = pack_features(ids)
    gold = [table.label_index[lab] for lab in example.labels()]
    if lattice is None:
        cand = [list(range(len(table.labels)))] * len(source)
    else:
        cand = [
            sorted(table.label_index[lab] for lab in cands)
            for cands in lattice.candidates
        ]
    plan = build_plan(table, cand, feats_flat, feat_off, gold_ids=gold, grow=True)
    backend = table.backend
    _, _, _, _, post = backend.fb(table.store, 1.0, plan, want_posteriors=True)

    analytic: dict[int, float] = {}
    kb = plan.kb.tolist()
    feats = plan.feats.tolist()
    for t in range(plan.T):
        kt = int(plan.k[t])
        poff = int(plan.pair_off[t])
        fl = feats[int(plan.feat_off[t]) : int(plan.feat_off[t + 1])]
        gp = int(plan.gold_pair[t])
        for local in range(int(plan.n_states[t]) * kt):
            p = poff + local
            coef = (1.0 if local == gp else 0.0) - float(post[p])
            kbv = kb[p]
            if kbv < 0:
                continue
            for f in fl:
                key = f | kbv
                analytic[key] = analytic.get(key, 0.0) + coef

    def loglik() -> float:
        logz_f, _, gold_score, _, _ = backend.fb(table.store, 1.0, plan)
        return gold_score - logz_f

    worst = 0.0
    for key, a in analytic.items():
        orig = table.store.get(key)
        table.store.set(key, orig + epsilon)
        ll_plus = loglik()
        table.store.set(key, orig - epsilon)
        ll_minus = loglik()
        table.store.set(key, orig)
        fd = (ll_plus - ll_minus) / (2.0 * epsilon)
        err = abs(a - fd) / max(1.0, abs(a), abs(fd))
        if err > worst:
            worst = err
    return worst
