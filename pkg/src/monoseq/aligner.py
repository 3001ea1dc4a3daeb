"""Monotone character alignment via EM over a 1-to-(0..L) emission lattice.

Every alignment step consumes exactly one source symbol and emits a label of
0..L target symbols (the empty label realizes 1-to-0 steps); many-to-1 and
many-to-many matches cannot occur by construction.  The model is a per-symbol
emission distribution p(label | source symbol) trained by expectation-
maximization over all monotone segmentations of each pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .corpus import Corpus, StringPair
from .errors import AlignmentError, ModelFormatError, TrainingError

NEG_INF = float("-inf")

ALIGN_MAGIC = "monoseq.align.v1"


def _logaddexp(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def feasible(pair: StringPair, L: int) -> bool:
    return len(pair.target) <= L * len(pair.source)


@dataclass(frozen=True)
class AlignedPair:
    """Equal-length representation: one (source symbol, output label) step
    per source symbol; concatenating the labels reproduces the target."""

    steps: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        for sym, _ in self.steps:
            if len(sym) != 1:
                raise ValueError("each step must consume exactly one source symbol")

    @property
    def source(self) -> str:
        return "".join(sym for sym, _ in self.steps)

    @property
    def target(self) -> str:
        return "".join(lab for _, lab in self.steps)

    def labels(self) -> tuple[str, ...]:
        return tuple(lab for _, lab in self.steps)


@dataclass
class AlignmentModel:
    """Emission table over (source symbol, label); probabilities kept in log space."""

    L: int
    logp: dict[tuple[str, str], float]
    iterations_run: int = 0
    final_loglik: float = NEG_INF
    excluded: int = 0
    loglik_history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_symbol: dict[str, list[tuple[str, float]]] | None = None

    def prob(self, symbol: str, label: str) -> float:
        return math.exp(self.logp.get((symbol, label), NEG_INF))

    @property
    def emit_prob(self) -> dict[tuple[str, str], float]:
        return {k: math.exp(v) for k, v in self.logp.items()}

    def labels_for(self, symbol: str) -> list[tuple[str, float]]:
        """Candidate (label, logprob) list for a symbol, in the Viterbi
        tie-break order: shorter labels first, then lexicographic."""
        if self._by_symbol is None:
            by_sym: dict[str, list[tuple[str, float]]] = {}
            for (sym, lab), lp in self.logp.items():
                by_sym.setdefault(sym, []).append((lab, lp))
            for labs in by_sym.values():
                labs.sort(key=lambda t: (len(t[0]), t[0]))
            self._by_symbol = by_sym
        return self._by_symbol.get(symbol, [])

    def save(self, path: str) -> None:
        rows = sorted(self.logp.items())
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(
                f"{ALIGN_MAGIC}\tL={self.L}\titerations={self.iterations_run}"
                f"\tfinal_loglik={self.final_loglik!r}\n"
            )
            for (sym, lab), lp in rows:
                f.write(f"{sym}\t{lab}\t{lp!r}\n")

    def to_text(self) -> str:
        rows = sorted(self.logp.items())
        head = (
            f"{ALIGN_MAGIC}\tL={self.L}\titerations={self.iterations_run}"
            f"\tfinal_loglik={self.final_loglik!r}"
        )
        return "\n".join([head] + [f"{s}\t{l}\t{lp!r}" for (s, l), lp in rows]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AlignmentModel":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(ALIGN_MAGIC + "\t"):
            raise ModelFormatError("not a monoseq alignment model (bad magic line)")
        header = dict(kv.split("=", 1) for kv in lines[0].split("\t")[1:])
        logp = {}
        for line in lines[1:]:
            if not line:
                continue
            sym, lab, lp = line.split("\t")
            logp[(sym, lab)] = float(lp)
        return cls(
            L=int(header["L"]),
            logp=logp,
            iterations_run=int(header["iterations"]),
            final_loglik=float(header["final_loglik"]),
        )

    @classmethod
    def load(cls, path: str) -> "AlignmentModel":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_text(f.read())


def _cell_ok(i: int, j: int, s: int, t: int, L: int) -> bool:
    # reachable from (0,0) and able to reach (s,t) with 0..L emissions per step
    return j <= L * i and (t - j) <= L * (s - i)


def _pair_forward(pair: StringPair, model_logp, L: int):
    """Forward log sums over the monotone lattice; fwd[i][j] = log P(first i
    source symbols emitted y[:j])."""
    src, tgt = pair.source, pair.target
    s, t = len(src), len(tgt)
    fwd = [[NEG_INF] * (t + 1) for _ in range(s + 1)]
    fwd[0][0] = 0.0
    for i in range(s):
        sym = src[i]
        row = fwd[i]
        nxt = fwd[i + 1]
        for j in range(t + 1):
            a = row[j]
            if a == NEG_INF:
                continue
            for l in range(0, min(L, t - j) + 1):
                if not _cell_ok(i + 1, j + l, s, t, L):
                    continue
                lp = model_logp.get((sym, tgt[j : j + l]), NEG_INF)
                if lp == NEG_INF:
                    continue
                nxt[j + l] = _logaddexp(nxt[j + l], a + lp)
    return fwd


def _pair_backward(pair: StringPair, model_logp, L: int):
    src, tgt = pair.source, pair.target
    s, t = len(src), len(tgt)
    bwd = [[NEG_INF] * (t + 1) for _ in range(s + 1)]
    bwd[s][t] = 0.0
    for i in range(s - 1, -1, -1):
        sym = src[i]
        row = bwd[i]
        nxt = bwd[i + 1]
        for j in range(t + 1):
            if not _cell_ok(i, j, s, t, L):
                continue
            acc = NEG_INF
            for l in range(0, min(L, t - j) + 1):
                b = nxt[j + l]
                if b == NEG_INF:
                    continue
                lp = model_logp.get((sym, tgt[j : j + l]), NEG_INF)
                if lp == NEG_INF:
                    continue
                acc = _logaddexp(acc, lp + b)
            row[j] = acc
    return bwd


def pair_loglik(model: AlignmentModel, pair: StringPair) -> float:
    fwd = _pair_forward(pair, model.logp, model.L)
    return fwd[len(pair.source)][len(pair.target)]


def expected_counts(model_logp, pair: StringPair, L: int):
    """E-step contribution of one pair: posterior expected emission counts.

    Returns (counts dict (symbol, label) -> float, pair log-likelihood).
    Pure per-pair map step; callers sum the dicts associatively.
    """
    src, tgt = pair.source, pair.target
    s, t = len(src), len(tgt)
    fwd = _pair_forward(pair, model_logp, L)
    bwd = _pair_backward(pair, model_logp, L)
    logz = fwd[s][t]
    counts: dict[tuple[str, str], float] = {}
    if logz == NEG_INF:
        return counts, logz
    for i in range(s):
        sym = src[i]
        for j in range(t + 1):
            a = fwd[i][j]
            if a == NEG_INF:
                continue
            for l in range(0, min(L, t - j) + 1):
                b = bwd[i + 1][j + l]
                if b == NEG_INF:
                    continue
                lab = tgt[j : j + l]
                lp = model_logp.get((sym, lab), NEG_INF)
                if lp == NEG_INF:
                    continue
                key = (sym, lab)
                counts[key] = counts.get(key, 0.0) + math.exp(a + lp + b - logz)
    return counts, logz


def _collect_support(pairs, L: int) -> dict[str, set[str]]:
    """All (symbol, label) emissions lying on some monotone alignment."""
    support: dict[str, set[str]] = {}
    for pair in pairs:
        src, tgt = pair.source, pair.target
        s, t = len(src), len(tgt)
        for i in range(s):
            sym = src[i]
            labs = support.setdefault(sym, set())
            for j in range(t + 1):
                if not _cell_ok(i, j, s, t, L):
                    continue
                for l in range(0, min(L, t - j) + 1):
                    if _cell_ok(i + 1, j + l, s, t, L):
                        labs.add(tgt[j : j + l])
    return support


def em_train(
    corpus: Corpus,
    L: int = 2,
    max_iters: int = 30,
    tol: float = 1e-4,
    delta: float = 0.1,
) -> AlignmentModel:
    """EM over monotone alignment lattices.

    Initialization is uniform over the feasible emissions of each symbol plus
    a +delta bonus on the label equal to the symbol itself (breaks the
    epsilon/expansion symmetry).  Stops after max_iters iterations or when
    the per-pair average log-likelihood improves by less than tol.  Pairs
    with |target| > L*|source| are excluded and counted in model.excluded.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    pairs = [p for p in corpus if feasible(p, L)]
    excluded = len(corpus) - len(pairs)
    if not pairs:
        raise TrainingError("no feasible pairs to train on")

    support = _collect_support(pairs, L)
    logp: dict[tuple[str, str], float] = {}
    for sym, labs in support.items():
        total = len(labs) + (delta if sym in labs else 0.0)
        for lab in labs:
            w = 1.0 + (delta if lab == sym else 0.0)
            logp[(sym, lab)] = math.log(w / total)

    history: list[float] = []
    iters = 0
    for it in range(max_iters):
        counts: dict[tuple[str, str], float] = {}
        total_ll = 0.0
        for pair in pairs:
            c, ll = expected_counts(logp, pair, L)
            if ll == NEG_INF:
                raise TrainingError(f"pair {pair.source!r} has no alignment path")
            total_ll += ll
            for k, v in c.items():
                counts[k] = counts.get(k, 0.0) + v
        history.append(total_ll)
        iters = it + 1
        # M-step: renormalize expected counts per source symbol
        totals: dict[str, float] = {}
        for (sym, _), v in counts.items():
            totals[sym] = totals.get(sym, 0.0) + v
        new_logp = {}
        for (sym, lab) in logp:
            c = counts.get((sym, lab), 0.0)
            tot = totals.get(sym, 0.0)
            new_logp[(sym, lab)] = (
                math.log(c) - math.log(tot) if c > 0.0 and tot > 0.0 else NEG_INF
            )
        logp = new_logp
        if it > 0 and (history[-1] - history[-2]) / len(pairs) < tol:
            break

    model = AlignmentModel(
        L=L,
        logp=logp,
        iterations_run=iters,
        final_loglik=history[-1],
        excluded=excluded,
        loglik_history=history,
    )
    return model


def viterbi_align(model: AlignmentModel, pair: StringPair) -> AlignedPair:
    """Highest-probability monotone alignment.

    Ties prefer shorter labels at earlier steps (epsilon first), then
    lexicographic label order; here each (cell, emission length) determines
    the label, so preferring smaller lengths settles every tie.
    """
    if not feasible(pair, model.L):
        raise AlignmentError(
            f"pair infeasible at L={model.L}: |target|={len(pair.target)} > "
            f"L*|source|={model.L * len(pair.source)}"
        )
    src, tgt = pair.source, pair.target
    s, t, L = len(src), len(tgt), model.L
    logp = model.logp
    # suffix-best DP: best[i][j] = max log prob of aligning src[i:] to tgt[j:]
    best = [[NEG_INF] * (t + 1) for _ in range(s + 1)]
    best[s][t] = 0.0
    for i in range(s - 1, -1, -1):
        sym = src[i]
        for j in range(t, -1, -1):
            if not _cell_ok(i, j, s, t, L):
                continue
            acc = NEG_INF
            for l in range(0, min(L, t - j) + 1):
                b = best[i + 1][j + l]
                if b == NEG_INF:
                    continue
                lp = logp.get((sym, tgt[j : j + l]), NEG_INF)
                if lp == NEG_INF:
                    continue
                v = lp + b
                if v > acc:
                    acc = v
            best[i][j] = acc
    if best[0][0] == NEG_INF:
        raise AlignmentError(f"no alignment path for pair ({src!r}, {tgt!r})")
    # greedy reconstruction; smallest emission length among optimal moves
    steps = []
    j = 0
    for i in range(s):
        sym = src[i]
        target_val = best[i][j]
        for l in range(0, min(L, t - j) + 1):
            b = best[i + 1][j + l]
            if b == NEG_INF:
                continue
            lp = logp.get((sym, tgt[j : j + l]), NEG_INF)
            if lp == NEG_INF:
                continue
            if lp + b == target_val:
                steps.append((sym, tgt[j : j + l]))
                j += l
                break
        else:
            raise AssertionError("reconstruction failed")
    return AlignedPair(tuple(steps))


ALIGNED_MAGIC = "monoseq.aligned.v1"


def save_aligned(aligned: list[AlignedPair], path: str) -> None:
    """Persist aligned pairs: one line per pair, labels as a JSON array."""
    import json

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(ALIGNED_MAGIC + "\n")
        for ap in aligned:
            labs = json.dumps(list(ap.labels()), ensure_ascii=False, separators=(",", ":"))
            f.write(f"{ap.source}\t{ap.target}\t{labs}\n")


def load_aligned(path: str) -> list[AlignedPair]:
    import json

    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != ALIGNED_MAGIC:
        raise ModelFormatError(f"not a {ALIGNED_MAGIC} file (bad magic line)")
    out = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        try:
            source, target, labs_s = line.split("\t")
            labels = json.loads(labs_s)
        except ValueError as e:
            raise ModelFormatError(f"line {line_no}: malformed aligned record") from e
        if len(labels) != len(source):
            raise ModelFormatError(f"line {line_no}: one label per source symbol required")
        ap = AlignedPair(tuple(zip(source, labels)))
        if ap.target != target:
            raise ModelFormatError(
                f"line {line_no}: labels do not reconstruct the target"
            )
        out.append(ap)
    return out


def align_corpus(
    model: AlignmentModel, corpus: Corpus
) -> tuple[list[AlignedPair], set[str], int]:
    """Viterbi-align every pair; returns (aligned, label alphabet, skipped).

    The label alphabet always contains the epsilon label.  Infeasible pairs
    and pairs with no scoring path are skipped and counted.
    """
    aligned = []
    labels = {""}
    skipped = 0
    for pair in corpus:
        try:
            ap = viterbi_align(model, pair)
        except AlignmentError:
            skipped += 1
            continue
        aligned.append(ap)
        labels.update(ap.labels())
    return aligned, labels, skipped
