"""Joint n-gram baseline: a Witten-Bell smoothed language model over
(source symbol, output label) units ("graphones") with beam decoding.

Alignments are reused from the aligner module (1-to-many, so each graphone
pairs one source symbol with a 0..L-symbol label).  Witten-Bell estimates
back off recursively to shorter contexts:

    p(g | ctx) = (c(ctx, g) + T(ctx) * p(g | ctx[1:])) / (c(ctx) + T(ctx))

where T(ctx) is the number of distinct continuations of ctx.  The unigram
base distributes over the observed graphone vocabulary plus one reserved
unknown unit, so every proposed graphone has positive probability while
probabilities over the vocabulary still sum to one for every context.
"""

from __future__ import annotations

import json
import math
from typing import Iterable, Sequence

from .aligner import AlignedPair
from .errors import ModelFormatError, TrainingError

GLM_MAGIC = "monoseq.glm.v1"

Graphone = tuple[str, str]

# multi-character symbol fields cannot collide with real (single-symbol) ones
BOS_GRAPHONE: Graphone = ("<s>", "")
EOS_GRAPHONE: Graphone = ("</s>", "")
UNK_GRAPHONE: Graphone = ("<unk>", "")


def build_graphones(aligned: Iterable[AlignedPair]) -> list[list[Graphone]]:
    """One graphone per alignment step, bracketed by begin/end sentinels.
    Epsilon-label steps are retained, preserving sequence length."""
    out = []
    for ap in aligned:
        out.append([BOS_GRAPHONE] + [(sym, lab) for sym, lab in ap.steps] + [EOS_GRAPHONE])
    return out


class GraphoneLM:
    """Count-based joint n-gram model with Witten-Bell smoothing."""

    def __init__(self, n: int, counts: dict[tuple[Graphone, ...], dict[Graphone, int]]):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n
        self.counts = counts
        self._totals = {ctx: sum(d.values()) for ctx, d in counts.items()}
        unigrams = counts.get((), {})
        self.vocab = set(unigrams) | {UNK_GRAPHONE}
        self.compat: dict[str, list[str]] = {}
        for sym, lab in unigrams:
            if sym not in (BOS_GRAPHONE[0], EOS_GRAPHONE[0]):
                self.compat.setdefault(sym, []).append(lab)
        for labs in self.compat.values():
            labs.sort()
        self.all_labels = sorted(
            {lab for sym, lab in unigrams if sym not in (BOS_GRAPHONE[0], EOS_GRAPHONE[0])}
        )

    def prob(self, g: Graphone, context: Sequence[Graphone]) -> float:
        """Witten-Bell probability of g given up to n-1 preceding graphones."""
        if g not in self.vocab:
            g = UNK_GRAPHONE
        ctx = tuple(context[-(self.n - 1) :]) if self.n > 1 else ()
        return self._prob(g, ctx)

    def _prob(self, g: Graphone, ctx: tuple[Graphone, ...]) -> float:
        if not ctx:
            d = self.counts.get((), {})
            total = self._totals.get((), 0)
            t = len(d)
            v = len(self.vocab)
            # unigram WB against a uniform base over vocab (incl. the unknown unit)
            return (d.get(g, 0) + t * (1.0 / v)) / (total + t)
        d = self.counts.get(ctx)
        if not d:
            return self._prob(g, ctx[1:])
        total = self._totals[ctx]
        t = len(d)
        return (d.get(g, 0) + t * self._prob(g, ctx[1:])) / (total + t)

    def logprob(self, g: Graphone, context: Sequence[Graphone]) -> float:
        return math.log(self.prob(g, context))

    def sequence_logprob(self, seq: Sequence[Graphone]) -> float:
        """Log probability of a sentinel-bracketed sequence (BOS not predicted)."""
        acc = 0.0
        for i in range(1, len(seq)):
            acc += self.logprob(seq[i], seq[max(0, i - self.n + 1) : i])
        return acc

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_text())

    def to_text(self) -> str:
        rows = []
        for ctx, d in self.counts.items():
            ctx_s = json.dumps([list(g) for g in ctx], separators=(",", ":"))
            for g, c in d.items():
                rows.append((len(ctx), ctx_s, json.dumps(list(g), separators=(",", ":")), c))
        rows.sort()
        lines = [f"{GLM_MAGIC}\tn={self.n}"]
        lines.extend(f"C\t{ctx_s}\t{g_s}\t{c}" for _, ctx_s, g_s, c in rows)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GraphoneLM":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(GLM_MAGIC + "\t"):
            raise ModelFormatError("not a monoseq graphone LM (bad magic line)")
        n = int(lines[0].split("\t")[1].split("=", 1)[1])
        counts: dict[tuple[Graphone, ...], dict[Graphone, int]] = {}
        for line in lines[1:]:
            if not line:
                continue
            tag, ctx_s, g_s, c = line.split("\t")
            if tag != "C":
                raise ModelFormatError(f"unknown record tag {tag!r}")
            ctx = tuple(tuple(g) for g in json.loads(ctx_s))
            g = tuple(json.loads(g_s))
            counts.setdefault(ctx, {})[g] = int(c)
        return cls(n, counts)

    @classmethod
    def load(cls, path: str) -> "GraphoneLM":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_text(f.read())


def lm_train(sequences: Sequence[Sequence[Graphone]], n: int = 8) -> GraphoneLM:
    """Count-based estimation over sentinel-bracketed graphone sequences,
    with context counts for every backoff length down to unigrams."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sequences = list(sequences)
    if not sequences:
        raise TrainingError("empty training set")
    counts: dict[tuple[Graphone, ...], dict[Graphone, int]] = {}
    for seq in sequences:
        for i in range(1, len(seq)):
            g = seq[i]
            lo = max(0, i - n + 1)
            for start in range(lo, i + 1):
                ctx = tuple(seq[start:i])
                d = counts.setdefault(ctx, {})
                d[g] = d.get(g, 0) + 1
    return GraphoneLM(n, counts)


def beam_decode_labels(
    lm: GraphoneLM, source: str, beam: int = 16
) -> tuple[tuple[str, ...], float]:
    """Left-to-right beam search over labels compatible with each symbol.

    Hypotheses are ranked by accumulated log probability with lexicographic
    label-sequence tie-breaking; the end sentinel closes every hypothesis.
    Symbols never seen in training fall back to all labels ever observed.
    Returns (labels, hypothesis log probability).
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    # (neg logp, labels, context) kept sorted so ties resolve lexicographically
    hyps: list[tuple[float, tuple[str, ...], tuple[Graphone, ...]]] = [
        (0.0, (), (BOS_GRAPHONE,))
    ]
    ctx_len = lm.n - 1
    for sym in source:
        labels = lm.compat.get(sym) or lm.all_labels
        nxt = []
        for neg, labs, ctx in hyps:
            for lab in labels:
                g = (sym, lab)
                lp = lm.logprob(g, ctx)
                new_ctx = (ctx + (g,))[-ctx_len:] if ctx_len > 0 else ()
                nxt.append((neg - lp, labs + (lab,), new_ctx))
        nxt.sort(key=lambda h: (h[0], h[1]))
        hyps = nxt[:beam]
    finished = sorted(
        ((neg - lm.logprob(EOS_GRAPHONE, ctx), labs) for neg, labs, ctx in hyps),
        key=lambda h: (h[0], h[1]),
    )
    return finished[0][1], -finished[0][0]


def beam_decode(lm: GraphoneLM, source: str, beam: int = 16) -> str:
    labels, _ = beam_decode_labels(lm, source, beam)
    return "".join(labels)


def decode_score(lm: GraphoneLM, source: str, labels: Sequence[str]) -> float:
    """Log probability of one complete labeling (used by tests)."""
    seq = [BOS_GRAPHONE] + [(sym, lab) for sym, lab in zip(source, labels)] + [EOS_GRAPHONE]
    return lm.sequence_logprob(seq)
