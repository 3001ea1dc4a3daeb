"""Pair corpora: loading, validation, splitting, and synthetic task generators.

A corpus is an ordered sequence of (source, target) string pairs plus the
alphabets actually occurring in them.  Symbols are unicode scalar values:
no case folding, no whitespace normalization, underscore is an ordinary
symbol.  The on-disk format is UTF-8 TSV, one pair per line, exactly one
TAB between source and target; LF line endings with an optional trailing CR.
"""

from __future__ import annotations

import io
import random
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

from .errors import CorpusFormatError

SYNTH_MIN_LEN = 3
SYNTH_MAX_LEN = 20


@dataclass(frozen=True)
class StringPair:
    """One supervised example: source symbols and target symbols."""

    source: str
    target: str

    def __post_init__(self) -> None:
        if not self.source:
            raise ValueError("source must be non-empty")


@dataclass(frozen=True)
class Corpus:
    pairs: tuple[StringPair, ...]
    source_alphabet: frozenset[str]
    target_alphabet: frozenset[str]
    # lenient-mode bookkeeping; not part of corpus identity
    skipped_lines: int = field(default=0, compare=False)

    @classmethod
    def from_pairs(cls, pairs: Iterable[StringPair], skipped_lines: int = 0) -> "Corpus":
        pairs = tuple(pairs)
        src = frozenset(ch for p in pairs for ch in p.source)
        tgt = frozenset(ch for p in pairs for ch in p.target)
        return cls(pairs, src, tgt, skipped_lines)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[StringPair]:
        return iter(self.pairs)

    def __getitem__(self, i: int) -> StringPair:
        return self.pairs[i]


def load_pairs(stream: BinaryIO | bytes, strict: bool = True) -> Corpus:
    """Read a TSV byte stream into a Corpus.

    strict=True (the default) raises CorpusFormatError on any malformed line;
    strict=False skips malformed lines and records the count in
    Corpus.skipped_lines.  Malformed UTF-8 is always an error and is reported
    with its line number.
    """
    data = stream if isinstance(stream, bytes) else stream.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        line_no = data[: e.start].count(b"\n") + 1
        raise CorpusFormatError(f"line {line_no}: invalid UTF-8 ({e.reason})") from e

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    pairs: list[StringPair] = []
    skipped = 0
    for line_no, line in enumerate(lines, start=1):
        if line.endswith("\r"):
            line = line[:-1]
        n_tabs = line.count("\t")
        if n_tabs != 1:
            if strict:
                raise CorpusFormatError(
                    f"line {line_no}: expected exactly 1 TAB, found {n_tabs}"
                )
            skipped += 1
            continue
        source, target = line.split("\t")
        if not source:
            if strict:
                raise CorpusFormatError(f"line {line_no}: empty source")
            skipped += 1
            continue
        pairs.append(StringPair(source, target))
    return Corpus.from_pairs(pairs, skipped_lines=skipped)


def load_path(path: str, strict: bool = True) -> Corpus:
    with open(path, "rb") as f:
        return load_pairs(f, strict=strict)


def save_pairs(corpus: Corpus, sink: BinaryIO | io.RawIOBase) -> None:
    """Write a corpus back to TSV; exact inverse of load_pairs."""
    for pair in corpus:
        for fieldval in (pair.source, pair.target):
            if any(ch in fieldval for ch in "\t\n\r"):
                raise CorpusFormatError(
                    "pair contains TAB/newline and cannot be serialized to TSV"
                )
        sink.write(f"{pair.source}\t{pair.target}\n".encode("utf-8"))


def save_path(corpus: Corpus, path: str) -> None:
    with open(path, "wb") as f:
        save_pairs(corpus, f)


@dataclass(frozen=True)
class SplitSpec:
    train_size: int
    test_size: int
    seed: int


def split(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus]:
    """Deterministic random split.

    Indices are shuffled with Python's Mersenne Twister (random.Random(seed),
    the pinned PRNG for all corpus operations); the first train_size go to
    train, the next test_size to test.  Pairs keep their shuffled order.
    """
    if spec.train_size < 0 or spec.test_size < 0:
        raise ValueError("split sizes must be non-negative")
    if spec.train_size + spec.test_size > len(corpus):
        raise ValueError(
            f"train_size + test_size = {spec.train_size + spec.test_size} "
            f"exceeds corpus size {len(corpus)}"
        )
    idx = list(range(len(corpus)))
    random.Random(spec.seed).shuffle(idx)
    train = [corpus.pairs[i] for i in idx[: spec.train_size]]
    test = [corpus.pairs[i] for i in idx[spec.train_size : spec.train_size + spec.test_size]]
    return Corpus.from_pairs(train), Corpus.from_pairs(test)


RULE_NAMES = ("identity", "local_sub", "expand", "delete", "harmony")


@dataclass(frozen=True)
class RuleSpec:
    """Deterministic rewrite rule used to synthesize oracle corpora.

    Rules:
      identity   target equals source.
      local_sub  substitute via `subs`, but only when the last `context_len`
                 symbols of the *output built so far* form a tuple in
                 `triggers`.  Output-side context lets triggered rewrites
                 cascade, so with context_len=2 the rule genuinely depends on
                 the two previous output labels.
      expand     every `expand_from` symbol becomes the two-symbol string
                 `expand_to`.
      delete     `delete_symbol` is dropped, optionally only when the previous
                 *source* symbol is in `delete_after`.
      harmony    the last vowel of the output copies the first vowel of the
                 input (a long-range dependency).
    """

    name: str
    alphabet: str = "abcdefghijklmnopqrstuvwxyz"
    subs: tuple[tuple[str, str], ...] = (("n", "m"),)
    context_len: int = 1
    triggers: tuple[tuple[str, ...], ...] = (("r",),)
    expand_from: str = "m"
    expand_to: str = "rn"
    delete_symbol: str = "l"
    delete_after: tuple[str, ...] | None = ("t",)
    vowels: str = "aeiou"

    def __post_init__(self) -> None:
        if self.name not in RULE_NAMES:
            raise ValueError(f"unknown rule name: {self.name!r}")
        if not self.alphabet:
            raise ValueError("alphabet must be non-empty")
        if self.name == "local_sub":
            if self.context_len < 1:
                raise ValueError("context_len must be >= 1")
            for t in self.triggers:
                if len(t) != self.context_len:
                    raise ValueError("trigger tuples must have length context_len")

    def apply(self, source: str) -> str:
        if self.name == "identity":
            return source
        if self.name == "local_sub":
            subs = dict(self.subs)
            trigger_set = set(self.triggers)
            out: list[str] = []
            for ch in source:
                ctx = tuple(out[-self.context_len :])
                if len(out) >= self.context_len and ctx in trigger_set:
                    out.append(subs.get(ch, ch))
                else:
                    out.append(ch)
            return "".join(out)
        if self.name == "expand":
            return "".join(self.expand_to if ch == self.expand_from else ch for ch in source)
        if self.name == "delete":
            out = []
            for i, ch in enumerate(source):
                if ch == self.delete_symbol and (
                    self.delete_after is None
                    or (i > 0 and source[i - 1] in self.delete_after)
                ):
                    continue
                out.append(ch)
            return "".join(out)
        if self.name == "harmony":
            first = next((ch for ch in source if ch in self.vowels), None)
            if first is None:
                return source
            last_idx = max(i for i, ch in enumerate(source) if ch in self.vowels)
            return source[:last_idx] + first + source[last_idx + 1 :]
        raise AssertionError(self.name)


def synth_generate(rule: RuleSpec, n: int, seed: int) -> Corpus:
    """Generate n pairs with random sources (length 3-20) and rule-derived targets."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = random.Random(seed)
    pairs = []
    for _ in range(n):
        length = rng.randint(SYNTH_MIN_LEN, SYNTH_MAX_LEN)
        source = "".join(rng.choice(rule.alphabet) for _ in range(length))
        pairs.append(StringPair(source, rule.apply(source)))
    return Corpus.from_pairs(pairs)
