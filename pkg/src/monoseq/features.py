"""Character m-gram window features over the source string.

For each source position the features are all contiguous m-grams
(m = 1..N) that fit entirely inside a window of 2w+1 positions centered on
the position, with the source padded by w boundary symbols on each side.
Each feature string records the m-gram's start offset relative to the
center, so the same m-gram at different offsets is a different feature.

Canonical feature-string form (part of the model file format, byte-stable):
    off=<start offset>:len=<m>:<symbols>
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import MonoseqError

# reserved padding sentinel: U+241F SYMBOL FOR UNIT SEPARATOR
DEFAULT_BOUNDARY = "␟"

UNKNOWN_ID = -1

# feature ids must fit the packed-weight-key layout (25 bits)
MAX_FEATURES = (1 << 25) - 1


@dataclass(frozen=True)
class FeatureConfig:
    window: int = 4
    max_mgram: int | None = None  # None binds N = w
    boundary_symbol: str = DEFAULT_BOUNDARY

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if len(self.boundary_symbol) != 1:
            raise ValueError("boundary_symbol must be a single symbol")
        n = self.n
        if n < 1 or n > 2 * self.window + 1:
            raise ValueError("max_mgram must satisfy 1 <= N <= 2w+1")

    @property
    def n(self) -> int:
        return self.window if self.max_mgram is None else self.max_mgram


def extract(source: str, p: int, cfg: FeatureConfig) -> list[str]:
    """All window m-gram features at position p, in canonical order.

    The result has no duplicates (offset and length disambiguate), so it can
    be treated as a set; a list keeps the interning order deterministic.
    """
    if not 0 <= p < len(source):
        raise ValueError(f"position {p} out of range for source of length {len(source)}")
    w, n, pad = cfg.window, cfg.n, cfg.boundary_symbol
    padded = pad * w + source + pad * w
    center = p + w
    feats = []
    for m in range(1, n + 1):
        for off in range(-w, w - m + 2):
            gram = padded[center + off : center + off + m]
            feats.append(f"off={off}:len={m}:{gram}")
    return feats


class InternTable:
    """Dense string interning: growing assigns ids 0..k-1 in first-seen order;
    frozen maps unseen strings to UNKNOWN_ID."""

    def __init__(self, strings: Iterable[str] = (), frozen: bool = False):
        self._strings: list[str] = list(strings)
        self._index: dict[str, int] = {s: i for i, s in enumerate(self._strings)}
        if len(self._index) != len(self._strings):
            raise ValueError("duplicate strings in interning table")
        self.frozen = frozen

    def intern(self, s: str) -> int:
        i = self._index.get(s)
        if i is not None:
            return i
        if self.frozen:
            return UNKNOWN_ID
        i = len(self._strings)
        if i >= MAX_FEATURES:
            raise MonoseqError("feature interning table capacity exceeded")
        self._index[s] = i
        self._strings.append(s)
        return i

    def intern_many(self, strings: Iterable[str]) -> list[int]:
        return [self.intern(s) for s in strings]

    def freeze(self) -> None:
        self.frozen = True

    @property
    def strings(self) -> list[str]:
        return self._strings

    def __len__(self) -> int:
        return len(self._strings)

    def __contains__(self, s: str) -> bool:
        return s in self._index
