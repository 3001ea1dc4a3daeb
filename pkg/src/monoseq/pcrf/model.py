"""Model containers for the pruned higher-order CRF and their file format."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .._version import VERSION
from ..aligner import AlignmentModel
from ..errors import ModelFormatError, MonoseqError
from ..features import FeatureConfig, InternTable
from . import kernels
from .lattice import BOS_SLOT, F_SHIFT, H_SHIFT, MAX_HISTORIES, MAX_LABEL_ID

PCRF_MAGIC = "monoseq.pcrf.v1"
_H_MASK = (1 << (F_SHIFT - H_SHIFT)) - 1
_Y_MASK = (1 << H_SHIFT) - 1


class _Bos:
    """Reserved begin-of-sequence label padding short histories."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "BOS"


BOS = _Bos()


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for coarse-to-fine SGD training.

    schedule lists the orders trained in sequence; each order's lattice is
    pruned with the previous order's marginals (full alphabet at the first).
    """

    schedule: tuple[int, ...] = (1, 2, 3, 4, 5)
    prune_threshold: float = 1e-4
    top_k: int = 12
    epochs: int = 10
    learning_rate: float = 0.1
    l2: float = 1e-5
    seed: int = 0
    batch_size: int = 1

    def __post_init__(self) -> None:
        if not self.schedule or self.schedule[0] != 1:
            raise ValueError("order schedule must start at 1")
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ValueError("order schedule must be strictly ascending")
        if not 0.0 <= self.prune_threshold < 1.0:
            raise ValueError("prune_threshold must be in [0, 1)")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.l2 < 0.0:
            raise ValueError("l2 must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @classmethod
    def for_order(cls, order: int, **kw) -> "TrainConfig":
        """Default schedule [1..5] truncated (or extended) to the target order."""
        if order < 1:
            raise ValueError("order must be >= 1")
        return cls(schedule=tuple(range(1, order + 1)), **kw)

    @property
    def order(self) -> int:
        return self.schedule[-1]


class WeightTable:
    """Sparse weights over (feature, label history, label) at one order.

    Histories are interned to dense ids; keys pack (f, h, y) into one int64.
    Absent entries read as 0.0.
    """

    def __init__(self, order: int, labels: list[str], backend=None):
        if order < 1:
            raise ValueError("order must be >= 1")
        if len(labels) > MAX_LABEL_ID:
            raise MonoseqError("label alphabet exceeds 16-bit id capacity")
        self.order = order
        self.labels = labels
        self.label_index = {lab: i for i, lab in enumerate(labels)}
        self.backend = backend if backend is not None else kernels.get_backend()
        self.store = self.backend.WeightStore()
        self._hist_index: dict[tuple[int, ...], int] = {}
        self._hist_list: list[tuple[int, ...]] = []

    def hist_id(self, state: tuple[int, ...], grow: bool) -> int:
        hid = self._hist_index.get(state)
        if hid is not None:
            return hid
        if not grow:
            return -1
        hid = len(self._hist_list)
        if hid >= MAX_HISTORIES:
            raise MonoseqError("history table capacity exceeded")
        self._hist_index[state] = hid
        self._hist_list.append(state)
        return hid

    @property
    def histories(self) -> list[tuple[int, ...]]:
        return self._hist_list

    def history_labels(self, hid: int) -> tuple:
        return tuple(
            BOS if s == BOS_SLOT else self.labels[s] for s in self._hist_list[hid]
        )

    def _hist_ids_of(self, history: tuple) -> tuple[int, ...]:
        out = []
        for item in history:
            if item is BOS:
                out.append(BOS_SLOT)
            else:
                out.append(self.label_index[item])
        return tuple(out)

    def pack(self, f_id: int, hist_ids: tuple[int, ...], y_id: int, grow: bool = False) -> int:
        hid = self.hist_id(hist_ids, grow)
        if hid < 0:
            raise KeyError(f"unknown history {hist_ids}")
        return (f_id << F_SHIFT) | (hid << H_SHIFT) | y_id

    def get(self, f_id: int, history: tuple, label: str) -> float:
        """Weight lookup with label strings (BOS pads short histories)."""
        if len(history) != self.order:
            raise ValueError(f"history length {len(history)} != order {self.order}")
        hid = self.hist_id(self._hist_ids_of(history), grow=False)
        if hid < 0:
            return 0.0
        return self.store.get((f_id << F_SHIFT) | (hid << H_SHIFT) | self.label_index[label])

    def set(self, f_id: int, history: tuple, label: str, value: float) -> None:
        if len(history) != self.order:
            raise ValueError(f"history length {len(history)} != order {self.order}")
        hid = self.hist_id(self._hist_ids_of(history), grow=True)
        self.store.set((f_id << F_SHIFT) | (hid << H_SHIFT) | self.label_index[label], value)

    def n_entries(self) -> int:
        return len(self.store)

    def entries(self):
        """All (feature id, history label tuple, label, weight), unordered."""
        keys, vals = self.store.items_arrays()
        for key, val in zip(keys.tolist(), vals.tolist()):
            f = key >> F_SHIFT
            h = (key >> H_SHIFT) & _H_MASK
            y = key & _Y_MASK
            yield f, self.history_labels(h), self.labels[y], val


@dataclass
class ModelStack:
    """Trained PCRF: one weight table per order plus shared configuration.

    All tables share one feature interning table and one label alphabet.
    """

    feature_config: FeatureConfig
    train_config: TrainConfig
    labels: list[str]
    features: InternTable
    tables: list[WeightTable]
    alignment: AlignmentModel | None = None
    version: str = VERSION

    def decode(self, source: str) -> str:
        from .infer import decode as _decode

        return _decode(self, source)

    def to_text(self) -> str:
        """Byte-stable textual serialization (sorted rows, repr floats)."""
        header = {
            "version": self.version,
            "feature_config": {
                "window": self.feature_config.window,
                "max_mgram": self.feature_config.max_mgram,
                "boundary_symbol": self.feature_config.boundary_symbol,
            },
            "train_config": dataclasses.asdict(self.train_config),
            "labels": self.labels,
            "n_features": len(self.features),
            "orders": [t.order for t in self.tables],
            "has_alignment": self.alignment is not None,
        }
        out = [PCRF_MAGIC, "H " + json.dumps(header, sort_keys=True, separators=(",", ":"))]
        for i, s in enumerate(self.features.strings):
            out.append(f"F {i} {s}")
        if self.alignment is not None:
            for line in self.alignment.to_text().splitlines():
                out.append("A " + line)
        for table in self.tables:
            for hid, hist in enumerate(table.histories):
                ids = ",".join("B" if s == BOS_SLOT else str(s) for s in hist)
                out.append(f"HO {table.order} {hid} {ids}")
        for table in self.tables:
            keys, vals = table.store.items_arrays()
            idx = np.argsort(keys, kind="stable")
            keys = keys[idx]
            vals = vals[idx]
            o = table.order
            for key, val in zip(keys.tolist(), vals.tolist()):
                f = key >> F_SHIFT
                h = (key >> H_SHIFT) & _H_MASK
                y = key & _Y_MASK
                out.append(f"W {o} {f} {h} {y} {float(val)!r}")
        return "\n".join(out) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_text())

    @classmethod
    def from_text(cls, text: str, backend=None) -> "ModelStack":
        lines = text.splitlines()
        if not lines or lines[0] != PCRF_MAGIC:
            raise ModelFormatError(
                f"not a {PCRF_MAGIC} model (bad or corrupt magic line)"
            )
        if len(lines) < 2 or not lines[1].startswith("H "):
            raise ModelFormatError("missing model header")
        header = json.loads(lines[1][2:])
        fcfg = FeatureConfig(**header["feature_config"])
        tc = dict(header["train_config"])
        tc["schedule"] = tuple(tc["schedule"])
        tcfg = TrainConfig(**tc)
        labels = list(header["labels"])
        feature_strings: list[str] = [""] * header["n_features"]
        align_lines: list[str] = []
        tables = {
            o: WeightTable(o, labels, backend=backend) for o in header["orders"]
        }
        hist_rows: list[tuple[int, int, str]] = []
        weight_rows: list[tuple[int, int, int, int, float]] = []
        for line in lines[2:]:
            if not line:
                continue
            tag, rest = line.split(" ", 1)
            if tag == "F":
                sid, s = rest.split(" ", 1) if " " in rest else (rest, "")
                feature_strings[int(sid)] = s
            elif tag == "A":
                align_lines.append(rest)
            elif tag == "HO":
                o, hid, ids = rest.split(" ")
                hist_rows.append((int(o), int(hid), ids))
            elif tag == "W":
                o, f, h, y, v = rest.split(" ")
                weight_rows.append((int(o), int(f), int(h), int(y), float(v)))
            else:
                raise ModelFormatError(f"unknown record tag {tag!r}")
        for o, hid, ids in hist_rows:
            table = tables[o]
            state = tuple(BOS_SLOT if tok == "B" else int(tok) for tok in ids.split(","))
            got = table.hist_id(state, grow=True)
            if got != hid:
                raise ModelFormatError("history ids out of order in model file")
        for o, f, h, y, v in weight_rows:
            tables[o].store.set((f << F_SHIFT) | (h << H_SHIFT) | y, v)
        alignment = (
            AlignmentModel.from_text("\n".join(align_lines) + "\n")
            if align_lines
            else None
        )
        features = InternTable(feature_strings, frozen=True)
        return cls(
            feature_config=fcfg,
            train_config=tcfg,
            labels=labels,
            features=features,
            tables=[tables[o] for o in header["orders"]],
            alignment=alignment,
            version=header["version"],
        )

    @classmethod
    def load(cls, path: str, backend=None) -> "ModelStack":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_text(f.read(), backend=backend)
