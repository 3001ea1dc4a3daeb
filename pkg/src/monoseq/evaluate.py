"""Word accuracy and length-bucketed error analysis.

WAC is the fraction of output sequences predicted exactly right; comparison
is exact on the symbol sequences, with no normalization of any kind.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence, TextIO

from .corpus import StringPair

DEFAULT_BUCKET_EDGES = (5, 10, 15, 20)

Bucket = tuple[int, int | None]  # inclusive lo, inclusive hi (None = unbounded)


def wac(predictions: Sequence[str], references: Sequence[str]) -> float:
    """Exact-match word accuracy."""
    if len(predictions) != len(references):
        raise ValueError(
            f"{len(predictions)} predictions vs {len(references)} references"
        )
    if not references:
        raise ValueError("cannot score an empty set")
    correct = sum(1 for p, r in zip(predictions, references) if p == r)
    return correct / len(references)


def buckets_from_edges(edges: Sequence[int]) -> list[Bucket]:
    if list(edges) != sorted(set(edges)) or (edges and edges[0] < 2):
        raise ValueError("bucket edges must be ascending and >= 2")
    out: list[Bucket] = []
    lo = 1
    for e in edges:
        out.append((lo, e - 1))
        lo = e
    out.append((lo, None))
    return out


def wac_by_length(
    pairs: Sequence[StringPair],
    predictions: Sequence[str],
    bucket_edges: Sequence[int] = DEFAULT_BUCKET_EDGES,
) -> dict[Bucket, tuple[float | None, int]]:
    """Per-bucket WAC keyed by source-length bucket.

    Empty buckets report (None, 0) rather than a fake zero.
    """
    if len(pairs) != len(predictions):
        raise ValueError("pairs and predictions must align by index")
    bks = buckets_from_edges(bucket_edges)
    correct = {b: 0 for b in bks}
    count = {b: 0 for b in bks}
    for pair, pred in zip(pairs, predictions):
        n = len(pair.source)
        for lo, hi in bks:
            if n >= lo and (hi is None or n <= hi):
                count[(lo, hi)] += 1
                if pred == pair.target:
                    correct[(lo, hi)] += 1
                break
    return {
        b: ((correct[b] / count[b]) if count[b] else None, count[b]) for b in bks
    }


@dataclass
class EvalReport:
    wac: float
    per_bucket: dict[Bucket, tuple[float | None, int]]
    train_seconds: float | None = None
    decode_seconds: float | None = None
    config: dict = field(default_factory=dict)

    def total_count(self) -> int:
        return sum(c for _, c in self.per_bucket.values())

    def to_json(self) -> str:
        payload = {
            "wac": self.wac,
            "per_bucket": [
                {"lo": lo, "hi": hi, "wac": w, "count": c}
                for (lo, hi), (w, c) in self.per_bucket.items()
            ],
            "train_seconds": self.train_seconds,
            "decode_seconds": self.decode_seconds,
            "config": self.config,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        per_bucket = {
            (row["lo"], row["hi"]): (row["wac"], row["count"]) for row in d["per_bucket"]
        }
        return cls(
            wac=d["wac"],
            per_bucket=per_bucket,
            train_seconds=d.get("train_seconds"),
            decode_seconds=d.get("decode_seconds"),
            config=d.get("config", {}),
        )


def _pct(w: float | None) -> str:
    return "NA" if w is None else f"{w * 100:.2f}%"


def _bucket_name(lo: int, hi: int | None) -> str:
    return f"{lo}+" if hi is None else f"{lo}-{hi}"


def report_emit(
    report: EvalReport,
    table: TextIO | None = None,
    csv: TextIO | None = None,
) -> None:
    """Write the human table and/or the CSV; both are byte-stable.

    CSV schema: bucket_lo, bucket_hi, count, wac (fraction, 6 decimals;
    empty buckets write NA).  The totals row uses bucket_lo = bucket_hi =
    "all".  Timing lines appear in the table only when recorded.
    """
    if table is not None:
        rows = [("bucket", "count", "wac")]
        for (lo, hi), (w, c) in report.per_bucket.items():
            rows.append((_bucket_name(lo, hi), str(c), _pct(w)))
        rows.append(("all", str(report.total_count()), _pct(report.wac)))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        for i, row in enumerate(rows):
            table.write(
                "  ".join(cell.rjust(widths[j]) for j, cell in enumerate(row)) + "\n"
            )
            if i == 0:
                table.write("  ".join("-" * w for w in widths) + "\n")
        if report.train_seconds is not None:
            table.write(f"train_seconds: {report.train_seconds:.3f}\n")
        if report.decode_seconds is not None:
            table.write(f"decode_seconds: {report.decode_seconds:.3f}\n")
    if csv is not None:
        csv.write("bucket_lo,bucket_hi,count,wac\n")
        for (lo, hi), (w, c) in report.per_bucket.items():
            ws = "NA" if w is None else f"{w:.6f}"
            csv.write(f"{lo},{'' if hi is None else hi},{c},{ws}\n")
        csv.write(f"all,all,{report.total_count()},{report.wac:.6f}\n")


def make_report(
    pairs: Sequence[StringPair],
    predictions: Sequence[str],
    bucket_edges: Sequence[int] = DEFAULT_BUCKET_EDGES,
    train_seconds: float | None = None,
    decode_seconds: float | None = None,
    config: dict | None = None,
) -> EvalReport:
    references = [p.target for p in pairs]
    return EvalReport(
        wac=wac(predictions, references),
        per_bucket=wac_by_length(pairs, predictions, bucket_edges),
        train_seconds=train_seconds,
        decode_seconds=decode_seconds,
        config=config or {},
    )
