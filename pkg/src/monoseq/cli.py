"""Command-line pipeline: split, synth, align, train, decode, eval, report.

Stages communicate through files only; every run writes a manifest next to
its primary output recording the exact arguments (replayable), tool version,
timings, and skip counts.  Exit codes: 0 success, 1 runtime/data error,
2 usage error.
"""

from __future__ import annotations

import argparse
import shlex
import sys
import time

from . import corpus as corpus_mod
from . import evaluate, jointngram
from ._version import VERSION
from .aligner import (
    AlignmentModel,
    align_corpus,
    em_train,
    load_aligned,
    save_aligned,
)
from .errors import ModelFormatError, MonoseqError
from .features import FeatureConfig
from .jointngram import GLM_MAGIC, GraphoneLM
from .manifest import manifest_path, write_manifest
from .pcrf import ModelStack, TrainConfig, decode_corpus, sgd_train
from .pcrf.model import PCRF_MAGIC


def _base_manifest(args: argparse.Namespace, argv: list[str]) -> dict:
    return {
        "subcommand": args.subcommand,
        "argv": shlex.join(argv),
        "tool_version": VERSION,
    }


def _load_corpus(path: str, lenient: bool) -> corpus_mod.Corpus:
    return corpus_mod.load_path(path, strict=not lenient)


def cmd_split(args, argv) -> int:
    c = _load_corpus(args.in_path, args.lenient)
    train, test = corpus_mod.split(
        c, corpus_mod.SplitSpec(args.train, args.test, args.seed)
    )
    corpus_mod.save_path(train, args.out_train)
    corpus_mod.save_path(test, args.out_test)
    m = _base_manifest(args, argv)
    m.update(
        {
            "in": args.in_path,
            "out_train": args.out_train,
            "out_test": args.out_test,
            "train_size": args.train,
            "test_size": args.test,
            "seed": args.seed,
            "skipped_lines": c.skipped_lines,
        }
    )
    write_manifest(manifest_path(args.out_train), m)
    return 0


def _rule_from_args(args) -> corpus_mod.RuleSpec:
    kw = {"name": args.rule, "alphabet": args.alphabet}
    if args.subs:
        pairs = []
        for part in args.subs.split(","):
            a, b = part.split(":")
            pairs.append((a, b))
        kw["subs"] = tuple(pairs)
    if args.context_len is not None:
        kw["context_len"] = args.context_len
    if args.triggers:
        ctx_len = kw.get("context_len", 1)
        trigs = tuple(tuple(t) for t in args.triggers.split(","))
        for t in trigs:
            if len(t) != ctx_len:
                raise ValueError(f"trigger {''.join(t)!r} must have length {ctx_len}")
        kw["triggers"] = trigs
    if args.expand_from:
        kw["expand_from"] = args.expand_from
    if args.expand_to:
        kw["expand_to"] = args.expand_to
    if args.delete_symbol:
        kw["delete_symbol"] = args.delete_symbol
    if args.delete_after is not None:
        kw["delete_after"] = tuple(args.delete_after) if args.delete_after else None
    return corpus_mod.RuleSpec(**kw)


def cmd_synth(args, argv) -> int:
    rule = _rule_from_args(args)
    c = corpus_mod.synth_generate(rule, args.n, args.seed)
    corpus_mod.save_path(c, args.out)
    m = _base_manifest(args, argv)
    m.update({"out": args.out, "rule": args.rule, "n": args.n, "seed": args.seed,
              "alphabet": args.alphabet})
    write_manifest(manifest_path(args.out), m)
    return 0


def cmd_align(args, argv) -> int:
    c = _load_corpus(args.in_path, args.lenient)
    t0 = time.perf_counter()
    model = em_train(c, L=args.L, max_iters=args.max_iters, tol=args.tol, delta=args.delta)
    aligned, labels, skipped = align_corpus(model, c)
    align_seconds = time.perf_counter() - t0
    model.save(args.out_model)
    save_aligned(aligned, args.out_aligned)
    m = _base_manifest(args, argv)
    m.update(
        {
            "in": args.in_path,
            "out_model": args.out_model,
            "out_aligned": args.out_aligned,
            "L": args.L,
            "max_iters": args.max_iters,
            "tol": args.tol,
            "delta": args.delta,
            "iterations_run": model.iterations_run,
            "final_loglik": model.final_loglik,
            "skipped_infeasible": skipped,
            "skipped_lines": c.skipped_lines,
            "n_labels": len(labels),
            "align_seconds": align_seconds,
        }
    )
    write_manifest(manifest_path(args.out_model), m)
    return 0


def cmd_train(args, argv) -> int:
    aligned = load_aligned(args.aligned)
    alignment = AlignmentModel.load(args.align_model) if args.align_model else None
    t0 = time.perf_counter()
    if args.model_kind == "pcrf":
        fcfg = FeatureConfig(
            window=args.window,
            max_mgram=args.max_mgram,
            boundary_symbol=args.boundary,
        )
        tcfg = TrainConfig.for_order(
            args.order,
            prune_threshold=args.tau,
            top_k=args.top_k,
            epochs=args.epochs,
            learning_rate=args.eta0,
            l2=args.l2,
            seed=args.seed,
            batch_size=args.batch_size,
        )
        stack = sgd_train(aligned, tcfg, fcfg, alignment=alignment, threads=args.threads)
        train_seconds = time.perf_counter() - t0
        stack.save(args.out)
        extra = {
            "order": args.order,
            "window": args.window,
            "max_mgram": fcfg.n,
            "tau": args.tau,
            "top_k": args.top_k,
            "epochs": args.epochs,
            "eta0": args.eta0,
            "l2": args.l2,
            "seed": args.seed,
            "batch_size": args.batch_size,
            "threads": args.threads,
            "n_labels": len(stack.labels),
            "n_features": len(stack.features),
        }
    else:  # jointngram
        seqs = jointngram.build_graphones(aligned)
        lm = jointngram.lm_train(seqs, n=args.n)
        train_seconds = time.perf_counter() - t0
        lm.save(args.out)
        extra = {"n": args.n}
    m = _base_manifest(args, argv)
    m.update({"aligned": args.aligned, "out": args.out,
              "model_kind": args.model_kind, "train_seconds": train_seconds})
    m.update(extra)
    write_manifest(manifest_path(args.out), m)
    return 0


def _sniff_model(path: str):
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
    if first == PCRF_MAGIC:
        return "pcrf"
    if first.startswith(GLM_MAGIC + "\t"):
        return "jointngram"
    raise ModelFormatError(
        f"unrecognized model file {path!r}: expected a {PCRF_MAGIC} or "
        f"{GLM_MAGIC} header, found {first[:40]!r}"
    )


def cmd_decode(args, argv) -> int:
    kind = _sniff_model(args.model)
    if args.input_format == "tsv":
        sources = [p.source for p in _load_corpus(args.in_path, args.lenient)]
    else:
        with open(args.in_path, "r", encoding="utf-8") as f:
            sources = f.read().split("\n")
        if sources and sources[-1] == "":
            sources.pop()
    t0 = time.perf_counter()
    if kind == "pcrf":
        stack = ModelStack.load(args.model)
        preds = decode_corpus(stack, sources, threads=args.threads)
    else:
        lm = GraphoneLM.load(args.model)
        preds = [jointngram.beam_decode(lm, src, beam=args.beam) for src in sources]
    decode_seconds = time.perf_counter() - t0
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        for p in preds:
            f.write(p + "\n")
    m = _base_manifest(args, argv)
    m.update(
        {
            "model": args.model,
            "model_kind": kind,
            "in": args.in_path,
            "out": args.out,
            "input_format": args.input_format,
            "n_inputs": len(sources),
            "beam": args.beam,
            "threads": args.threads,
            "decode_seconds": decode_seconds,
        }
    )
    write_manifest(manifest_path(args.out), m)
    return 0


def cmd_eval(args, argv) -> int:
    refs = _load_corpus(args.refs, args.lenient)
    with open(args.preds, "r", encoding="utf-8") as f:
        preds = f.read().split("\n")
    if preds and preds[-1] == "":
        preds.pop()
    edges = tuple(int(x) for x in args.buckets.split(","))
    report = evaluate.make_report(
        list(refs), preds, bucket_edges=edges,
        config={"buckets": list(edges), "preds": args.preds, "refs": args.refs},
    )
    _emit_report_files(report, args.out_prefix)
    m = _base_manifest(args, argv)
    m.update({"preds": args.preds, "refs": args.refs, "out_prefix": args.out_prefix,
              "buckets": args.buckets, "wac": report.wac, "n": report.total_count()})
    write_manifest(args.out_prefix + ".manifest", m)
    return 0


def _emit_report_files(report, prefix: str) -> None:
    with open(prefix + ".txt", "w", encoding="utf-8", newline="\n") as ftab:
        evaluate.report_emit(report, table=ftab)
    with open(prefix + ".csv", "w", encoding="utf-8", newline="\n") as fcsv:
        evaluate.report_emit(report, csv=fcsv)
    with open(prefix + ".json", "w", encoding="utf-8", newline="\n") as fjson:
        fjson.write(report.to_json())


def cmd_report(args, argv) -> int:
    with open(args.report, "r", encoding="utf-8") as f:
        report = evaluate.EvalReport.from_json(f.read())
    if args.out_prefix:
        _emit_report_files(report, args.out_prefix)
        m = _base_manifest(args, argv)
        m.update({"report": args.report, "out_prefix": args.out_prefix})
        write_manifest(args.out_prefix + ".manifest", m)
    else:
        evaluate.report_emit(report, table=sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="monoseq",
        description="Monotone string-to-string transduction toolkit",
    )
    p.add_argument("--version", action="version", version=f"monoseq {VERSION}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("split", help="deterministic random corpus split")
    sp.add_argument("--in", dest="in_path", required=True)
    sp.add_argument("--train", type=int, required=True)
    sp.add_argument("--test", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out-train", required=True)
    sp.add_argument("--out-test", required=True)
    sp.add_argument("--lenient", action="store_true")
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("synth", help="generate a synthetic rule corpus")
    sp.add_argument("--rule", required=True, choices=corpus_mod.RULE_NAMES)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--alphabet", default="abcdefghijklmnopqrstuvwxyz")
    sp.add_argument("--subs", default=None, help="substitutions, e.g. n:m,a:b")
    sp.add_argument("--context-len", type=int, default=None)
    sp.add_argument("--triggers", default=None,
                    help="comma-separated output contexts, e.g. r or aa,ab")
    sp.add_argument("--expand-from", default=None)
    sp.add_argument("--expand-to", default=None)
    sp.add_argument("--delete-symbol", default=None)
    sp.add_argument("--delete-after", default=None)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("align", help="EM-train an aligner and align the corpus")
    sp.add_argument("--in", dest="in_path", required=True)
    sp.add_argument("--out-model", required=True)
    sp.add_argument("--out-aligned", required=True)
    sp.add_argument("--L", type=int, default=2, help="max target symbols per step")
    sp.add_argument("--max-iters", type=int, default=30)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--lenient", action="store_true")
    sp.set_defaults(func=cmd_align)

    sp = sub.add_parser("train", help="train a model on an aligned corpus")
    sp.add_argument("--aligned", required=True)
    sp.add_argument("--model-kind", required=True, choices=("pcrf", "jointngram"))
    sp.add_argument("--out", required=True)
    sp.add_argument("--align-model", default=None,
                    help="embed this alignment model in the trained stack")
    sp.add_argument("--order", type=int, default=4)
    sp.add_argument("--window", type=int, default=4)
    sp.add_argument("--max-mgram", type=int, default=None)
    sp.add_argument("--boundary", default="␟")
    sp.add_argument("--tau", type=float, default=1e-4)
    sp.add_argument("--top-k", type=int, default=12)
    sp.add_argument("--epochs", type=int, default=10)
    sp.add_argument("--eta0", type=float, default=0.1)
    sp.add_argument("--l2", type=float, default=1e-5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--batch-size", type=int, default=1)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--n", type=int, default=8, help="jointngram model order")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("decode", help="decode sources with a trained model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--in", dest="in_path", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--input-format", choices=("tsv", "lines"), default="tsv")
    sp.add_argument("--beam", type=int, default=16)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--lenient", action="store_true")
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("eval", help="word accuracy with length buckets")
    sp.add_argument("--preds", required=True)
    sp.add_argument("--refs", required=True)
    sp.add_argument("--out-prefix", required=True)
    sp.add_argument("--buckets", default="5,10,15,20")
    sp.add_argument("--lenient", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("report", help="re-emit a saved evaluation report")
    sp.add_argument("--report", required=True)
    sp.add_argument("--out-prefix", default=None)
    sp.set_defaults(func=cmd_report)

    return p


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        return args.func(args, list(argv))
    except (MonoseqError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
