import itertools
import math

import pytest

from monoseq.aligner import AlignedPair, align_corpus, em_train
from monoseq.corpus import Corpus, RuleSpec, StringPair, synth_generate
from monoseq.errors import TrainingError
from monoseq.jointngram import (
    BOS_GRAPHONE,
    EOS_GRAPHONE,
    beam_decode,
    beam_decode_labels,
    build_graphones,
    decode_score,
    lm_train,
)

A, B, X = ("a", "a"), ("b", "b"), ("a", "x")


def toy_lm(n=2):
    seqs = [
        [BOS_GRAPHONE, A, B, EOS_GRAPHONE],
        [BOS_GRAPHONE, A, A, EOS_GRAPHONE],
        [BOS_GRAPHONE, B, X, EOS_GRAPHONE],
    ]
    return lm_train(seqs, n=n)


def test_build_graphones_examples():
    ident = AlignedPair((("a", "a"), ("b", "b")))
    seqs = build_graphones([ident])
    assert seqs == [[BOS_GRAPHONE, ("a", "a"), ("b", "b"), EOS_GRAPHONE]]
    multi = AlignedPair((("i", "i"), ("m", "rn")))
    assert build_graphones([multi])[0][2] == ("m", "rn")
    eps = AlignedPair((("t", "t"), ("l", "")))
    seq = build_graphones([eps])[0]
    assert seq[2] == ("l", "") and len(seq) == 4


def test_unigram_probabilities_relative_frequencies():
    # single sequence, n=1: probabilities follow relative frequencies with
    # the Witten-Bell unknown-mass correction
    lm = lm_train([[BOS_GRAPHONE, A, A, B, EOS_GRAPHONE]], n=1)
    # counts: A:2, B:1, E:1; T=3 types; vocab = {A,B,E,UNK} -> V=4
    pa = lm.prob(A, ())
    pb = lm.prob(B, ())
    assert pa == pytest.approx((2 + 3 / 4) / (4 + 3), abs=1e-12)
    assert pb == pytest.approx((1 + 3 / 4) / (4 + 3), abs=1e-12)
    assert pa > pb


def test_hand_computed_witten_bell_bigrams():
    lm = toy_lm(n=2)
    # unigram table: c = {A:3, B:2, X:1, E:3}, C=9, T=4, V=5
    p1 = {
        A: (3 + 4 / 5) / 13,
        B: (2 + 4 / 5) / 13,
        X: (1 + 4 / 5) / 13,
        EOS_GRAPHONE: (3 + 4 / 5) / 13,
    }
    for g, want in p1.items():
        assert lm.prob(g, ()) == pytest.approx(want, abs=1e-12)
    # context (A,): counts {A:1, B:1, E:1}, c=3, T=3
    assert lm.prob(B, (A,)) == pytest.approx((1 + 3 * p1[B]) / 6, abs=1e-12)
    assert lm.prob(X, (A,)) == pytest.approx((0 + 3 * p1[X]) / 6, abs=1e-12)
    # context (X,): counts {E:1}, c=1, T=1
    assert lm.prob(A, (X,)) == pytest.approx(p1[A] / 2, abs=1e-12)
    # context never observed backs off to the unigram
    assert lm.prob(A, (EOS_GRAPHONE,)) == pytest.approx(p1[A], abs=1e-12)


def test_unseen_graphone_positive_probability():
    lm = toy_lm()
    assert lm.prob(("q", "q"), ()) > 0.0
    assert lm.prob(("q", "q"), (A,)) > 0.0


def test_normalization_over_vocab_every_observed_context():
    lm = toy_lm()
    for ctx in list(lm.counts):
        if len(ctx) >= lm.n:
            continue
        total = sum(lm.prob(g, ctx) for g in lm.vocab)
        assert total == pytest.approx(1.0, abs=1e-8)


def test_empty_training_set_rejected():
    with pytest.raises(TrainingError):
        lm_train([], n=2)


def test_deterministic_mapping_reproduced():
    # each symbol always maps to one label; beam 1 must replay the mapping
    mapping = {"a": "x", "b": "y", "c": ""}
    pairs = ["abc", "cab", "bca", "aabbcc", "cba"]
    aligned = [
        AlignedPair(tuple((ch, mapping[ch]) for ch in s)) for s in pairs
    ]
    lm = lm_train(build_graphones(aligned), n=3)
    for s in ["abc", "ccba", "ba"]:
        want = "".join(mapping[ch] for ch in s)
        assert beam_decode(lm, s, beam=1) == want


def test_unigram_model_positionwise_argmax():
    lm = toy_lm(n=1)
    # brute force per position: argmax label for each symbol independently
    for source in ["a", "ab", "ba", "aab"]:
        got = beam_decode(lm, source, beam=1)
        want = []
        for sym in source:
            labs = lm.compat.get(sym) or lm.all_labels
            best = max(labs, key=lambda lab: (lm.prob((sym, lab), ()), ))
            # ties prefer lexicographically smaller label
            best_p = lm.prob((sym, best), ())
            best = min(lab for lab in labs if lm.prob((sym, lab), ()) == best_p)
            want.append(best)
        assert got == "".join(want)


def exhaustive_best(lm, source):
    cands = [lm.compat.get(sym) or lm.all_labels for sym in source]
    best = None
    best_score = -math.inf
    for labs in itertools.product(*cands):
        s = decode_score(lm, source, labs)
        if best is None or s > best_score + 1e-12 or (
            abs(s - best_score) <= 1e-12 and labs < best
        ):
            best, best_score = labs, s
    return best, best_score


def test_exhaustive_beam_matches_bruteforce():
    rule = RuleSpec("expand", alphabet="aeimnorst")
    corpus = synth_generate(rule, 60, seed=9)
    model = em_train(corpus, L=2, max_iters=8)
    aligned, _, _ = align_corpus(model, corpus)
    lm = lm_train(build_graphones(aligned), n=3)
    for source in ["ima", "mem", "rst", "aim"]:
        n_combos = 1
        for sym in source:
            n_combos *= len(lm.compat.get(sym) or lm.all_labels)
        labels, score = beam_decode_labels(lm, source, beam=n_combos)
        want, want_score = exhaustive_best(lm, source)
        assert score == pytest.approx(want_score, abs=1e-9)
        assert labels == want


def test_beam_growth_never_decreases_score():
    rule = RuleSpec("harmony", alphabet="aeimnorst")
    corpus = synth_generate(rule, 80, seed=4)
    model = em_train(corpus, L=2, max_iters=8)
    aligned, _, _ = align_corpus(model, corpus)
    lm = lm_train(build_graphones(aligned), n=4)
    for source in ["mineras", "aeim", "storm", "ooze"]:
        prev = -math.inf
        for beam in (1, 2, 4, 8, 16):
            _, score = beam_decode_labels(lm, source, beam=beam)
            assert score >= prev - 1e-12
            prev = score


def test_lm_bad_args():
    with pytest.raises(ValueError):
        lm_train([[BOS_GRAPHONE, A, EOS_GRAPHONE]], n=0)
    lm = toy_lm()
    with pytest.raises(ValueError):
        beam_decode(lm, "ab", beam=0)
