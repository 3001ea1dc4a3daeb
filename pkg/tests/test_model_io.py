import pytest

from monoseq.aligner import AlignedPair, AlignmentModel, em_train
from monoseq.corpus import Corpus, RuleSpec, StringPair, synth_generate
from monoseq.errors import ModelFormatError
from monoseq.features import FeatureConfig
from monoseq.jointngram import GraphoneLM, build_graphones, lm_train
from monoseq.pcrf import ModelStack, TrainConfig, decode, sgd_train


def small_stack():
    rule = RuleSpec("local_sub", alphabet="aeimnorst")
    corpus = synth_generate(rule, 60, seed=21)
    aligned = [AlignedPair(tuple(zip(p.source, p.target))) for p in corpus]
    align_model = em_train(
        Corpus.from_pairs([StringPair(p.source, p.target) for p in corpus]), L=2,
        max_iters=5,
    )
    cfg = TrainConfig(schedule=(1, 2), epochs=2, seed=17)
    return sgd_train(
        aligned, cfg, FeatureConfig(window=2, max_mgram=2), alignment=align_model
    ), corpus


def test_stack_roundtrip_bytes_and_behavior(tmp_path):
    stack, corpus = small_stack()
    path = str(tmp_path / "m.pcrf")
    stack.save(path)
    loaded = ModelStack.load(path)
    assert loaded.labels == stack.labels
    assert loaded.train_config == stack.train_config
    assert loaded.feature_config == stack.feature_config
    assert loaded.alignment is not None
    assert loaded.alignment.logp == stack.alignment.logp
    # byte-stable: re-serializing reproduces the file exactly
    assert loaded.to_text() == stack.to_text()
    for pair in list(corpus)[:15]:
        assert decode(loaded, pair.source) == decode(stack, pair.source)


def test_stack_decode_unknown_symbols():
    stack, _ = small_stack()
    out = decode(stack, "zzqa")  # z, q unseen in training
    assert isinstance(out, str)
    assert decode(stack, "") == ""


def test_bad_magic_is_version_error(tmp_path):
    p = tmp_path / "junk.pcrf"
    p.write_text("monoseq.pcrf.v999\nH {}\n")
    with pytest.raises(ModelFormatError, match="magic"):
        ModelStack.load(str(p))
    p2 = tmp_path / "junk2.pcrf"
    p2.write_text("garbage\n")
    with pytest.raises(ModelFormatError):
        ModelStack.load(str(p2))


def test_glm_roundtrip(tmp_path):
    rule = RuleSpec("expand", alphabet="aeimnorst")
    corpus = synth_generate(rule, 50, seed=3)
    align_model = em_train(
        Corpus.from_pairs([StringPair(p.source, p.target) for p in corpus]), L=2,
        max_iters=8,
    )
    from monoseq.aligner import align_corpus

    aligned, _, _ = align_corpus(align_model, corpus)
    lm = lm_train(build_graphones(aligned), n=3)
    path = str(tmp_path / "m.glm")
    lm.save(path)
    loaded = GraphoneLM.load(path)
    assert loaded.n == lm.n
    assert loaded.counts == lm.counts
    assert loaded.to_text() == lm.to_text()
    ctx = (("a", "a"),)
    g = ("m", "rn")
    assert loaded.prob(g, ctx) == pytest.approx(lm.prob(g, ctx), rel=1e-12)


def test_glm_bad_magic(tmp_path):
    p = tmp_path / "x.glm"
    p.write_text("wrong\tn=8\n")
    with pytest.raises(ModelFormatError):
        GraphoneLM.load(str(p))


def test_alignment_model_inf_rows_roundtrip(tmp_path):
    model = AlignmentModel(L=2, logp={("a", "a"): 0.0, ("a", "b"): float("-inf")},
                           iterations_run=3, final_loglik=-1.25)
    path = str(tmp_path / "a.model")
    model.save(path)
    loaded = AlignmentModel.load(path)
    assert loaded.logp == model.logp
    assert loaded.final_loglik == -1.25
