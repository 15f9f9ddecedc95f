"""Vocabulary, decompositions, example generation, and model files."""

import math

import numpy as np
import pytest

from chordseg import embeddings as emb
from chordseg.corpus import AnnotatedTrack
from chordseg.embeddings import (
    CharNgram,
    EmptyCorpus,
    FormatVersionMismatch,
    PitchClass,
    TrainConfig,
    WholeToken,
    build_vocab,
    char_ngrams,
    decompose,
    discard_probability,
    embed,
    fnv1a,
    generate_examples,
    hybrid_embed,
    kind_token,
    load_model,
    negative_distribution,
    parse_kind_token,
    save_model,
    similarity,
    train_embedding,
)


def tracks_from(*sequences):
    return [AnnotatedTrack(f"t{i}", list(seq)) for i, seq in enumerate(sequences)]


# ---------------------------------------------------------------- vocabulary

def test_vocab_order_count_desc_then_token():
    vocab = build_vocab(tracks_from(["C", "G", "C", "A", "G", "C", "A"]))
    # C has count 3; A and G both 2 -> lexical tie-break
    assert vocab.tokens == ["C", "A", "G"]
    assert vocab.counts.tolist() == [3, 2, 2]
    assert vocab.index == {"C": 0, "A": 1, "G": 2}
    assert vocab.total_count == 7


def test_vocab_min_count():
    vocab = build_vocab(tracks_from(["C", "C", "G"]), min_count=2)
    assert vocab.tokens == ["C"]
    with pytest.raises(EmptyCorpus):
        build_vocab(tracks_from(["C"]), min_count=5)


# ---------------------------------------------------------------- hashing

def test_fnv1a_published_vectors():
    assert fnv1a(b"") == 0xCBF29CE484222325
    assert fnv1a(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a(b"foobar") == 0x85944171F73967E8


def test_fnv1a_against_inline_reference():
    def reference(data):
        h = 14695981039346656037
        for b in data:
            h = ((h ^ b) * 1099511628211) % 2**64
        return h

    rng = np.random.default_rng(0)
    for _ in range(100):
        data = bytes(rng.integers(0, 256, size=rng.integers(0, 20)).tolist())
        assert fnv1a(data) == reference(data)


def test_char_ngrams():
    grams = char_ngrams("C:maj", 2, 5)
    assert len(grams) == 6 + 5 + 4 + 3
    assert grams[0] == "<C"
    assert "aj>" in grams
    assert "<C:maj>" not in grams  # max_n caps the length
    assert char_ngrams("N", 2, 5) == ["<N", "N>", "<N>"]


# ---------------------------------------------------------------- decompose

def test_decompose_whole_token():
    vocab = build_vocab(tracks_from(["C", "G"]))
    kind = WholeToken()
    assert decompose("C", kind, vocab) == [vocab.index["C"]]
    assert decompose("X:unseen", kind, vocab) == []
    assert emb.n_components_for(kind, len(vocab)) == 2


def test_decompose_char_ngram():
    vocab = build_vocab(tracks_from(["C:maj", "G:min"]))
    kind = CharNgram(min_n=2, max_n=3, buckets=97)
    ids = decompose("C:maj", kind, vocab)
    grams = char_ngrams("C:maj", 2, 3)
    assert ids[0] == vocab.index["C:maj"]
    expected = [len(vocab) + fnv1a(g.encode()) % 97 for g in grams]
    assert ids[1:] == expected
    # OOV keeps the n-gram ids and just loses the whole-token one
    oov = decompose("D:maj", kind, vocab)
    assert len(oov) == len(char_ngrams("D:maj", 2, 3))
    assert all(i >= len(vocab) for i in oov)
    assert emb.n_components_for(kind, len(vocab)) == len(vocab) + 97


def test_decompose_pitchclass():
    vocab = build_vocab(tracks_from(["C"]))
    kind = PitchClass()
    # C major: root 0 with pitches {0, 4, 7} -> component ids root*12+pitch
    assert decompose("C", kind, vocab) == [0, 4, 7]
    assert decompose("G:min7", kind, vocab) == sorted(7 * 12 + p for p in (7, 10, 2, 5))
    assert decompose("N", kind, vocab) == []
    assert emb.n_components_for(kind, 1) == 144


def test_kind_token_round_trip():
    for kind in (WholeToken(), PitchClass(), CharNgram(2, 5, 100000), CharNgram(1, 3, 7)):
        assert parse_kind_token(kind_token(kind)) == kind
    with pytest.raises(FormatVersionMismatch):
        parse_kind_token("bogus")
    with pytest.raises(FormatVersionMismatch):
        parse_kind_token("char_ngram:2:5")


# ---------------------------------------------------------------- sampling

def test_discard_probability():
    assert discard_probability(1, 1000, 1e-2) == 0.0  # rare token kept
    # f = 4t -> 1 - sqrt(1/4) = 0.5
    assert abs(discard_probability(40, 1000, 1e-2) - 0.5) < 1e-15
    assert 0.0 <= discard_probability(999, 1000, 1e-5) < 1.0


def test_negative_distribution():
    vocab = build_vocab(tracks_from(["C"] * 16 + ["G"] * 1))
    dist = negative_distribution(vocab)
    assert abs(dist.sum() - 1.0) < 1e-12
    # 16^0.75 : 1^0.75 = 8 : 1
    assert abs(dist[vocab.index["C"]] / dist[vocab.index["G"]] - 8.0) < 1e-9


def test_draw_negatives_follows_distribution():
    vocab = build_vocab(tracks_from(["C"] * 81 + ["G"] * 1))
    cumulative = emb._negative_cumulative(vocab)
    rng = np.random.default_rng(17)
    draws = emb._draw_negatives(rng, cumulative, 20000)
    share = (draws == vocab.index["C"]).mean()
    want = negative_distribution(vocab)[vocab.index["C"]]
    assert abs(share - want) < 0.02


# ---------------------------------------------------------------- examples

def test_generate_examples_windows():
    vocab = build_vocab(tracks_from(["C", "G", "A", "F"]))
    config = TrainConfig(window=2, negatives=3, subsample_t=0.999, seed=0)
    track = AnnotatedTrack("t", ["C", "G", "A", "F"])
    examples = generate_examples(track, vocab, config, np.random.default_rng(0))
    # subsample_t ~ 1 keeps everything: window 2 over 4 tokens -> 10 pairs
    pairs = {(e.center, e.context) for e in examples}
    idx = vocab.index
    seq = [idx["C"], idx["G"], idx["A"], idx["F"]]
    want = set()
    for t in range(4):
        for c in range(max(0, t - 2), min(4, t + 3)):
            if c != t:
                want.add((seq[t], seq[c]))
    assert pairs == want
    assert all(e.negatives.shape == (3,) for e in examples)
    assert all(int(n) in (0, 1, 2, 3) for e in examples for n in e.negatives)


def test_generate_examples_drops_oov():
    vocab = build_vocab(tracks_from(["C", "G"]))
    config = TrainConfig(window=1, negatives=2, subsample_t=0.999)
    track = AnnotatedTrack("t", ["C", "X:unseen", "G"])
    # OOV token vanishes before windowing, so C and G become adjacent
    examples = generate_examples(track, vocab, config, np.random.default_rng(1))
    pairs = {(e.center, e.context) for e in examples}
    assert pairs == {(0, 1), (1, 0)}


def test_generate_examples_deterministic():
    vocab = build_vocab(tracks_from(["C", "G", "A", "F"] * 4))
    config = TrainConfig(window=2, negatives=4, subsample_t=0.5)
    track = AnnotatedTrack("t", ["C", "G", "A", "F"] * 4)
    a = generate_examples(track, vocab, config, np.random.default_rng(5))
    b = generate_examples(track, vocab, config, np.random.default_rng(5))
    assert len(a) == len(b)
    for ea, eb in zip(a, b):
        assert (ea.center, ea.context) == (eb.center, eb.context)
        assert np.array_equal(ea.negatives, eb.negatives)


def test_generate_examples_empty_cases():
    vocab = build_vocab(tracks_from(["C", "G"]))
    config = TrainConfig(window=2, negatives=2)
    track = AnnotatedTrack("t", ["X:a", "Y:b"])
    track.chords = ["X:unseen"]  # fully OOV
    assert generate_examples(track, vocab, config, np.random.default_rng(0)) == []


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(subsample_t=0.0)
    with pytest.raises(ValueError):
        TrainConfig(subsample_t=1.5)
    with pytest.raises(ValueError):
        TrainConfig(window=0)
    with pytest.raises(ValueError):
        TrainConfig(negatives=0)
    assert TrainConfig().resolved_dim(PitchClass()) == 10
    assert TrainConfig().resolved_dim(WholeToken()) == 300
    assert TrainConfig(dim=64).resolved_dim(PitchClass()) == 64


# ---------------------------------------------------------------- embed

def _tiny_model(kind, sequences, dim=6, epochs=1, seed=0):
    config = TrainConfig(dim=dim, epochs=epochs, negatives=3, subsample_t=0.9, seed=seed)
    return train_embedding(tracks_from(*sequences), kind, config)


def test_embed_whole_token_oov_uses_unknown_vector():
    model = _tiny_model(WholeToken(), [["C", "G", "C", "G"]])
    assert np.array_equal(embed(model, "D:min"), model.unknown_vector)
    assert not np.array_equal(embed(model, "C"), model.unknown_vector)


def test_embed_pitchclass():
    model = _tiny_model(PitchClass(), [["C", "G", "C", "G"]])
    # component sum, even for chords never seen in training
    ids = decompose("D:min9", PitchClass(), model.vocab)
    want = model.input_vectors[np.array(ids)].sum(axis=0)
    assert np.allclose(embed(model, "D:min9"), want)
    assert np.array_equal(embed(model, "N"), np.zeros(model.dim))
    # unparseable labels fall back to the unknown vector
    assert np.array_equal(embed(model, "H:bogus"), model.unknown_vector)


def test_embed_char_ngram_oov_is_sum_of_grams():
    model = _tiny_model(CharNgram(2, 3, 31), [["C:maj", "G:min", "C:maj"]])
    ids = decompose("D:sus4", CharNgram(2, 3, 31), model.vocab)
    want = model.input_vectors[np.array(ids)].sum(axis=0)
    assert np.allclose(embed(model, "D:sus4"), want)


def test_similarity_and_hybrid():
    model = _tiny_model(PitchClass(), [["C", "G", "A:min", "F"] * 3])
    assert abs(similarity(model, "C", "C") - 1.0) < 1e-12
    assert similarity(model, "N", "C") == 0.0
    other = _tiny_model(WholeToken(), [["C", "G", "A:min", "F"] * 3], dim=4)
    combined = hybrid_embed([model, other], "C")
    assert combined.shape == (model.dim + other.dim,)
    assert np.allclose(combined[:model.dim], embed(model, "C"))
    assert np.allclose(combined[model.dim:], embed(other, "C"))
    with pytest.raises(ValueError):
        hybrid_embed([], "C")


# ---------------------------------------------------------------- model files

def test_model_file_round_trip(tmp_path):
    for kind in (WholeToken(), PitchClass(), CharNgram(2, 3, 19)):
        model = _tiny_model(kind, [["C:maj", "G:min", "C:maj", "F:maj"]], dim=5)
        path = tmp_path / f"{kind_token(kind).replace(':', '_')}.txt"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.kind == model.kind
        assert loaded.dim == model.dim
        assert loaded.vocab.tokens == model.vocab.tokens
        assert loaded.vocab.counts.tolist() == model.vocab.counts.tolist()
        # nine significant digits survive
        assert np.allclose(loaded.input_vectors, model.input_vectors, rtol=1e-8, atol=1e-12)
        assert np.allclose(loaded.output_vectors, model.output_vectors, rtol=1e-8, atol=1e-12)
        assert np.allclose(loaded.unknown_vector, model.unknown_vector, rtol=1e-8, atol=1e-12)
        # saving what was loaded reproduces the file byte for byte
        again = tmp_path / "again.txt"
        save_model(loaded, again)
        assert again.read_bytes() == path.read_bytes()


def test_model_file_header_checks(tmp_path):
    model = _tiny_model(WholeToken(), [["C", "G"]], dim=3)
    path = tmp_path / "m.txt"
    save_model(model, path)
    lines = path.read_text().splitlines()

    bad = tmp_path / "bad.txt"
    bad.write_text("")
    with pytest.raises(FormatVersionMismatch):
        load_model(bad)
    bad.write_text("something else entirely\n")
    with pytest.raises(FormatVersionMismatch):
        load_model(bad)
    bad.write_text(lines[0].replace(" v1 ", " v9 ") + "\n" + "\n".join(lines[1:]) + "\n")
    with pytest.raises(FormatVersionMismatch):
        load_model(bad)
    # truncated body
    bad.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(emb.DataError):
        load_model(bad)


def test_embedding_dimensions_and_seeding():
    model = _tiny_model(PitchClass(), [["C", "G", "A:min", "F"] * 2], dim=8)
    assert model.input_vectors.shape == (144, 8)
    assert model.output_vectors.shape == (len(model.vocab), 8)
    assert model.unknown_vector.shape == (8,)
    # init bound is 1/(2*dim)
    other = train_embedding(
        tracks_from(["C", "G", "A:min", "F"] * 2),
        PitchClass(),
        TrainConfig(dim=8, epochs=0, negatives=3, subsample_t=0.9, seed=0),
    )
    assert np.abs(other.input_vectors).max() <= 1.0 / 16 + 1e-15
    assert np.all(other.output_vectors == 0.0)
    assert other.epoch_losses == []


def test_training_reduces_loss():
    seqs = [["C", "G", "A:min", "F"] * 6, ["D", "A", "B:min", "G"] * 6]
    config = TrainConfig(dim=8, epochs=6, negatives=5, subsample_t=0.9, seed=1)
    model = train_embedding(tracks_from(*seqs), PitchClass(), config)
    assert len(model.epoch_losses) == 6
    assert model.epoch_losses[-1] < model.epoch_losses[0]


def test_training_determinism():
    seqs = [["C", "G", "A:min", "F"] * 4]
    config = TrainConfig(dim=6, epochs=3, negatives=4, subsample_t=0.9, seed=9)
    a = train_embedding(tracks_from(*seqs), PitchClass(), config)
    b = train_embedding(tracks_from(*seqs), PitchClass(), config)
    assert np.array_equal(a.input_vectors, b.input_vectors)
    assert np.array_equal(a.output_vectors, b.output_vectors)
    assert a.epoch_losses == b.epoch_losses
    c = train_embedding(
        tracks_from(*seqs),
        PitchClass(),
        TrainConfig(dim=6, epochs=3, negatives=4, subsample_t=0.9, seed=10),
    )
    assert not np.array_equal(a.input_vectors, c.input_vectors)
