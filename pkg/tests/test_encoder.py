import math
import random

import numpy as np
import pytest

import cohdet.autodiff as ad
from cohdet.autodiff import Tape, backward, leaf
from cohdet.corpus import Document, EntityMention, Label, SentenceSpan
from cohdet.encoder import (DimensionMismatch, EmbeddingSource,
                            EncoderConfig, Params, aggregate_sentences,
                            attention_lstm, classify, encode_document,
                            encode_prepared, hash_embedding,
                            init_node_embeddings, load_checkpoint,
                            prepare_document, rgcn_forward, save_checkpoint,
                            sentence_averaging_matrix, tensor_shapes)
from cohdet.graph import GraphLimits, build_graph
from cohdet.synthetic import make_document


def tiny_doc(entity_rows):
    """entity_rows: list of sentences, each a list of surfaces."""
    tokens, sentences, entities = [], [], []
    for s, surfaces in enumerate(entity_rows):
        start = len(tokens)
        for surface in surfaces:
            entities.append(EntityMention(sentence_index=s,
                                          token_start=len(tokens),
                                          token_end=len(tokens) + 1,
                                          surface=surface))
            tokens.append(surface)
        tokens.append(f"pad{s}")
        sentences.append(SentenceSpan(index=s, token_start=start,
                                      token_end=len(tokens)))
    return Document(id="t", text=" ".join(tokens), tokens=tokens,
                    sentences=sentences, entities=entities, label=Label.HWT)


class TestHashEmbedding:
    def test_deterministic(self):
        np.testing.assert_array_equal(hash_embedding("word", 16),
                                      hash_embedding("word", 16))

    def test_unit_norm(self):
        for token in ("a", "longer-token", "Üñíçödé"):
            vec = hash_embedding(token, 32)
            assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)

    def test_different_tokens_differ(self):
        assert not np.array_equal(hash_embedding("alpha", 64),
                                  hash_embedding("beta", 64))

    def test_large_dim_uses_extra_blocks(self):
        vec = hash_embedding("x", 600)
        assert vec.shape == (600,)
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-9)


class TestEmbeddingSource:
    def test_precomputed_token_rows_used(self):
        doc = tiny_doc([["Alice"]])
        doc.token_embeddings = [[1.0, 2.0]] * len(doc.tokens)
        src = EmbeddingSource(2)
        np.testing.assert_array_equal(src.token_matrix(doc)[0], [1.0, 2.0])

    def test_dimension_mismatch(self):
        doc = tiny_doc([["Alice"]])
        doc.token_embeddings = [[1.0, 2.0, 3.0]] * len(doc.tokens)
        with pytest.raises(DimensionMismatch):
            EmbeddingSource(2).token_matrix(doc)
        doc2 = tiny_doc([["Alice"]])
        doc2.doc_embedding = [1.0] * 5
        with pytest.raises(DimensionMismatch):
            EmbeddingSource(4).doc_vector(doc2)

    def test_doc_vector_prefers_precomputed(self):
        doc = tiny_doc([["Alice"]])
        doc.doc_embedding = [0.5, -0.5]
        np.testing.assert_array_equal(EmbeddingSource(2).doc_vector(doc),
                                      [[0.5, -0.5]])

    def test_doc_vector_falls_back_to_token_mean(self):
        doc = tiny_doc([["Alice"]])
        src = EmbeddingSource(8)
        expected = src.token_matrix(doc).mean(axis=0, keepdims=True)
        np.testing.assert_allclose(src.doc_vector(doc), expected)


class TestNodeEmbeddings:
    def test_single_token_mention(self):
        doc = tiny_doc([["Alice"]])
        g = build_graph(doc)
        src = EmbeddingSource(16)
        np.testing.assert_array_equal(init_node_embeddings(doc, g, src)[0],
                                      hash_embedding("Alice", 16))

    def test_two_token_mention_is_mean(self):
        doc = tiny_doc([["Alice"]])
        doc.tokens = ["New", "York", "pad0"]
        doc.entities = [EntityMention(0, 0, 2, "New York")]
        doc.sentences = [SentenceSpan(0, 0, 3)]
        g = build_graph(doc)
        src = EmbeddingSource(16)
        expected = (hash_embedding("New", 16) + hash_embedding("York", 16)) / 2
        np.testing.assert_allclose(init_node_embeddings(doc, g, src)[0],
                                   expected)

    def test_repeated_token_gives_identical_rows(self):
        doc = tiny_doc([["Alice"], ["Alice"]])
        g = build_graph(doc)
        z = init_node_embeddings(doc, g, EmbeddingSource(16))
        np.testing.assert_array_equal(z[0], z[1])


class TestRgcn:
    def test_single_node_identity_weights(self):
        d = 4
        tape = Tape()
        z = leaf(tape, np.array([[0.5, -0.25, 2.0, -1.0]]))
        one = leaf(tape, np.ones((1, 1)))
        pv = {f"gcn_{rel}_w{i}": leaf(tape, np.eye(d))
              for rel in ("inner", "inter") for i in (1, 2)}
        out = rgcn_forward(z, one, one, pv)
        np.testing.assert_allclose(out.data, 2.0 * np.maximum(z.data, 0.0))

    def test_zero_weights_give_zero(self):
        tape = Tape()
        z = leaf(tape, np.random.default_rng(0).normal(size=(3, 4)))
        a = leaf(tape, np.eye(3))
        pv = {f"gcn_{rel}_w{i}": leaf(tape, np.zeros((4, 4)))
              for rel in ("inner", "inter") for i in (1, 2)}
        assert np.all(rgcn_forward(z, a, a, pv).data == 0.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        z0 = rng.normal(size=(3, 4))
        a0 = np.eye(3) * 0.5 + 0.1

        def f(leaves):
            tape = leaves["w_inner_1"].tape
            z = leaf(tape, z0)
            a = leaf(tape, a0)
            pv = {"gcn_inner_w1": leaves["w_inner_1"],
                  "gcn_inner_w2": leaves["w_inner_2"],
                  "gcn_inter_w1": leaves["w_inter_1"],
                  "gcn_inter_w2": leaves["w_inter_2"]}
            return ad.sum_all(rgcn_forward(z, a, a, pv))

        params = {"w_inner_1": rng.normal(size=(4, 4)),
                  "w_inner_2": rng.normal(size=(4, 4)),
                  "w_inter_1": rng.normal(size=(4, 4)),
                  "w_inter_2": rng.normal(size=(4, 4))}
        assert ad.finite_difference_check(f, params) < 1e-4


class TestAggregateSentences:
    def setup_method(self):
        self.config = EncoderConfig(embed_dim=4, hidden_dim=4, seed=1)
        self.params = Params.initialize(self.config)

    def test_single_entity_sentence(self):
        doc = tiny_doc([["Alice"]])
        g = build_graph(doc)
        tape = Tape()
        pv = self.params.as_leaves(tape)
        h = leaf(tape, np.array([[0.3, -0.2, 0.8, 0.1]]))
        avg = leaf(tape, sentence_averaging_matrix(g, 1))
        out = aggregate_sentences(h, avg, pv)
        w, b = self.params.tensors["sent_w"], self.params.tensors["sent_b"]
        expected = 1.0 / (1.0 + np.exp(-(h.data @ w + b)))
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_entity_free_sentence_is_zero_row(self):
        doc = tiny_doc([["Alice"], []])
        g = build_graph(doc)
        tape = Tape()
        pv = self.params.as_leaves(tape)
        h = leaf(tape, np.ones((1, 4)))
        avg = leaf(tape, sentence_averaging_matrix(g, 2))
        out = aggregate_sentences(h, avg, pv)
        assert np.all(out.data[1] == 0.0)

    def test_mean_idempotent_on_equal_rows(self):
        doc = tiny_doc([["Alice", "Bob"]])
        g = build_graph(doc)
        tape = Tape()
        pv = self.params.as_leaves(tape)
        h = leaf(tape, np.tile([[0.4, -0.1, 0.2, 0.9]], (2, 1)))
        avg = leaf(tape, sentence_averaging_matrix(g, 1))
        two = aggregate_sentences(h, avg, pv).data
        h1 = leaf(tape, np.array([[0.4, -0.1, 0.2, 0.9]]))
        avg1 = leaf(tape, np.array([[1.0]]))
        one = aggregate_sentences(h1, avg1, pv).data
        np.testing.assert_allclose(two, one, atol=1e-12)


def lstm_step_reference(params, x, h_prev, c_prev):
    t = params.tensors

    def gate(name, squash):
        pre = x @ t[f"lstm_wx_{name}"] + h_prev @ t[f"lstm_wh_{name}"] \
            + t[f"lstm_b_{name}"]
        return squash(pre)

    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    i, f, g, o = gate("i", sig), gate("f", sig), gate("g", np.tanh), gate("o", sig)
    c = f * c_prev + i * g
    return o * np.tanh(c), c


class TestAttentionLstm:
    def setup_method(self):
        self.config = EncoderConfig(embed_dim=4, hidden_dim=4, seed=2)
        self.params = Params.initialize(self.config)

    def test_single_sentence_attention_is_identity(self):
        tape = Tape()
        pv = self.params.as_leaves(tape)
        z_s = leaf(tape, np.array([[0.2, -0.4, 0.6, 0.1]]))
        out = attention_lstm(z_s, pv, gamma=1.0)
        v_row = z_s.data @ self.params.tensors["attn_wv"]
        expected, _ = lstm_step_reference(self.params, v_row,
                                          np.zeros((1, 4)), np.zeros((1, 4)))
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_zero_input_rollout_matches_closed_form(self):
        tape = Tape()
        pv = self.params.as_leaves(tape)
        z_s = leaf(tape, np.zeros((3, 4)))
        out = attention_lstm(z_s, pv, gamma=1.0)
        h = np.zeros((1, 4))
        c = np.zeros((1, 4))
        for _ in range(3):
            h, c = lstm_step_reference(self.params, np.zeros((1, 4)), h, c)
        np.testing.assert_allclose(out.data, h, atol=1e-12)

    def test_attention_rows_are_convex_weights(self):
        rng = np.random.default_rng(4)
        tape = Tape()
        pv = self.params.as_leaves(tape)
        z_s = leaf(tape, rng.normal(size=(5, 4)))
        k = z_s.data @ self.params.tensors["attn_wk"]
        q = z_s.data @ self.params.tensors["attn_wq"]
        v = z_s.data @ self.params.tensors["attn_wv"]
        kn = k / np.linalg.norm(k, axis=1, keepdims=True)
        qn = q / np.linalg.norm(q, axis=1, keepdims=True)
        logits = kn @ qn.T / math.sqrt(4)
        weights = np.exp(logits - logits.max(axis=1, keepdims=True))
        weights /= weights.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(weights >= 0.0)
        # the module's output must equal an LSTM pass over exactly that
        # convex combination of V's rows
        out = attention_lstm(z_s, pv, gamma=1.0)
        attended = weights @ v
        h = np.zeros((1, 4))
        c = np.zeros((1, 4))
        for t in range(attended.shape[0]):
            h, c = lstm_step_reference(self.params, attended[t:t + 1], h, c)
        np.testing.assert_allclose(out.data, h, atol=1e-12)

    def test_sentence_order_matters(self):
        rng = np.random.default_rng(6)
        rows = rng.normal(size=(4, 4))
        tape = Tape()
        pv = self.params.as_leaves(tape)
        original = attention_lstm(leaf(tape, rows), pv, gamma=1.0).data
        permuted = attention_lstm(leaf(tape, rows[::-1].copy()), pv,
                                  gamma=1.0).data
        assert not np.allclose(original, permuted)


class TestEncodeDocument:
    def test_output_dimension(self):
        config = EncoderConfig(embed_dim=64, hidden_dim=64, seed=0)
        params = Params.initialize(config)
        doc = tiny_doc([["Alice", "Bob"], ["Alice"]])
        g = build_graph(doc)
        d = encode_document(doc, g, params, config)
        assert d.shape == (1, 128)

    def test_zero_entity_doc_has_zero_coherence_half(self):
        config = EncoderConfig(embed_dim=8, hidden_dim=8, seed=0)
        params = Params.initialize(config)
        doc = tiny_doc([[], []])
        g = build_graph(doc)
        d = encode_document(doc, g, params, config)
        assert np.all(d[0, :8] == 0.0)
        assert np.any(d[0, 8:] != 0.0)

    def test_identical_docs_identical_vectors(self):
        config = EncoderConfig(embed_dim=8, hidden_dim=8, seed=3)
        params = Params.initialize(config)
        doc_a = tiny_doc([["Alice"], ["Alice", "Bob"]])
        doc_b = tiny_doc([["Alice"], ["Alice", "Bob"]])
        d_a = encode_document(doc_a, build_graph(doc_a), params, config)
        d_b = encode_document(doc_b, build_graph(doc_b), params, config)
        assert d_a.tobytes() == d_b.tobytes()


class TestParams:
    def test_init_deterministic_and_bounded(self):
        config = EncoderConfig(embed_dim=8, hidden_dim=8, seed=5)
        a, b = Params.initialize(config), Params.initialize(config)
        assert a == b
        for name, tensor in a.tensors.items():
            bound = 1.0 / math.sqrt(tensor.shape[0])
            assert np.all(np.abs(tensor) <= max(bound, 1.0))
        np.testing.assert_array_equal(a.tensors["lstm_b_f"], np.ones((1, 8)))

    def test_checkpoint_roundtrip_bitwise(self, tmp_path):
        config = EncoderConfig(embed_dim=8, hidden_dim=16, gamma=0.7, seed=9)
        limits = GraphLimits(max_nodes=40, max_sentences=10)
        params = Params.initialize(config)
        path = str(tmp_path / "ckpt.npz")
        save_checkpoint(path, params, config, limits)
        loaded, config2, limits2 = load_checkpoint(path)
        assert config2 == config
        assert limits2 == limits
        for name in params.tensors:
            assert loaded.tensors[name].tobytes() == params.tensors[name].tobytes()

    def test_checkpoint_files_byte_identical(self, tmp_path):
        config = EncoderConfig(embed_dim=4, hidden_dim=4, seed=2)
        params = Params.initialize(config)
        a = tmp_path / "a.npz"
        b = tmp_path / "b.npz"
        save_checkpoint(str(a), params, config, GraphLimits())
        save_checkpoint(str(b), params, config, GraphLimits())
        assert a.read_bytes() == b.read_bytes()

    def test_no_dead_parameters_on_random_docs(self):
        config = EncoderConfig(embed_dim=8, hidden_dim=8, seed=1)
        params = Params.initialize(config)
        source = EmbeddingSource(config.embed_dim)
        rng = random.Random(21)
        touched = {name: False for name in tensor_shapes(config)}
        for i in range(16):
            doc = make_document(f"d{i}", Label.MGT, rng, recurrence_prob=0.7)
            prep = prepare_document(doc, source)
            tape = Tape()
            pv = params.as_leaves(tape)
            d = encode_prepared(tape, prep, pv, config)
            loss = ad.add(ad.sum_all(d), classify(d, pv))
            backward(loss)
            for name, v in pv.items():
                if v.grad is not None and np.any(v.grad != 0.0):
                    touched[name] = True
        dead = [name for name, hit in touched.items() if not hit]
        assert not dead, f"dead parameters: {dead}"
