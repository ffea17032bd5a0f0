from __future__ import annotations

from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from egolog.errors import BackendProtocolError
from egolog.similarity import Embedding, MockEmbedder, cosine, embed_batch


def emb(*values):
    return Embedding(np.asarray(values, dtype=np.float64))


class TestMockEmbedder:
    def test_deterministic_per_seed(self):
        a = MockEmbedder(seed=1).embed_texts(["C slices an onion"])
        b = MockEmbedder(seed=1).embed_texts(["C slices an onion"])
        assert a == b

    def test_seed_changes_features(self):
        a = MockEmbedder(seed=1).embed_texts(["C slices an onion"])
        b = MockEmbedder(seed=2).embed_texts(["C slices an onion"])
        assert a != b

    def test_dimension(self):
        (vec,) = MockEmbedder(dim=16).embed_texts(["C slices an onion"])
        assert len(vec) == 16

    def test_similar_texts_score_higher_than_unrelated(self):
        backend = MockEmbedder(seed=0)
        texts = [
            "C slices an onion on the board",
            "C slices an onion on the table",
            "the printer hums in the office",
        ]
        a, b, c = embed_batch(backend, texts)
        assert cosine(a, b) > cosine(a, c)

    def test_no_zero_vectors_even_for_tiny_texts(self):
        backend = MockEmbedder(seed=0)
        embeddings = embed_batch(backend, ["a", "ab", "x"])
        for e in embeddings:
            assert np.any(e.vector)

    @given(st.text(min_size=1, max_size=30))
    def test_any_nonempty_text_embeds(self, text):
        backend = MockEmbedder(seed=3)
        (e,) = embed_batch(backend, [text])
        assert e.dim == 64
        assert np.any(e.vector)


class TestEmbedBatch:
    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            embed_batch(MockEmbedder(), [])

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            embed_batch(MockEmbedder(), [""])

    def test_count_mismatch_fatal(self):
        class Short:
            def embed_texts(self, texts):
                return [[1.0, 0.0]]

        with pytest.raises(BackendProtocolError, match="count mismatch"):
            embed_batch(Short(), ["one text", "two text"])

    def test_dim_mismatch_fatal(self):
        class Ragged:
            def embed_texts(self, texts):
                return [[1.0, 0.0], [1.0, 0.0, 0.0]]

        with pytest.raises(BackendProtocolError, match="dimension mismatch"):
            embed_batch(Ragged(), ["one text", "two text"])

    def test_zero_vector_fatal(self):
        class Zeros:
            def embed_texts(self, texts):
                return [[0.0, 0.0]]

        with pytest.raises(BackendProtocolError, match="zero embedding"):
            embed_batch(Zeros(), ["one text"])

    def test_order_preserved(self):
        backend = MockEmbedder(seed=0)
        texts = ["first caption text", "second caption text"]
        direct = backend.embed_texts(texts)
        wrapped = embed_batch(backend, texts)
        assert wrapped[0].vector.tolist() == direct[0]
        assert wrapped[1].vector.tolist() == direct[1]


class TestCosine:
    def test_known_value_against_decimal_oracle(self):
        # cos((1,0), (1,1)) = 1/sqrt(2); oracle computed in 50-digit decimal
        getcontext().prec = 50
        expected = float(Decimal(1) / Decimal(2).sqrt())
        assert cosine(emb(1.0, 0.0), emb(1.0, 1.0)) == pytest.approx(
            expected, abs=1e-12
        )

    def test_identity(self):
        assert cosine(emb(2.0, 3.0), emb(2.0, 3.0)) == pytest.approx(1.0, abs=1e-12)

    def test_opposite(self):
        assert cosine(emb(1.0, 0.0), emb(-1.0, 0.0)) == pytest.approx(-1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine(emb(1.0, 0.0), emb(0.0, 5.0)) == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            cosine(emb(1.0), emb(1.0, 0.0))

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError, match="zero-norm"):
            cosine(emb(0.0, 0.0), emb(1.0, 0.0))

    @given(
        st.lists(
            st.floats(min_value=-100, max_value=100, allow_nan=False),
            min_size=2,
            max_size=8,
        ),
        st.lists(
            st.floats(min_value=-100, max_value=100, allow_nan=False),
            min_size=2,
            max_size=8,
        ),
    )
    def test_symmetric_and_bounded(self, xs, ys):
        size = min(len(xs), len(ys))
        a = np.asarray(xs[:size])
        b = np.asarray(ys[:size])
        if not np.linalg.norm(a) or not np.linalg.norm(b):
            return
        ea, eb = Embedding(a), Embedding(b)
        assert cosine(ea, eb) == cosine(eb, ea)
        assert abs(cosine(ea, eb)) <= 1.0 + 1e-9

    def test_embedding_is_read_only(self):
        e = emb(1.0, 2.0)
        with pytest.raises(ValueError):
            e.vector[0] = 9.0
