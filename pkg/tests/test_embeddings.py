import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rocchioqe.embeddings import (
    EmbeddingError,
    EmbeddingSet,
    l2_normalize,
    load_embeddings,
    save_embeddings,
    validate,
)


def _set(vectors, ids=None, speakers=None):
    ids = ids or [f"u{k}" for k in range(len(vectors))]
    return EmbeddingSet(tuple(ids), np.asarray(vectors, dtype=float), speakers)


class TestLoad:
    def test_three_row_csv(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("id,v0,v1\na,1,0\nb,0.5,0.5\nc,0,2\n")
        emb = load_embeddings(path, "csv")
        assert len(emb) == 3 and emb.dimension == 2
        assert emb.ids == ("a", "b", "c")
        np.testing.assert_array_equal(emb.vector("c"), [0.0, 2.0])

    def test_csv_speaker_column(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("id,v0,v1,speaker\na,1,0,s1\nb,0,1,s2\n")
        emb = load_embeddings(path)
        assert emb.speakers == ("s1", "s2")

    def test_duplicate_id_named(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("id,v0,v1\nu1,1,0\nu2,0,1\nu1,1,1\n")
        with pytest.raises(EmbeddingError, match="duplicate id 'u1'"):
            load_embeddings(path, "csv")

    def test_jsonl_nan_reported_at_record_1(self, tmp_path):
        path = tmp_path / "e.jsonl"
        path.write_text('{"id": "a", "vector": [1.0, NaN]}\n{"id": "b", "vector": [1.0, 2.0]}\n')
        with pytest.raises(EmbeddingError, match="record 1: non-finite"):
            load_embeddings(path, "jsonl")

    @pytest.mark.parametrize("body,message", [
        ("id,v0,v1\na,1,0\nb,1\n", "row 3: expected 3 fields"),
        ("id,v0,v1\na,0,0\n", "row 2: zero vector"),
        ("id,v0,v1\na,1,x\n", "row 2"),
        ("name,v0\na,1\n", "header"),
    ])
    def test_csv_errors_carry_locus(self, tmp_path, body, message):
        path = tmp_path / "e.csv"
        path.write_text(body)
        with pytest.raises(EmbeddingError, match=message):
            load_embeddings(path)

    def test_jsonl_dimension_mismatch(self, tmp_path):
        path = tmp_path / "e.jsonl"
        path.write_text('{"id": "a", "vector": [1, 2]}\n{"id": "b", "vector": [1, 2, 3]}\n')
        with pytest.raises(EmbeddingError, match="record 2: dimension mismatch"):
            load_embeddings(path)

    def test_jsonl_malformed(self, tmp_path):
        path = tmp_path / "e.jsonl"
        path.write_text('{"id": "a", "vector": [1, 2]}\n{oops\n')
        with pytest.raises(EmbeddingError, match="record 2: invalid JSON"):
            load_embeddings(path)

    def test_binary_layout(self, tmp_path):
        path = tmp_path / "e.bin"
        payload = struct.pack("<4sIII", b"QXEB", 1, 2, 2)
        for uid, vec in (("a", (1.0, 0.5)), ("bé", (-2.0, 3.0))):
            raw = uid.encode("utf-8")
            payload += struct.pack("<H", len(raw)) + raw + struct.pack("<2f", *vec)
        path.write_bytes(payload)
        emb = load_embeddings(path, "binary")
        assert emb.ids == ("a", "bé")
        np.testing.assert_array_equal(emb.matrix, [[1.0, 0.5], [-2.0, 3.0]])

    def test_binary_bad_magic(self, tmp_path):
        path = tmp_path / "e.bin"
        path.write_bytes(struct.pack("<4sIII", b"NOPE", 1, 0, 2))
        with pytest.raises(EmbeddingError, match="bad magic"):
            load_embeddings(path, "binary")

    def test_binary_truncated(self, tmp_path):
        path = tmp_path / "e.bin"
        path.write_bytes(struct.pack("<4sIII", b"QXEB", 1, 1, 4) + struct.pack("<H", 1) + b"a")
        with pytest.raises(EmbeddingError, match="record 1: truncated"):
            load_embeddings(path, "binary")

    def test_order_is_file_order(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("id,v0\nz,1\na,2\nm,3\n")
        emb = load_embeddings(path)
        assert emb.ids == ("z", "a", "m")
        assert [emb.index_of(u) for u in ("z", "a", "m")] == [0, 1, 2]


class TestRoundTrip:
    @pytest.fixture
    def emb(self):
        rng = np.random.default_rng(0)
        return _set(rng.standard_normal((7, 5)) * 10.0 ** rng.integers(-5, 5, (7, 1)),
                    speakers=tuple(f"s{k % 3}" for k in range(7)))

    @pytest.mark.parametrize("fmt,suffix", [("csv", ".csv"), ("jsonl", ".jsonl")])
    def test_text_formats(self, tmp_path, emb, fmt, suffix):
        path = tmp_path / f"e{suffix}"
        save_embeddings(emb, path, fmt)
        back = load_embeddings(path, fmt)
        assert back.ids == emb.ids
        assert back.speakers == emb.speakers
        np.testing.assert_allclose(back.matrix, emb.matrix, rtol=1e-9, atol=0)

    def test_binary_bit_exact(self, tmp_path, emb):
        f32 = emb.with_matrix(emb.matrix.astype(np.float32).astype(np.float64))
        first, second = tmp_path / "a.bin", tmp_path / "b.bin"
        save_embeddings(f32, first)
        back = load_embeddings(first)
        assert back.ids == f32.ids
        assert back.matrix.tobytes() == f32.matrix.tobytes()
        save_embeddings(back, second)
        assert first.read_bytes() == second.read_bytes()


class TestNormalize:
    @pytest.mark.parametrize("vec,expected", [
        ((3.0, 4.0), (0.6, 0.8)),
        ((1.0, 0.0), (1.0, 0.0)),
        ((2.0, 2.0, 2.0, 2.0), (0.5, 0.5, 0.5, 0.5)),
    ])
    def test_examples(self, vec, expected):
        out = l2_normalize(_set([vec, vec]))
        np.testing.assert_allclose(out.matrix[0], expected, atol=1e-15)

    def test_zero_vector_rejected(self):
        with pytest.raises(EmbeddingError, match="zero vector"):
            l2_normalize(_set([(0.0, 0.0), (1.0, 0.0)]))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), min_size=2, max_size=8))
    def test_unit_norm_and_idempotent(self, rows):
        arr = np.asarray(rows)
        arr[np.abs(arr).sum(axis=1) < 1e-6] = 1.0
        emb = _set(arr)
        once = l2_normalize(emb)
        twice = l2_normalize(once)
        np.testing.assert_allclose(np.linalg.norm(once.matrix, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(twice.matrix, once.matrix, atol=1e-12, rtol=0)
        assert once.ids == emb.ids and once.dimension == emb.dimension


class TestValidate:
    def test_clean(self):
        assert validate(_set([(1.0, 0.0), (0.0, 1.0)])) == []

    def test_zero_vector(self):
        report = validate(_set([(1.0, 0.0), (0.0, 0.0)], ids=["a", "b"]))
        assert [(v.kind, v.locus) for v in report] == [("zero-vector", "b")]

    def test_insufficient_size(self):
        report = validate(_set([(1.0, 0.0)]))
        assert [v.kind for v in report] == ["insufficient-size"]

    def test_collects_everything(self):
        emb = _set([(1.0, np.inf), (0.0, 0.0), (1.0, 1.0)], ids=["a", "b", "a"])
        kinds = sorted(v.kind for v in validate(emb))
        assert kinds == ["duplicate-id", "non-finite", "zero-vector"]


def test_jsonl_written_lines_are_objects(tmp_path):
    path = tmp_path / "e.jsonl"
    save_embeddings(_set([(1.0, 2.0), (3.0, 4.0)]), path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows[0] == {"id": "u0", "vector": [1.0, 2.0]}
