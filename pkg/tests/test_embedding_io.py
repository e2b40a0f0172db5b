import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semap.embedding_io import (
    EMBEDDING_MAGIC,
    LOGIT_MAGIC,
    EmbeddingMatrix,
    LabelSet,
    LogitBatch,
    load_embeddings,
    load_labels,
    load_logits,
    load_mapping,
    write_embeddings,
    write_labels,
    write_logits,
    write_mapping,
)
from semap.errors import FormatError, InvalidInputError
from semap.mapping import MappingTable

label_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Zl", "Zp"), blacklist_characters=" \t"),
    min_size=1,
    max_size=20,
).filter(lambda s: s == s.rstrip() and s.strip())


# ---------------------------------------------------------------------------
# labels


def test_load_labels_basic(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_bytes(b"cat\ndog\n")
    labels = load_labels(path)
    assert labels.names == ["cat", "dog"]
    assert len(labels) == 2


def test_load_labels_duplicate_names_line(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_bytes(b"cat\ncat\n")
    with pytest.raises(FormatError, match="line 2"):
        load_labels(path)


def test_load_labels_blank_line(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_bytes(b"cat\n\ndog\n")
    with pytest.raises(FormatError, match="line 2"):
        load_labels(path)


def test_load_labels_missing_file(tmp_path):
    with pytest.raises(FormatError, match="not found"):
        load_labels(tmp_path / "absent.txt")


def test_load_labels_invalid_utf8(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_bytes(b"\xff\xfe\n")
    with pytest.raises(FormatError, match="UTF-8"):
        load_labels(path)


def test_load_labels_requires_trailing_newline(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_bytes(b"cat\ndog")
    with pytest.raises(FormatError, match="newline"):
        load_labels(path)


def test_load_labels_strips_trailing_whitespace(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_bytes(b"cat  \ndog\t\n")
    assert load_labels(path).names == ["cat", "dog"]


def test_labels_thousand_line_round_trip(tmp_path):
    names = [f"imagenet_class_{i:04d}" for i in range(1000)]
    path = tmp_path / "big.txt"
    write_labels(path, LabelSet(names))
    loaded = load_labels(path)
    assert loaded.names == names
    # and byte identity on re-write
    blob = path.read_bytes()
    write_labels(path, loaded)
    assert path.read_bytes() == blob


@given(st.lists(label_text, min_size=1, max_size=30, unique=True))
def test_labels_round_trip_property(tmp_path_factory, names):
    path = tmp_path_factory.mktemp("labels") / "labels.txt"
    write_labels(path, LabelSet(names))
    assert load_labels(path).names == names


def test_labelset_rejects_duplicates_and_empties():
    with pytest.raises(InvalidInputError):
        LabelSet(["a", "a"])
    with pytest.raises(InvalidInputError):
        LabelSet(["a", ""])
    with pytest.raises(InvalidInputError):
        LabelSet([])


# ---------------------------------------------------------------------------
# embeddings


def test_load_embeddings_from_raw_bytes(tmp_path):
    payload = struct.pack("<6f", 1, 2, 3, 4, 5, 6)
    path = tmp_path / "emb.bin"
    path.write_bytes(EMBEDDING_MAGIC + struct.pack("<II", 2, 3) + payload)
    emb = load_embeddings(path)
    assert emb.rows == 2 and emb.dim == 3
    assert np.array_equal(emb.vectors, [[1, 2, 3], [4, 5, 6]])


def test_load_embeddings_truncated_payload(tmp_path):
    path = tmp_path / "emb.bin"
    path.write_bytes(EMBEDDING_MAGIC + struct.pack("<II", 2, 3) + b"\0" * 20)
    with pytest.raises(FormatError, match="size mismatch"):
        load_embeddings(path)


def test_load_embeddings_trailing_garbage(tmp_path):
    path = tmp_path / "emb.bin"
    path.write_bytes(EMBEDDING_MAGIC + struct.pack("<II", 1, 1) + b"\0" * 4 + b"x")
    with pytest.raises(FormatError, match="size mismatch"):
        load_embeddings(path)


def test_load_embeddings_bad_magic(tmp_path):
    path = tmp_path / "emb.bin"
    path.write_bytes(b"NOTMAGIC" + struct.pack("<II", 1, 1) + b"\0" * 4)
    with pytest.raises(FormatError, match="magic"):
        load_embeddings(path)


def test_load_embeddings_non_finite_names_byte_offset(tmp_path):
    vec = np.array([[1.0, np.inf, 2.0]], dtype="<f4")
    path = tmp_path / "emb.bin"
    path.write_bytes(EMBEDDING_MAGIC + struct.pack("<II", 1, 3) + vec.tobytes())
    with pytest.raises(FormatError, match="byte 20"):
        load_embeddings(path)


def test_embeddings_write_load_write_byte_identity(tmp_path, np_rng):
    for trial in range(20):
        rows, dim = np_rng.integers(1, 8), np_rng.integers(1, 16)
        vectors = np_rng.standard_normal((rows, dim)).astype(np.float32)
        path = tmp_path / f"emb_{trial}.bin"
        write_embeddings(path, EmbeddingMatrix(vectors))
        blob = path.read_bytes()
        loaded = load_embeddings(path)
        assert np.array_equal(loaded.vectors, vectors)
        write_embeddings(path, loaded)
        assert path.read_bytes() == blob


def test_embedding_matrix_rejects_zero_rows():
    with pytest.raises(InvalidInputError, match="zero norm"):
        EmbeddingMatrix(np.array([[1.0, 0.0], [0.0, 0.0]]))


# ---------------------------------------------------------------------------
# logits


def test_logits_labeled_round_trip(tmp_path):
    batch = LogitBatch(np.array([[0.2, 0.5, 0.1, 0.4]], dtype=np.float32), np.array([0]))
    path = tmp_path / "lg.bin"
    write_logits(path, batch)
    loaded = load_logits(path)
    assert loaded.count == 1 and loaded.width == 4
    assert np.array_equal(loaded.scores, batch.scores)
    assert np.array_equal(loaded.labels, [0])


def test_logits_flag_zero_means_no_labels(tmp_path):
    path = tmp_path / "lg.bin"
    write_logits(path, LogitBatch(np.ones((2, 3), dtype=np.float32)))
    assert load_logits(path).labels is None


def test_logits_random_round_trip_bytewise(tmp_path, np_rng):
    for trial in range(20):
        count, width = np_rng.integers(1, 9), np_rng.integers(1, 9)
        scores = np_rng.standard_normal((count, width)).astype(np.float32)
        labels = None if trial % 2 else np_rng.integers(0, 5, count).astype(np.uint32)
        path = tmp_path / f"lg_{trial}.bin"
        write_logits(path, LogitBatch(scores, labels))
        blob = path.read_bytes()
        loaded = load_logits(path)
        write_logits(path, loaded)
        assert path.read_bytes() == blob


def test_logits_bad_flag(tmp_path):
    path = tmp_path / "lg.bin"
    path.write_bytes(LOGIT_MAGIC + struct.pack("<IIB", 1, 1, 7) + b"\0" * 4)
    with pytest.raises(FormatError, match="flag"):
        load_logits(path)


def test_logits_never_reads_past_declared_payload(tmp_path):
    # labels section missing although flag says present
    path = tmp_path / "lg.bin"
    path.write_bytes(LOGIT_MAGIC + struct.pack("<IIB", 1, 2, 1) + b"\0" * 8)
    with pytest.raises(FormatError, match="size mismatch"):
        load_logits(path)


# ---------------------------------------------------------------------------
# mapping tables


def test_mapping_round_trip_minimal(tmp_path):
    table = MappingTable(2, 8, [[7], [2]], "semap1")
    path = tmp_path / "map.txt"
    write_mapping(path, table)
    loaded = load_mapping(path)
    assert loaded.assignments == [[7], [2]]
    assert loaded.strategy == "semap1"
    assert (loaded.m, loaded.n) == (2, 8)


def test_mapping_out_of_range_index(tmp_path):
    path = tmp_path / "map.txt"
    path.write_bytes(b"SEMAPMAP\nstrategy: semap1\nm: 1\nn: 4\n0: 4\n")
    with pytest.raises(FormatError, match="out of range"):
        load_mapping(path)


def test_mapping_empty_class_entry(tmp_path):
    path = tmp_path / "map.txt"
    path.write_bytes(b"SEMAPMAP\nstrategy: semap1\nm: 1\nn: 4\n0: \n")
    with pytest.raises(FormatError, match="empty entry"):
        load_mapping(path)


def test_mapping_semap_a_hyperparams_round_trip(tmp_path):
    table = MappingTable(
        3, 10, [[4, 5, 6], [0], [9, 8]], "semap_a",
        {"epsilon": 0.05, "gamma": 0.9, "cap": 50},
    )
    path = tmp_path / "map.txt"
    write_mapping(path, table)
    blob = path.read_bytes()
    loaded = load_mapping(path)
    assert loaded.hyperparams == {"epsilon": 0.05, "gamma": 0.9, "cap": 50}
    assert loaded.assignments == table.assignments
    write_mapping(path, loaded)
    assert path.read_bytes() == blob


@given(
    st.integers(1, 6),
    st.integers(0, 2**32 - 1),
    st.floats(0, 0.5, allow_nan=False),
    st.floats(0.01, 1.0, allow_nan=False),
)
def test_mapping_round_trip_property(tmp_path_factory, m, seed, epsilon, gamma):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(m, m + 12))
    assignments = []
    for _ in range(m):
        k = int(rng.integers(1, n + 1))
        assignments.append(rng.permutation(n)[:k].tolist())
    table = MappingTable(
        m, n, assignments, "semap_a",
        {"epsilon": float(epsilon), "gamma": float(gamma), "cap": n},
    )
    path = tmp_path_factory.mktemp("maps") / "map.txt"
    write_mapping(path, table)
    blob = path.read_bytes()
    loaded = load_mapping(path)
    assert loaded.assignments == table.assignments
    assert loaded.hyperparams == table.hyperparams
    write_mapping(path, loaded)
    assert path.read_bytes() == blob


def test_mapping_missing_class_line(tmp_path):
    path = tmp_path / "map.txt"
    path.write_bytes(b"SEMAPMAP\nstrategy: semap_k\nm: 2\nn: 4\nk: 1\n0: 1\n")
    with pytest.raises(FormatError, match="one entry per class"):
        load_mapping(path)


def test_mapping_unknown_key(tmp_path):
    path = tmp_path / "map.txt"
    path.write_bytes(b"SEMAPMAP\nstrategy: rm\nm: 1\nn: 1\nwhat: 3\n0: 0\n")
    with pytest.raises(FormatError, match="unknown key"):
        load_mapping(path)
