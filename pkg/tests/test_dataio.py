import numpy as np
import pytest

from hcam.dataio import (FIELDS, PAD_LABEL, EmbeddingStore, SyntheticSpec, Utterance,
                         batch_conversations, batch_utterances, bayes_accuracies,
                         generate_synthetic, load_manifest, load_sidecar, read_embedding_file,
                         write_embedding_file, write_manifest)
from hcam.dataio.embfile import HEADER, MAGIC
from hcam.errors import (BadMagicError, ConfigError, ContractError, DuplicateOrderError,
                         EmbeddingFileError, EmptySplitError, LabelRangeError, ManifestFormatError,
                         MissingEmbeddingError, MissingStoreError, NonFinitePayloadError,
                         OrderingGapError, OutputExistsError, StoreKeyError,
                         TruncatedPayloadError, UnsupportedVersionError)


# -- embedding files -----------------------------------------------------------
def test_embedding_roundtrip_bitwise(tmp_path, rng):
    a = rng.standard_normal((7, 16)).astype(np.float32)
    write_embedding_file(tmp_path / "x.emb", a)
    b = read_embedding_file(tmp_path / "x.emb")
    assert b.dtype == np.float32 and a.tobytes() == b.tobytes()
    write_embedding_file(tmp_path / "y.emb", b)
    assert (tmp_path / "x.emb").read_bytes() == (tmp_path / "y.emb").read_bytes()


def test_embedding_minimal(tmp_path):
    write_embedding_file(tmp_path / "m.emb", [[2.5]])
    assert read_embedding_file(tmp_path / "m.emb").shape == (1, 1)


def test_embedding_truncated_reports_counts(tmp_path, rng):
    write_embedding_file(tmp_path / "x.emb", rng.standard_normal((3, 4)))
    buf = (tmp_path / "x.emb").read_bytes()
    (tmp_path / "x.emb").write_bytes(buf[:-5])
    with pytest.raises(TruncatedPayloadError, match="expected 48 bytes, got 43"):
        read_embedding_file(tmp_path / "x.emb")
    (tmp_path / "x.emb").write_bytes(buf[:10])
    with pytest.raises(TruncatedPayloadError):
        read_embedding_file(tmp_path / "x.emb")


@pytest.mark.parametrize("header,err", [
    ((b"NOPE", 1, 1, 1, 1), BadMagicError),
    ((MAGIC, 2, 1, 1, 1), UnsupportedVersionError),
    ((MAGIC, 1, 7, 1, 1), EmbeddingFileError),
    ((MAGIC, 1, 1, 0, 1), EmbeddingFileError),
])
def test_embedding_bad_headers(tmp_path, header, err):
    (tmp_path / "x.emb").write_bytes(HEADER.pack(*header) + b"\0" * 4)
    with pytest.raises(err):
        read_embedding_file(tmp_path / "x.emb")


def test_embedding_trailing_and_nonfinite(tmp_path):
    (tmp_path / "t.emb").write_bytes(HEADER.pack(MAGIC, 1, 1, 1, 1) + b"\0" * 8)
    with pytest.raises(EmbeddingFileError, match="trailing"):
        read_embedding_file(tmp_path / "t.emb")
    (tmp_path / "n.emb").write_bytes(HEADER.pack(MAGIC, 1, 1, 1, 1) + np.float32(np.nan).tobytes())
    with pytest.raises(NonFinitePayloadError):
        read_embedding_file(tmp_path / "n.emb")
    with pytest.raises(NonFinitePayloadError):
        write_embedding_file(tmp_path / "w.emb", [[np.inf]])


# -- manifests ----------------------------------------------------------------
def _fixture(tmp_path, rows, num_classes=3, header=None, make_files=True):
    for sub in ("a", "t"):
        (tmp_path / sub).mkdir(exist_ok=True)
    recs = []
    for conv, uid, order, split, label in rows:
        ap, tp = f"a/{uid}.emb", f"t/{uid}.emb"
        if make_files:
            write_embedding_file(tmp_path / ap, np.ones((2, 3)))
            write_embedding_file(tmp_path / tp, np.ones((1, 4)))
        recs.append(Utterance(conv, uid, order, split, label, ap, tp))
    path = tmp_path / "manifest.tsv"
    write_manifest(path, recs, num_classes)
    if header is not None:
        lines = path.read_text().splitlines()
        lines[0] = header
        path.write_text("\n".join(lines) + "\n")
    return path


GOOD = [("c1", "u1", 0, "train", 0), ("c1", "u2", 1, "train", 2), ("c2", "u3", 0, "val", 1)]


def test_manifest_happy_path(tmp_path):
    m = load_manifest(_fixture(tmp_path, GOOD))
    assert len(m.conversations) == 2 and m.num_classes == 3
    assert m.conversations["c1"] == ["u1", "u2"]
    assert m.feature_dim("audio") == 3 and m.feature_dim("text") == 4
    assert m.utterance_ids("val") == ["u3"]


def test_manifest_order_follows_index_not_file(tmp_path):
    rows = [("c1", "u2", 1, "train", 0), ("c1", "u1", 0, "train", 0)]
    assert load_manifest(_fixture(tmp_path, rows)).conversations["c1"] == ["u1", "u2"]


def test_manifest_gap_names_conversation(tmp_path):
    rows = [("cx", "u1", 0, "train", 0), ("cx", "u2", 2, "train", 0)]
    with pytest.raises(OrderingGapError, match="cx"):
        load_manifest(_fixture(tmp_path, rows))


def test_manifest_duplicate_order(tmp_path):
    rows = [("c1", "u1", 0, "train", 0), ("c1", "u2", 0, "train", 0)]
    with pytest.raises(DuplicateOrderError):
        load_manifest(_fixture(tmp_path, rows))


def test_manifest_label_out_of_range(tmp_path):
    with pytest.raises(LabelRangeError):
        load_manifest(_fixture(tmp_path, [("c1", "u1", 0, "train", 3)]))


def test_manifest_missing_file(tmp_path):
    with pytest.raises(MissingEmbeddingError, match="u1"):
        load_manifest(_fixture(tmp_path, [("c1", "u1", 0, "train", 0)], make_files=False))
    m = load_manifest(tmp_path / "manifest.tsv", load_embeddings=False)
    assert m.audio == {}


@pytest.mark.parametrize("header", ["conversation_id", "#hcam-manifest\tversion=2\tnum_classes=3",
                                    "#hcam-manifest\tversion=1", "#hcam-manifest\tversion=1\tnum_classes=1"])
def test_manifest_bad_header(tmp_path, header):
    with pytest.raises(ManifestFormatError):
        load_manifest(_fixture(tmp_path, GOOD, header=header))


def test_manifest_malformed_rows(tmp_path):
    path = _fixture(tmp_path, GOOD)
    good = path.read_text()
    cases = [
        good + "c3\tu9\t0\ttrain\n",                                   # too few fields
        good + "c3\tu9\tx\ttrain\t0\ta/u1.emb\tt/u1.emb\n",          # non-int order
        good + "c3\tu9\t0\tdev\t0\ta/u1.emb\tt/u1.emb\n",             # bad split
        good + "c3\tu1\t0\ttrain\t0\ta/u1.emb\tt/u1.emb\n",          # duplicate id
        good + "c1\tu9\t2\tval\t0\ta/u1.emb\tt/u1.emb\n",            # conversation spans splits
        good.replace("audio_path", "audio"),                           # column line
    ]
    for text in cases:
        path.write_text(text)
        with pytest.raises(ManifestFormatError):
            load_manifest(path)
    with pytest.raises(ManifestFormatError):
        load_manifest(tmp_path / "absent.tsv")


def test_manifest_inconsistent_widths(tmp_path):
    path = _fixture(tmp_path, GOOD)
    write_embedding_file(tmp_path / "a/u2.emb", np.ones((2, 5)))
    with pytest.raises(EmbeddingFileError, match="inconsistent"):
        load_manifest(path)


def test_manifest_columns_constant():
    assert FIELDS[0] == "conversation_id" and len(FIELDS) == 7


# -- stores ---------------------------------------------------------------
def test_store_roundtrip_and_lookup(tmp_path, rng):
    s = EmbeddingStore(["a", "b"], rng.standard_normal((2, 3)).astype(np.float32),
                       np.full((2, 2), 0.5, np.float32), {"stage": 1})
    s.save(tmp_path / "s")
    t = EmbeddingStore.load(tmp_path / "s")
    assert t.ids == ["a", "b"] and t.meta == {"stage": 1}
    assert t.embeddings.tobytes() == s.embeddings.tobytes()
    np.testing.assert_array_equal(t.gather(["b", "a"]), s.embeddings[[1, 0]])
    with pytest.raises(StoreKeyError, match="zz"):
        t.vector("zz")
    with pytest.raises(MissingStoreError):
        EmbeddingStore.load(tmp_path / "nothing")
    with pytest.raises(ContractError):
        EmbeddingStore(["a", "a"], np.zeros((2, 1)), np.zeros((2, 1)))


# -- batching --------------------------------------------------------------
def _ten_conversations(tmp_path):
    rows = [(f"c{i}", f"c{i}_u{j}", j, "train", 0) for i in range(10) for j in range(1 + i % 3)]
    return load_manifest(_fixture(tmp_path, rows, num_classes=2))


def test_batch_partition_sizes(tmp_path):
    m = _ten_conversations(tmp_path)
    batches = list(batch_conversations(m, "train", 4, seed=1))
    assert [len(b.conversation_ids) for b in batches] == [4, 4, 2]
    seen = [c for b in batches for c in b.conversation_ids]
    assert sorted(seen) == sorted(m.conversations)


def test_batch_same_seed_same_order(tmp_path):
    m = _ten_conversations(tmp_path)
    order = lambda s, e: [b.conversation_ids for b in batch_conversations(m, "train", 4, seed=s, epoch=e)]
    assert order(5, 0) == order(5, 0)
    assert order(5, 1) == order(5, 1)
    assert order(5, 0) != order(5, 1)


def test_batch_padding_bookkeeping(tmp_path):
    m = _ten_conversations(tmp_path)
    for b in batch_conversations(m, "train", 4, seed=2):
        lengths = [len(u) for u in b.utterance_ids]
        assert (~b.mask).sum() == sum(b.mask.shape[1] - L for L in lengths)
        assert np.all(b.labels[~b.mask] == PAD_LABEL)
        assert len(b.flat_ids) == b.mask.sum() == len(b.flat_labels)


def test_batch_utterances_and_empty_split(tmp_path):
    m = _ten_conversations(tmp_path)
    flat = [u for b in batch_utterances(m, "train", 7, seed=0) for u in b]
    assert sorted(flat) == sorted(m.utterances)
    with pytest.raises(EmptySplitError):
        list(batch_conversations(m, "test", 4))


# -- synthetic -------------------------------------------------------------
def test_synthetic_deterministic(tmp_path):
    spec = dict(regime="b", num_conversations=6, length=5, d_audio=3, d_text=3, seed=11)
    p1 = generate_synthetic(SyntheticSpec(**spec), tmp_path / "one")
    p2 = generate_synthetic(SyntheticSpec(**spec), tmp_path / "two")
    assert p1.read_bytes() == p2.read_bytes()
    for f in sorted((tmp_path / "one" / "audio").iterdir()):
        assert f.read_bytes() == (tmp_path / "two" / "audio" / f.name).read_bytes()
    with pytest.raises(OutputExistsError):
        generate_synthetic(SyntheticSpec(**spec), tmp_path / "one")


def test_regime_a_linear_probe_separates(tmp_path):
    p = generate_synthetic(SyntheticSpec(regime="a", num_conversations=20, length=5, jitter=0.0,
                                         d_audio=8, d_text=8, seed=2), tmp_path)
    m = load_manifest(p)
    uids = m.utterance_ids("train")
    X = np.stack([m.audio[u].mean(axis=0) for u in uids])
    X = np.hstack([X, np.ones((len(X), 1))])
    y = np.array([m.label(u) for u in uids])
    W = np.linalg.lstsq(X, np.eye(m.num_classes)[y], rcond=None)[0]
    assert np.mean((X @ W).argmax(axis=1) == y) == 1.0


def test_regime_b_bayes_bound():
    bayes = bayes_accuracies(SyntheticSpec(regime="b", length=20, window=2, stay_prob=0.4))
    assert bayes["audio_single"] < 1.0
    assert bayes["audio_single"] == pytest.approx(0.322, abs=1e-3)


def test_regime_b_bayes_matches_monte_carlo():
    spec = SyntheticSpec(regime="b", length=[3, 8], window=2, stay_prob=0.6, num_classes=3)
    bayes = bayes_accuracies(spec)["audio_single"]
    from hcam.dataio.synthetic import _sample_chain
    rng = np.random.default_rng(0)
    counts = {}
    for _ in range(20000):
        L = int(rng.integers(3, 9))
        s = _sample_chain(rng, 3, 0.6, L)
        for t in range(L):
            key = (s[t], s[max(t - 2, 0)])
            counts[key] = counts.get(key, 0) + 1
    total = sum(counts.values())
    best = sum(max(counts.get((o, y), 0) for y in range(3)) for o in range(3)) / total
    assert best == pytest.approx(bayes, abs=0.01)


@pytest.mark.parametrize("regime", ["c", "bc"])
def test_single_modality_below_joint(regime):
    b = bayes_accuracies(SyntheticSpec(regime=regime, length=20))
    assert max(b["audio_single"], b["text_single"]) < b["joint_single"]


def test_regime_c_values():
    b = bayes_accuracies(SyntheticSpec(regime="c", length=10))
    assert b["audio_single"] == pytest.approx(0.5) and b["joint_single"] == pytest.approx(1.0)


def test_sidecar_contents(tiny_dataset):
    root, m = tiny_dataset
    side = load_sidecar(root)
    assert side["regime"] == "b" and side["num_classes"] == m.num_classes
    assert 0 < side["bayes"]["audio_single"] < 1


def test_synthetic_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec(regime="z")
    with pytest.raises(ConfigError):
        SyntheticSpec(length=[5, 2])
    with pytest.raises(ConfigError):
        SyntheticSpec(splits=(0.5, 0.5, 0.5))
