import numpy as np
import pytest

from mol2adr.codec import (
    BOS,
    EOS,
    PAD,
    UNK,
    LabelCodec,
    build_codec,
    clean_sequence,
    encode_targets,
    order_labels,
)

LABELS = [("nausea", "rash"), ("rash", "headache"), ("nausea", "rash", "fever")]


def test_ids_follow_frequency_then_name():
    codec = build_codec(LABELS)
    assert codec.labels == ["rash", "nausea", "fever", "headache"]
    assert codec.encode("rash") == 4
    assert codec.encode("headache") == 7
    assert len(codec) == 8
    assert codec.counts["nausea"] == 2


def test_vocab_size_sends_the_rest_to_unk():
    codec = build_codec(LABELS, vocab_size=2)
    assert codec.labels == ["rash", "nausea"]
    assert codec.encode("fever") == UNK
    assert "fever" not in codec


def test_decode_specials():
    codec = build_codec(LABELS)
    assert codec.decode(PAD) == "<pad>"
    assert codec.decode(EOS) == "<eos>"
    assert codec.decode(5) == "nausea"


def test_encode_targets_layout():
    codec = build_codec(LABELS)
    tokens = encode_targets(["headache", "rash"], codec, max_len=4)
    assert tokens == [BOS, 4, 7, EOS, PAD, PAD]
    assert len(encode_targets(["rash"], codec, max_len=200)) == 202


def test_encode_targets_truncates():
    codec = build_codec(LABELS)
    tokens = encode_targets(["fever", "nausea", "rash"], codec, max_len=2)
    assert tokens == [BOS, 4, 5, EOS]


def test_label_orders():
    codec = build_codec(LABELS)
    labels = ["mystery", "headache", "rash"]
    assert order_labels(labels, codec) == ["rash", "headache", "mystery"]
    assert order_labels(labels, codec, "dataset") == labels
    shuffled = order_labels(labels, codec, "random", np.random.default_rng(0))
    assert sorted(shuffled) == sorted(labels)
    with pytest.raises(ValueError):
        order_labels(labels, codec, "random")
    with pytest.raises(ValueError):
        order_labels(labels, codec, "alphabetical")


def test_clean_sequence():
    codec = build_codec(LABELS)
    assert clean_sequence([BOS, 5, UNK, 4, 5, EOS, 6]) == {4, 5}
    assert clean_sequence([4, 42, PAD], codec) == {4}


def test_codec_file(tmp_path):
    codec = build_codec(LABELS)
    codec.save(tmp_path / "labels.json")
    loaded = LabelCodec.load(tmp_path / "labels.json")
    assert loaded.labels == codec.labels
    assert loaded.counts == codec.counts
    with pytest.raises(FileNotFoundError):
        LabelCodec.load(tmp_path / "missing.json")


def test_truncation_boundary():
    labels = [f"adr{k}" for k in range(5)]
    codec = build_codec([labels])
    exact = encode_targets(labels, codec, max_len=5)
    assert len(clean_sequence(exact, codec)) == 5
    over = encode_targets(labels + ["adr5"], build_codec([labels + ["adr5"]]), max_len=5)
    assert len(clean_sequence(over)) == 5


def test_clean_sequence_edge_cases():
    assert clean_sequence([BOS, EOS]) == set()
    assert clean_sequence([BOS, 4, UNK, 4, EOS]) == {4}
