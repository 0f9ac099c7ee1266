"""Model assembly, prediction, and NMCK checkpoint format."""

import numpy as np
import pytest

from nmprot.encoder import write_embedding_store, load_embedding_store
from nmprot.errors import CheckpointNotFound, FormatError, MissingEmbedding
from nmprot.model import (
    Model,
    ModelConfig,
    load_checkpoint,
    predict,
    read_checkpoint_tensors,
    save_checkpoint,
)
from nmprot.seqdata import PairExample, tokenize

TOY = ModelConfig(
    task="wise", class_count=3, d_model=8, layers=1, heads=2,
    ffn_dim=16, hidden_dim=6, max_len=32,
)


@pytest.fixture
def model():
    return Model(TOY, seed=5)


class TestPredict:
    def test_probabilities_sum_to_one(self, model):
        seq = tokenize("ACDEFG", max_len=32)
        cls, probs = predict(seq, model)
        np.testing.assert_allclose(probs.sum(), 1.0, atol=1e-6)
        assert cls == int(np.argmax(probs))

    def test_deterministic(self, model):
        seq = tokenize("MKWY", max_len=32)
        a = predict(seq, model)
        b = predict(seq, model)
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1], b[1])

    def test_pair_input(self):
        cfg = ModelConfig(
            task="pair", class_count=2, d_model=8, layers=1, heads=2,
            ffn_dim=16, hidden_dim=6, max_len=32,
        )
        m = Model(cfg, seed=1)
        pair = PairExample(
            seq_a=tokenize("ACD", max_len=32),
            seq_b=tokenize("WYK", max_len=32),
            label=1,
        )
        cls, probs = predict(pair, m)
        assert probs.shape == (2,)
        assert cls in (0, 1)

    def test_pair_order_matters_only_by_design(self):
        # Determinism is asserted; symmetry is explicitly not.
        cfg = ModelConfig(
            task="pair", class_count=2, d_model=8, layers=1, heads=2,
            ffn_dim=16, hidden_dim=6, max_len=32,
        )
        m = Model(cfg, seed=2)
        a = tokenize("ACDEF", max_len=32)
        b = tokenize("WYKHM", max_len=32)
        p1 = predict(PairExample(seq_a=a, seq_b=b, label=0), m)
        p2 = predict(PairExample(seq_a=a, seq_b=b, label=0), m)
        assert p1[0] == p2[0]
        np.testing.assert_array_equal(p1[1], p2[1])

    def test_store_mode_missing_id(self, tmp_path):
        path = tmp_path / "s.nmeb"
        rng = np.random.default_rng(0)
        write_embedding_store(path, [("known", rng.normal(size=(4, 6)).astype(np.float32))], dim=6)
        cfg = ModelConfig(
            task="wise", class_count=2, hidden_dim=6, encoder_mode="store", max_len=32,
        )
        m = Model(cfg, seed=0, store=load_embedding_store(path))
        with pytest.raises(MissingEmbedding):
            predict(tokenize("AC", max_len=32, seq_id="unknown"), m)
        cls, probs = predict(tokenize("AC", max_len=32, seq_id="known"), m)
        assert probs.shape == (2,)


class TestCheckpoint:
    def test_round_trip_predictions(self, model, tmp_path):
        path = tmp_path / "m.nmck"
        save_checkpoint(path, model)
        loaded = load_checkpoint(path)
        seq = tokenize("ACDEFGHIK", max_len=32)
        a = predict(seq, model)
        b = predict(seq, loaded)
        assert a[0] == b[0]
        np.testing.assert_allclose(a[1], b[1], atol=1e-6)

    def test_write_read_write_byte_identical(self, model, tmp_path):
        p1, p2 = tmp_path / "a.nmck", tmp_path / "b.nmck"
        save_checkpoint(p1, model)
        save_checkpoint(p2, load_checkpoint(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointNotFound):
            load_checkpoint(tmp_path / "absent.nmck")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.nmck"
        path.write_bytes(b"JUNK" + b"\x00" * 10)
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_truncated(self, model, tmp_path):
        path = tmp_path / "t.nmck"
        save_checkpoint(path, model)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 7])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_meta_first_and_named_tensors(self, model, tmp_path):
        path = tmp_path / "m.nmck"
        save_checkpoint(path, model)
        tensors = read_checkpoint_tensors(path)
        assert tensors[0][0] == "meta.arch"
        names = {name for name, _ in tensors[1:]}
        assert "encoder.tok_emb" in names
        assert "proj.w_key" in names
        assert "cls.w" in names

    def test_frozen_encoder_stays_out_of_parameters(self):
        cfg = ModelConfig(
            task="wise", class_count=2, d_model=8, layers=1, heads=2,
            ffn_dim=16, hidden_dim=6, max_len=32, encoder_mode="frozen",
        )
        m = Model(cfg, seed=0)
        named = {t.name for t in m.parameters()}
        assert not any(n.startswith("encoder.") for n in named)
        assert {"proj.w_key", "cls.w"} <= named
