from dataclasses import replace

import numpy as np
import pytest

from mol2adr import autodiff as ad
from mol2adr.autodiff import Tape, Tensor
from mol2adr.codec import BOS, EOS, N_SPECIALS, PAD
from mol2adr.errors import SequenceTooLong, ShapeMismatch, TooManyAtoms
from mol2adr.featurize import featurize_molecule
from mol2adr.model import AdrGenerator, Memory, ModelDims
from mol2adr.motif_graph import build_association_graph, build_vocabulary
from mol2adr.optim import Adam
from mol2adr.perception import perceive
from mol2adr.smiles import parse_smiles

TINY = ModelDims(
    n_tokens=9,
    n_motifs=3,
    d_model=8,
    gat_heads=2,
    gat_layers=1,
    decoder_heads=2,
    num_layers=2,
    max_len=5,
    max_atoms=6,
    dropout=0.0,
)


@pytest.fixture
def model():
    return AdrGenerator(TINY, seed=3)


@pytest.fixture
def memory():
    rng = np.random.default_rng(5)
    return Memory(Tensor(rng.normal(size=(2, 4, 8))), np.array([[1, 1, 1, 0], [1, 1, 0, 0]], bool))


def test_decode_shape(model, memory):
    logits = model.decode([[BOS, 4, 5, 6], [BOS, 7, 8, PAD]], memory)
    assert logits.shape == (2, 4, 9)
    with pytest.raises(SequenceTooLong):
        model.decode(np.full((2, 7), 4), memory)


def test_decoder_is_causal(model, memory):
    tokens = np.array([[BOS, 4, 5, 6], [BOS, 7, 8, 4]])
    full = model.decode(tokens, memory).data
    changed = tokens.copy()
    changed[:, 3] = 5
    prefix = model.decode(changed, memory).data
    np.testing.assert_allclose(prefix[:, :3], full[:, :3], atol=1e-12)
    assert not np.allclose(prefix[:, 3], full[:, 3])


def test_padded_memory_rows_are_ignored(model, memory):
    tokens = [[BOS, 4], [BOS, 5]]
    before = model.decode(tokens, memory).data
    values = memory.values.data.copy()
    values[0, 3] = 100.0
    values[1, 2:] = -50.0
    after = model.decode(tokens, Memory(Tensor(values), memory.mask)).data
    np.testing.assert_allclose(after, before, atol=1e-12)


def test_generate_emits_unique_labels(model, memory):
    outputs = model.generate(memory)
    assert len(outputs) == 2
    for labels in outputs:
        assert len(labels) <= TINY.max_len
        assert len(set(labels)) == len(labels)
        assert all(N_SPECIALS <= t < TINY.n_tokens for t in labels)
    assert all(len(labels) <= 2 for labels in model.generate(memory, max_len=2))


def test_checkpoint_round_trip(model, memory, tmp_path):
    model.save(tmp_path / "model.bin", {"seed": 3})
    loaded, meta = AdrGenerator.load(tmp_path / "model.bin")
    assert meta["seed"] == 3
    assert loaded.dims == TINY
    tokens = [[BOS, 4, 5], [BOS, 6, 7]]
    np.testing.assert_allclose(
        loaded.decode(tokens, memory).data, model.decode(tokens, memory).data
    )


def test_serialize_and_fuse(model):
    rng = np.random.default_rng(0)
    atoms, global_emb = Tensor(rng.normal(size=(3, 8))), Tensor(rng.normal(size=(1, 8)))
    memory = model.serialize_and_fuse(atoms, global_emb, 3)
    assert memory.values.shape == (1, 6, 8)
    assert memory.mask.tolist() == [[True, True, True, False, False, False]]
    assert not memory.values.data[0, 3:].any()
    with pytest.raises(TooManyAtoms):
        model.serialize_and_fuse(Tensor(rng.normal(size=(7, 8))), global_emb, 7)


def test_mol_feature_mode_ignores_global_embedding():
    model = AdrGenerator(replace(TINY, feature_mode="mol"))
    rng = np.random.default_rng(1)
    atoms = Tensor(rng.normal(size=(2, 8)))
    first = model.serialize_and_fuse(atoms, Tensor(rng.normal(size=(1, 8))), 2)
    second = model.serialize_and_fuse(atoms, Tensor(rng.normal(size=(1, 8))), 2)
    np.testing.assert_array_equal(first.values.data, second.values.data)


def test_dims_validation():
    with pytest.raises(ValueError):
        ModelDims(n_tokens=9, n_motifs=3, feature_mode="atoms")
    with pytest.raises(ShapeMismatch):
        ModelDims(n_tokens=9, n_motifs=3, d_model=10, decoder_heads=4)


def test_encode_batch(model, small_corpus):
    graph = build_association_graph(small_corpus, build_vocabulary(small_corpus))
    mols = [featurize_molecule(perceive(parse_smiles(s))) for s in ("CCO", "CC")]
    assoc = model.association_embeddings(graph)
    assert assoc.shape == (6, 8)
    memory = model.encode_batch(mols, assoc, [3, 4])
    assert memory.values.shape == (2, 3, 8)
    assert memory.mask.tolist() == [[True, True, True], [True, True, False]]
    with pytest.raises(TooManyAtoms):
        big = featurize_molecule(perceive(parse_smiles("CCCCCCC")))
        model.encode_batch([big], assoc, [3])


def test_decoder_gradient(model, memory):
    tokens = [[BOS, 4, 5], [BOS, 6, 7]]
    weights = Tensor(np.random.default_rng(2).normal(size=(2, 3, 9)))

    def f(values):
        logits = model.decode(tokens, Memory(values, memory.mask))
        return ad.reduce_sum(ad.mul(logits, weights))

    assert ad.grad_check(f, Tensor(memory.values.data.copy())) < 1e-4


def test_generation_stops_at_max_len():
    model = AdrGenerator(replace(TINY, n_tokens=12, max_len=200, num_layers=1), seed=4)
    model.out.b.data[EOS] = -1e9
    memory = Memory(Tensor(np.ones((1, 2, 8))), np.ones((1, 2), bool))
    [labels] = model.generate(memory, allow_duplicates=True)
    assert len(labels) == 200
    assert EOS not in labels and PAD not in labels
    assert model.decode(np.full((1, 201), 5), memory).shape == (1, 201, 12)


@pytest.mark.slow
def test_memorizes_one_drug(model):
    rng = np.random.default_rng(9)
    memory = Memory(Tensor(rng.normal(size=(1, 3, 8))), np.ones((1, 3), bool))
    target = np.array([[BOS, 6, 4, EOS, PAD, PAD, PAD]])
    params = list(model.params)
    optimizer = Adam(params)
    for _ in range(300):
        optimizer.zero_grad()
        with Tape() as tape:
            loss = model.loss(target, memory)
        ad.backward(loss, tape, params)
        optimizer.step(1e-2)
    assert model.loss(target, memory).item() < 0.1
    assert model.generate(memory) == [[6, 4]]
