from itertools import permutations

import networkx as nx
import numpy as np
import pytest

from mol2adr.canonical import canonical_ranks, canonical_smiles, write_canonical
from mol2adr.dataset import load_dataset
from mol2adr.errors import DisconnectedSubset
from mol2adr.perception import perceive
from mol2adr.smiles import parse_smiles


def test_simple_canonical_form():
    assert canonical_smiles(parse_smiles("OCC")) == "CCO"
    assert canonical_smiles(parse_smiles("c1ccccc1")) == "c1ccccc1"


@pytest.mark.parametrize(
    "variants",
    [
        ("Oc1ccccc1", "c1ccc(O)cc1", "c1cc(O)ccc1"),
        ("CC(=O)Oc1ccccc1C(=O)O", "OC(=O)c1ccccc1OC(C)=O"),
        ("CCN(CC)CC", "N(CC)(CC)CC"),
        ("ClCc1ccccc1", "c1ccc(CCl)cc1"),
    ],
)
def test_atom_order_does_not_matter(variants):
    forms = {canonical_smiles(parse_smiles(v)) for v in variants}
    assert len(forms) == 1


@pytest.mark.parametrize(
    "smiles",
    ["OC(=O)c1ccccc1O", "CN1C=NC2=C1C(=O)N(C(=O)N2C)C", "C1CC1C(F)(F)F", "[NH4+]", "CC#N"],
)
def test_canonical_form_is_a_fixpoint(smiles):
    first = canonical_smiles(parse_smiles(smiles))
    assert canonical_smiles(parse_smiles(first)) == first


def test_subset_writes_attachment_atoms():
    pmol = perceive(parse_smiles("ClCc1ccccc1"))
    assert write_canonical(pmol, range(2, 8)) == "*c1ccccc1"
    assert write_canonical(pmol, [0, 1]) == "*CCl"


def test_disconnected_subset():
    pmol = perceive(parse_smiles("CCC"))
    with pytest.raises(DisconnectedSubset):
        write_canonical(pmol, [0, 2])
    with pytest.raises(DisconnectedSubset):
        write_canonical(pmol, [])


def test_ranks_are_a_permutation():
    pmol = perceive(parse_smiles("CC(=O)Oc1ccccc1C(=O)O"))
    ranks = canonical_ranks(pmol, range(pmol.n_atoms))
    assert sorted(ranks) == list(range(pmol.n_atoms))
    assert sorted(ranks.values()) == list(range(pmol.n_atoms))


EXTRA_SMILES = [
    "ClCc1ccccc1",
    "c1ccc2ccccc2c1",
    "C1CC1C(F)(F)F",
    "[NH4+]",
    "CC#N",
    "O=C=O",
    "C1CCCCC1",
    "c1ccncc1",
    "CC(C)(C)C",
    "c1ccccc1CCc1ccccc1",
]


def _structures(toy_corpus):
    return [r.structure for r in load_dataset(toy_corpus).records] + EXTRA_SMILES


def _labelled_graph(smiles):
    pmol = perceive(parse_smiles(smiles))
    graph = pmol.base.to_networkx()
    for i, atom in enumerate(pmol.base.atoms):
        graph.nodes[i]["atom"] = (
            atom.element,
            atom.formal_charge,
            atom.aromatic,
            atom.isotope,
            pmol.total_h(i),
        )
    return graph


def test_canonical_round_trip_is_isomorphic(toy_corpus):
    for smiles in _structures(toy_corpus):
        written = canonical_smiles(parse_smiles(smiles))
        assert nx.is_isomorphic(
            _labelled_graph(smiles),
            _labelled_graph(written),
            node_match=lambda a, b: a["atom"] == b["atom"],
            edge_match=lambda a, b: a["order"] == b["order"],
        ), f"{smiles} -> {written}"


def test_canonical_form_survives_atom_relabeling(toy_corpus, relabel):
    rng = np.random.default_rng(17)
    for smiles in _structures(toy_corpus):
        mol = parse_smiles(smiles)
        expected = canonical_smiles(mol)
        for _ in range(3):
            shuffled = relabel(mol, rng.permutation(mol.n_atoms))
            assert canonical_smiles(shuffled) == expected, smiles


def test_cyclohexane_orderings_give_one_string(relabel):
    mol = parse_smiles("C1CCCCC1")
    forms = {canonical_smiles(relabel(mol, order)) for order in permutations(range(6))}
    assert forms == {"C1CCCCC1"}
