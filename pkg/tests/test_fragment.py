import json
from collections import Counter

import numpy as np
import pytest

from mol2adr.dataset import load_dataset
from mol2adr.errors import RuleTableError
from mol2adr.fragment import (
    CleavageRule,
    brics_fragment,
    extra_cleavable_bonds,
    find_brics_bonds,
    fragment,
    fragment_brics,
    load_rules,
    motifs_of,
    refine_fragments,
)
from mol2adr.perception import perceive
from mol2adr.smiles import parse_smiles


@pytest.fixture(scope="module")
def rules():
    return load_rules()


def _pmol(smiles):
    return perceive(parse_smiles(smiles))


def test_bundled_rule_table(rules):
    ids = [env.env_id for env in rules.environments]
    assert len(ids) == 16
    assert "7a" in ids and "7b" in ids
    for a in ids:
        for b in ids:
            assert rules.compatible(a, b) is rules.compatible(b, a)


def test_rule_table_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_rules(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(RuleTableError):
        load_rules(broken)

    future = tmp_path / "future.json"
    future.write_text(json.dumps({"version": 2, "environments": [], "compatible_pairs": []}))
    with pytest.raises(RuleTableError):
        load_rules(future)


def test_benzyl_chloride_gives_two_motifs(rules):
    frag = fragment_brics(_pmol("ClCc1ccccc1"), rules)
    assert sorted(m.canonical for m in frag.motifs) == ["*CCl", "*c1ccccc1"]
    assert frag.adjacent == ((0, 1),)


def test_ether_is_cut_on_both_sides(rules):
    frag = fragment_brics(_pmol("CCOCC"), rules)
    assert Counter(m.canonical for m in frag.motifs) == Counter({"*CC": 2, "*O*": 1})
    assert frag.adjacent == ((0, 1), (1, 2))


def test_uncut_molecules_are_single_motifs(rules):
    assert [m.canonical for m in fragment_brics(_pmol("c1ccccc1"), rules).motifs] == ["c1ccccc1"]
    assert [m.canonical for m in fragment_brics(_pmol("C"), rules).motifs] == ["C"]


@pytest.mark.parametrize(
    "smiles", ["CC(=O)Oc1ccccc1C(=O)O", "CCN(CC)CC(=O)Nc1c(C)cccc1C", "CC(C)Cc1ccc(cc1)C(C)C(=O)O"]
)
def test_fragments_partition_heavy_atoms(rules, smiles):
    pmol = _pmol(smiles)
    frag = fragment_brics(pmol, rules)
    seen = set()
    for f in frag.fragments:
        assert not (seen & f.atoms)
        seen |= f.atoms
    assert seen == set(pmol.heavy_atoms())
    assert sum(m.heavy_atom_count for m in frag.motifs) == len(pmol.heavy_atoms())


def test_extra_rules_are_idempotent(rules):
    pmol = _pmol("CCN(CC)CC(=O)Nc1c(C)cccc1C")
    once = refine_fragments(pmol, brics_fragment(pmol, rules))
    twice = refine_fragments(pmol, once)
    assert [f.atoms for f in once] == [f.atoms for f in twice]


def test_branch_atom_rule():
    pmol = _pmol("CC(C)C")
    found = extra_cleavable_bonds(pmol)
    assert len(found) == 3
    assert all(c.rule is CleavageRule.BRANCH_ATOM for c in found)


def test_ring_substituent_rule():
    found = extra_cleavable_bonds(_pmol("Cc1ccccc1"))
    assert [c.rule for c in found] == [CleavageRule.RING_SUBSTITUENT]


def test_rings_fragmenter_overlaps():
    frag = fragment(_pmol("ClCc1ccccc1"), method="rings")
    assert len(frag.motifs) == 3
    assert frag.adjacent == ((0, 1), (1, 2))
    assert "*c1ccccc1" in {m.canonical for m in frag.motifs}


def test_unknown_fragmenter():
    with pytest.raises(ValueError):
        fragment(_pmol("CC"), method="recap")


def test_amide_bond_is_the_only_brics_cut(rules):
    pmol = _pmol("CC(=O)NC")
    found = find_brics_bonds(pmol, rules)
    assert len(found) == 1
    bond = pmol.base.bonds[found[0].bond]
    assert {pmol.base.atoms[bond.a].element, pmol.base.atoms[bond.b].element} == {"C", "N"}
    assert {bond.a, bond.b} == {1, 3}
    assert sorted(sorted(f.atoms) for f in brics_fragment(pmol, rules)) == [[0, 1, 2], [3, 4]]


def test_neopentane_centre_is_isolated(rules):
    frag = fragment_brics(_pmol("CC(C)(C)C"), rules)
    assert len(frag.motifs) == 5
    assert [m.heavy_atom_count for m in frag.motifs] == [1] * 5
    assert len(frag.adjacent) == 4


def test_ethylbenzene_splits_ring_from_chain(rules):
    frag = fragment_brics(_pmol("CCc1ccccc1"), rules)
    assert sorted(m.canonical for m in frag.motifs) == ["*CC", "*c1ccccc1"]


def test_diphenylethane_counts_the_ring_twice(rules):
    counts = motifs_of(_pmol("c1ccccc1CCc1ccccc1"), rules)
    assert counts[next(m for m in counts if m.canonical == "*c1ccccc1")] == 2
    chain = [m for m in counts.elements() if m.canonical != "*c1ccccc1"]
    assert chain
    assert sum(m.heavy_atom_count for m in chain) == 2


def _corpus_smiles(toy_corpus):
    extra = [
        "c1ccc2ccccc2c1",
        "C1CC1C(F)(F)F",
        "CC1(C)CCCC(C)(C)N1",
        "O=C1CCCCC1CCc1ccccc1",
        "CC(C)(C)OC(=O)NC1CCN(CC1)c1ncccn1",
    ]
    return [r.structure for r in load_dataset(toy_corpus).records] + extra


@pytest.mark.parametrize("method", ["brics", "rings"])
def test_ring_bonds_are_never_cut(rules, toy_corpus, method):
    for smiles in _corpus_smiles(toy_corpus):
        pmol = _pmol(smiles)
        frag = fragment(pmol, rules, method)
        for idx, bond in enumerate(pmol.base.bonds):
            if pmol.ring_bonds[idx]:
                assert any({bond.a, bond.b} <= f.atoms for f in frag.fragments), smiles


def test_motifs_survive_atom_relabeling(rules, toy_corpus, relabel):
    rng = np.random.default_rng(5)
    for smiles in _corpus_smiles(toy_corpus):
        mol = parse_smiles(smiles)
        expected = motifs_of(perceive(mol), rules)
        for _ in range(3):
            shuffled = relabel(mol, rng.permutation(mol.n_atoms))
            assert motifs_of(perceive(shuffled), rules) == expected, smiles
