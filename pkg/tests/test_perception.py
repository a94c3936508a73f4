import pytest

from mol2adr.errors import ValenceExceeded
from mol2adr.perception import Hybridization, perceive
from mol2adr.smiles import parse_smiles


def test_implicit_hydrogens_aliphatic():
    pmol = perceive(parse_smiles("CCO"))
    assert pmol.implicit_h == (3, 2, 1)
    assert all(h is Hybridization.SP3 for h in pmol.hybridization)
    assert pmol.ring_membership == (False, False, False)


def test_benzene_perception():
    pmol = perceive(parse_smiles("c1ccccc1"))
    assert pmol.implicit_h == (1,) * 6
    assert all(pmol.ring_membership)
    assert all(h is Hybridization.SP2 for h in pmol.hybridization)
    assert all(b.conjugated for b in pmol.base.bonds)


def test_aromatic_nitrogen_has_no_hydrogen():
    pmol = perceive(parse_smiles("c1ccncc1"))
    assert pmol.implicit_h[3] == 0
    assert pmol.implicit_h[0] == 1


def test_substituted_ring_carbon():
    pmol = perceive(parse_smiles("Oc1ccccc1"))
    assert pmol.implicit_h[1] == 0
    assert pmol.implicit_h[0] == 1


def test_valence_exceeded():
    with pytest.raises(ValenceExceeded):
        perceive(parse_smiles("C(C)(C)(C)(C)C"))


def test_bracket_radical():
    pmol = perceive(parse_smiles("[CH3]"))
    assert pmol.implicit_h == (3,)
    assert pmol.base.atoms[0].radical_electrons == 1


def test_explicit_hydrogen_atoms_count_in_total_h():
    pmol = perceive(parse_smiles("[H]C([H])([H])[H]"))
    assert pmol.implicit_h[1] == 0
    assert pmol.total_h(1) == 4
    assert pmol.heavy_atoms() == [1]


def test_conjugation():
    pmol = perceive(parse_smiles("C=CC=C"))
    assert [b.conjugated for b in pmol.base.bonds] == [True, True, True]
    isolated = perceive(parse_smiles("CCC=C"))
    assert isolated.base.bonds[0].conjugated is False


def test_ring_bonds_and_degree():
    pmol = perceive(parse_smiles("C1CC1C"))
    assert pmol.ring_bonds[:3] == (True, True, True)
    assert pmol.ring_bonds[3] is False
    assert pmol.ring_membership == (True, True, True, False)
    assert pmol.degree == (2, 2, 3, 1)
    assert pmol.heavy_degree(2) == 3


def test_triple_bond_is_sp():
    pmol = perceive(parse_smiles("CC#N"))
    assert pmol.hybridization[1] is Hybridization.SP
    assert pmol.implicit_h == (3, 0, 0)
