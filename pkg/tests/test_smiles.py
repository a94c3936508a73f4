import string

import numpy as np
import pytest

from mol2adr.errors import (
    BondOrderMismatch,
    ChemError,
    EmptyInput,
    MultiComponentInput,
    UnbalancedParenthesis,
    UnclosedRingBond,
    UnknownElement,
)
from mol2adr.molecule import BondOrder, BondStereo, Chirality
from mol2adr.smiles import parse_smiles


def test_parse_ethanol():
    mol = parse_smiles("CCO")
    assert [a.element for a in mol.atoms] == ["C", "C", "O"]
    assert [(b.a, b.b) for b in mol.bonds] == [(0, 1), (1, 2)]
    assert all(b.order is BondOrder.SINGLE for b in mol.bonds)
    assert mol.source_text == "CCO"


def test_aromatic_ring_bonds():
    mol = parse_smiles("c1ccccc1")
    assert mol.n_atoms == 6
    assert len(mol.bonds) == 6
    assert all(b.order is BondOrder.AROMATIC for b in mol.bonds)
    assert all(a.aromatic for a in mol.atoms)


def test_bond_between_aromatic_rings_is_single():
    mol = parse_smiles("c1ccccc1-c1ccccc1")
    biphenyl_link = mol.bonds[mol.bond_between(5, 6)]
    assert biphenyl_link.order is BondOrder.SINGLE


def test_bracket_atom_fields():
    mol = parse_smiles("[13CH4]")
    atom = mol.atoms[0]
    assert atom.isotope == 13
    assert atom.explicit_h == 4

    ammonium = parse_smiles("[NH4+]").atoms[0]
    assert ammonium.formal_charge == 1
    assert ammonium.explicit_h == 4

    assert parse_smiles("[O-2]").atoms[0].formal_charge == -2


def test_chirality_marks():
    mol = parse_smiles("F[C@@H](Cl)Br")
    assert mol.atoms[1].chirality is Chirality.CLOCKWISE
    assert parse_smiles("F[C@H](Cl)Br").atoms[1].chirality is Chirality.COUNTERCLOCKWISE


def test_double_bond_stereo():
    trans = parse_smiles("F/C=C/F")
    cis = parse_smiles("F/C=C\\F")
    assert trans.bonds[1].stereo is BondStereo.TRANS
    assert cis.bonds[1].stereo is BondStereo.CIS


def test_two_digit_ring_closure():
    mol = parse_smiles("C%10CC%10")
    assert mol.n_atoms == 3
    assert len(mol.bonds) == 3


def test_branches():
    mol = parse_smiles("CC(C)(C)O")
    assert len(mol.neighbors(1)) == 4


@pytest.mark.parametrize(
    "text, error",
    [
        ("", EmptyInput),
        ("C(C", UnbalancedParenthesis),
        ("CC)", UnbalancedParenthesis),
        ("C1CC", UnclosedRingBond),
        ("CX", UnknownElement),
        ("CC.O", MultiComponentInput),
        ("C=1CC-1", BondOrderMismatch),
    ],
)
def test_syntax_errors(text, error):
    with pytest.raises(error):
        parse_smiles(text)


def test_error_carries_offset():
    with pytest.raises(UnbalancedParenthesis) as excinfo:
        parse_smiles("C(C")
    assert excinfo.value.offset == 1
    assert "offset 1" in str(excinfo.value)


def test_random_strings_raise_only_typed_errors():
    alphabet = list("CNOSPFIBrclnosp()[]=#$:@+-/\\.%*H0123456789") + list(string.printable)
    rng = np.random.default_rng(2024)
    parsed = 0
    for _ in range(10_000):
        text = "".join(rng.choice(alphabet, size=rng.integers(1, 24)))
        try:
            parse_smiles(text)
            parsed += 1
        except ChemError:
            pass
    assert parsed > 0
