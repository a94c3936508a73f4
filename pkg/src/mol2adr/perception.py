"""Valence, ring, hybridization and conjugation perception."""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Set, Tuple

import networkx as nx

from .elements import adjusted_valences, contributes_pi
from .errors import ValenceExceeded
from .molecule import Bond, BondOrder, Molecule

logger = logging.getLogger(__name__)


class Hybridization(str, Enum):
    SP = "sp"
    SP2 = "sp2"
    SP3 = "sp3"
    OTHER = "other"


@dataclass(frozen=True)
class PerceivedMolecule:
    """A molecule together with per-atom and per-bond perceived attributes.

    ``base`` carries the same atoms and bonds as the parsed molecule with
    ``radical_electrons``, ``conjugated`` and ``in_ring`` filled in.
    """

    base: Molecule
    implicit_h: Tuple[int, ...]
    degree: Tuple[int, ...]
    hybridization: Tuple[Hybridization, ...]
    ring_membership: Tuple[bool, ...]
    ring_bonds: Tuple[bool, ...]

    @property
    def n_atoms(self) -> int:
        return self.base.n_atoms

    def heavy_degree(self, atom: int) -> int:
        """Number of non-hydrogen neighbors."""
        atoms = self.base.atoms
        return sum(1 for nbr, _ in self.base.neighbors(atom) if atoms[nbr].atomic_number != 1)

    def total_h(self, atom: int) -> int:
        """Implicit plus explicit-atom hydrogens."""
        explicit_atoms = sum(
            1 for nbr, _ in self.base.neighbors(atom) if self.base.atoms[nbr].atomic_number == 1
        )
        return self.implicit_h[atom] + explicit_atoms

    def heavy_atoms(self) -> List[int]:
        return [i for i, a in enumerate(self.base.atoms) if a.atomic_number != 1]


def bond_sum(mol: Molecule, atom: int) -> Tuple[int, int]:
    """(integer bond-order sum, number of aromatic bonds) for ``atom``.

    Aromatic bonds count one each; the extra pi electron is added by
    :func:`default_implicit_h`.
    """
    total = 0
    aromatic = 0
    for _, bond_idx in mol.neighbors(atom):
        order = mol.bonds[bond_idx].order
        if order is BondOrder.AROMATIC:
            aromatic += 1
            total += 1
        else:
            total += int(order.valence)
    return total, aromatic


def default_implicit_h(
    element: str, charge: int, aromatic: bool, total: int, n_aromatic: int
) -> Optional[int]:
    """Hydrogen count implied by the valence table, or None if nothing fits.

    Elements without a valence table get 0.
    """
    allowed = adjusted_valences(element, charge)
    if not allowed:
        return 0
    if aromatic:
        pi = 1 if n_aromatic and contributes_pi(element) else 0
        return max(0, allowed[0] - total - pi)
    fitting = [v for v in allowed if v >= total]
    if not fitting:
        return None
    return fitting[0] - total


def _valence_of(mol: Molecule, atom: int) -> Tuple[int, int]:
    """(implicit_h, radical_electrons) of a single atom."""
    spec = mol.atoms[atom]
    total, n_aromatic = bond_sum(mol, atom)
    allowed = adjusted_valences(spec.element, spec.formal_charge)
    offset = spec.offset if spec.offset >= 0 else None

    if spec.explicit_h is None:
        h = default_implicit_h(spec.element, spec.formal_charge, spec.aromatic, total, n_aromatic)
        if h is None or (allowed and total + h > max(allowed)):
            raise ValenceExceeded(
                f"atom {atom} ({spec.element}) has bond-order sum {total}, "
                f"allowed valences {allowed}",
                offset,
            )
        return h, 0

    h = spec.explicit_h
    if not allowed:
        return h, 0
    if total + h > max(allowed):
        raise ValenceExceeded(
            f"atom {atom} ({spec.element}) has {total + h} bonds, allowed valences {allowed}",
            offset,
        )
    if spec.aromatic:
        return h, 0
    target = min(v for v in allowed if v >= total + h)
    return h, target - total - h


def _hybridization(mol: Molecule, atom: int) -> Hybridization:
    spec = mol.atoms[atom]
    orders = [mol.bonds[b].order for _, b in mol.neighbors(atom)]
    if spec.atomic_number == 1 or (not orders and spec.formal_charge):
        return Hybridization.OTHER
    if not orders:
        return Hybridization.SP3
    doubles = orders.count(BondOrder.DOUBLE)
    if BondOrder.TRIPLE in orders or doubles >= 2:
        return Hybridization.SP
    if spec.aromatic or doubles:
        return Hybridization.SP2
    return Hybridization.SP3


def _unsaturated(mol: Molecule, atom: int, skip: int) -> bool:
    for _, b in mol.neighbors(atom):
        if b != skip and mol.bonds[b].order is not BondOrder.SINGLE:
            return True
    return False


def _conjugation(mol: Molecule) -> List[bool]:
    flags = [False] * len(mol.bonds)
    for i, bond in enumerate(mol.bonds):
        if bond.order is BondOrder.AROMATIC:
            flags[i] = True
        elif bond.order is BondOrder.SINGLE:
            flags[i] = _unsaturated(mol, bond.a, i) and _unsaturated(mol, bond.b, i)
    for i, bond in enumerate(mol.bonds):
        if bond.order in (BondOrder.DOUBLE, BondOrder.TRIPLE):
            touching = [b for atom in (bond.a, bond.b) for _, b in mol.neighbors(atom) if b != i]
            flags[i] = any(
                flags[b] or mol.bonds[b].order is BondOrder.AROMATIC for b in touching
            )
    return flags


def ring_bond_set(mol: Molecule) -> Set[int]:
    """Indices of bonds lying on at least one cycle."""
    graph = mol.to_networkx()
    bridges = {frozenset(e) for e in nx.bridges(graph)}
    return {i for i, b in enumerate(mol.bonds) if frozenset((b.a, b.b)) not in bridges}


def perceive(mol: Molecule) -> PerceivedMolecule:
    """Fill in implicit hydrogens, degrees, rings, hybridization and conjugation.

    Args:
        mol: Parsed molecule

    Returns:
        PerceivedMolecule wrapping an updated copy of ``mol``

    Raises:
        ValenceExceeded: If an atom carries more bonds than any allowed valence
    """
    implicit_h = []
    atoms = list(mol.atoms)
    for i in range(mol.n_atoms):
        h, radicals = _valence_of(mol, i)
        implicit_h.append(h)
        if atoms[i].radical_electrons != radicals:
            atoms[i] = replace(atoms[i], radical_electrons=radicals)

    ring_bonds = ring_bond_set(mol)
    conjugated = _conjugation(mol)
    bonds: List[Bond] = [
        replace(b, conjugated=conjugated[i], in_ring=i in ring_bonds)
        for i, b in enumerate(mol.bonds)
    ]
    ring_atoms = [False] * mol.n_atoms
    for i in ring_bonds:
        ring_atoms[mol.bonds[i].a] = True
        ring_atoms[mol.bonds[i].b] = True

    base = Molecule(tuple(atoms), tuple(bonds), source_text=mol.source_text)
    return PerceivedMolecule(
        base=base,
        implicit_h=tuple(implicit_h),
        degree=tuple(len(mol.neighbors(i)) for i in range(mol.n_atoms)),
        hybridization=tuple(_hybridization(mol, i) for i in range(mol.n_atoms)),
        ring_membership=tuple(ring_atoms),
        ring_bonds=tuple(i in ring_bonds for i in range(len(mol.bonds))),
    )
