"""Molecular graph types shared by parsing, perception and fragmentation."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import networkx as nx

from .elements import lookup
from .errors import ChemError, MultiComponentInput, UnknownElement

logger = logging.getLogger(__name__)


class Chirality(str, Enum):
    NONE = "none"
    CLOCKWISE = "clockwise"
    COUNTERCLOCKWISE = "counterclockwise"


class BondOrder(str, Enum):
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"
    AROMATIC = "aromatic"

    @property
    def valence(self) -> float:
        """Contribution to an atom's bond-order sum."""
        return _BOND_VALENCE[self]


_BOND_VALENCE = {
    BondOrder.SINGLE: 1.0,
    BondOrder.DOUBLE: 2.0,
    BondOrder.TRIPLE: 3.0,
    BondOrder.AROMATIC: 1.5,
}


class BondStereo(str, Enum):
    NONE = "none"
    CIS = "cis"
    TRANS = "trans"


@dataclass(frozen=True)
class Atom:
    element: str
    atomic_number: int
    formal_charge: int = 0
    explicit_h: Optional[int] = None
    isotope: int = 0
    aromatic: bool = False
    chirality: Chirality = Chirality.NONE
    radical_electrons: int = 0
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE
    stereo: BondStereo = BondStereo.NONE
    conjugated: bool = False
    in_ring: bool = False

    def other(self, atom: int) -> int:
        return self.b if atom == self.a else self.a


@dataclass(frozen=True)
class Molecule:
    """Parsed atom/bond graph.

    Attributes:
        atoms: Atoms in input order
        bonds: Bonds; at most one per unordered atom pair
        source_text: The string the molecule was read from, verbatim
    """

    atoms: Tuple[Atom, ...]
    bonds: Tuple[Bond, ...]
    source_text: str = ""
    _adjacency: Tuple[Tuple[Tuple[int, int], ...], ...] = field(
        default=(), init=False, repr=False, compare=False
    )

    def __post_init__(self):
        adjacency: List[List[Tuple[int, int]]] = [[] for _ in self.atoms]
        for idx, bond in enumerate(self.bonds):
            adjacency[bond.a].append((bond.b, idx))
            adjacency[bond.b].append((bond.a, idx))
        object.__setattr__(self, "_adjacency", tuple(tuple(n) for n in adjacency))

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self, atom: int) -> Tuple[Tuple[int, int], ...]:
        """(neighbor atom, bond index) pairs of ``atom``."""
        return self._adjacency[atom]

    def bond_between(self, a: int, b: int) -> Optional[int]:
        for other, bond_idx in self._adjacency[a]:
            if other == b:
                return bond_idx
        return None

    def to_networkx(self) -> nx.Graph:
        """Undirected graph with atom indices as nodes and bond indices on edges."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n_atoms))
        for idx, bond in enumerate(self.bonds):
            graph.add_edge(bond.a, bond.b, index=idx, order=bond.order)
        return graph


def molecule_from_graph_json(record: Dict[str, Any]) -> Molecule:
    """Build a molecule from a pre-parsed graph record.

    The record layout is ``{drug_id, atoms: [{element, charge, h, aromatic,
    isotope, chirality}], bonds: [{a, b, order, stereo, conjugated}]}``; only
    ``element`` and the bond endpoints are required.
    """
    drug_id = str(record.get("drug_id", ""))
    atoms = []
    for i, raw in enumerate(record.get("atoms", [])):
        element = lookup(str(raw.get("element", "")))
        if element is None:
            raise UnknownElement(
                f"atom {i} of graph {drug_id!r}: unknown element {raw.get('element')!r}"
            )
        h = raw.get("h")
        atoms.append(
            Atom(
                element=element.symbol,
                atomic_number=element.atomic_number,
                formal_charge=int(raw.get("charge", 0)),
                explicit_h=None if h is None else int(h),
                isotope=int(raw.get("isotope", 0)),
                aromatic=bool(raw.get("aromatic", False)),
                chirality=Chirality(raw.get("chirality", "none")),
            )
        )
    if not atoms:
        raise ChemError(f"graph {drug_id!r} has no atoms")

    bonds = []
    seen = set()
    for raw in record.get("bonds", []):
        a, b = int(raw["a"]), int(raw["b"])
        if not (0 <= a < len(atoms) and 0 <= b < len(atoms)) or a == b:
            raise ChemError(f"graph {drug_id!r}: invalid bond endpoints {a}-{b}")
        key = frozenset((a, b))
        if key in seen:
            raise ChemError(f"graph {drug_id!r}: duplicate bond {a}-{b}")
        seen.add(key)
        bonds.append(
            Bond(
                a=a,
                b=b,
                order=BondOrder(raw.get("order", "single")),
                stereo=BondStereo(raw.get("stereo", "none")),
                conjugated=bool(raw.get("conjugated", False)),
            )
        )

    mol = Molecule(tuple(atoms), tuple(bonds), source_text=f"graph:{drug_id}")
    if not nx.is_connected(mol.to_networkx()):
        raise MultiComponentInput(f"graph {drug_id!r} has more than one component")
    return mol
