"""Canonical atom ranking and canonical SMILES-like strings for atom subsets.

A subset of a molecule is viewed as its own graph in which every bond leaving
the subset ends in a ``*`` attachment atom that keeps the severed bond order.
Ranks come from iterative invariant refinement; ties are broken by promoting
one atom of the lowest tied class and refining again. ``write_canonical``
tries every tie choice (up to a fixed number of leaves) and keeps the
lexicographically smallest string, so its output does not depend on input
atom order.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx

from .elements import ORGANIC_SUBSET
from .errors import DisconnectedSubset
from .molecule import BondOrder, Molecule
from .perception import PerceivedMolecule, default_implicit_h, perceive

logger = logging.getLogger(__name__)

MAX_TIE_LEAVES = 128

_ORDER_CODE = {
    BondOrder.SINGLE: 1,
    BondOrder.DOUBLE: 2,
    BondOrder.TRIPLE: 3,
    BondOrder.AROMATIC: 4,
}

TieBreaker = Callable[[Sequence[int]], int]


@dataclass(frozen=True)
class _ViewAtom:
    symbol: str
    atomic_number: int
    charge: int
    isotope: int
    aromatic: bool
    h: int
    radicals: int
    parent: int  # index in the parent molecule, -1 for attachment atoms


@dataclass
class _View:
    atoms: List[_ViewAtom]
    bonds: List[Tuple[int, int, BondOrder]]
    adjacency: List[List[Tuple[int, BondOrder]]]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])


def _as_perceived(mol: Union[Molecule, PerceivedMolecule]) -> PerceivedMolecule:
    return mol if isinstance(mol, PerceivedMolecule) else perceive(mol)


def _build_view(pmol: PerceivedMolecule, subset: Iterable[int]) -> _View:
    mol = pmol.base
    members = sorted(set(subset))
    if not members or any(i < 0 or i >= mol.n_atoms for i in members):
        raise DisconnectedSubset(f"invalid atom subset {members!r}")
    inside = set(members)
    local = {atom: k for k, atom in enumerate(members)}

    atoms: List[_ViewAtom] = []
    for atom in members:
        spec = mol.atoms[atom]
        # hydrogens outside the subset fold into the atom's H count
        folded = sum(
            1
            for nbr, _ in mol.neighbors(atom)
            if nbr not in inside and mol.atoms[nbr].atomic_number == 1
        )
        atoms.append(
            _ViewAtom(
                symbol=spec.element,
                atomic_number=spec.atomic_number,
                charge=spec.formal_charge,
                isotope=spec.isotope,
                aromatic=spec.aromatic,
                h=pmol.implicit_h[atom] + folded,
                radicals=spec.radical_electrons,
                parent=atom,
            )
        )

    bonds: List[Tuple[int, int, BondOrder]] = []
    for bond in mol.bonds:
        a_in, b_in = bond.a in inside, bond.b in inside
        if a_in and b_in:
            bonds.append((local[bond.a], local[bond.b], bond.order))
        elif a_in or b_in:
            head, tail = (bond.a, bond.b) if a_in else (bond.b, bond.a)
            if mol.atoms[tail].atomic_number == 1:
                continue
            atoms.append(_ViewAtom("*", 0, 0, 0, False, 0, 0, -1))
            bonds.append((local[head], len(atoms) - 1, bond.order))

    adjacency: List[List[Tuple[int, BondOrder]]] = [[] for _ in atoms]
    for a, b, order in bonds:
        adjacency[a].append((b, order))
        adjacency[b].append((a, order))

    graph = nx.Graph()
    graph.add_nodes_from(range(len(members)))
    graph.add_edges_from((a, b) for a, b, _ in bonds if a < len(members) and b < len(members))
    if not nx.is_connected(graph):
        raise DisconnectedSubset(f"atom subset {members!r} is not connected")
    return _View(atoms, bonds, adjacency)


def _dense(keys: List) -> List[int]:
    order = sorted(set(keys))
    index = {k: i for i, k in enumerate(order)}
    return [index[k] for k in keys]


def _refine(view: _View, ranks: List[int]) -> List[int]:
    n_classes = len(set(ranks))
    while True:
        keys = [
            (ranks[i], tuple(sorted((ranks[j], _ORDER_CODE[o]) for j, o in view.adjacency[i])))
            for i in range(len(view.atoms))
        ]
        ranks = _dense(keys)
        count = len(set(ranks))
        if count == n_classes:
            return ranks
        n_classes = count


def _initial_ranks(view: _View) -> List[int]:
    keys = [
        (a.atomic_number, a.charge, view.degree(i), a.h, a.aromatic, a.isotope, a.radicals)
        for i, a in enumerate(view.atoms)
    ]
    return _refine(view, _dense(keys))


def _lowest_tie(ranks: List[int]) -> Optional[List[int]]:
    classes: Dict[int, List[int]] = {}
    for i, r in enumerate(ranks):
        classes.setdefault(r, []).append(i)
    tied = [members for r, members in sorted(classes.items()) if len(members) > 1]
    return tied[0] if tied else None


def _promote(view: _View, ranks: List[int], chosen: int) -> List[int]:
    keys = [(r, 0 if i == chosen else 1) for i, r in enumerate(ranks)]
    return _refine(view, _dense(keys))


def _break_ties(view: _View, ranks: List[int], tie_breaker: Optional[TieBreaker]) -> List[int]:
    while True:
        tied = _lowest_tie(ranks)
        if tied is None:
            return ranks
        chosen = tied[0] if tie_breaker is None else tied[tie_breaker(tied) % len(tied)]
        ranks = _promote(view, ranks, chosen)


def canonical_ranks(
    mol: Union[Molecule, PerceivedMolecule],
    subset: Iterable[int],
    tie_breaker: Optional[TieBreaker] = None,
) -> Dict[int, int]:
    """Rank the atoms of a connected subset.

    Args:
        mol: Molecule (perceived on the fly if needed)
        subset: Parent atom indices; must induce a connected subgraph
        tie_breaker: Picks which member of a tied class is promoted; receives
            the tied view indices and returns a position. Defaults to the first.

    Returns:
        Mapping parent atom index -> rank in ``0..len(subset)-1``

    Raises:
        DisconnectedSubset: If the subset is empty, out of range or disconnected
    """
    view = _build_view(_as_perceived(mol), subset)
    ranks = _break_ties(view, _initial_ranks(view), tie_breaker)
    members = [(ranks[i], a.parent) for i, a in enumerate(view.atoms) if a.parent >= 0]
    return {parent: k for k, (_, parent) in enumerate(sorted(members))}


# --- writer -------------------------------------------------------------------


def _atom_text(view: _View, i: int) -> str:
    atom = view.atoms[i]
    if atom.atomic_number == 0:
        return "*"
    symbol = atom.symbol.lower() if atom.aromatic else atom.symbol
    total = 0
    n_aromatic = 0
    for _, order in view.adjacency[i]:
        if order is BondOrder.AROMATIC:
            n_aromatic += 1
            total += 1
        else:
            total += int(order.valence)
    default_h = default_implicit_h(atom.symbol, 0, atom.aromatic, total, n_aromatic)
    if (
        atom.symbol in ORGANIC_SUBSET
        and atom.charge == 0
        and atom.isotope == 0
        and atom.radicals == 0
        and default_h == atom.h
    ):
        return symbol

    text = "["
    if atom.isotope:
        text += str(atom.isotope)
    text += symbol
    if atom.h:
        text += "H" if atom.h == 1 else f"H{atom.h}"
    if atom.charge:
        sign = "+" if atom.charge > 0 else "-"
        text += sign if abs(atom.charge) == 1 else f"{sign}{abs(atom.charge)}"
    return text + "]"


def _bond_text(view: _View, a: int, b: int, order: BondOrder, ring_pairs) -> str:
    if order is BondOrder.DOUBLE:
        return "="
    if order is BondOrder.TRIPLE:
        return "#"
    both_aromatic = view.atoms[a].aromatic and view.atoms[b].aromatic
    if order is BondOrder.AROMATIC:
        return "" if both_aromatic and frozenset((a, b)) in ring_pairs else ":"
    return "-" if both_aromatic else ""


def _write(view: _View, ranks: List[int]) -> str:
    n = len(view.atoms)
    start = min(range(n), key=lambda i: ranks[i])
    neighbors = [sorted(view.adjacency[i], key=lambda t: ranks[t[0]]) for i in range(n)]

    graph = nx.Graph()
    graph.add_nodes_from(range(n))
    graph.add_edges_from((a, b) for a, b, _ in view.bonds)
    bridges = {frozenset(e) for e in nx.bridges(graph)}
    ring_pairs = {frozenset((a, b)) for a, b, _ in view.bonds} - bridges

    # pass 1: spanning tree plus ring-closure bonds (opened at the ancestor)
    visited = [False] * n
    children: List[List[Tuple[int, BondOrder]]] = [[] for _ in range(n)]
    openings: List[List[Tuple[int, BondOrder]]] = [[] for _ in range(n)]
    closings: List[List[int]] = [[] for _ in range(n)]
    seen_rings = set()

    def visit(atom: int, parent: int) -> None:
        visited[atom] = True
        for nbr, bond_order in neighbors[atom]:
            if nbr == parent:
                continue
            if not visited[nbr]:
                children[atom].append((nbr, bond_order))
                visit(nbr, atom)
            else:
                key = frozenset((atom, nbr))
                if key not in seen_rings:
                    seen_rings.add(key)
                    openings[nbr].append((atom, bond_order))
                    closings[atom].append(nbr)

    visit(start, -1)

    # pass 2: emit, reusing the lowest free ring digit
    digits: Dict[frozenset, int] = {}
    in_use = set()
    out: List[str] = []

    def ring_label(d: int) -> str:
        return str(d) if d < 10 else f"%{d:02d}"

    def emit(atom: int) -> None:
        out.append(_atom_text(view, atom))
        released = []
        for other in sorted(closings[atom], key=lambda x: ranks[x]):
            d = digits.pop(frozenset((atom, other)))
            out.append(ring_label(d))
            released.append(d)
        for other, bond_order in sorted(openings[atom], key=lambda t: ranks[t[0]]):
            d = min(k for k in range(1, 100) if k not in in_use)
            in_use.add(d)
            digits[frozenset((atom, other))] = d
            out.append(_bond_text(view, atom, other, bond_order, ring_pairs) + ring_label(d))
        in_use.difference_update(released)
        kids = children[atom]
        for k, (child, bond_order) in enumerate(kids):
            branch = k < len(kids) - 1
            if branch:
                out.append("(")
            out.append(_bond_text(view, atom, child, bond_order, ring_pairs))
            emit(child)
            if branch:
                out.append(")")

    emit(start)
    return "".join(out)


def _search(view: _View, ranks: List[int], budget: List[int]) -> str:
    tied = _lowest_tie(ranks)
    if tied is None:
        budget[0] -= 1
        return _write(view, ranks)
    best: Optional[str] = None
    for k, chosen in enumerate(tied):
        if k > 0 and budget[0] <= 0:
            break
        text = _search(view, _promote(view, ranks, chosen), budget)
        if best is None or text < best:
            best = text
    return best


def write_canonical(mol: Union[Molecule, PerceivedMolecule], subset: Iterable[int]) -> str:
    """Deterministic SMILES-like string for a connected atom subset.

    Bonds leaving the subset are written as ``*`` attachment atoms. Stereo
    marks are not written.

    Raises:
        DisconnectedSubset: If the subset is empty, out of range or disconnected
    """
    view = _build_view(_as_perceived(mol), subset)
    return _search(view, _initial_ranks(view), [MAX_TIE_LEAVES])


def canonical_smiles(mol: Union[Molecule, PerceivedMolecule]) -> str:
    """Canonical string of a whole molecule."""
    pmol = _as_perceived(mol)
    return write_canonical(pmol, range(pmol.n_atoms))
