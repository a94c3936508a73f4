"""Retrosynthetic fragmentation into motifs.

Two fragmenters are provided:

* ``brics``: BRICS cleavage of acyclic single bonds whose endpoints match a
  compatible environment pair, followed by two extra cuts inside every BRICS
  fragment: bonds between a ring atom and a non-ring atom, and every bond of
  a non-ring atom with three or more heavy neighbors (that atom becomes its
  own fragment).
* ``rings``: every ring system, every acyclic bond and every isolated atom is
  a motif; motifs may share atoms.

Hydrogen atoms written explicitly are never fragment members; they are
folded into their heavy neighbor when motifs are written.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple, Union

import networkx as nx

from .canonical import write_canonical
from .errors import RuleTableError
from .molecule import BondOrder
from .perception import PerceivedMolecule

logger = logging.getLogger(__name__)

RULES_VERSION = 1
FRAGMENTERS = ("brics", "rings")

_BOND_NAMES = {o.value: o for o in BondOrder}


# --- rule table -----------------------------------------------------------------


@dataclass(frozen=True)
class NeighborSpec:
    element: Optional[FrozenSet[str]] = None
    element_not: Optional[FrozenSet[str]] = None
    aromatic: Optional[bool] = None
    bond: Optional[BondOrder] = None
    ring_bond: Optional[bool] = None
    carbonyl: Optional[bool] = None
    count: int = 1


@dataclass(frozen=True)
class Environment:
    env_id: str
    description: str
    element: FrozenSet[str]
    aromatic: Optional[bool] = None
    in_ring: Optional[bool] = None
    degree_min: int = 0
    degree_max: Optional[int] = None
    charge: Optional[int] = None
    require: Tuple[NeighborSpec, ...] = ()
    forbid: Tuple[NeighborSpec, ...] = ()


@dataclass(frozen=True)
class BricsRuleTable:
    """Environment predicates and the pairs of environments that may be cut.

    ``compatible_pairs`` maps an unordered environment pair to the bond order
    the rule applies to; it is symmetric by construction.
    """

    environments: Tuple[Environment, ...]
    compatible_pairs: Dict[FrozenSet[str], BondOrder] = field(hash=False)

    def compatible(self, env_a: str, env_b: str) -> Optional[BondOrder]:
        return self.compatible_pairs.get(frozenset((env_a, env_b)))


def _neighbor_spec(raw: Dict[str, Any]) -> NeighborSpec:
    unknown = set(raw) - {"element", "element_not", "aromatic", "bond", "ring_bond", "carbonyl",
                          "count"}
    if unknown:
        raise RuleTableError(f"unknown neighbor keys {sorted(unknown)}")
    bond = raw.get("bond")
    if bond is not None and bond not in _BOND_NAMES:
        raise RuleTableError(f"unknown bond order {bond!r}")
    return NeighborSpec(
        element=frozenset(raw["element"]) if "element" in raw else None,
        element_not=frozenset(raw["element_not"]) if "element_not" in raw else None,
        aromatic=raw.get("aromatic"),
        bond=_BOND_NAMES[bond] if bond else None,
        ring_bond=raw.get("ring_bond"),
        carbonyl=raw.get("carbonyl"),
        count=int(raw.get("count", 1)),
    )


def parse_rule_table(data: Dict[str, Any]) -> BricsRuleTable:
    """Validate and build a rule table from its JSON form."""
    if data.get("version") != RULES_VERSION:
        raise RuleTableError(f"unsupported BRICS rule table version {data.get('version')!r}")
    try:
        environments = []
        for raw in data["environments"]:
            atom = raw["atom"]
            environments.append(
                Environment(
                    env_id=str(raw["env_id"]),
                    description=raw.get("description", ""),
                    element=frozenset(atom["element"]),
                    aromatic=atom.get("aromatic"),
                    in_ring=atom.get("in_ring"),
                    degree_min=int(atom.get("degree_min", 0)),
                    degree_max=atom.get("degree_max"),
                    charge=atom.get("charge"),
                    require=tuple(_neighbor_spec(s) for s in raw.get("require", [])),
                    forbid=tuple(_neighbor_spec(s) for s in raw.get("forbid", [])),
                )
            )
        ids = {e.env_id for e in environments}
        pairs: Dict[FrozenSet[str], BondOrder] = {}
        for a, b, order in data["compatible_pairs"]:
            if a not in ids or b not in ids:
                raise RuleTableError(f"pair ({a}, {b}) names an unknown environment")
            pairs[frozenset((str(a), str(b)))] = _BOND_NAMES[order]
    except (KeyError, TypeError, ValueError) as e:
        raise RuleTableError(f"malformed BRICS rule table: {e}") from e

    if len(environments) != 16 or len(ids) != 16:
        raise RuleTableError(f"expected 16 distinct environments, found {len(ids)}")
    return BricsRuleTable(tuple(environments), pairs)


def load_rules(path: Optional[Union[str, Path]] = None) -> BricsRuleTable:
    """Load the BRICS rule table, by default the one shipped with the package.

    Raises:
        FileNotFoundError: If ``path`` does not exist
        RuleTableError: If the file is malformed or of an unknown version
    """
    if path is None:
        text = resources.files("mol2adr").joinpath("data/brics_rules.json").read_text("utf-8")
    else:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"BRICS rule file not found: {path}")
        text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise RuleTableError(f"BRICS rule file is not valid JSON: {e}") from e
    return parse_rule_table(data)


# --- environment matching -----------------------------------------------------------


def _is_carbonyl(pmol: PerceivedMolecule, atom: int) -> bool:
    mol = pmol.base
    if mol.atoms[atom].element != "C":
        return False
    return any(
        mol.atoms[nbr].element == "O" and mol.bonds[b].order is BondOrder.DOUBLE
        for nbr, b in mol.neighbors(atom)
    )


def _neighbor_matches(pmol: PerceivedMolecule, nbr: int, bond_idx: int, spec: NeighborSpec) -> bool:
    atom = pmol.base.atoms[nbr]
    bond = pmol.base.bonds[bond_idx]
    if spec.element is not None and atom.element not in spec.element:
        return False
    if spec.element_not is not None and atom.element in spec.element_not:
        return False
    if spec.aromatic is not None and atom.aromatic != spec.aromatic:
        return False
    if spec.bond is not None and bond.order is not spec.bond:
        return False
    if spec.ring_bond is not None and pmol.ring_bonds[bond_idx] != spec.ring_bond:
        return False
    if spec.carbonyl is not None and _is_carbonyl(pmol, nbr) != spec.carbonyl:
        return False
    return True


def matches_environment(pmol: PerceivedMolecule, atom: int, env: Environment) -> bool:
    spec = pmol.base.atoms[atom]
    if spec.element not in env.element:
        return False
    if env.aromatic is not None and spec.aromatic != env.aromatic:
        return False
    if env.in_ring is not None and pmol.ring_membership[atom] != env.in_ring:
        return False
    if env.charge is not None and spec.formal_charge != env.charge:
        return False
    degree = pmol.heavy_degree(atom)
    if degree < env.degree_min or (env.degree_max is not None and degree > env.degree_max):
        return False
    neighbors = pmol.base.neighbors(atom)
    for req in env.require:
        hits = sum(1 for nbr, b in neighbors if _neighbor_matches(pmol, nbr, b, req))
        if hits < req.count:
            return False
    for ban in env.forbid:
        if any(_neighbor_matches(pmol, nbr, b, ban) for nbr, b in neighbors):
            return False
    return True


def atom_environments(pmol: PerceivedMolecule, rules: BricsRuleTable) -> List[Tuple[str, ...]]:
    """Environment ids matched by every atom."""
    return [
        tuple(env.env_id for env in rules.environments if matches_environment(pmol, i, env))
        for i in range(pmol.n_atoms)
    ]


# --- cleavage -------------------------------------------------------------------------


class CleavageRule(str, Enum):
    BRICS = "brics"
    RING_SUBSTITUENT = "ring_substituent"
    BRANCH_ATOM = "branch_atom"


@dataclass(frozen=True)
class CleavableBond:
    bond: int
    rule: CleavageRule
    envs: Optional[Tuple[str, str]] = None


@dataclass(frozen=True)
class Fragment:
    """Atom set of one fragment plus its severed bonds.

    Attributes:
        atoms: Parent atom indices
        attachment_points: (atom inside the fragment, order of the severed bond)
    """

    atoms: FrozenSet[int]
    attachment_points: Tuple[Tuple[int, BondOrder], ...] = ()


@dataclass(frozen=True, order=True)
class Motif:
    canonical: str
    heavy_atom_count: int


@dataclass(frozen=True)
class Fragmentation:
    """Fragments of one molecule with their motifs and adjacency.

    ``adjacent`` holds fragment index pairs (i < j) joined by a severed bond
    (brics) or sharing an atom (rings).
    """

    fragments: Tuple[Fragment, ...]
    motifs: Tuple[Motif, ...]
    adjacent: Tuple[Tuple[int, int], ...]

    def motif_counts(self) -> Counter:
        return Counter(self.motifs)


def _heavy(pmol: PerceivedMolecule, atom: int) -> bool:
    return pmol.base.atoms[atom].atomic_number != 1


def find_brics_bonds(pmol: PerceivedMolecule, rules: BricsRuleTable) -> List[CleavableBond]:
    """Acyclic bonds whose endpoints match a compatible environment pair.

    Only single bonds are cut, so the olefin pair stays in the table without
    ever firing.
    """
    envs = atom_environments(pmol, rules)
    found = []
    for idx, bond in enumerate(pmol.base.bonds):
        if pmol.ring_bonds[idx] or bond.order is not BondOrder.SINGLE:
            continue
        if not (_heavy(pmol, bond.a) and _heavy(pmol, bond.b)):
            continue
        match = _first_pair(rules, envs[bond.a], envs[bond.b], bond.order)
        if match is not None:
            found.append(CleavableBond(idx, CleavageRule.BRICS, match))
    return found


def _first_pair(rules, envs_a, envs_b, order) -> Optional[Tuple[str, str]]:
    for ea in envs_a:
        for eb in envs_b:
            if rules.compatible(ea, eb) is order:
                return (ea, eb)
    return None


def _split(pmol: PerceivedMolecule, atoms: Set[int], cut: Set[int]) -> List[Set[int]]:
    graph = nx.Graph()
    graph.add_nodes_from(atoms)
    for idx, bond in enumerate(pmol.base.bonds):
        if idx not in cut and bond.a in atoms and bond.b in atoms:
            graph.add_edge(bond.a, bond.b)
    return [set(c) for c in nx.connected_components(graph)]


def _with_attachments(pmol: PerceivedMolecule, atoms: Set[int]) -> Fragment:
    points = []
    for atom in sorted(atoms):
        for nbr, b in pmol.base.neighbors(atom):
            if nbr not in atoms and _heavy(pmol, nbr):
                points.append((atom, pmol.base.bonds[b].order))
    return Fragment(frozenset(atoms), tuple(points))


def _ordered(frags: List[Fragment]) -> List[Fragment]:
    return sorted(frags, key=lambda f: min(f.atoms))


def brics_fragment(pmol: PerceivedMolecule, rules: BricsRuleTable) -> List[Fragment]:
    """Cut every BRICS bond at once and return the connected pieces."""
    cut = {c.bond for c in find_brics_bonds(pmol, rules)}
    heavy = set(pmol.heavy_atoms())
    return _ordered([_with_attachments(pmol, part) for part in _split(pmol, heavy, cut)])


def extra_cleavable_bonds(pmol: PerceivedMolecule) -> List[CleavableBond]:
    """Bonds cut by the ring-substituent and branch-atom rules.

    Both rules look at the parent molecule (ring membership, heavy degree),
    so applying them again changes nothing.
    """
    found = []
    for idx, bond in enumerate(pmol.base.bonds):
        if pmol.ring_bonds[idx] or not (_heavy(pmol, bond.a) and _heavy(pmol, bond.b)):
            continue
        ring_a, ring_b = pmol.ring_membership[bond.a], pmol.ring_membership[bond.b]
        if ring_a != ring_b:
            found.append(CleavableBond(idx, CleavageRule.RING_SUBSTITUENT))
            continue
        branch = any(
            not pmol.ring_membership[x] and pmol.heavy_degree(x) >= 3 for x in (bond.a, bond.b)
        )
        if branch:
            found.append(CleavableBond(idx, CleavageRule.BRANCH_ATOM))
    return found


def refine_fragments(pmol: PerceivedMolecule, frags: Sequence[Fragment]) -> List[Fragment]:
    """Apply the ring-substituent and branch-atom cuts inside each fragment."""
    cut = {c.bond for c in extra_cleavable_bonds(pmol)}
    out = []
    for frag in frags:
        for part in _split(pmol, set(frag.atoms), cut):
            out.append(_with_attachments(pmol, part))
    return _ordered(out)


def _motif(pmol: PerceivedMolecule, atoms) -> Motif:
    heavy = sum(1 for a in atoms if _heavy(pmol, a))
    return Motif(write_canonical(pmol, atoms), heavy)


def _adjacency_by_bonds(
    pmol: PerceivedMolecule, frags: Sequence[Fragment]
) -> List[Tuple[int, int]]:
    owner: Dict[int, int] = {}
    for k, frag in enumerate(frags):
        for atom in frag.atoms:
            owner[atom] = k
    pairs = set()
    for bond in pmol.base.bonds:
        ka, kb = owner.get(bond.a), owner.get(bond.b)
        if ka is not None and kb is not None and ka != kb:
            pairs.add((min(ka, kb), max(ka, kb)))
    return sorted(pairs)


def fragment_brics(pmol: PerceivedMolecule, rules: BricsRuleTable) -> Fragmentation:
    frags = refine_fragments(pmol, brics_fragment(pmol, rules))
    motifs = tuple(_motif(pmol, f.atoms) for f in frags)
    return Fragmentation(tuple(frags), motifs, tuple(_adjacency_by_bonds(pmol, frags)))


def fragment_rings_and_bonds(pmol: PerceivedMolecule) -> Fragmentation:
    """Ring systems, acyclic bonds and isolated atoms as (overlapping) motifs."""
    heavy = set(pmol.heavy_atoms())
    ring_bonds = {i for i, r in enumerate(pmol.ring_bonds) if r}
    ring_graph = nx.Graph()
    for i in ring_bonds:
        bond = pmol.base.bonds[i]
        if bond.a in heavy and bond.b in heavy:
            ring_graph.add_edge(bond.a, bond.b)

    pieces: List[Set[int]] = [set(c) for c in nx.connected_components(ring_graph)]
    for idx, bond in enumerate(pmol.base.bonds):
        if idx not in ring_bonds and bond.a in heavy and bond.b in heavy:
            pieces.append({bond.a, bond.b})
    covered = set().union(*pieces) if pieces else set()
    pieces.extend({atom} for atom in sorted(heavy - covered))

    frags = sorted(
        (_with_attachments(pmol, p) for p in pieces), key=lambda f: (min(f.atoms), len(f.atoms))
    )
    adjacent = [
        (i, j)
        for i in range(len(frags))
        for j in range(i + 1, len(frags))
        if frags[i].atoms & frags[j].atoms
    ]
    motifs = tuple(_motif(pmol, f.atoms) for f in frags)
    return Fragmentation(tuple(frags), motifs, tuple(adjacent))


def fragment(
    pmol: PerceivedMolecule, rules: Optional[BricsRuleTable] = None, method: str = "brics"
) -> Fragmentation:
    """Fragment one molecule with the named method."""
    if method == "brics":
        return fragment_brics(pmol, rules if rules is not None else load_rules())
    if method == "rings":
        return fragment_rings_and_bonds(pmol)
    raise ValueError(f"unknown fragmenter {method!r}; expected one of {FRAGMENTERS}")


def motifs_of(pmol: PerceivedMolecule, rules: BricsRuleTable) -> Counter:
    """Multiset of motifs produced by BRICS plus the two extra rules."""
    return fragment_brics(pmol, rules).motif_counts()
