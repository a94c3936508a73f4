"""SMILES reader.

Supported subset: organic-subset atoms (B C N O P S F Cl Br I and their
aromatic lowercase forms), bracket atoms with isotope, chirality (@, @@),
hydrogen count and charge, bonds ``- = # : / \\`` or implicit, branches,
ring closures (single digits and ``%nn``). Dot-separated components are
rejected.
"""

import logging
import re
from dataclasses import replace
from typing import Dict, List, Optional, Tuple

import networkx as nx

from .elements import AROMATIC_SYMBOLS, ORGANIC_SUBSET, lookup
from .errors import (
    BondOrderMismatch,
    EmptyInput,
    MultiComponentInput,
    SmilesSyntaxError,
    UnbalancedParenthesis,
    UnclosedRingBond,
    UnknownElement,
)
from .molecule import Atom, Bond, BondOrder, BondStereo, Chirality, Molecule

logger = logging.getLogger(__name__)

BRACKET_ATOM = re.compile(
    r"\[(?P<isotope>\d+)?"
    r"(?P<element>[A-Z][a-z]?|se|as|[bcnops])"
    r"(?P<chiral>@@|@TH[12]|@)?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>[+-](?:\d+|\++|-+)?)?"
    r"(?::(?P<atom_class>\d+))?\]"
)

_BOND_SYMBOLS = {
    "-": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
    "/": BondOrder.SINGLE,
    "\\": BondOrder.SINGLE,
}
_FLIP = {"/": "\\", "\\": "/"}


class _PendingBond:
    __slots__ = ("a", "b", "symbol", "offset")

    def __init__(self, a: int, b: int, symbol: Optional[str], offset: int):
        self.a = a
        self.b = b
        self.symbol = symbol
        self.offset = offset


def _parse_charge(text: Optional[str]) -> int:
    if not text:
        return 0
    sign = 1 if text[0] == "+" else -1
    rest = text[1:]
    if not rest:
        return sign
    if rest.isdigit():
        return sign * int(rest)
    return sign * (len(rest) + 1)


class _Reader:
    """Single-pass scanner that accumulates atoms and bonds."""

    def __init__(self, text: str):
        self.text = text
        self.atoms: List[Atom] = []
        self.bonds: List[_PendingBond] = []
        self.pairs: Dict[frozenset, int] = {}
        self.rings: Dict[int, Tuple[int, Optional[str], int]] = {}

    def add_bond(self, a: int, b: int, symbol: Optional[str], offset: int) -> None:
        if a == b:
            raise SmilesSyntaxError("bond from an atom to itself", offset)
        key = frozenset((a, b))
        if key in self.pairs:
            raise SmilesSyntaxError(f"duplicate bond between atoms {a} and {b}", offset)
        self.pairs[key] = len(self.bonds)
        self.bonds.append(_PendingBond(a, b, symbol, offset))

    def read_bracket(self, pos: int) -> Tuple[Atom, int]:
        end = self.text.find("]", pos)
        if end < 0:
            raise SmilesSyntaxError("unterminated bracket atom", pos)
        match = BRACKET_ATOM.fullmatch(self.text, pos, end + 1)
        if match is None:
            symbol = re.match(r"\[\d*([A-Za-z]+)", self.text[pos:end + 1])
            if symbol and lookup(symbol.group(1)) is None:
                raise UnknownElement(f"unknown element in {self.text[pos:end + 1]!r}", pos)
            raise SmilesSyntaxError(f"malformed bracket atom {self.text[pos:end + 1]!r}", pos)

        raw = match.group("element")
        element = lookup(raw)
        if element is None:
            raise UnknownElement(f"unknown element {raw!r}", pos + 1)
        aromatic = raw.islower()

        chiral = match.group("chiral")
        if chiral in ("@", "@TH1"):
            chirality = Chirality.COUNTERCLOCKWISE
        elif chiral in ("@@", "@TH2"):
            chirality = Chirality.CLOCKWISE
        else:
            chirality = Chirality.NONE

        hcount = match.group("hcount")
        if hcount is None:
            explicit_h = 0
        else:
            explicit_h = int(hcount[1:]) if len(hcount) > 1 else 1

        atom = Atom(
            element=element.symbol,
            atomic_number=element.atomic_number,
            formal_charge=_parse_charge(match.group("charge")),
            explicit_h=explicit_h,
            isotope=int(match.group("isotope") or 0),
            aromatic=aromatic,
            chirality=chirality,
            offset=pos,
        )
        return atom, end + 1

    def read_organic(self, pos: int) -> Tuple[Atom, int]:
        two = self.text[pos:pos + 2]
        if two in ("Cl", "Br"):
            symbol, width = two, 2
        else:
            symbol, width = self.text[pos], 1
        if symbol in ORGANIC_SUBSET:
            element, aromatic = lookup(symbol), False
        elif symbol in AROMATIC_SYMBOLS and len(symbol) == 1:
            element, aromatic = lookup(symbol), True
        else:
            raise UnknownElement(f"unknown element {symbol!r}", pos)
        atom = Atom(
            element=element.symbol,
            atomic_number=element.atomic_number,
            aromatic=aromatic,
            offset=pos,
        )
        return atom, pos + width

    def run(self) -> None:
        text = self.text
        pos = 0
        prev: Optional[int] = None
        pending: Optional[Tuple[str, int]] = None
        branches: List[Tuple[int, int]] = []
        just_opened = False

        while pos < len(text):
            ch = text[pos]
            if ch == "(":
                if prev is None:
                    raise UnbalancedParenthesis("branch opened before any atom", pos)
                if pending is not None:
                    raise SmilesSyntaxError("bond symbol before branch", pending[1])
                branches.append((prev, pos))
                just_opened = True
                pos += 1
                continue
            if ch == ")":
                if not branches:
                    raise UnbalancedParenthesis("unmatched ')'", pos)
                if just_opened:
                    raise SmilesSyntaxError("empty branch", pos)
                if pending is not None:
                    raise SmilesSyntaxError("dangling bond symbol", pending[1])
                prev = branches.pop()[0]
                pos += 1
                continue
            just_opened = False
            if ch in _BOND_SYMBOLS:
                if pending is not None:
                    raise SmilesSyntaxError("two consecutive bond symbols", pos)
                if prev is None:
                    raise SmilesSyntaxError("bond symbol before any atom", pos)
                pending = (ch, pos)
                pos += 1
                continue
            if ch == ".":
                raise MultiComponentInput("multi-component SMILES are not supported", pos)
            if ch.isdigit() or ch == "%":
                if prev is None:
                    raise SmilesSyntaxError("ring closure before any atom", pos)
                if ch == "%":
                    digits = text[pos + 1:pos + 3]
                    if len(digits) != 2 or not digits.isdigit():
                        raise SmilesSyntaxError("'%' must be followed by two digits", pos)
                    number, width = int(digits), 3
                else:
                    number, width = int(ch), 1
                self.ring_closure(prev, number, pending, pos)
                pending = None
                pos += width
                continue
            if ch == "[":
                atom, pos_next = self.read_bracket(pos)
            elif ch.isalpha() or ch == "*":
                atom, pos_next = self.read_organic(pos)
            else:
                raise SmilesSyntaxError(f"unexpected character {ch!r}", pos)

            idx = len(self.atoms)
            self.atoms.append(atom)
            if prev is not None:
                symbol, offset = pending if pending else (None, pos)
                self.add_bond(prev, idx, symbol, offset)
            pending = None
            prev = idx
            pos = pos_next

        if pending is not None:
            raise SmilesSyntaxError("dangling bond symbol", pending[1])
        if branches:
            raise UnbalancedParenthesis("unclosed '('", branches[-1][1])
        if self.rings:
            number, (_, _, offset) = min(self.rings.items(), key=lambda kv: kv[1][2])
            raise UnclosedRingBond(f"ring bond {number} never closed", offset)

    def ring_closure(self, atom: int, number: int, pending, pos: int) -> None:
        symbol = pending[0] if pending else None
        if number not in self.rings:
            self.rings[number] = (atom, symbol, pos)
            return
        opener, open_symbol, open_pos = self.rings.pop(number)
        if open_symbol and symbol:
            if _BOND_SYMBOLS[open_symbol] != _BOND_SYMBOLS[symbol]:
                raise BondOrderMismatch(
                    f"ring bond {number} written as {open_symbol!r} and {symbol!r}", pos
                )
        chosen = open_symbol or symbol
        if chosen is not None and chosen in _FLIP and open_symbol is None:
            # written at the closing atom: express it from the opener's side
            chosen = _FLIP[chosen]
        self.add_bond(opener, atom, chosen, open_pos)


def _resolve_orders(atoms: List[Atom], pending: List[_PendingBond]) -> List[Bond]:
    bonds = []
    for p in pending:
        if p.symbol is None:
            aromatic = atoms[p.a].aromatic and atoms[p.b].aromatic
            order = BondOrder.AROMATIC if aromatic else BondOrder.SINGLE
        else:
            order = _BOND_SYMBOLS[p.symbol]
            if order is BondOrder.AROMATIC and not (atoms[p.a].aromatic and atoms[p.b].aromatic):
                raise BondOrderMismatch("aromatic bond between non-aromatic atoms", p.offset)
        bonds.append(Bond(p.a, p.b, order))

    # Implicit bonds between aromatic atoms of different rings are single.
    graph = nx.Graph()
    graph.add_nodes_from(range(len(atoms)))
    graph.add_edges_from((b.a, b.b) for b in bonds)
    bridges = {frozenset(e) for e in nx.bridges(graph)}
    for i, (bond, p) in enumerate(zip(bonds, pending)):
        if bond.order is BondOrder.AROMATIC and p.symbol is None:
            if frozenset((bond.a, bond.b)) in bridges:
                bonds[i] = replace(bond, order=BondOrder.SINGLE)
    return bonds


def _assign_double_bond_stereo(bonds: List[Bond], pending: List[_PendingBond]) -> List[Bond]:
    # direction of each '/' or '\' bond as seen from each endpoint
    marks: Dict[int, List[Tuple[int, str]]] = {}
    for p in pending:
        if p.symbol in _FLIP:
            marks.setdefault(p.a, []).append((p.b, p.symbol))
            marks.setdefault(p.b, []).append((p.a, p.symbol))
    if not marks:
        return bonds

    written = {frozenset((p.a, p.b)): (p.a, p.b) for p in pending}
    for i, bond in enumerate(bonds):
        if bond.order is not BondOrder.DOUBLE:
            continue
        a, b = written[frozenset((bond.a, bond.b))]
        side_a = [(x, s) for x, s in marks.get(a, []) if x != b]
        side_b = [(x, s) for x, s in marks.get(b, []) if x != a]
        if not side_a or not side_b:
            continue
        x, sym_a = side_a[0]
        y, sym_b = side_b[0]
        first_a = written[frozenset((x, a))]
        first_b = written[frozenset((b, y))]
        dir_a = sym_a if first_a == (x, a) else _FLIP[sym_a]
        dir_b = sym_b if first_b == (b, y) else _FLIP[sym_b]
        stereo = BondStereo.TRANS if dir_a == dir_b else BondStereo.CIS
        bonds[i] = replace(bond, stereo=stereo)
    return bonds


def parse_smiles(text: str) -> Molecule:
    """Parse a single-component SMILES string.

    Args:
        text: SMILES string (ASCII, non-empty)

    Returns:
        The parsed molecule; ``source_text`` is ``text`` verbatim

    Raises:
        EmptyInput, UnbalancedParenthesis, UnclosedRingBond, UnknownElement,
        MultiComponentInput, BondOrderMismatch, SmilesSyntaxError
    """
    if not isinstance(text, str) or not text.strip():
        raise EmptyInput("empty SMILES string", 0)
    for pos, ch in enumerate(text):
        if ord(ch) > 127 or ch.isspace():
            raise SmilesSyntaxError(f"unexpected character {ch!r}", pos)

    reader = _Reader(text)
    reader.run()
    if not reader.atoms:
        raise EmptyInput("SMILES contains no atoms", 0)

    bonds = _resolve_orders(reader.atoms, reader.bonds)
    bonds = _assign_double_bond_stereo(bonds, reader.bonds)
    mol = Molecule(tuple(reader.atoms), tuple(bonds), source_text=text)
    logger.debug(f"Parsed {text!r}: {mol.n_atoms} atoms, {len(mol.bonds)} bonds")
    return mol
