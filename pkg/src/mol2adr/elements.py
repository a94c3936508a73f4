"""Periodic table data used by parsing, perception and featurization."""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple


@dataclass(frozen=True)
class Element:
    """Immutable element record.

    Attributes:
        atomic_number: Proton count
        symbol: Element symbol ("C", "Cl")
        mass: Standard atomic weight
        valences: Allowed neutral valences, smallest first; empty when the
            element has no meaningful default valence (most metals)
    """

    atomic_number: int
    symbol: str
    mass: float
    valences: Tuple[int, ...] = ()


_TABLE = [
    Element(1, "H", 1.008, (1,)),
    Element(2, "He", 4.0026),
    Element(3, "Li", 6.94, (1,)),
    Element(4, "Be", 9.0122, (2,)),
    Element(5, "B", 10.81, (3,)),
    Element(6, "C", 12.011, (4,)),
    Element(7, "N", 14.007, (3, 5)),
    Element(8, "O", 15.999, (2,)),
    Element(9, "F", 18.998, (1,)),
    Element(10, "Ne", 20.180),
    Element(11, "Na", 22.990, (1,)),
    Element(12, "Mg", 24.305, (2,)),
    Element(13, "Al", 26.982, (3,)),
    Element(14, "Si", 28.085, (4,)),
    Element(15, "P", 30.974, (3, 5)),
    Element(16, "S", 32.06, (2, 4, 6)),
    Element(17, "Cl", 35.45, (1,)),
    Element(18, "Ar", 39.948),
    Element(19, "K", 39.098, (1,)),
    Element(20, "Ca", 40.078, (2,)),
    Element(21, "Sc", 44.956),
    Element(22, "Ti", 47.867),
    Element(23, "V", 50.942),
    Element(24, "Cr", 51.996),
    Element(25, "Mn", 54.938),
    Element(26, "Fe", 55.845),
    Element(27, "Co", 58.933),
    Element(28, "Ni", 58.693),
    Element(29, "Cu", 63.546),
    Element(30, "Zn", 65.38),
    Element(31, "Ga", 69.723),
    Element(32, "Ge", 72.630, (4,)),
    Element(33, "As", 74.922, (3, 5)),
    Element(34, "Se", 78.971, (2, 4, 6)),
    Element(35, "Br", 79.904, (1,)),
    Element(36, "Kr", 83.798),
    Element(37, "Rb", 85.468, (1,)),
    Element(38, "Sr", 87.62, (2,)),
    Element(39, "Y", 88.906),
    Element(40, "Zr", 91.224),
    Element(41, "Nb", 92.906),
    Element(42, "Mo", 95.95),
    Element(43, "Tc", 98.0),
    Element(44, "Ru", 101.07),
    Element(45, "Rh", 102.91),
    Element(46, "Pd", 106.42),
    Element(47, "Ag", 107.87),
    Element(48, "Cd", 112.41),
    Element(49, "In", 114.82),
    Element(50, "Sn", 118.71),
    Element(51, "Sb", 121.76, (3, 5)),
    Element(52, "Te", 127.60, (2, 4, 6)),
    Element(53, "I", 126.90, (1, 3, 5)),
    Element(54, "Xe", 131.29),
    Element(55, "Cs", 132.91, (1,)),
    Element(56, "Ba", 137.33, (2,)),
    Element(57, "La", 138.91),
    Element(64, "Gd", 157.25),
    Element(71, "Lu", 174.97),
    Element(74, "W", 183.84),
    Element(75, "Re", 186.21),
    Element(76, "Os", 190.23),
    Element(77, "Ir", 192.22),
    Element(78, "Pt", 195.08),
    Element(79, "Au", 196.97),
    Element(80, "Hg", 200.59),
    Element(81, "Tl", 204.38),
    Element(82, "Pb", 207.2),
    Element(83, "Bi", 208.98),
    Element(88, "Ra", 226.0),
    Element(92, "U", 238.03),
]

ELEMENTS: Dict[str, Element] = {e.symbol: e for e in _TABLE}
BY_NUMBER: Dict[int, Element] = {e.atomic_number: e for e in _TABLE}

# Atoms that may appear outside brackets.
ORGANIC_SUBSET = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
AROMATIC_SYMBOLS = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S",
                    "se": "Se", "as": "As"}

# Aromatic atoms whose ring contributes one extra bond to the valence sum.
_PI_DONORS = {"B", "C", "N", "P", "As"}
_METALS = {"Li", "Na", "K", "Rb", "Cs", "Be", "Mg", "Ca", "Sr", "Ba", "Al"}
_TETRELS = {"C", "Si", "Ge"}


def lookup(symbol: str) -> Optional[Element]:
    """Return the element for a symbol, accepting aromatic lowercase forms."""
    if symbol in ELEMENTS:
        return ELEMENTS[symbol]
    if symbol in AROMATIC_SYMBOLS:
        return ELEMENTS[AROMATIC_SYMBOLS[symbol]]
    return None


def adjusted_valences(symbol: str, charge: int) -> Tuple[int, ...]:
    """Allowed valences of an element after accounting for formal charge.

    Group 15-17 elements gain a bond per positive charge (N+ -> 4), carbon
    loses one per charge of either sign, boron and metals lose one per
    positive charge.
    """
    element = ELEMENTS.get(symbol)
    if element is None or not element.valences:
        return ()
    if charge == 0:
        return element.valences
    if symbol in _TETRELS:
        shift = -abs(charge)
    elif symbol == "B" or symbol in _METALS:
        shift = -charge
    else:
        shift = charge
    return tuple(v + shift for v in element.valences if v + shift >= 0)


def contributes_pi(symbol: str) -> bool:
    return symbol in _PI_DONORS


def atomic_mass(symbol: str, isotope: int = 0) -> float:
    """Standard atomic weight, or the isotope mass number when one is given."""
    if isotope:
        return float(isotope)
    return ELEMENTS[symbol].mass
