"""Atom-level graph tensors.

Node columns (in order):

====  ===================  ===========================================
col   feature              encoding
====  ===================  ===========================================
0     atomic number        integer, standardized
1     degree               incident bonds, standardized
2     formal charge        integer, standardized
3     chirality            none=0, clockwise=1, counterclockwise=2
4     hydrogen count       implicit + explicit, standardized
5     hybridization        other=0, sp=1, sp2=2, sp3=3
6     aromatic             0/1
7     atomic mass          standard weight or isotope, standardized
8     radical electrons    integer, standardized
====  ===================  ===========================================

Edge columns: bond type (single=0, double=1, triple=2, aromatic=3), stereo
(none=0, cis=1, trans=2), conjugated (0/1). Every bond yields two directed
rows, ``a -> b`` first.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List

import numpy as np

from .elements import atomic_mass
from .molecule import BondOrder, BondStereo, Chirality
from .perception import Hybridization, PerceivedMolecule

logger = logging.getLogger(__name__)

NODE_DIM = 9
EDGE_DIM = 3
NUMERIC_COLUMNS = (0, 1, 2, 4, 7, 8)

CHIRALITY_CODES = {Chirality.NONE: 0, Chirality.CLOCKWISE: 1, Chirality.COUNTERCLOCKWISE: 2}
HYBRIDIZATION_CODES = {
    Hybridization.OTHER: 0,
    Hybridization.SP: 1,
    Hybridization.SP2: 2,
    Hybridization.SP3: 3,
}
BOND_CODES = {BondOrder.SINGLE: 0, BondOrder.DOUBLE: 1, BondOrder.TRIPLE: 2, BondOrder.AROMATIC: 3}
STEREO_CODES = {BondStereo.NONE: 0, BondStereo.CIS: 1, BondStereo.TRANS: 2}


@dataclass
class MolecularGraphTensors:
    node_feat: np.ndarray  # (V, 9)
    edge_index: np.ndarray  # (E, 2) int, source -> target
    edge_feat: np.ndarray  # (E, 3)
    n_atoms: int


@dataclass(frozen=True)
class FeatureStats:
    """Per-column mean and standard deviation of the numeric node columns."""

    mean: tuple
    std: tuple

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": [round(float(x), 10) for x in self.mean],
                "std": [round(float(x), 10) for x in self.std],
                "columns": list(NUMERIC_COLUMNS)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureStats":
        return cls(tuple(float(x) for x in data["mean"]), tuple(float(x) for x in data["std"]))


def featurize_molecule(pmol: PerceivedMolecule) -> MolecularGraphTensors:
    """Raw (unstandardized) node and edge features of one molecule."""
    mol = pmol.base
    rows = []
    for i, atom in enumerate(mol.atoms):
        rows.append(
            [
                atom.atomic_number,
                pmol.degree[i],
                atom.formal_charge,
                CHIRALITY_CODES[atom.chirality],
                pmol.total_h(i),
                HYBRIDIZATION_CODES[pmol.hybridization[i]],
                1.0 if atom.aromatic else 0.0,
                atomic_mass(atom.element, atom.isotope),
                atom.radical_electrons,
            ]
        )
    node_feat = np.asarray(rows, dtype=np.float64).reshape(mol.n_atoms, NODE_DIM)

    index = []
    feats = []
    for bond in mol.bonds:
        row = [BOND_CODES[bond.order], STEREO_CODES[bond.stereo], 1.0 if bond.conjugated else 0.0]
        index.extend([(bond.a, bond.b), (bond.b, bond.a)])
        feats.extend([row, row])
    edge_index = np.asarray(index, dtype=np.int64).reshape(-1, 2)
    edge_feat = np.asarray(feats, dtype=np.float64).reshape(-1, EDGE_DIM)
    return MolecularGraphTensors(node_feat, edge_index, edge_feat, mol.n_atoms)


def compute_feature_stats(graphs: Iterable[MolecularGraphTensors]) -> FeatureStats:
    """Mean/std of the numeric columns over all atoms of ``graphs``.

    Columns with zero spread get std 1 so standardization is a pure shift.
    """
    stacked = [g.node_feat[:, list(NUMERIC_COLUMNS)] for g in graphs if g.n_atoms]
    if not stacked:
        width = len(NUMERIC_COLUMNS)
        return FeatureStats(tuple([0.0] * width), tuple([1.0] * width))
    values = np.concatenate(stacked, axis=0)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    std[std < 1e-12] = 1.0
    return FeatureStats(tuple(mean.tolist()), tuple(std.tolist()))


def standardize(graph: MolecularGraphTensors, stats: FeatureStats) -> MolecularGraphTensors:
    node_feat = graph.node_feat.copy()
    cols = list(NUMERIC_COLUMNS)
    node_feat[:, cols] = (node_feat[:, cols] - np.asarray(stats.mean)) / np.asarray(stats.std)
    return MolecularGraphTensors(node_feat, graph.edge_index, graph.edge_feat, graph.n_atoms)


def truncate_graph(
    graph: MolecularGraphTensors, max_atoms: int, name: str = ""
) -> MolecularGraphTensors:
    """Keep the first ``max_atoms`` atoms and the edges among them."""
    if graph.n_atoms <= max_atoms:
        return graph
    logger.warning(f"Molecule {name or '?'} has {graph.n_atoms} atoms; truncating to {max_atoms}")
    keep = (graph.edge_index[:, 0] < max_atoms) & (graph.edge_index[:, 1] < max_atoms)
    return MolecularGraphTensors(
        graph.node_feat[:max_atoms].copy(),
        graph.edge_index[keep],
        graph.edge_feat[keep],
        max_atoms,
    )


def stack_graphs(graphs: List[MolecularGraphTensors]):
    """Concatenate graphs into one disjoint union.

    Returns:
        (node_feat, edge_index, edge_feat, offsets) where ``offsets[k]`` is the
        first node row of graph ``k``
    """
    offsets = np.cumsum([0] + [g.n_atoms for g in graphs])
    node_feat = np.concatenate([g.node_feat for g in graphs], axis=0)
    edge_index = np.concatenate(
        [g.edge_index + offsets[k] for k, g in enumerate(graphs)], axis=0
    ).astype(np.int64)
    edge_feat = np.concatenate([g.edge_feat for g in graphs], axis=0)
    return node_feat, edge_index, edge_feat, offsets
