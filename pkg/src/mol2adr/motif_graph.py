"""Motif vocabulary and the molecule-motif association graph.

Molecule-motif edges carry ``tf * ln(N / (1 + df))``; motif-motif edges carry
the positive part of the pointwise mutual information of molecule-level
co-occurrence and exist only for motif pairs joined by a severed bond (or
sharing an atom, for overlapping fragmenters) in at least one molecule.
"""

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .errors import DomainError, EmptyCorpus, NoKnownMotif, UnknownMoleculeNode, UnknownMotif
from .fragment import Fragmentation, Motif

logger = logging.getLogger(__name__)

VOCAB_VERSION = 1
GRAPH_VERSION = 1

MOTIF = "motif"
MOLECULE = "molecule"
MOL_MOTIF = "mol_motif"
MOTIF_MOTIF = "motif_motif"


def tfidf_weight(tf: int, df: int, n: int) -> float:
    """Term frequency times ``ln(n / (1 + df))``; negative for ubiquitous motifs."""
    if tf < 1 or df < 1 or n < 1:
        raise DomainError(f"tfidf_weight needs tf, df, n >= 1 (got {tf}, {df}, {n})")
    return tf * math.log(n / (1 + df))


def pmi_weight(c_ij: int, c_i: int, c_j: int, n: int) -> float:
    """Pointwise mutual information clamped at zero."""
    if c_i < 1 or c_j < 1 or not (0 <= c_ij <= min(c_i, c_j) <= n):
        raise DomainError(f"pmi_weight domain violated (c_ij={c_ij}, c_i={c_i}, c_j={c_j}, n={n})")
    if c_ij == 0:
        return 0.0
    return max(0.0, math.log((c_ij / n) / ((c_i / n) * (c_j / n))))


def _key(motif: Union[Motif, str]) -> str:
    return motif.canonical if isinstance(motif, Motif) else motif


@dataclass
class CorpusMolecule:
    """Per-molecule statistics feeding the vocabulary and the graph.

    Attributes:
        drug_id: Molecule identifier
        motif_counts: Canonical motif string -> multiplicity
        adjacent_pairs: Unordered motif pairs that touch inside this molecule
    """

    drug_id: str
    motif_counts: Counter
    adjacent_pairs: Set[FrozenSet[str]] = field(default_factory=set)

    @classmethod
    def from_fragmentation(cls, drug_id: str, frag: Fragmentation) -> "CorpusMolecule":
        counts = Counter(m.canonical for m in frag.motifs)
        pairs = set()
        for i, j in frag.adjacent:
            a, b = frag.motifs[i].canonical, frag.motifs[j].canonical
            if a != b:
                pairs.add(frozenset((a, b)))
        return cls(drug_id, counts, pairs)


@dataclass(frozen=True)
class VocabEntry:
    canonical: str
    index: int
    df: int
    avg_tfidf: float


@dataclass
class MotifVocabulary:
    entries: List[VocabEntry]
    n_molecules: int
    pruned: FrozenSet[str] = frozenset()

    def __post_init__(self):
        self._by_key = {e.canonical: e for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, motif) -> bool:
        return _key(motif) in self._by_key

    def get(self, motif) -> Optional[VocabEntry]:
        return self._by_key.get(_key(motif))

    def index_of(self, motif) -> int:
        entry = self.get(motif)
        if entry is None:
            raise UnknownMotif(f"motif {_key(motif)!r} is not in the vocabulary")
        return entry.index

    def bag_of_words(self, counts: Mapping) -> Tuple[np.ndarray, int]:
        """Count vector over the vocabulary and the number of dropped motif kinds."""
        vec = np.zeros(len(self), dtype=np.float64)
        dropped = 0
        for motif, count in counts.items():
            entry = self.get(motif)
            if entry is None:
                dropped += 1
                continue
            vec[entry.index] += count
        return vec, dropped

    def save(self, path: Union[str, Path]) -> None:
        """Write ``vocab.jsonl``: a header line then one record per motif."""
        lines = [json.dumps({"version": VOCAB_VERSION, "n_molecules": self.n_molecules,
                             "pruned": sorted(self.pruned)}, sort_keys=True)]
        for e in self.entries:
            lines.append(
                json.dumps(
                    {"canonical": e.canonical, "index": e.index, "df": e.df,
                     "avg_tfidf": round(e.avg_tfidf, 10)},
                    sort_keys=True,
                )
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MotifVocabulary":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Vocabulary file not found: {path}")
        lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
        header = json.loads(lines[0])
        if header.get("version") != VOCAB_VERSION:
            raise ValueError(f"unsupported vocabulary version {header.get('version')!r}")
        entries = []
        for line in lines[1:]:
            rec = json.loads(line)
            entries.append(VocabEntry(rec["canonical"], rec["index"], rec["df"], rec["avg_tfidf"]))
        entries.sort(key=lambda e: e.index)
        return cls(entries, header["n_molecules"], frozenset(header.get("pruned", [])))


def build_vocabulary(
    corpus: Sequence[CorpusMolecule], prune_threshold: Optional[float] = None
) -> MotifVocabulary:
    """Deduplicate motifs, count document frequency and average TF-IDF.

    Indices follow descending df, ties broken by the canonical string, so the
    result does not depend on corpus order.

    Raises:
        EmptyCorpus: If the corpus has no molecules or no motifs
    """
    n = len(corpus)
    if n == 0:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    df: Counter = Counter()
    for mol in corpus:
        df.update(set(mol.motif_counts))
    if not df:
        raise EmptyCorpus("corpus molecules produced no motifs")

    totals: Dict[str, float] = {}
    for key in sorted(df):
        values = sorted(
            tfidf_weight(mol.motif_counts[key], df[key], n)
            for mol in corpus
            if mol.motif_counts.get(key, 0) > 0
        )
        totals[key] = math.fsum(values) / len(values)

    keys = sorted(df, key=lambda k: (-df[k], k))
    pruned = set()
    if prune_threshold is not None:
        pruned = {k for k in keys if totals[k] < prune_threshold}
        keys = [k for k in keys if k not in pruned]
        logger.info(f"Pruned {len(pruned)} motifs below avg TF-IDF {prune_threshold}")
        if not keys:
            raise EmptyCorpus(f"every motif falls below prune threshold {prune_threshold}")
    entries = [VocabEntry(k, i, df[k], totals[k]) for i, k in enumerate(keys)]
    return MotifVocabulary(entries, n, frozenset(pruned))


@dataclass(frozen=True)
class GraphNode:
    kind: str  # "motif" | "molecule"
    key: str  # canonical string or drug id


@dataclass(frozen=True)
class GraphEdge:
    u: int
    v: int
    kind: str
    weight: float
    receive_only: bool = False  # messages flow u -> v only


@dataclass
class AssociationGraph:
    nodes: List[GraphNode]
    edges: List[GraphEdge]
    node_init: np.ndarray  # (n_nodes, |vocab|)
    n_molecules: int
    stats: Dict = field(default_factory=dict)
    oov_dropped: int = 0

    def __post_init__(self):
        self._molecules = {n.key: i for i, n in enumerate(self.nodes) if n.kind == MOLECULE}

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def molecule_node(self, drug_id: str) -> int:
        if drug_id not in self._molecules:
            raise UnknownMoleculeNode(f"drug {drug_id!r} has no node in the association graph")
        return self._molecules[drug_id]

    def has_molecule(self, drug_id: str) -> bool:
        return drug_id in self._molecules

    def copy(self) -> "AssociationGraph":
        return AssociationGraph(
            list(self.nodes), list(self.edges), self.node_init.copy(), self.n_molecules,
            dict(self.stats), self.oov_dropped,
        )

    def message_edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Directed (source, target) pairs and their weights for message passing."""
        pairs = []
        weights = []
        for e in self.edges:
            pairs.append((e.u, e.v))
            weights.append(e.weight)
            if not e.receive_only:
                pairs.append((e.v, e.u))
                weights.append(e.weight)
        index = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        return index, np.asarray(weights, dtype=np.float64).reshape(-1, 1)

    def edges_of(self, node: int) -> List[GraphEdge]:
        return [e for e in self.edges if node in (e.u, e.v)]

    def without_motifs(self, node: int, motif_indices: Iterable[int]) -> "AssociationGraph":
        """Copy in which ``node`` loses the given bag-of-words entries and motif edges."""
        masked = set(motif_indices)
        g = self.copy()
        for idx in masked:
            g.node_init[node, idx] = 0.0
        g.edges = [
            e for e in g.edges
            if not (e.kind == MOL_MOTIF and node in (e.u, e.v) and (e.u + e.v - node) in masked)
        ]
        return g

    def to_json(self) -> Dict:
        return {
            "version": GRAPH_VERSION,
            "n_molecules": self.n_molecules,
            "nodes": [{"id": i, "kind": n.kind, "key": n.key} for i, n in enumerate(self.nodes)],
            "edges": [
                {"u": e.u, "v": e.v, "kind": e.kind, "weight": round(e.weight, 10),
                 "receive_only": e.receive_only}
                for e in self.edges
            ],
            "node_init": {
                str(i): {str(j): float(x) for j, x in enumerate(row) if x}
                for i, row in enumerate(self.node_init)
                if self.nodes[i].kind == MOLECULE
            },
            "stats": self.stats,
        }

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True), encoding="utf-8")

    @classmethod
    def from_json(cls, data: Dict) -> "AssociationGraph":
        if data.get("version") != GRAPH_VERSION:
            raise ValueError(f"unsupported association graph version {data.get('version')!r}")
        nodes = [GraphNode(n["kind"], n["key"]) for n in data["nodes"]]
        n_vocab = sum(1 for n in nodes if n.kind == MOTIF)
        node_init = np.zeros((len(nodes), n_vocab), dtype=np.float64)
        for i, node in enumerate(nodes):
            if node.kind == MOTIF:
                node_init[i, i] = 1.0
        for i, row in data.get("node_init", {}).items():
            for j, x in row.items():
                node_init[int(i), int(j)] = x
        edges = [
            GraphEdge(e["u"], e["v"], e["kind"], e["weight"], e.get("receive_only", False))
            for e in data["edges"]
        ]
        return cls(nodes, edges, node_init, data["n_molecules"], data.get("stats", {}))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "AssociationGraph":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Association graph file not found: {path}")
        return cls.from_json(json.loads(path.read_text(encoding="utf-8")))


def cooccurrence_counts(corpus: Sequence[CorpusMolecule], vocab: MotifVocabulary) -> np.ndarray:
    """Molecule-level co-occurrence matrix; the diagonal holds document frequency."""
    presence = np.zeros((len(corpus), len(vocab)), dtype=np.int64)
    for row, mol in enumerate(corpus):
        for key in mol.motif_counts:
            entry = vocab.get(key)
            if entry is not None:
                presence[row, entry.index] = 1
    return presence.T @ presence


def _check_known(mol: CorpusMolecule, vocab: MotifVocabulary) -> None:
    for key in mol.motif_counts:
        if key not in vocab and key not in vocab.pruned:
            raise UnknownMotif(f"motif {key!r} of drug {mol.drug_id!r} is not in the vocabulary")


def build_association_graph(
    corpus: Sequence[CorpusMolecule], vocab: MotifVocabulary
) -> AssociationGraph:
    """Motif nodes (vocabulary order) followed by one node per corpus molecule.

    Raises:
        UnknownMotif: If a corpus motif is neither in the vocabulary nor pruned
    """
    n = vocab.n_molecules
    size = len(vocab)
    nodes = [GraphNode(MOTIF, e.canonical) for e in vocab.entries]
    rows = [np.eye(size, dtype=np.float64)] if size else []
    edges: List[GraphEdge] = []

    for mol in corpus:
        _check_known(mol, vocab)
        node_id = len(nodes)
        nodes.append(GraphNode(MOLECULE, mol.drug_id))
        bow, _ = vocab.bag_of_words(mol.motif_counts)
        rows.append(bow[None, :])
        for key in sorted(mol.motif_counts, key=lambda k: vocab.get(k).index if k in vocab else -1):
            entry = vocab.get(key)
            if entry is None:
                continue
            weight = tfidf_weight(mol.motif_counts[key], entry.df, n)
            edges.append(GraphEdge(entry.index, node_id, MOL_MOTIF, weight))

    counts = cooccurrence_counts(corpus, vocab)
    adjacent = set()
    for mol in corpus:
        for pair in mol.adjacent_pairs:
            a, b = sorted(pair)
            if a in vocab and b in vocab:
                i, j = sorted((vocab.index_of(a), vocab.index_of(b)))
                adjacent.add((i, j))
    for i, j in sorted(adjacent):
        weight = pmi_weight(int(counts[i, j]), int(counts[i, i]), int(counts[j, j]), n)
        if weight > 0:
            edges.append(GraphEdge(i, j, MOTIF_MOTIF, weight))

    node_init = np.concatenate(rows, axis=0) if rows else np.zeros((0, size))
    graph = AssociationGraph(nodes, edges, node_init, n)
    logger.info(
        f"Association graph: {size} motifs, {len(corpus)} molecules, "
        f"{sum(e.kind == MOL_MOTIF for e in edges)} mol-motif and "
        f"{sum(e.kind == MOTIF_MOTIF for e in edges)} motif-motif edges"
    )
    return graph


def attach_query_molecule(
    graph: AssociationGraph,
    vocab: MotifVocabulary,
    motifs: Mapping,
    drug_id: str = "query",
    allow_empty: bool = False,
) -> int:
    """Add a molecule node for a drug outside the training corpus.

    Edges are receive-only (motif -> query) and use the training-time df and
    N. The graph is modified in place; pass a copy to keep the original.
    With ``allow_empty`` a drug without any known motif still gets a node,
    with a zero bag of words and no edges.

    Returns:
        The new node id

    Raises:
        NoKnownMotif: If none of the query's motifs is in the vocabulary
    """
    counts = Counter({_key(k): v for k, v in motifs.items()})
    bow, dropped = vocab.bag_of_words(counts)
    if not bow.any() and not allow_empty:
        raise NoKnownMotif(
            f"drug {drug_id!r}: none of its {len(counts)} motifs is in the vocabulary"
        )
    if dropped:
        logger.warning(f"Drug {drug_id!r}: dropped {dropped} out-of-vocabulary motif(s)")
        graph.oov_dropped += dropped

    node_id = len(graph.nodes)
    graph.nodes.append(GraphNode(MOLECULE, drug_id))
    graph.node_init = np.concatenate([graph.node_init, bow[None, :]], axis=0)
    for key in sorted(counts, key=lambda k: (vocab.get(k).index if k in vocab else -1, k)):
        entry = vocab.get(key)
        if entry is None:
            continue
        weight = tfidf_weight(counts[key], entry.df, vocab.n_molecules)
        graph.edges.append(GraphEdge(entry.index, node_id, MOL_MOTIF, weight, receive_only=True))
    graph._molecules[drug_id] = node_id
    return node_id
