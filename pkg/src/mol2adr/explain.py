"""Motif contribution analysis.

A drug's label probabilities are recorded along a teacher-forced pass; each
motif is then masked out of the drug's association-graph node (bag-of-words
entry zeroed, molecule-motif edge dropped) and the pass repeated. The
contribution of a motif to a label is the drop in that label's probability.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .codec import BOS, EOS, N_SPECIALS, encode_targets
from .core import PreparedDrug, Predictor, encode
from .errors import UnknownDrug
from .motif_graph import AssociationGraph

logger = logging.getLogger(__name__)

CSV_HEADER = ("motif_index", "motif_canonical", "label_id", "label_name", "score")


@dataclass
class ContributionMatrix:
    drug_id: str
    motif_indices: List[int]  # rows
    label_ids: List[int]  # columns
    baseline: np.ndarray  # (n_labels,) probabilities with every motif present
    scores: np.ndarray  # (n_motifs, n_labels)
    joint: Optional[np.ndarray] = None  # (n_labels,) all listed motifs masked together

    def row(self, motif_index: int) -> np.ndarray:
        """Scores of one motif; all zero for a motif the drug does not contain."""
        if motif_index not in self.motif_indices:
            return np.zeros(len(self.label_ids))
        return self.scores[self.motif_indices.index(motif_index)]

    def write_csv(self, path: Union[str, Path], predictor: Predictor) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r, motif in enumerate(self.motif_indices):
                canonical = predictor.vocab.entries[motif].canonical
                for c, label in enumerate(self.label_ids):
                    writer.writerow(
                        [motif, canonical, label, predictor.codec.decode(label),
                         f"{self.scores[r, c]:.6f}"]
                    )


def label_probabilities(
    predictor: Predictor,
    graph: AssociationGraph,
    drug: PreparedDrug,
    tokens: Sequence[int],
) -> np.ndarray:
    """Probability of ``tokens[t + 1]`` at decoder step ``t`` under teacher forcing."""
    node = graph.molecule_node(drug.drug_id)
    memory = encode(predictor.model, graph, [predictor.inputs(drug)], [node])
    logits = predictor.model.decode(np.asarray([tokens[:-1]]), memory).data[0]
    shifted = logits - logits.max(axis=-1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=-1, keepdims=True)
    return probs[np.arange(len(tokens) - 1), np.asarray(tokens[1:])]


def _scored_sequence(predictor: Predictor, drug: PreparedDrug, graph: AssociationGraph):
    """``BOS + labels + EOS`` to score: ground truth when known, else the generated labels."""
    if drug.record.labels:
        encoded = encode_targets(drug.record.labels, predictor.codec, predictor.config.max_len)
        labels = encoded[1 : encoded.index(EOS)]
    else:
        node = graph.molecule_node(drug.drug_id)
        memory = encode(predictor.model, graph, [predictor.inputs(drug)], [node])
        labels = predictor.model.generate(memory, allow_duplicates=False)[0]
    return [BOS] + labels + [EOS]


def contribution_analysis(
    predictor: Predictor,
    drug: PreparedDrug,
    motifs: Optional[Sequence[int]] = None,
    joint: bool = False,
) -> ContributionMatrix:
    """Per-motif (and optionally joint) probability drops for each scored label.

    Args:
        predictor: Loaded run
        drug: The drug to explain; training drugs reuse their graph node,
            others are attached as queries
        motifs: Vocabulary indices to mask one at a time (default: every
            vocabulary motif the drug contains)
        joint: Also mask all of ``motifs`` together

    Returns:
        Rows for ``motifs``, columns for the real labels of the scored sequence
    """
    graph = predictor.attach([drug])
    node = graph.molecule_node(drug.drug_id)
    if motifs is None:
        counts = drug.corpus_entry().motif_counts
        motifs = sorted(predictor.vocab.index_of(k) for k in counts if k in predictor.vocab)
    motifs = list(motifs)

    tokens = _scored_sequence(predictor, drug, graph)
    keep = [t for t in range(len(tokens) - 1) if tokens[t + 1] >= N_SPECIALS]
    label_ids = [tokens[t + 1] for t in keep]
    baseline = label_probabilities(predictor, graph, drug, tokens)[keep]

    scores = np.zeros((len(motifs), len(keep)))
    for r, motif in enumerate(motifs):
        masked = label_probabilities(predictor, graph.without_motifs(node, [motif]), drug, tokens)
        scores[r] = baseline - masked[keep]
    joint_scores = None
    if joint and motifs:
        masked = label_probabilities(predictor, graph.without_motifs(node, motifs), drug, tokens)
        joint_scores = baseline - masked[keep]
    logger.info(f"Scored {len(motifs)} motifs against {len(keep)} labels for {drug.drug_id!r}")
    return ContributionMatrix(drug.drug_id, motifs, label_ids, baseline, scores, joint_scores)


def explain_drug(
    predictor: Predictor, drugs: Dict[str, PreparedDrug], drug_id: str, joint: bool = False
) -> ContributionMatrix:
    """
    Raises:
        UnknownDrug: If ``drug_id`` is not among ``drugs``
    """
    if drug_id not in drugs:
        raise UnknownDrug(f"drug {drug_id!r} is not in the dataset")
    return contribution_analysis(predictor, drugs[drug_id], joint=joint)
