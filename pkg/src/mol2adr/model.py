"""The drug-to-ADR generator.

Two GAT stacks encode a drug: one over the atom graph (atom embeddings) and
one over the molecule-motif association graph (the molecule node's global
embedding). Atom embeddings are laid out as a sequence, each position
concatenated with the global embedding and passed through a two-layer MLP;
the result is the memory a post-norm transformer decoder cross-attends to
while it emits ADR label tokens.
"""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .codec import BOS, EOS, PAD, UNK
from .errors import CheckpointFormatError, SequenceTooLong, ShapeMismatch, TooManyAtoms
from .featurize import EDGE_DIM, NODE_DIM, MolecularGraphTensors, stack_graphs
from .layers import (
    EVAL,
    AttentionParams,
    FeedForward,
    ForwardContext,
    GatStack,
    LayerNorm,
    Linear,
    ParameterStore,
    multi_head,
)
from .motif_graph import AssociationGraph

logger = logging.getLogger(__name__)

FEATURE_MODES = ("mol+motif", "mol", "motif")


@dataclass(frozen=True)
class ModelDims:
    """Architecture hyperparameters stored alongside the weights."""

    n_tokens: int  # codec size, specials included
    n_motifs: int  # association-graph input width
    d_model: int = 128
    gat_heads: int = 2
    gat_layers: int = 2
    decoder_heads: int = 8
    num_layers: int = 3
    max_len: int = 200
    max_atoms: int = 128
    dropout: float = 0.1
    sinusoidal_pos: bool = False
    feature_mode: str = "mol+motif"

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(
                f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}"
            )
        if self.d_model % self.decoder_heads:
            raise ShapeMismatch(
                f"d_model {self.d_model} is not divisible by {self.decoder_heads} decoder heads"
            )


@dataclass
class Memory:
    values: Tensor  # (B, S, d_model)
    mask: np.ndarray  # (B, S) bool, True = real atom


@dataclass
class DecoderLayer:
    self_attn: AttentionParams
    cross_attn: AttentionParams
    ffn: FeedForward
    norm1: LayerNorm
    norm2: LayerNorm
    norm3: LayerNorm


def sinusoidal_table(length: int, width: int) -> np.ndarray:
    position = np.arange(length)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, width, 2) / width))
    table = np.zeros((length, width))
    table[:, 0::2] = np.sin(position * rates)
    table[:, 1::2] = np.cos(position * rates[: width // 2])
    return table


def causal_mask(length: int) -> np.ndarray:
    return np.tril(np.ones((length, length), dtype=bool))


class AdrGenerator:
    """Parameters plus forward passes of the full model."""

    def __init__(self, dims: ModelDims, seed: int = 0):
        self.dims = dims
        d = dims.d_model
        store = self.params = ParameterStore(np.random.default_rng(seed))

        self.mol_gat = GatStack(
            store, "gat.mol", NODE_DIM, d, EDGE_DIM, dims.gat_heads, dims.gat_layers
        )
        self.assoc_gat = GatStack(
            store, "gat.assoc", dims.n_motifs, d, 1, dims.gat_heads, dims.gat_layers
        )
        self.fusion = [
            Linear.create(store, "fusion.layer0", 2 * d, d),
            Linear.create(store, "fusion.layer1", d, d),
        ]

        self.tok_emb = store.normal("decoder.tok_emb", (dims.n_tokens, d), std=d**-0.5)
        if dims.sinusoidal_pos:
            self.pos_emb = Tensor(sinusoidal_table(dims.max_len + 1, d), name="decoder.pos_sin")
        else:
            self.pos_emb = store.normal("decoder.pos_emb", (dims.max_len + 1, d), std=0.02)
        self.layers = []
        for k in range(dims.num_layers):
            prefix = f"decoder.layer{k}"
            self.layers.append(
                DecoderLayer(
                    AttentionParams.create(store, f"{prefix}.self_attn", d, dims.decoder_heads),
                    AttentionParams.create(store, f"{prefix}.cross_attn", d, dims.decoder_heads),
                    FeedForward.create(store, f"{prefix}.ffn", d, 4 * d),
                    LayerNorm.create(store, f"{prefix}.norm1", d),
                    LayerNorm.create(store, f"{prefix}.norm2", d),
                    LayerNorm.create(store, f"{prefix}.norm3", d),
                )
            )
        self.final_norm = LayerNorm.create(store, "decoder.norm", d)
        self.out = Linear.create(store, "decoder.out", d, dims.n_tokens, std=0.02)
        logger.debug(f"Model has {len(store)} tensors, {store.n_values()} values")

    def context(self, training: bool, rng: Optional[np.random.Generator] = None) -> ForwardContext:
        if not training:
            return EVAL
        return ForwardContext(True, self.dims.dropout, rng)

    # --- encoder ----------------------------------------------------------------------

    def association_embeddings(self, graph: AssociationGraph) -> Tensor:
        """Embeddings of every association-graph node, ``(n_nodes, d_model)``."""
        if graph.node_init.shape[1] != self.dims.n_motifs:
            raise ShapeMismatch(
                f"association graph has {graph.node_init.shape[1]} motif columns, "
                f"model expects {self.dims.n_motifs}"
            )
        index, weights = graph.message_edges()
        return self.assoc_gat(Tensor(graph.node_init), index, weights)

    def atom_embeddings(self, graphs: Sequence[MolecularGraphTensors]) -> Tuple[Tensor, np.ndarray]:
        """Atom embeddings of a batch as one stacked matrix plus row offsets."""
        node_feat, edge_index, edge_feat, offsets = stack_graphs(list(graphs))
        return self.mol_gat(Tensor(node_feat), edge_index, edge_feat), offsets

    def encode_molecule(
        self, mol: MolecularGraphTensors, graph: AssociationGraph, drug_id: str
    ) -> Tuple[Tensor, Tensor]:
        """``(n_atoms, d_model)`` atom embeddings and the ``(1, d_model)`` global embedding.

        Raises:
            UnknownMoleculeNode: If ``drug_id`` has no node in ``graph``
        """
        node = graph.molecule_node(drug_id)
        atoms, _ = self.atom_embeddings([mol])
        global_emb = ad.take(self.association_embeddings(graph), [node])
        return atoms, global_emb

    def fuse(
        self,
        atom_emb: Tensor,
        offsets: np.ndarray,
        global_emb: Tensor,
        n_atoms: Sequence[int],
        width: Optional[int] = None,
    ) -> Memory:
        """Lay out each drug's atoms as a sequence and fuse with its global embedding.

        Args:
            atom_emb: Stacked atom embeddings of the batch
            offsets: First row of each drug in ``atom_emb``
            global_emb: ``(B, d_model)`` molecule-node embeddings
            n_atoms: Atom count per drug
            width: Memory length; defaults to the longest drug in the batch

        Raises:
            TooManyAtoms: If a drug has more than ``max_atoms`` atoms
        """
        batch = len(n_atoms)
        longest = max(n_atoms) if n_atoms else 0
        if longest > self.dims.max_atoms:
            raise TooManyAtoms(f"{longest} atoms exceeds max_atoms={self.dims.max_atoms}")
        width = width or longest
        if width > self.dims.max_atoms:
            raise TooManyAtoms(f"memory width {width} exceeds max_atoms={self.dims.max_atoms}")
        d = self.dims.d_model

        blank = atom_emb.shape[0]
        rows = np.full((batch, width), blank, dtype=np.int64)
        mask = np.zeros((batch, width), dtype=bool)
        for b, n in enumerate(n_atoms):
            rows[b, :n] = offsets[b] + np.arange(n)
            mask[b, :n] = True
        padded = ad.concat([atom_emb, Tensor(np.zeros((1, d)))], axis=0)
        atoms = ad.take(padded, rows)
        repeated = ad.take(global_emb, np.repeat(np.arange(batch), width).reshape(batch, width))
        if self.dims.feature_mode == "mol":
            repeated = Tensor(np.zeros(repeated.shape))
        elif self.dims.feature_mode == "motif":
            atoms = Tensor(np.zeros(atoms.shape))

        hidden = ad.relu(self.fusion[0](ad.concat([atoms, repeated], axis=-1)))
        values = self.fusion[1](hidden) * mask[:, :, None].astype(float)
        return Memory(values, mask)

    def serialize_and_fuse(
        self, atom_emb: Tensor, global_emb: Tensor, n_atoms: int, max_atoms: Optional[int] = None
    ) -> Memory:
        """Single-drug memory of exactly ``max_atoms`` rows, ``n_atoms`` of them valid."""
        max_atoms = max_atoms or self.dims.max_atoms
        if n_atoms > max_atoms:
            raise TooManyAtoms(f"{n_atoms} atoms exceeds max_atoms={max_atoms}")
        global_emb = ad.reshape(global_emb, (1, self.dims.d_model))
        return self.fuse(atom_emb, np.array([0]), global_emb, [n_atoms], width=max_atoms)

    def encode_batch(
        self,
        mols: Sequence[MolecularGraphTensors],
        assoc: Tensor,
        nodes: Sequence[int],
    ) -> Memory:
        """Memory for a batch, given precomputed association embeddings."""
        atom_emb, offsets = self.atom_embeddings(mols)
        global_emb = ad.take(assoc, list(nodes))
        return self.fuse(atom_emb, offsets, global_emb, [m.n_atoms for m in mols])

    # --- decoder ----------------------------------------------------------------------

    def decode(self, tokens, memory: Memory, ctx: ForwardContext = EVAL) -> Tensor:
        """Logits ``(B, T, n_tokens)`` for token ids ``(B, T)``.

        Raises:
            SequenceTooLong: If ``T > max_len + 1``
            AllPositionsMasked: If some drug's memory has no valid row
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim == 1:
            tokens = tokens[None, :]
        length = tokens.shape[1]
        if length > self.dims.max_len + 1:
            raise SequenceTooLong(f"{length} decoder positions exceeds max_len + 1")

        x = ad.take(self.tok_emb, tokens) + self.pos_emb[:length]
        x = ctx.drop(x)
        self_mask = causal_mask(length)
        cross_mask = memory.mask[:, None, :]
        for layer in self.layers:
            attended = multi_head(x, x, x, layer.self_attn, self_mask, ctx)
            x = layer.norm1(x + ctx.drop(attended))
            attended = multi_head(
                x, memory.values, memory.values, layer.cross_attn, cross_mask, ctx
            )
            x = layer.norm2(x + ctx.drop(attended))
            x = layer.norm3(x + ctx.drop(layer.ffn(x, ctx)))
        return self.out(self.final_norm(x))

    def loss(self, tokens, memory: Memory, ctx: ForwardContext = EVAL) -> Tensor:
        """Teacher-forced cross-entropy over non-PAD targets of ``(B, max_len + 2)`` sequences."""
        tokens = np.asarray(tokens, dtype=np.int64)
        logits = self.decode(tokens[:, :-1], memory, ctx)
        return ad.cross_entropy_masked(logits, tokens[:, 1:], ignore_id=PAD)

    def generate(
        self,
        memory: Memory,
        max_len: Optional[int] = None,
        allow_duplicates: bool = False,
    ) -> List[List[int]]:
        """Greedy decoding from BOS for every drug in ``memory``.

        PAD, BOS and UNK are never emitted, and neither is a label already
        emitted for the same drug unless ``allow_duplicates``. Decoding stops
        at EOS or after ``max_len`` labels; returned lists hold label ids only.
        """
        max_len = min(max_len or self.dims.max_len, self.dims.max_len)
        batch = memory.mask.shape[0]
        tokens = np.full((batch, 1), BOS, dtype=np.int64)
        banned = np.zeros((batch, self.dims.n_tokens), dtype=bool)
        banned[:, [PAD, BOS, UNK]] = True
        done = np.zeros(batch, dtype=bool)
        outputs: List[List[int]] = [[] for _ in range(batch)]

        for _ in range(max_len):
            logits = self.decode(tokens, memory).data[:, -1, :]
            logits = np.where(banned, -np.inf, logits)
            picked = logits.argmax(axis=-1)
            for b in range(batch):
                if done[b]:
                    picked[b] = PAD
                elif picked[b] == EOS:
                    done[b] = True
                else:
                    outputs[b].append(int(picked[b]))
                    if not allow_duplicates:
                        banned[b, picked[b]] = True
            if done.all():
                break
            tokens = np.concatenate([tokens, picked[:, None]], axis=1)
        return outputs

    # --- persistence ------------------------------------------------------------------

    def save(self, path: Union[str, Path], meta: Optional[Dict[str, Any]] = None) -> None:
        width = ad.float_width()
        arrays = {
            name: values.astype(np.float32 if width == 32 else np.float64)
            for name, values in self.params.to_arrays().items()
        }
        save_checkpoint(path, arrays, {**(meta or {}), "dims": asdict(self.dims)})

    @classmethod
    def load(cls, path: Union[str, Path]) -> Tuple["AdrGenerator", Dict[str, Any]]:
        arrays, meta = load_checkpoint(path)
        if "dims" not in meta:
            raise CheckpointFormatError(f"{path} has no model dimensions in its metadata")
        model = cls(ModelDims(**meta["dims"]))
        model.params.load_arrays(arrays)
        return model, meta

