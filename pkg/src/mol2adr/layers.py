"""Neural building blocks on top of :mod:`mol2adr.autodiff`.

Parameters live in a :class:`ParameterStore` under dotted names
(``gat.mol.layer0.head1.W``) which double as checkpoint entry names.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CheckpointFormatError, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass
class ForwardContext:
    """Training flag, dropout rate and RNG threaded through a forward pass."""

    training: bool = False
    dropout: float = 0.0
    rng: Optional[np.random.Generator] = None

    def drop(self, x: Tensor) -> Tensor:
        return ad.dropout(x, self.dropout, self.rng, self.training)


EVAL = ForwardContext()


class ParameterStore:
    """Named, ordered collection of trainable tensors."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._params: Dict[str, Tensor] = {}

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor = Tensor(values, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def glorot(self, name: str, shape: Tuple[int, int]) -> Tensor:
        fan_in, fan_out = shape[0], shape[-1]
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return self.add(name, self.rng.uniform(-limit, limit, size=shape))

    def normal(self, name: str, shape: Tuple[int, ...], std: float = 0.02) -> Tensor:
        return self.add(name, self.rng.normal(0.0, std, size=shape))

    def zeros(self, name: str, shape: Tuple[int, ...]) -> Tensor:
        return self.add(name, np.zeros(shape))

    def ones(self, name: str, shape: Tuple[int, ...]) -> Tensor:
        return self.add(name, np.ones(shape))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def n_values(self) -> int:
        return int(sum(p.data.size for p in self._params.values()))

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        """Overwrite every parameter from ``arrays``; names must match exactly.

        Raises:
            CheckpointFormatError: On missing or unexpected names
            ShapeMismatch: If a stored array has the wrong shape
        """
        missing = sorted(set(self._params) - set(arrays))
        extra = sorted(set(arrays) - set(self._params))
        if missing or extra:
            raise CheckpointFormatError(
                f"parameter names differ: missing {missing[:5]}, unexpected {extra[:5]}"
            )
        for name, tensor in self._params.items():
            values = np.asarray(arrays[name])
            if values.shape != tensor.shape:
                raise ShapeMismatch(f"{name}: stored {values.shape}, model {tensor.shape}")
            tensor.data = values.astype(tensor.data.dtype, copy=True)


# --- graph attention ---------------------------------------------------------------


@dataclass
class GatHead:
    W: Tensor  # (d_in, d_out)
    a: Tensor  # (2 * d_out + edge_dim, 1)
    U: Tensor  # (d_out, d_out)


def _with_self_loops(
    n_nodes: int, edge_index: np.ndarray, edge_feat: Tensor
) -> Tuple[np.ndarray, np.ndarray, Tensor]:
    loops = np.arange(n_nodes, dtype=np.int64)
    src = np.concatenate([edge_index[:, 0], loops])
    dst = np.concatenate([edge_index[:, 1], loops])
    zeros = Tensor(np.zeros((n_nodes, edge_feat.shape[1])))
    return src, dst, ad.concat([edge_feat, zeros], axis=0)


def gat_forward(
    x: Tensor,
    edge_index: np.ndarray,
    edge_feat,
    heads: Sequence[GatHead],
    activation=ad.elu,
) -> Tensor:
    """One edge-featured multi-head graph attention layer.

    For every head, node ``i`` scores each in-neighbour ``j`` (and itself,
    through a self-loop with zero edge features) as
    ``LeakyReLU(a . [h_i | h_j | E_ij])`` with ``h = xW``, normalizes the
    scores over its in-neighbourhood and sums ``alpha_ij * h_j U``. Head
    outputs are averaged and passed through ``activation``.

    Args:
        x: Node features ``(N, d_in)``
        edge_index: ``(E, 2)`` directed ``(source, target)`` pairs
        edge_feat: ``(E, edge_dim)`` edge features
        heads: Per-head parameters
        activation: Nonlinearity applied after the head mean

    Raises:
        ShapeMismatch: If edges reference missing nodes or shapes disagree
    """
    if not heads:
        raise ShapeMismatch("gat_forward needs at least one head")
    n_nodes = x.shape[0]
    edge_index = np.asarray(edge_index, dtype=np.int64).reshape(-1, 2)
    edge_feat = ad.as_tensor(edge_feat)
    if edge_feat.ndim != 2 or edge_feat.shape[0] != edge_index.shape[0]:
        raise ShapeMismatch(
            f"gat_forward: {edge_index.shape[0]} edges but edge features {edge_feat.shape}"
        )
    if edge_index.size and (edge_index.min() < 0 or edge_index.max() >= n_nodes):
        raise ShapeMismatch(f"gat_forward: edge references a node outside 0..{n_nodes - 1}")

    src, dst, feats = _with_self_loops(n_nodes, edge_index, edge_feat)
    edge_dim = feats.shape[1]
    outputs = []
    for head in heads:
        d = head.W.shape[1]
        if head.a.shape != (2 * d + edge_dim, 1):
            raise ShapeMismatch(
                f"gat_forward: attention vector {head.a.shape}, expected {(2 * d + edge_dim, 1)}"
            )
        h = x @ head.W
        score_dst = ad.take(h @ head.a[:d], dst)
        score_src = ad.take(h @ head.a[d : 2 * d], src)
        scores = score_dst + score_src
        if edge_dim:
            scores = scores + feats @ head.a[2 * d :]
        alpha = ad.segment_softmax(ad.leaky_relu(scores, 0.2), dst, n_nodes)
        messages = alpha * ad.take(h, src)
        outputs.append(ad.segment_sum(messages, dst, n_nodes) @ head.U)
    combined = outputs[0]
    for out in outputs[1:]:
        combined = combined + out
    if len(outputs) > 1:
        combined = ad.scale(combined, 1.0 / len(outputs))
    return activation(combined)


class GatStack:
    """``n_layers`` GAT layers; the first maps ``d_in`` to ``d_out``."""

    def __init__(
        self,
        store: ParameterStore,
        prefix: str,
        d_in: int,
        d_out: int,
        edge_dim: int,
        n_heads: int,
        n_layers: int,
    ):
        self.layers: List[List[GatHead]] = []
        for layer in range(n_layers):
            width_in = d_in if layer == 0 else d_out
            heads = []
            for k in range(n_heads):
                name = f"{prefix}.layer{layer}.head{k}"
                heads.append(
                    GatHead(
                        store.glorot(f"{name}.W", (width_in, d_out)),
                        store.glorot(f"{name}.a", (2 * d_out + edge_dim, 1)),
                        store.glorot(f"{name}.U", (d_out, d_out)),
                    )
                )
            self.layers.append(heads)

    def __call__(self, x: Tensor, edge_index: np.ndarray, edge_feat) -> Tensor:
        for heads in self.layers:
            x = gat_forward(x, edge_index, edge_feat, heads)
        return x


# --- attention -------------------------------------------------------------------------


def attention_weights(q: Tensor, k: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """``softmax(q k^T / sqrt(d_k))`` over the key axis; ``mask`` True = allowed key."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeMismatch(f"attention: query width {q.shape[-1]} vs key width {k.shape[-1]}")
    logits = ad.scale(q @ ad.transpose(k), 1.0 / math.sqrt(q.shape[-1]))
    return ad.softmax_rows(logits, mask)


def attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: Optional[np.ndarray] = None,
    ctx: ForwardContext = EVAL,
) -> Tensor:
    """Scaled dot-product attention.

    Args:
        q: ``(..., T, d_k)`` queries
        k: ``(..., S, d_k)`` keys
        v: ``(..., S, d_v)`` values
        mask: Boolean, broadcastable to ``(..., T, S)``; True marks an allowed key.
            Disallowed keys get exactly zero weight.

    Raises:
        ShapeMismatch: If inner dimensions disagree
        AllPositionsMasked: If a query has no allowed key
    """
    if k.shape[-2] != v.shape[-2]:
        raise ShapeMismatch(f"attention: {k.shape[-2]} keys but {v.shape[-2]} values")
    return ctx.drop(attention_weights(q, k, mask)) @ v


@dataclass
class AttentionParams:
    W_Q: Tensor
    W_K: Tensor
    W_V: Tensor
    W_O: Tensor
    n_heads: int

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, d_model: int, n_heads: int):
        if d_model % n_heads:
            raise ShapeMismatch(f"d_model {d_model} is not divisible by {n_heads} heads")
        names = ("W_Q", "W_K", "W_V", "W_O")
        tensors = [store.glorot(f"{prefix}.{n}", (d_model, d_model)) for n in names]
        return cls(*tensors, n_heads=n_heads)


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    batch, length, width = x.shape
    x = ad.reshape(x, (batch, length, n_heads, width // n_heads))
    return ad.transpose(x, (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    batch, n_heads, length, d_k = x.shape
    x = ad.transpose(x, (0, 2, 1, 3))
    return ad.reshape(x, (batch, length, n_heads * d_k))


def multi_head(
    q_in: Tensor,
    k_in: Tensor,
    v_in: Tensor,
    params: AttentionParams,
    mask: Optional[np.ndarray] = None,
    ctx: ForwardContext = EVAL,
) -> Tensor:
    """Multi-head attention: per-head projections, attention, concat, ``W_O``.

    Inputs are ``(B, T, d_model)`` / ``(B, S, d_model)``, or unbatched
    ``(T, d_model)``; ``mask`` broadcasts to ``(B, T, S)``.
    """
    unbatched = q_in.ndim == 2
    if unbatched:
        q_in, k_in, v_in = (ad.reshape(t, (1,) + t.shape) for t in (q_in, k_in, v_in))
    if q_in.shape[-1] != params.W_Q.shape[0] or k_in.shape[-1] != params.W_K.shape[0]:
        raise ShapeMismatch(
            f"multi_head: inputs {q_in.shape}/{k_in.shape} vs d_model {params.W_Q.shape[0]}"
        )
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 3:
            mask = mask[:, None, :, :]
    q = _split_heads(q_in @ params.W_Q, params.n_heads)
    k = _split_heads(k_in @ params.W_K, params.n_heads)
    v = _split_heads(v_in @ params.W_V, params.n_heads)
    out = _merge_heads(attention(q, k, v, mask, ctx)) @ params.W_O
    if unbatched:
        out = ad.reshape(out, out.shape[1:])
    return out


# --- dense layers -----------------------------------------------------------------------


@dataclass
class Linear:
    W: Tensor
    b: Tensor

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, d_in: int, d_out: int, std=None):
        if std is None:
            weight = store.glorot(f"{prefix}.W", (d_in, d_out))
        else:
            weight = store.normal(f"{prefix}.W", (d_in, d_out), std)
        return cls(weight, store.zeros(f"{prefix}.b", (d_out,)))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.W, self.b)


@dataclass
class LayerNorm:
    gain: Tensor
    bias: Tensor

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, width: int):
        return cls(store.ones(f"{prefix}.gain", (width,)), store.zeros(f"{prefix}.bias", (width,)))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)


@dataclass
class FeedForward:
    inner: Linear
    outer: Linear

    @classmethod
    def create(cls, store: ParameterStore, prefix: str, d_model: int, d_hidden: int):
        inner = Linear(
            store.glorot(f"{prefix}.W1", (d_model, d_hidden)),
            store.zeros(f"{prefix}.b1", (d_hidden,)),
        )
        outer = Linear(
            store.glorot(f"{prefix}.W2", (d_hidden, d_model)),
            store.zeros(f"{prefix}.b2", (d_model,)),
        )
        return cls(inner, outer)

    def __call__(self, x: Tensor, ctx: ForwardContext = EVAL) -> Tensor:
        return self.outer(ctx.drop(ad.relu(self.inner(x))))
