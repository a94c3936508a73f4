"""Built-in gradient and oracle checks, run by ``mol2adr selftest``."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .canonical import canonical_smiles
from .fragment import fragment_brics, load_rules
from .layers import GatHead, attention_weights, gat_forward
from .model import AdrGenerator, Memory, ModelDims
from .motif_graph import pmi_weight, tfidf_weight
from .perception import perceive
from .smiles import parse_smiles

logger = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _rand(rng: np.random.Generator, *shape) -> Tensor:
    return Tensor(rng.normal(size=shape))


def _square_sum(x: Tensor) -> Tensor:
    return ad.reduce_sum(ad.mul(x, x))


def _op_checks(rng: np.random.Generator) -> List[Tuple[str, Callable[[Tensor], Tensor], Tensor]]:
    b = _rand(rng, 3, 4)
    w = _rand(rng, 4, 2)
    seg = np.array([0, 0, 1, 2, 2])
    mask = np.array([[True, True, False, True], [False, True, True, True], [True] * 4])
    gain, bias = _rand(rng, 4), _rand(rng, 4)
    targets = np.array([[1, 0, 3], [2, 3, 0]])
    return [
        ("add", lambda x: ad.reduce_sum(ad.mul(ad.add(x, b), b)), _rand(rng, 3, 4)),
        ("mul", lambda x: ad.reduce_sum(ad.mul(x, x)), _rand(rng, 3, 4)),
        ("matmul", lambda x: ad.reduce_sum(ad.mul(x @ w, x @ w)), _rand(rng, 3, 4)),
        ("leaky_relu", lambda x: ad.reduce_sum(ad.mul(ad.leaky_relu(x), b)), _rand(rng, 3, 4)),
        ("elu", lambda x: ad.reduce_sum(ad.mul(ad.elu(x), b)), _rand(rng, 3, 4)),
        ("transpose", lambda x: ad.reduce_sum(ad.mul(ad.transpose(x), w.T)), _rand(rng, 4, 2)),
        ("concat", lambda x: ad.reduce_sum(ad.mul(ad.concat([x, x], 0), ad.concat([b, b], 0))),
         _rand(rng, 3, 4)),
        ("softmax_rows", lambda x: ad.reduce_sum(ad.mul(ad.softmax_rows(x, mask), b)),
         _rand(rng, 3, 4)),
        ("layer_norm", lambda x: ad.reduce_sum(ad.mul(ad.layer_norm(x, gain, bias), b)),
         _rand(rng, 3, 4)),
        ("segment_softmax", lambda x: ad.reduce_sum(ad.mul(ad.segment_softmax(x, seg, 3), x)),
         _rand(rng, 5, 1)),
        ("segment_sum", lambda x: _square_sum(ad.segment_sum(x, seg, 3)), _rand(rng, 5, 2)),
        ("embedding_lookup", lambda x: _square_sum(ad.take(x, [[0, 2], [2, 1]])), _rand(rng, 3, 2)),
        ("cross_entropy", lambda x: ad.cross_entropy_masked(x, targets), _rand(rng, 2, 3, 5)),
    ]


def _gat_check(rng: np.random.Generator) -> float:
    edges = np.array([[0, 1], [1, 0], [1, 2], [2, 1], [2, 3]])
    feats = _rand(rng, 5, 2)
    heads = [GatHead(_rand(rng, 3, 4), _rand(rng, 10, 1), _rand(rng, 4, 4)) for _ in range(2)]
    return ad.grad_check(
        lambda x: _square_sum(gat_forward(x, edges, feats, heads)),
        _rand(rng, 4, 3),
    )


def _toy_model(seed: int = 0) -> AdrGenerator:
    dims = ModelDims(n_tokens=9, n_motifs=3, d_model=8, gat_heads=2, gat_layers=1,
                     decoder_heads=2, num_layers=2, max_len=5, max_atoms=6, dropout=0.0)
    return AdrGenerator(dims, seed)


def _decoder_check(rng: np.random.Generator) -> float:
    model = _toy_model()
    memory_values = _rand(rng, 2, 3, 8)
    mask = np.array([[True, True, False], [True, True, True]])
    tokens = np.array([[1, 4, 5, 2, 0], [1, 6, 2, 0, 0]])
    worst = 0.0
    for name in ("decoder.layer0.self_attn.W_Q", "decoder.layer1.cross_attn.W_V",
                 "decoder.layer0.ffn.W1", "decoder.layer1.norm2.gain", "decoder.tok_emb"):
        param = model.params[name]
        worst = max(worst, ad.grad_check(
            lambda p: model.loss(tokens, Memory(memory_values, mask)), param))
    return worst


def _causality_check(rng: np.random.Generator) -> bool:
    model = _toy_model(1)
    memory = Memory(_rand(rng, 1, 4, 8), np.array([[True, True, True, False]]))
    tokens = np.array([[1, 4, 5, 6, 7]])
    base = model.decode(tokens, memory).data
    changed = tokens.copy()
    changed[0, 3] = 8
    other = model.decode(changed, memory).data
    return bool(np.array_equal(base[0, :3], other[0, :3]))


def run_selftest() -> List[CheckResult]:
    """Run every check in 64-bit mode; the previous float width is restored."""
    previous = ad.float_width()
    ad.set_float_width(64)
    rng = np.random.default_rng(0)
    results: List[CheckResult] = []
    try:
        for name, f, x in _op_checks(rng):
            error = ad.grad_check(f, x)
            results.append(CheckResult(f"grad {name}", error < GRAD_TOLERANCE, f"{error:.2e}"))
        error = _gat_check(rng)
        results.append(CheckResult("grad gat layer", error < GRAD_TOLERANCE, f"{error:.2e}"))
        error = _decoder_check(rng)
        results.append(CheckResult("grad decoder", error < GRAD_TOLERANCE, f"{error:.2e}"))
        results.append(CheckResult("causal mask", _causality_check(rng)))

        weights = attention_weights(Tensor([[1.0]]), Tensor([[0.0], [math.log(3.0)]])).data
        results.append(CheckResult("attention hand case", np.allclose(weights, [[0.25, 0.75]])))
        results.append(
            CheckResult("tf-idf hand case", math.isclose(tfidf_weight(2, 1, 4), 2 * math.log(2)))
        )
        results.append(CheckResult("pmi clamp", pmi_weight(1, 3, 3, 4) == 0.0))

        rules = load_rules()
        n_motifs = len(fragment_brics(perceive(parse_smiles("ClCc1ccccc1")), rules).motifs)
        results.append(CheckResult("benzyl chloride motifs", n_motifs == 2, f"{n_motifs}"))
        for smiles in ("OC(=O)c1ccccc1O", "CN1C=NC2=C1C(=O)N(C(=O)N2C)C", "C1CC1C(F)(F)F"):
            first = canonical_smiles(parse_smiles(smiles))
            again = canonical_smiles(parse_smiles(first))
            results.append(CheckResult(f"canonical fixpoint {smiles}", first == again, first))
    finally:
        ad.set_float_width(previous)
    for r in results:
        logger.debug(f"{r.name}: {'ok' if r.passed else 'FAILED'} {r.detail}")
    return results
