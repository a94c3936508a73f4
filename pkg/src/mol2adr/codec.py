"""ADR label codec: label strings <-> token ids with PAD/BOS/EOS/UNK specials."""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Union

import numpy as np

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")
N_SPECIALS = len(SPECIALS)
CODEC_VERSION = 1
LABEL_ORDERS = ("frequency", "dataset", "random")


@dataclass
class LabelCodec:
    """Dense ids for the kept training labels, starting at 4.

    Ids are assigned by descending training frequency (ties by label string),
    so the id order is also the canonical target order.
    """

    labels: List[str]
    counts: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self._ids = {label: i + N_SPECIALS for i, label in enumerate(self.labels)}

    def __len__(self) -> int:
        """Number of token ids, specials included."""
        return len(self.labels) + N_SPECIALS

    def __contains__(self, label: str) -> bool:
        return label in self._ids

    def encode(self, label: str) -> int:
        return self._ids.get(label, UNK)

    def decode(self, token: int) -> str:
        if token < N_SPECIALS:
            return SPECIALS[token]
        return self.labels[token - N_SPECIALS]

    def save(self, path: Union[str, Path]) -> None:
        data = {"version": CODEC_VERSION, "labels": self.labels,
                "counts": [self.counts.get(label, 0) for label in self.labels]}
        Path(path).write_text(json.dumps(data, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LabelCodec":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Label codec not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        if data.get("version") != CODEC_VERSION:
            raise ValueError(f"unsupported label codec version {data.get('version')!r}")
        return cls(data["labels"], dict(zip(data["labels"], data.get("counts", []))))


def build_codec(label_lists: Iterable[Sequence[str]], vocab_size: int = 13191) -> LabelCodec:
    """Keep the ``vocab_size`` most frequent training labels."""
    counts = Counter()
    for labels in label_lists:
        counts.update(set(labels))
    ranked = sorted(counts, key=lambda label: (-counts[label], label))
    kept = ranked[:vocab_size]
    if len(ranked) > vocab_size:
        logger.info(f"Label codec keeps {vocab_size} of {len(ranked)} labels; the rest map to UNK")
    return LabelCodec(kept, {label: counts[label] for label in kept})


def order_labels(
    labels: Sequence[str],
    codec: LabelCodec,
    order: str = "frequency",
    rng: Optional[np.random.Generator] = None,
) -> List[str]:
    """Target order for one record.

    ``frequency`` sorts known labels by id (descending training frequency)
    with unknown labels last in dataset order; ``dataset`` keeps the file
    order; ``random`` shuffles with ``rng``.
    """
    if order == "frequency":
        known = sorted((lab for lab in labels if lab in codec), key=codec.encode)
        return known + [lab for lab in labels if lab not in codec]
    if order == "dataset":
        return list(labels)
    if order == "random":
        if rng is None:
            raise ValueError("label order 'random' needs an rng")
        shuffled = list(labels)
        rng.shuffle(shuffled)
        return shuffled
    raise ValueError(f"unknown label order {order!r}; expected one of {LABEL_ORDERS}")


def encode_targets(
    labels: Sequence[str],
    codec: LabelCodec,
    max_len: int = 200,
    order: str = "frequency",
    rng: Optional[np.random.Generator] = None,
) -> List[int]:
    """``[BOS] + first max_len label ids + [EOS]`` padded with PAD to ``max_len + 2``."""
    ordered = order_labels(labels, codec, order, rng)[:max_len]
    tokens = [BOS] + [codec.encode(label) for label in ordered] + [EOS]
    return tokens + [PAD] * (max_len + 2 - len(tokens))


def clean_sequence(tokens: Iterable[int], codec: Optional[LabelCodec] = None) -> Set[int]:
    """Label ids before the first EOS, with PAD/BOS/UNK (and ids outside ``codec``) removed."""
    kept = set()
    for token in tokens:
        token = int(token)
        if token == EOS:
            break
        if token >= N_SPECIALS and (codec is None or token < len(codec)):
            kept.add(token)
    return kept
