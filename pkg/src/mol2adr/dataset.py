"""Dataset ingestion and drug-wise train/valid/test splitting."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import EmptyDataset, EncodingError, HeaderMismatch, TooFewRecords
from .molecule import Molecule, molecule_from_graph_json
from .smiles import parse_smiles

logger = logging.getLogger(__name__)

HEADER = ("drug_id", "structure", "labels")

# Ids of molecules attached at prediction time; dataset ids may not use it
QUERY_PREFIX = "query:"


@dataclass(frozen=True)
class DatasetRecord:
    drug_id: str
    structure: str  # SMILES, or a path to a pre-parsed graph ending in .json
    labels: Tuple[str, ...]


@dataclass(frozen=True)
class RejectedRow:
    line: int
    reason: str


@dataclass
class Dataset:
    records: List[DatasetRecord]
    rejected: List[RejectedRow] = field(default_factory=list)
    source: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict:
        return {r.drug_id: r for r in self.records}


def query_id(k: int) -> str:
    return f"{QUERY_PREFIX}{k}"


def read_lines(path: Path) -> List[str]:
    """Lines of a UTF-8 text file.

    Raises:
        EncodingError: If the file is not valid UTF-8
    """
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as e:
        raise EncodingError(f"{path}: not valid UTF-8 (byte {e.start})") from e


def _split_labels(text: str) -> Tuple[str, ...]:
    seen = {}
    for label in text.split(","):
        label = label.strip()
        if label and label not in seen:
            seen[label] = None
    return tuple(seen)


def load_dataset(path: Union[str, Path]) -> Dataset:
    """Read a ``drug_id<TAB>structure<TAB>labels`` file.

    Labels are comma-separated; repeats within a row keep their first
    occurrence. Malformed rows, repeated drug ids and ids that start with
    ``QUERY_PREFIX`` are reported in ``Dataset.rejected`` with their 1-based
    line number.

    Raises:
        FileNotFoundError: If ``path`` does not exist
        HeaderMismatch: If the first line is not the expected header
        EncodingError: If the file is not valid UTF-8
        EmptyDataset: If no row is usable
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset not found: {path}")
    lines = read_lines(path)
    if not lines or tuple(c.strip() for c in lines[0].split("\t")) != HEADER:
        found = lines[0] if lines else "<empty file>"
        raise HeaderMismatch(f"{path}: expected header {'<TAB>'.join(HEADER)!r}, got {found!r}")

    records: List[DatasetRecord] = []
    rejected: List[RejectedRow] = []
    seen_ids = set()
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            reason = f"expected 3 tab-separated fields, got {len(fields)}"
            rejected.append(RejectedRow(number, reason))
            continue
        drug_id, structure, label_text = (f.strip() for f in fields)
        if not drug_id or not structure:
            rejected.append(RejectedRow(number, "missing drug_id or structure"))
            continue
        if drug_id.startswith(QUERY_PREFIX):
            reason = f"drug_id {drug_id!r} uses the reserved prefix {QUERY_PREFIX!r}"
            rejected.append(RejectedRow(number, reason))
            continue
        labels = _split_labels(label_text)
        if not labels:
            rejected.append(RejectedRow(number, f"drug {drug_id!r} has no labels"))
            continue
        if drug_id in seen_ids:
            rejected.append(RejectedRow(number, f"duplicate drug_id {drug_id!r}"))
            continue
        seen_ids.add(drug_id)
        records.append(DatasetRecord(drug_id, structure, labels))

    for row in rejected:
        logger.warning(f"{path.name}:{row.line}: {row.reason}")
    if not records:
        raise EmptyDataset(f"{path} contains no usable records")
    logger.info(f"Loaded {len(records)} records from {path} ({len(rejected)} rejected)")
    return Dataset(records, rejected, path)


def load_structure(record: DatasetRecord, base_dir: Optional[Path] = None) -> Molecule:
    """Parse a record's SMILES, or read its pre-parsed graph JSON."""
    if record.structure.lower().endswith(".json"):
        path = Path(record.structure)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            raise FileNotFoundError(f"Graph file for {record.drug_id!r} not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        data.setdefault("drug_id", record.drug_id)
        return molecule_from_graph_json(data)
    return parse_smiles(record.structure)


@dataclass(frozen=True)
class Split:
    train: Tuple[str, ...]
    valid: Tuple[str, ...]
    test: Tuple[str, ...]
    seed: int


def split_sizes(n: int) -> Tuple[int, int, int]:
    """8:1:1 sizes: ``round(0.8 n)`` train, the remainder halved (extra one to test)."""
    n_train = int(round(0.8 * n))
    rest = n - n_train
    return n_train, rest // 2, rest - rest // 2


def split_dataset(records: Sequence[DatasetRecord], seed: int) -> Split:
    """Seeded shuffle of drug ids followed by an 8:1:1 partition.

    Raises:
        TooFewRecords: With fewer than 10 records
    """
    if len(records) < 10:
        raise TooFewRecords(f"need at least 10 records to split, got {len(records)}")
    ids = [r.drug_id for r in records]
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_train, n_valid, _ = split_sizes(len(ids))
    return Split(
        tuple(shuffled[:n_train]),
        tuple(shuffled[n_train : n_train + n_valid]),
        tuple(shuffled[n_train + n_valid :]),
        seed,
    )
