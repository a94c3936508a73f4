"""Shared pytest fixtures and configurations."""

from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from mol2adr import autodiff as ad
from mol2adr.config import RunConfig, bundled_corpus
from mol2adr.molecule import Molecule
from mol2adr.motif_graph import CorpusMolecule

DATASET_ROWS = [
    ("d01", "CCO", "nausea,headache"),
    ("d02", "CCN", "nausea"),
    ("d03", "c1ccccc1O", "rash,nausea"),
    ("d04", "ClCc1ccccc1", "rash"),
    ("d05", "CC(=O)O", "headache"),
    ("d06", "CC(=O)Oc1ccccc1C(=O)O", "nausea,tinnitus"),
    ("d07", "CCOC(=O)c1ccc(N)cc1", "rash,pruritus"),
    ("d08", "CC(=O)Nc1ccc(O)cc1", "nausea,rash"),
    ("d09", "CCCCO", "dizziness"),
    ("d10", "OC(=O)c1ccccc1O", "tinnitus,nausea"),
    ("d11", "CN(C)CCOC(c1ccccc1)c1ccccc1", "drowsiness,dizziness"),
    ("d12", "CC(C)Cc1ccc(cc1)C(C)C(=O)O", "nausea,headache,rash"),
]


def write_dataset(path: Path) -> Path:
    lines = ["drug_id\tstructure\tlabels"] + ["\t".join(r) for r in DATASET_ROWS]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def make_tiny_config(dataset: Path, output_dir: Path, **overrides) -> RunConfig:
    """A configuration small enough to train in a few seconds."""
    values = dict(
        dataset=str(dataset),
        output_dir=str(output_dir),
        epochs=2,
        batch_size=4,
        d_model=8,
        decoder_heads=2,
        gat_layers=1,
        num_layers=1,
        max_len=5,
        max_atoms=32,
        seeds=(1,),
        workers=1,
        float_width=64,
    )
    values.update(overrides)
    return RunConfig(**values)


def relabel_molecule(mol: Molecule, order) -> Molecule:
    """The same molecule with old atom ``order[k]`` moved to position ``k``."""
    new_index = {old: new for new, old in enumerate(order)}
    bonds = []
    for bond in mol.bonds:
        a, b = sorted((new_index[bond.a], new_index[bond.b]))
        bonds.append(replace(bond, a=a, b=b))
    rng = np.random.default_rng(len(mol.bonds))
    bonds = [bonds[i] for i in rng.permutation(len(bonds))]
    return Molecule(tuple(mol.atoms[old] for old in order), tuple(bonds), mol.source_text)


@pytest.fixture(autouse=True)
def float64():
    """Run every test in 64-bit mode and undo any width change a test makes."""
    ad.set_float_width(64)
    yield
    ad.set_float_width(64)


@pytest.fixture
def toy_corpus() -> Path:
    """The 16-drug corpus shipped with the package."""
    return Path(bundled_corpus())


@pytest.fixture
def small_corpus():
    """Three hand-made molecules over motifs x, y, z.

    A holds x twice and y once (x and y touch), B holds x, C holds z.
    """
    return [
        CorpusMolecule("A", Counter({"x": 2, "y": 1}), {frozenset(("x", "y"))}),
        CorpusMolecule("B", Counter({"x": 1})),
        CorpusMolecule("C", Counter({"z": 1})),
    ]


@pytest.fixture
def dataset_file(tmp_path) -> Path:
    """A 12-drug dataset TSV with simple SMILES."""
    return write_dataset(tmp_path / "drugs.tsv")


@pytest.fixture
def tiny_config():
    return make_tiny_config


@pytest.fixture
def relabel():
    return relabel_molecule


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory) -> Path:
    """Run directory of a tiny model trained once for the whole session."""
    from mol2adr.core import Mol2AdrPipeline

    root = tmp_path_factory.mktemp("trained")
    cfg = make_tiny_config(write_dataset(root / "drugs.tsv"), root / "runs")
    Mol2AdrPipeline(cfg).run()
    ad.set_float_width(64)
    return root / "runs" / "seed1"
