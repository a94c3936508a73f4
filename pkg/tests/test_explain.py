import csv

import numpy as np
import pytest

from mol2adr.core import Predictor
from mol2adr.dataset import DatasetRecord
from mol2adr.errors import UnknownDrug
from mol2adr.explain import CSV_HEADER, contribution_analysis, explain_drug


@pytest.fixture
def predictor(trained_run):
    return Predictor.from_run_dir(trained_run)


@pytest.fixture
def ibuprofen(predictor):
    record = DatasetRecord("d12", "CC(C)Cc1ccc(cc1)C(C)C(=O)O", ("nausea", "headache", "rash"))
    return predictor.prepare(record)


def test_contribution_shapes(predictor, ibuprofen):
    matrix = contribution_analysis(predictor, ibuprofen, joint=True)
    assert matrix.scores.shape == (len(matrix.motif_indices), len(matrix.label_ids))
    assert matrix.joint.shape == (len(matrix.label_ids),)
    assert set(matrix.label_ids) <= set(range(4, len(predictor.codec)))
    assert ((matrix.baseline > 0) & (matrix.baseline <= 1)).all()
    # scores are probability differences
    assert (np.abs(matrix.scores) <= 1).all()


def test_joint_masking_is_not_additive(predictor, ibuprofen):
    matrix = contribution_analysis(predictor, ibuprofen, joint=True)
    assert len(matrix.motif_indices) >= 2
    gap = np.abs(matrix.joint - matrix.scores.sum(axis=0))
    assert gap.max() > 1e-9


def test_absent_motif_row_is_zero(predictor, ibuprofen):
    matrix = contribution_analysis(predictor, ibuprofen)
    absent = len(predictor.vocab)
    assert not matrix.row(absent).any()
    assert matrix.row(absent).shape == (len(matrix.label_ids),)


def test_explicit_motif_list(predictor, ibuprofen):
    matrix = contribution_analysis(predictor, ibuprofen, motifs=[0])
    assert matrix.motif_indices == [0]
    assert matrix.joint is None


def test_unlabelled_drug_scores_generated_labels(predictor):
    drug = predictor.prepare(DatasetRecord("query0", "CCOC(=O)c1ccccc1", ()))
    matrix = contribution_analysis(predictor, drug)
    assert matrix.scores.shape[1] == len(matrix.label_ids)


def test_write_csv(predictor, ibuprofen, tmp_path):
    matrix = contribution_analysis(predictor, ibuprofen)
    path = tmp_path / "contrib.csv"
    matrix.write_csv(path, predictor)
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 1 + len(matrix.motif_indices) * len(matrix.label_ids)


def test_unknown_drug(predictor, ibuprofen):
    with pytest.raises(UnknownDrug):
        explain_drug(predictor, {"d12": ibuprofen}, "d99")
