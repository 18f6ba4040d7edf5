import numpy as np
import pytest

from relprop.errors import EmptyIntersection, TooFewCellLines
from relprop.estimator import Prediction, PredictionSet
from relprop.evaluation import EvalReport, baseline_evaluate, evaluate, split_cell_lines
from relprop.synth import SynthConfig, generate


def panel_fixture(n_cells=10, seed=0):
    return generate(
        SynthConfig(n_genes=5, n_drugs=2, n_cell_lines=n_cells, noise_sigma=0.05, seed=seed)
    ).panel


def preds_for(panel, calls):
    predictions = [
        Prediction(cell_line=cell, drug_uid=int(uid), drug_name=f"d{uid}",
                   score=0.9 if call else 0.1, call=call)
        for (cell, uid), call in calls.items()
    ]
    return PredictionSet(predictions=predictions)


def test_split_sizes_and_disjoint():
    panel = panel_fixture(10)
    train_p, test_p = split_cell_lines(panel, 0.2, seed=1)
    assert len(test_p.cell_lines) == 2 and len(train_p.cell_lines) == 8
    assert not set(train_p.cell_lines) & set(test_p.cell_lines)


def test_split_deterministic_and_exhaustive():
    panel = panel_fixture(9)
    a = split_cell_lines(panel, 0.3, seed=5)
    b = split_cell_lines(panel, 0.3, seed=5)
    assert a[0].cell_lines == b[0].cell_lines and a[1].cell_lines == b[1].cell_lines
    assert sorted(a[0].cell_lines + a[1].cell_lines) == sorted(panel.cell_lines)


def test_split_round_half_up():
    panel = panel_fixture(5)
    _, test_p = split_cell_lines(panel, 0.5, seed=0)
    assert len(test_p.cell_lines) == 3  # 2.5 rounds up


def test_split_too_few_cell_lines():
    panel = panel_fixture(4).subset([0])
    with pytest.raises(TooFewCellLines):
        split_cell_lines(panel, 0.5, seed=0)


def test_split_fraction_validation():
    panel = panel_fixture(4)
    with pytest.raises(ValueError):
        split_cell_lines(panel, 1.0, seed=0)


def test_evaluate_all_correct():
    panel = panel_fixture(6)
    calls = {}
    for i, cell in enumerate(panel.cell_lines):
        for j, uid in enumerate(panel.drug_ids):
            calls[(cell, int(uid))] = int(panel.drug_labels[i, j])
    report = evaluate(preds_for(panel, calls), panel)
    assert report.accuracy == 1.0
    assert report.n_test == len(panel.cell_lines) * len(panel.drug_ids)


def test_evaluate_eighteen_of_nineteen():
    panel = panel_fixture(19).subset(range(19))
    uid = int(panel.drug_ids[0])
    calls = {}
    for i, cell in enumerate(panel.cell_lines):
        calls[(cell, uid)] = int(panel.drug_labels[i, 0])
    flip = panel.cell_lines[0]
    calls[(flip, uid)] = 1 - calls[(flip, uid)]
    report = evaluate(preds_for(panel, calls), panel)
    assert report.n_test == 19
    assert report.accuracy == pytest.approx(18 / 19)
    assert round(report.accuracy, 4) == 0.9474


def test_evaluate_confusion_counts():
    panel = panel_fixture(2)
    sub = panel.subset([0, 1])
    uid = int(sub.drug_ids[0])
    truth = [int(sub.drug_labels[i, 0]) for i in range(2)]
    calls = {(sub.cell_lines[i], uid): 1 - truth[i] for i in range(2)}
    report = evaluate(preds_for(sub, calls), sub)
    assert report.accuracy == 0.0
    assert report.fp == truth.count(0)
    assert report.fn == truth.count(1)
    assert report.tp == report.tn == 0


def test_evaluate_empty_intersection():
    panel = panel_fixture(3)
    preds = preds_for(panel, {("nonexistent", 999): 1})
    with pytest.raises(EmptyIntersection):
        evaluate(preds, panel)


def test_evaluate_invariant_under_cell_line_relabeling():
    panel = panel_fixture(8)
    calls = {}
    rng = np.random.default_rng(3)
    for i, cell in enumerate(panel.cell_lines):
        for j, uid in enumerate(panel.drug_ids):
            calls[(cell, int(uid))] = int(rng.integers(0, 2))
    base = evaluate(preds_for(panel, calls), panel)
    order = list(range(8))[::-1]
    shuffled = panel.subset(order)
    again = evaluate(preds_for(shuffled, calls), shuffled)
    assert again.accuracy == base.accuracy
    assert (again.tp, again.fp, again.fn, again.tn) == (base.tp, base.fp, base.fn, base.tn)


def test_eval_report_invariants():
    report = EvalReport.from_confusion("m", tp=3, fp=1, fn=2, tn=4)
    assert report.n_test == 10
    assert report.accuracy == (3 + 4) / 10
    with pytest.raises(ValueError):
        EvalReport(method="m", accuracy=0.5, tp=1, fp=1, fn=1, tn=1, n_test=5)


def test_eval_report_tsv_row():
    report = EvalReport.from_confusion("m", tp=1, fp=0, fn=0, tn=1, seed=7)
    row = report.tsv_row().split("\t")
    assert row[0] == "m" and row[-1] == "7"
    assert float(row[1]) == 1.0


def test_baseline_evaluate_on_synth_split():
    panel = generate(SynthConfig(n_genes=8, n_drugs=2, n_cell_lines=30, noise_sigma=0.02, seed=3)).panel
    train_p, test_p = split_cell_lines(panel, 0.2, seed=3)
    report = baseline_evaluate(train_p, test_p, l1_strength=0.01)
    assert report.method == "logreg-l1"
    assert report.n_test == len(test_p.cell_lines) * len(test_p.drug_ids)
    assert 0.0 <= report.accuracy <= 1.0
