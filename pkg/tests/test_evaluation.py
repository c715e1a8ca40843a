#!/usr/bin/python3

import numpy as np
import pytest
from trace_ratio import evaluation
from trace_ratio.evaluation import (
    EvalResult,
    SplitSpec,
    accuracy,
    evaluate_model,
    knn1_classify,
    project_and_fuse,
    stratified_split,
)
from trace_ratio.multiview import MultiViewDataset, MultiViewModelSpec, build_block_problem
from trace_ratio.synthetic import generate_multiview_gaussian
from trace_ratio.util import SplitError, UpdateMode


@pytest.fixture
def separable() -> MultiViewDataset:
    return generate_multiview_gaussian(
        m=300, view_dims=(8, 10, 12), n_classes=3, separation=5.0, seed=0
    )


def test_split_of_small_balanced_dataset() -> None:
    ds = MultiViewDataset([np.arange(10.0).reshape(1, 10)], np.array([0, 1] * 5))
    train, test = stratified_split(ds, SplitSpec(train_fraction=0.1, seed=3), 0)
    assert len(train) == 2
    assert sorted(ds.label_index[train].tolist()) == [0, 1]
    assert np.array_equal(np.union1d(train, test), np.arange(10))
    assert np.intersect1d(train, test).size == 0


def test_split_is_deterministic(separable) -> None:
    spec = SplitSpec(seed=7)
    first = stratified_split(separable, spec, 2)
    second = stratified_split(separable, spec, 2)
    other = stratified_split(separable, spec, 3)
    assert np.array_equal(first[0], second[0])
    assert np.array_equal(first[1], second[1])
    assert not np.array_equal(first[0], other[0])


def test_split_sizes(separable) -> None:
    train, test = stratified_split(separable, SplitSpec(train_fraction=0.1), 0)
    assert len(train) == 30
    assert np.bincount(separable.label_index[train]).tolist() == [10, 10, 10]
    assert len(test) == 270


@pytest.mark.parametrize(
    "fraction,repeats",
    [
        (0.5, 1),
        pytest.param(0.0, 1, marks=pytest.mark.xfail(raises=ValueError)),
        pytest.param(1.0, 1, marks=pytest.mark.xfail(raises=ValueError)),
        pytest.param(0.5, 0, marks=pytest.mark.xfail(raises=ValueError)),
    ],
)
def test_split_spec_validation(fraction, repeats) -> None:
    SplitSpec(train_fraction=fraction, n_repeats=repeats).validate()


def test_split_rejects_singleton_class() -> None:
    ds = MultiViewDataset([np.arange(5.0).reshape(1, 5)], np.array([0, 0, 0, 0, 1]))
    with pytest.raises(SplitError):
        stratified_split(ds, SplitSpec(), 0)


def test_project_and_fuse() -> None:
    ds = MultiViewDataset(
        [np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0, 6.0], [7.0, 8.0]])],
        np.array([0, 1]),
    )
    P = [np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])]
    fused = project_and_fuse(ds, P, np.array([0, 1]))
    assert np.array_equal(fused, [[1.0, 2.0], [7.0, 8.0]])
    assert np.array_equal(project_and_fuse(ds, P, np.array([1])), [[2.0], [8.0]])


def test_knn1() -> None:
    train = np.array([[-1.0, 1.0, 5.0]])
    labels = np.array([0, 1, 2])
    assert knn1_classify(train, labels, np.array([[5.0, 0.9]])).tolist() == [2, 1]
    # Equidistant neighbours: smallest training index wins
    assert knn1_classify(train, labels, np.array([[0.0]])).tolist() == [0]


def test_knn1_on_separated_gaussians() -> None:
    rng = np.random.default_rng(0)
    labels = np.arange(200) % 2
    X = rng.standard_normal((2, 200)) * 0.1
    X[0] += 10.0 * labels
    predicted = knn1_classify(X[:, :100], labels[:100], X[:, 100:])
    assert accuracy(predicted, labels[100:]) >= 0.99


def test_eval_result() -> None:
    single = EvalResult.make([0.75])
    assert single.std == 0.0
    many = EvalResult.make([0.5, 1.0])
    assert many.mean == pytest.approx(0.75)
    assert many.std == pytest.approx(0.25)
    assert min(many.accuracies) <= many.mean <= max(many.accuracies)


def test_single_cell(separable) -> None:
    table = evaluate_model(
        separable,
        MultiViewModelSpec(family="gma"),
        SplitSpec(n_repeats=1),
        k_grid=[2],
        thetas=[0.5],
    )
    assert len(table.rows) == 1
    row = table.rows[0]
    assert row.model == "OGMA-G"
    assert 0.0 <= row.result.mean <= 1.0
    assert row.result.std == 0.0


def test_theta_grid_rows(separable) -> None:
    table = evaluate_model(
        separable,
        MultiViewModelSpec(family="mcca"),
        SplitSpec(n_repeats=1),
        k_grid=[2],
        mode=UpdateMode.JACOBI,
    )
    assert len(table.rows) == 11
    assert [row.theta for row in table.rows][-1] == 1.0
    best = table.best_theta()
    assert len(best) == 1
    assert best[0].result.mean == max(row.result.mean for row in table.rows)


def test_baseline_row(separable) -> None:
    table = evaluate_model(
        separable,
        MultiViewModelSpec(family="mlda"),
        SplitSpec(n_repeats=2),
        k_grid=[2],
        thetas=[0.5],
        baseline=True,
    )
    assert [(row.model, row.theta) for row in table.rows] == [
        ("OMLDA-G", 0.5),
        ("MLDA", None),
    ]
    assert len(table.best_theta()) == 1


def test_fit_uses_training_slice_only(separable, monkeypatch) -> None:
    seen = []
    original = evaluation.alternate_solve

    def spy(bp, **kwargs):
        seen.append(bp)
        return original(bp, **kwargs)

    monkeypatch.setattr(evaluation, "alternate_solve", spy)
    split = SplitSpec(n_repeats=1, seed=4)
    spec = MultiViewModelSpec(family="gma", k=2, theta=0.5)
    evaluate_model(separable, spec, split, k_grid=[2], thetas=[0.5])

    train, _ = stratified_split(separable, split, 0)
    expected = build_block_problem(separable.subset(train), spec)
    assert len(seen) == 1
    assert np.array_equal(seen[0].dense_A(), expected.dense_A())
    assert np.array_equal(seen[0].dense_B(), expected.dense_B())


def test_workers_give_identical_results(separable) -> None:
    args = (separable, MultiViewModelSpec(family="gma"), SplitSpec(n_repeats=3))
    serial = evaluate_model(*args, thetas=[0.5])
    threaded = evaluate_model(*args, thetas=[0.5], workers=3)
    assert serial.rows[0].result == threaded.rows[0].result


@pytest.mark.parametrize("family", ["gma", "mlda"])
def test_separable_data_is_learned(separable, family) -> None:
    table = evaluate_model(
        separable,
        MultiViewModelSpec(family=family, k=2),
        SplitSpec(train_fraction=0.1, n_repeats=10),
        k_grid=[2],
        thetas=[0.5],
    )
    assert table.rows[0].result.mean >= 0.95
