# tests/test_classifiers.py
from datetime import datetime, timedelta

import numpy as np
import pytest
import pytz

from triage_lab import classifiers
from triage_lab.classifiers import (
    ClassifierKind, DecisionTree, RandomForest, SoftmaxRegression, classification_report, expand_grid,
    grid_search_chronological, predict, train_classifier,
)
from triage_lab.models import Approach, LabeledExample, TrainingError

FREQ, TEXTSIM, L2R = Approach.FREQ, Approach.TEXTSIM, Approach.L2R
START = datetime(2021, 1, 1, tzinfo=pytz.utc)

BLOB_GRIDS = {
    'DT': {'max_depth': [2, 4, None], 'min_samples_leaf': [1, 5]},
    'NB': {'var_floor': [1e-9]},
    'LR': {'rate': [0.1, 0.5], 'l2': [0.0, 0.01], 'epochs': [100]},
    'RF': {'n_trees': [15], 'max_depth': [4, None]},
}


def _examples(X, labels):
    return [LabeledExample(str(i), list(x), label, START + timedelta(hours=i))
            for i, (x, label) in enumerate(zip(X, labels))]


def _blobs(n_per_class, dim=4, separation=6.0, seed=0):
    """Three isotropic unit-variance blobs, centres `separation` apart, shuffled into one stream."""
    rng = np.random.default_rng(seed)
    X, labels = [], []
    for c, label in enumerate((FREQ, TEXTSIM, L2R)):
        centre = np.zeros(dim)
        centre[c % dim] = separation
        X.append(rng.normal(size=(n_per_class, dim)) + centre)
        labels += [label] * n_per_class
    X = np.vstack(X)
    order = rng.permutation(len(labels))
    return X[order], [labels[i] for i in order]


def test_naive_bayes_separates_far_blobs():
    rng = np.random.default_rng(1)
    X = np.concatenate([rng.normal(0, 1, 30), rng.normal(20, 1, 30)])[:, None]
    labels = [FREQ] * 30 + [L2R] * 30
    model = train_classifier('NB', _examples(X, labels))
    assert model.predict_many([[0.1], [-0.3], [19.8], [20.4]]) == [FREQ, FREQ, L2R, L2R]


def test_tree_of_depth_zero_predicts_majority():
    X = np.arange(5, dtype=float)[:, None]
    model = train_classifier('DT', _examples(X, [TEXTSIM, FREQ, TEXTSIM, L2R, TEXTSIM]), {'max_depth': 0})
    assert set(model.predict_many([[0.0], [2.0], [9.0]])) == {TEXTSIM}


def test_single_tree_forest_without_sampling_equals_tree():
    X, labels = _blobs(20, separation=2.0, seed=3)
    y = classifiers.label_indices(labels)
    tree = DecisionTree(max_depth=None).fit(X, y)
    forest = RandomForest(n_trees=1, max_features=None, bootstrap=False, seed=9).fit(X, y)
    assert forest.trees_[0].tree_ == tree.tree_
    probe = np.random.default_rng(4).normal(size=(50, 4)) * 3
    assert forest.predict(probe).tolist() == tree.predict(probe).tolist()


def test_forest_subsample_follows_the_raw_feature_width():
    X, labels = _blobs(20, dim=4, seed=3)
    y = classifiers.label_indices(labels)
    assert RandomForest(n_trees=1, seed=0).fit(X, y).trees_[0].max_features == 2
    assert RandomForest(n_trees=1, seed=0, feature_count=23).fit(X, y).trees_[0].max_features == 4

    # 23 columns of which 19 are constant and dropped before fitting
    wide = np.hstack([X, np.ones((len(X), 19))])
    model = train_classifier('RF', _examples(wide, labels), {'n_trees': 3})
    assert model.standardizer.keep.sum() == 4
    assert all(tree.max_features == 4 for tree in model.estimator.trees_)


def test_pure_node_is_a_leaf():
    tree = DecisionTree().fit(np.array([[0.0], [1.0], [5.0], [6.0]]), np.array([0, 0, 2, 2]))
    assert tree.tree_['threshold'] == 3.0
    assert tree.tree_['left'] == {'leaf': 0, 'counts': [2, 0, 0]}
    assert tree.tree_['right'] == {'leaf': 2, 'counts': [0, 0, 2]}


def test_untrained_softmax_regression_predicts_first_class():
    X, labels = _blobs(10, seed=5)
    model = train_classifier('LR', _examples(X, labels), {'epochs': 0})
    assert predict(model, [100.0, -3.0, 2.0, 7.0]) == FREQ


def test_softmax_regression_loss_decreases():
    X, labels = _blobs(30, dim=2, separation=3.0, seed=6)
    X = (X - X.mean(axis=0)) / X.std(axis=0)
    model = SoftmaxRegression(rate=0.1, epochs=50).fit(X, classifiers.label_indices(labels))
    history = model.loss_history_
    assert history[0] == pytest.approx(np.log(3))
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def test_single_label_training_is_rejected():
    with pytest.raises(TrainingError):
        train_classifier('NB', _examples([[0.0], [1.0]], [FREQ, FREQ]))


def test_constant_dimensions_are_dropped():
    X = [[1.0, 0.0], [1.0, 1.0], [1.0, 9.0], [1.0, 10.0]]
    model = train_classifier('DT', _examples(X, [FREQ, FREQ, L2R, L2R]))
    assert model.standardizer.keep.tolist() == [False, True]
    assert model.predict_many([[123.0, 0.5], [-4.0, 9.5]]) == [FREQ, L2R]


@pytest.mark.parametrize('kind', ['DT', 'RF', 'LR', 'NB'])
def test_training_is_deterministic(kind):
    X, labels = _blobs(15, separation=1.5, seed=8)
    probe = np.random.default_rng(2).normal(size=(40, 4)) * 2
    first = train_classifier(kind, _examples(X, labels), {}, seed=3).predict_many(probe)
    again = train_classifier(kind, _examples(X, labels), {}, seed=3).predict_many(probe)
    assert first == again


def test_expand_grid_enumerates_in_key_order():
    assert expand_grid({'a': [1, 2], 'b': ['x']}) == [{'a': 1, 'b': 'x'}, {'a': 2, 'b': 'x'}]
    assert expand_grid({}) == []
    assert expand_grid([{'a': 1}]) == [{'a': 1}]


def test_grid_of_one_point_returns_it():
    X, labels = _blobs(5, seed=1)
    assert grid_search_chronological(_examples(X, labels), 'NB', {'var_floor': [1e-6]}) == {'var_floor': 1e-6}


def test_equal_scores_keep_first_point():
    X, labels = _blobs(10, seed=2)
    best = grid_search_chronological(_examples(X, labels), 'DT', {'max_depth': [None, 50]})
    assert best == {'max_depth': None}


def test_ten_examples_give_four_expanding_rounds(monkeypatch):
    calls = []

    def fake_validation(kind, train, validate, hp, seed):
        calls.append((len(train), len(validate)))
        return [e.label for e in validate]

    monkeypatch.setattr(classifiers, '_validation_predictions', fake_validation)
    X, labels = _blobs(4, seed=3)
    grid_search_chronological(_examples(X[:10], labels[:10]), 'NB', {'var_floor': [1e-9]})
    assert calls == [(2, 2), (4, 2), (6, 2), (8, 2)]


def test_grid_search_errors():
    X, labels = _blobs(5, seed=4)
    with pytest.raises(TrainingError):
        grid_search_chronological(_examples(X, labels), 'NB', {})
    with pytest.raises(TrainingError):
        grid_search_chronological(_examples(X[:4], labels[:4]), 'NB', {'var_floor': [1e-9]})


def test_classification_report_weighted_f1():
    report = classification_report([FREQ, TEXTSIM, TEXTSIM], [FREQ, FREQ, TEXTSIM])
    assert report.f1 == pytest.approx((2 / 3, 2 / 3))
    assert report.weighted_f1 == pytest.approx(0.6667, abs=1e-4)
    assert report.confusion == ((1, 1), (0, 1))


def test_classification_report_perfect_predictions():
    labels = [FREQ, L2R, TEXTSIM, L2R]
    report = classification_report(labels, labels)
    assert (report.weighted_precision, report.weighted_recall, report.weighted_f1) == pytest.approx((1.0, 1.0, 1.0))


def test_constant_prediction_over_balanced_labels():
    labels = [FREQ, TEXTSIM, L2R] * 4
    report = classification_report([FREQ] * 12, labels)
    assert report.weighted_recall == pytest.approx(1 / 3)
    assert report.classes == (FREQ, TEXTSIM, L2R)


def test_weighted_recall_is_accuracy():
    rng = np.random.default_rng(11)
    classes = [FREQ, TEXTSIM, L2R]
    labels = [classes[i] for i in rng.integers(3, size=60)]
    preds = [classes[i] for i in rng.integers(3, size=60)]
    accuracy = sum(p == t for p, t in zip(preds, labels)) / 60
    assert classification_report(preds, labels).weighted_recall == pytest.approx(accuracy)


def test_classification_report_length_mismatch():
    with pytest.raises(ValueError):
        classification_report([FREQ], [FREQ, L2R])


@pytest.mark.parametrize('kind', [k.value for k in ClassifierKind])
def test_every_kind_beats_majority_on_separated_blobs(kind):
    X, labels = _blobs(100, separation=6.0, seed=12)
    examples = _examples(X, labels)
    train, test = examples[:200], examples[200:]
    hp = grid_search_chronological(train, kind, BLOB_GRIDS[kind], seed=0)
    model = train_classifier(kind, train, hp, seed=0)

    truth = [e.label for e in test]
    majority = max(set(e.label for e in train), key=[e.label for e in train].count)
    baseline = classification_report([majority] * len(test), truth).weighted_f1
    scored = classification_report(model.predict_many(e.features for e in test), truth).weighted_f1
    assert scored >= baseline + 0.20
