# triage_lab/classifiers.py
"""Three-class classifiers (CART, Gaussian NB, softmax regression, random forest) written on numpy."""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from triage_lab.models import CLASS_ORDER, ClassificationReport, TrainingError
from triage_lab.utils import chronological_folds

logger = logging.getLogger(__name__)

N_CLASSES = len(CLASS_ORDER)
CV_FOLDS = 5


class ClassifierKind(str, Enum):
    DT = 'DT'
    NB = 'NB'
    LR = 'LR'
    RF = 'RF'


def _gini(counts, total):
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float((p * p).sum())


class DecisionTree:
    """CART with Gini impurity; thresholds at midpoints between sorted distinct values."""

    def __init__(self, max_depth=None, min_samples_leaf=1, max_features=None, rng=None):
        self.max_depth = max_depth
        self.min_samples_leaf = max(1, int(min_samples_leaf))
        self.max_features = max_features
        self.rng = rng
        self.tree_ = None

    def fit(self, X, y):
        self.n_features_ = X.shape[1]
        self.tree_ = self._grow(X, y, 0)
        return self

    def _leaf(self, counts):
        return {'leaf': int(np.argmax(counts)), 'counts': counts.tolist()}

    def _grow(self, X, y, depth):
        counts = np.bincount(y, minlength=N_CLASSES)
        if (self.max_depth is not None and depth >= self.max_depth) \
                or np.count_nonzero(counts) <= 1 \
                or len(y) < 2 * self.min_samples_leaf:
            return self._leaf(counts)
        split = self._best_split(X, y, counts)
        if split is None:
            return self._leaf(counts)
        feature, threshold = split
        mask = X[:, feature] <= threshold
        return {
            'feature': feature,
            'threshold': threshold,
            'left': self._grow(X[mask], y[mask], depth + 1),
            'right': self._grow(X[~mask], y[~mask], depth + 1),
        }

    def _candidate_features(self):
        d = self.n_features_
        if self.max_features is None or self.max_features >= d:
            return range(d)
        return np.sort(self.rng.choice(d, size=self.max_features, replace=False))

    def _best_split(self, X, y, counts):
        n = len(y)
        parent = _gini(counts, n)
        msl = self.min_samples_leaf
        n_left = np.arange(1, n)
        n_right = n - n_left
        onehot = np.eye(N_CLASSES)[y]
        best_gain, best = 1e-12, None
        for feature in self._candidate_features():
            order = np.argsort(X[:, feature], kind='stable')
            xs = X[order, feature]
            left = np.cumsum(onehot[order], axis=0)[:-1]
            right = counts - left
            valid = (xs[1:] != xs[:-1]) & (n_left >= msl) & (n_right >= msl)
            if not valid.any():
                continue
            gini_left = 1.0 - ((left / n_left[:, None]) ** 2).sum(axis=1)
            gini_right = 1.0 - ((right / n_right[:, None]) ** 2).sum(axis=1)
            gain = parent - (n_left * gini_left + n_right * gini_right) / n
            gain[~valid] = -np.inf
            i = int(np.argmax(gain))
            if gain[i] > best_gain:
                best_gain = float(gain[i])
                best = (int(feature), float((xs[i] + xs[i + 1]) / 2.0))
        return best

    def _predict_row(self, row):
        node = self.tree_
        while 'leaf' not in node:
            node = node['left'] if row[node['feature']] <= node['threshold'] else node['right']
        return node['leaf']

    def predict(self, X):
        return np.array([self._predict_row(row) for row in X], dtype=int)


class GaussianNaiveBayes:
    def __init__(self, var_floor=1e-9):
        self.var_floor = var_floor

    def fit(self, X, y):
        d = X.shape[1]
        self.means_ = np.zeros((N_CLASSES, d))
        self.vars_ = np.ones((N_CLASSES, d))
        self.log_priors_ = np.full(N_CLASSES, -np.inf)
        for c in range(N_CLASSES):
            rows = X[y == c]
            if len(rows) == 0:
                continue
            self.means_[c] = rows.mean(axis=0)
            self.vars_[c] = rows.var(axis=0) + self.var_floor
            self.log_priors_[c] = math.log(len(rows) / len(y))
        return self

    def joint_log_likelihood(self, X):
        jll = np.empty((len(X), N_CLASSES))
        for c in range(N_CLASSES):
            ll = -0.5 * np.sum(np.log(2 * np.pi * self.vars_[c])) \
                - 0.5 * np.sum((X - self.means_[c]) ** 2 / self.vars_[c], axis=1)
            jll[:, c] = self.log_priors_[c] + ll
        return jll

    def predict(self, X):
        return np.argmax(self.joint_log_likelihood(X), axis=1)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class SoftmaxRegression:
    """Multinomial logistic regression, L2 on the weights, full-batch gradient descent."""

    def __init__(self, rate=0.1, l2=0.0, epochs=300):
        self.rate = rate
        self.l2 = l2
        self.epochs = int(epochs)
        self.loss_history_ = []

    def loss(self, X, Y):
        P = _softmax(X @ self.W_ + self.b_)
        ce = -np.mean(np.log(np.clip((P * Y).sum(axis=1), 1e-300, None)))
        return float(ce + 0.5 * self.l2 * np.sum(self.W_ ** 2))

    def fit(self, X, y):
        n, d = X.shape
        Y = np.eye(N_CLASSES)[y]
        self.W_ = np.zeros((d, N_CLASSES))
        self.b_ = np.zeros(N_CLASSES)
        self.loss_history_ = []
        for _ in range(self.epochs):
            self.loss_history_.append(self.loss(X, Y))
            err = _softmax(X @ self.W_ + self.b_) - Y
            self.W_ -= self.rate * (X.T @ err / n + self.l2 * self.W_)
            self.b_ -= self.rate * err.mean(axis=0)
        return self

    def predict_proba(self, X):
        return _softmax(X @ self.W_ + self.b_)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


class RandomForest:
    def __init__(self, n_trees=50, max_depth=None, min_samples_leaf=1, max_features='sqrt',
                 bootstrap=True, seed=0, n_jobs=1, feature_count=None):
        self.n_trees = int(n_trees)
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.n_jobs = n_jobs
        # width of the raw feature vector; columns dropped before fit still count toward sqrt
        self.feature_count = feature_count

    def _fit_tree(self, X, y, index):
        # per-tree generator derived from (seed, tree index) so scheduling never matters
        rng = np.random.default_rng([self.seed, index])
        rows = rng.integers(0, len(y), size=len(y)) if self.bootstrap else np.arange(len(y))
        max_features = self.max_features
        if max_features == 'sqrt':
            max_features = min(math.ceil(math.sqrt(self.feature_count or X.shape[1])), X.shape[1])
        tree = DecisionTree(self.max_depth, self.min_samples_leaf, max_features, rng)
        return tree.fit(X[rows], y[rows])

    def fit(self, X, y):
        if self.n_jobs and self.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=self.n_jobs) as pool:
                self.trees_ = list(pool.map(lambda i: self._fit_tree(X, y, i), range(self.n_trees)))
        else:
            self.trees_ = [self._fit_tree(X, y, i) for i in range(self.n_trees)]
        return self

    def predict(self, X):
        votes = np.zeros((len(X), N_CLASSES), dtype=int)
        for tree in self.trees_:
            votes[np.arange(len(X)), tree.predict(X)] += 1
        return np.argmax(votes, axis=1)


class MajorityClassifier:
    def __init__(self, label_index=0):
        self.label_index = label_index

    def fit(self, X, y):
        self.label_index = int(np.argmax(np.bincount(y, minlength=N_CLASSES)))
        return self

    def predict(self, X):
        return np.full(len(X), self.label_index, dtype=int)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    keep: np.ndarray

    @classmethod
    def fit(cls, X):
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        keep = std > 0
        return cls(mean=mean[keep], std=std[keep], keep=keep)

    def transform(self, X):
        return (X[:, self.keep] - self.mean) / self.std


@dataclass(frozen=True)
class ClassifierModel:
    kind: str
    estimator: object
    standardizer: Standardizer
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def predict_many(self, rows):
        X = self.standardizer.transform(feature_matrix(rows))
        return [CLASS_ORDER[i] for i in self.estimator.predict(X)]

    def predict(self, features):
        return self.predict_many([features])[0]


def feature_matrix(rows):
    return np.array([np.asarray(getattr(r, 'values', r), dtype=float) for r in rows], dtype=float)


def label_indices(labels):
    return np.array([CLASS_ORDER.index(label) for label in labels], dtype=int)


def _make_estimator(kind, hp, seed, feature_count=None):
    kind = ClassifierKind(kind)
    if kind is ClassifierKind.DT:
        return DecisionTree(hp.get('max_depth'), hp.get('min_samples_leaf', 1))
    if kind is ClassifierKind.NB:
        return GaussianNaiveBayes(hp.get('var_floor', 1e-9))
    if kind is ClassifierKind.LR:
        return SoftmaxRegression(hp.get('rate', 0.1), hp.get('l2', 0.0), hp.get('epochs', 300))
    return RandomForest(
        n_trees=hp.get('n_trees', 50), max_depth=hp.get('max_depth'),
        min_samples_leaf=hp.get('min_samples_leaf', 1), max_features=hp.get('max_features', 'sqrt'),
        bootstrap=hp.get('bootstrap', True), seed=seed, n_jobs=hp.get('n_jobs', 1),
        feature_count=feature_count,
    )


def train_classifier(kind, examples, hyperparameters=None, seed=0):
    examples = list(examples)
    labels = [e.label for e in examples]
    if len(set(labels)) < 2:
        raise TrainingError('training data needs at least two distinct labels')
    hp = dict(hyperparameters or {})
    X = feature_matrix(e.features for e in examples)
    standardizer = Standardizer.fit(X)
    estimator = _make_estimator(kind, hp, seed, feature_count=X.shape[1])
    estimator.fit(standardizer.transform(X), label_indices(labels))
    return ClassifierModel(kind=ClassifierKind(kind).value, estimator=estimator,
                           standardizer=standardizer, hyperparameters=hp, seed=seed)


def predict(model, features):
    return model.predict(features)


def expand_grid(grid):
    """A dict of value lists enumerates as itertools.product in key order; a list of points is used as is."""
    if isinstance(grid, dict):
        if not grid:
            return []
        keys = list(grid)
        return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]
    return [dict(point) for point in grid]


def _class_key(label):
    return (0, CLASS_ORDER.index(label)) if label in CLASS_ORDER else (1, str(label))


def classification_report(predictions, labels):
    predictions, labels = list(predictions), list(labels)
    if len(predictions) != len(labels):
        raise ValueError(f'{len(predictions)} predictions for {len(labels)} labels')
    if not labels:
        raise ValueError('classification report needs at least one label')
    classes = sorted(set(labels) | set(predictions), key=_class_key)
    pos = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=int)
    for p, t in zip(predictions, labels):
        confusion[pos[t], pos[p]] += 1

    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    tp = np.diag(confusion)
    precision = np.divide(tp, predicted, out=np.zeros(len(classes)), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros(len(classes)), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(len(classes)), where=denom > 0)
    weights = support / support.sum()
    return ClassificationReport(
        classes=tuple(classes),
        precision=tuple(float(x) for x in precision),
        recall=tuple(float(x) for x in recall),
        f1=tuple(float(x) for x in f1),
        support=tuple(int(x) for x in support),
        weighted_precision=float(weights @ precision),
        weighted_recall=float(weights @ recall),
        weighted_f1=float(weights @ f1),
        confusion=tuple(tuple(int(v) for v in row) for row in confusion),
    )


def _validation_predictions(kind, train, validate, hp, seed):
    try:
        model = train_classifier(kind, train, hp, seed)
    except TrainingError:
        logger.warning('Single-label training prefix for %s; validating with the majority label', kind)
        only = train[0].label
        return [only] * len(validate)
    return model.predict_many(e.features for e in validate)


def grid_search_chronological(examples, kind, grid, seed=0):
    """Pick the grid point with the best mean weighted F1 over 4 expanding-window validations."""
    examples = list(examples)
    points = expand_grid(grid)
    if not points:
        raise TrainingError('empty hyperparameter grid')
    if len(examples) < CV_FOLDS:
        raise TrainingError(f'grid search needs at least {CV_FOLDS} examples, got {len(examples)}')
    folds = chronological_folds(examples, CV_FOLDS)

    best_point, best_score = None, -1.0
    for point in points:
        scores = []
        for x in range(1, CV_FOLDS):
            train = [e for fold in folds[:x] for e in fold]
            validate = folds[x]
            preds = _validation_predictions(kind, train, validate, point, seed)
            scores.append(classification_report(preds, [e.label for e in validate]).weighted_f1)
        score = float(np.mean(scores))
        logger.debug('%s %s -> weighted F1 %.4f', kind, point, score)
        if score > best_score:
            best_point, best_score = point, score
    return best_point
