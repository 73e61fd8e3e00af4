"""
Test the Newton-boosted tree ensemble: derivatives, leaf weights, training,
prediction and model files
"""
import json

import numpy as np
import pandas as pd
import pytest
from scipy.special import expit

from errors import DegenerateTargetError, IncompatibleInputError, InvalidArgumentError
from feature_extraction import FeatureVector
from gradient_boosting import (
    BoostedModel,
    Hyperparameters,
    TreeNode,
    gradients,
    leaf_weight,
    load_model,
    objective_loss,
    predict,
    predict_matrix,
    save_model,
    train,
)


def regression_data(n=120, n_features=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n_features))
    y = 3.0 * X[:, 1] + np.sin(X[:, 0]) + rng.normal(scale=0.1, size=n)
    return X, y


def classification_data(n=80, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = (X[:, 2] + 0.2 * rng.normal(size=n) > 0).astype(float)
    return X, y


# Derivatives and leaf weights

def test_gradient_examples():
    g, h = gradients('squared', [3.0], [5.0])
    assert (g[0], h[0]) == (2.0, 1.0)
    g, h = gradients('logistic', [1.0], [0.0])
    assert g[0] == pytest.approx(-0.5)
    assert h[0] == pytest.approx(0.25)


def test_gradients_match_finite_differences():
    eps = 1e-5
    for objective, targets in (('logistic', (0.0, 1.0)), ('squared', (-1.5, 0.0, 2.0))):
        for y in targets:
            for s in (-2.0, 0.0, 2.0):
                g, h = gradients(objective, [y], [s])
                up = objective_loss(objective, [y], [s + eps])[0]
                down = objective_loss(objective, [y], [s - eps])[0]
                assert g[0] == pytest.approx((up - down) / (2 * eps), abs=1e-6)
                g_up = gradients(objective, [y], [s + eps])[0][0]
                g_down = gradients(objective, [y], [s - eps])[0][0]
                assert h[0] == pytest.approx((g_up - g_down) / (2 * eps), abs=1e-6)


def test_gradients_reject_bad_input():
    with pytest.raises(InvalidArgumentError):
        gradients('hinge', [1.0], [0.0])
    with pytest.raises(InvalidArgumentError):
        gradients('squared', [1.0, 2.0], [0.0])


def test_leaf_weight():
    assert leaf_weight(-10.0, 5.0, 0.0) == 2.0
    assert leaf_weight(-10.0, 4.0, 1.0) == 2.0
    assert leaf_weight(3.0, 0.0, 0.0) == 0.0
    # L1 soft threshold
    assert leaf_weight(-10.0, 5.0, 0.0, reg_alpha=4.0) == pytest.approx(1.2)
    assert leaf_weight(-3.0, 5.0, 0.0, reg_alpha=4.0) == 0.0


# Hyperparameters

def test_hyperparameter_validation():
    for bad in (dict(n_estimators=0), dict(max_depth=-1), dict(learning_rate=0.0),
                dict(learning_rate=1.5), dict(subsample=0.0), dict(colsample_bytree=1.2),
                dict(reg_lambda=-1.0), dict(gamma=-0.1), dict(objective='poisson')):
        with pytest.raises(InvalidArgumentError):
            Hyperparameters(**bad)


def test_presets_echo_tuned_values():
    hp = Hyperparameters.preset('tuned-classifier')
    assert (hp.n_estimators, hp.max_depth, hp.learning_rate, hp.subsample, hp.colsample_bytree) == \
        (422, 4, 0.157, 0.837, 0.603)
    assert hp.objective == 'logistic'
    wet = Hyperparameters.preset('tuned-wet')
    assert (wet.n_estimators, wet.max_depth, wet.learning_rate, wet.subsample, wet.colsample_bytree) == \
        (732, 7, 0.008, 0.5, 1.0)
    dry = Hyperparameters.preset('tuned-dry')
    assert (dry.n_estimators, dry.max_depth, dry.learning_rate, dry.subsample, dry.colsample_bytree) == \
        (810, 7, 0.016, 0.5, 1.0)
    assert Hyperparameters.preset('tuned-dry', seed=9).seed == 9
    with pytest.raises(InvalidArgumentError):
        Hyperparameters.preset('nope')


def test_preset_accepted_by_training_and_echoed():
    X, y = classification_data()
    model = train(X, y, Hyperparameters.preset('tuned-classifier'))
    echoed = model.to_dict()['hyperparameters']
    assert echoed['n_estimators'] == 422
    assert echoed['max_depth'] == 4
    assert echoed['learning_rate'] == 0.157
    assert echoed['subsample'] == 0.837
    assert echoed['colsample_bytree'] == 0.603
    assert len(model.trees) == 422


# Prediction by hand

def test_zero_tree_model_returns_base_score():
    X = np.zeros((4, 1))
    reg = BoostedModel(trees=[], base_score=0.7, hyperparameters=Hyperparameters(), selected_feature_ids=('a',))
    assert np.array_equal(predict_matrix(reg, X), np.full(4, 0.7))
    clf = BoostedModel(trees=[], base_score=0.7, hyperparameters=Hyperparameters(objective='logistic'),
                       selected_feature_ids=('a',))
    assert predict(clf, [0.0]) == pytest.approx(expit(0.7))


def test_hand_built_tree_walk():
    tree = TreeNode(feature_id='x1', feature_index=0, threshold=0.5,
                    left=TreeNode(weight=-1.0), right=TreeNode(weight=1.0))
    model = BoostedModel(trees=[tree], base_score=0.25, hyperparameters=Hyperparameters(),
                         selected_feature_ids=('x1',))
    out = predict_matrix(model, np.array([[0.2], [0.9], [0.5]]))
    assert list(out) == [-0.75, 1.25, 1.25]  # threshold value goes right
    assert len(tree.leaves()) == 2


# Training

def test_single_leaf_predicts_mean():
    X, y = regression_data(n=30)
    hp = Hyperparameters(n_estimators=1, max_depth=0, reg_lambda=0.0, gamma=0.0, learning_rate=1.0, base_score=0.0)
    model = train(X, y, hp)
    assert np.allclose(predict_matrix(model, X), np.mean(y))


def test_memorises_distinct_points():
    rng = np.random.default_rng(2)
    X = np.arange(10, dtype=float).reshape(-1, 1)
    y = rng.normal(size=10)
    hp = Hyperparameters(n_estimators=2, max_depth=10, learning_rate=1.0, reg_lambda=0.0)
    model = train(X, y, hp)
    rmse = np.sqrt(np.mean((predict_matrix(model, X) - y) ** 2))
    assert rmse < 1e-6


def test_thresholds_are_midpoints():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0.0, 0.0, 10.0, 10.0])
    model = train(X, y, Hyperparameters(n_estimators=1, max_depth=1, learning_rate=1.0, reg_lambda=0.0))
    root = model.trees[0]
    assert not root.is_leaf
    assert root.threshold == 1.5


def test_squared_train_loss_is_non_increasing():
    X, y = regression_data()
    model = train(X, y, Hyperparameters(n_estimators=40, max_depth=3, learning_rate=0.3))
    losses = np.array(model.train_loss)
    assert len(losses) == 40
    assert np.all(np.diff(losses) <= 1e-12)
    assert losses[-1] < 0.5 * np.var(y)


@pytest.mark.slow
def test_squared_train_loss_is_non_increasing_over_200_rounds():
    X, y = regression_data(n=500)
    model = train(X, y, Hyperparameters(n_estimators=200, max_depth=3, learning_rate=0.3))
    losses = np.array(model.train_loss)
    assert len(losses) == 200
    assert np.all(np.diff(losses) <= 1e-12)
    assert losses[-1] < losses[0]


def test_logistic_training_separates_classes():
    X, y = classification_data()
    model = train(X, y, Hyperparameters(n_estimators=30, max_depth=3, objective='logistic'))
    p = predict_matrix(model, X)
    assert np.all((p > 0) & (p < 1))
    assert np.mean((p >= 0.5) == (y == 1)) > 0.9
    assert model.base_score == pytest.approx(np.log(y.mean() / (1 - y.mean())))
    assert model.train_loss[-1] < model.train_loss[0]


def test_seeded_training_is_bit_identical():
    X, y = regression_data()
    hp = Hyperparameters(n_estimators=15, max_depth=4, subsample=0.7, colsample_bytree=0.5, seed=3)
    a = json.dumps(train(X, y, hp).to_dict())
    b = json.dumps(train(X, y, hp).to_dict())
    assert a == b
    c = json.dumps(train(X, y, hp.with_seed(4)).to_dict())
    assert c != a


def test_column_sampling_is_per_tree():
    X, y = regression_data(n_features=6)
    model = train(X, y, Hyperparameters(n_estimators=10, max_depth=3, colsample_bytree=0.5, seed=1))
    for tree in model.trees:
        used = set()
        stack = [tree]
        while stack:
            node = stack.pop()
            if not node.is_leaf:
                used.add(node.feature_id)
                stack.extend((node.left, node.right))
        assert len(used) <= 3


def test_monotone_feature_transform_leaves_training_predictions_unchanged():
    X, y = regression_data()
    hp = Hyperparameters(n_estimators=20, max_depth=3)
    warped = X.copy()
    warped[:, 1] = np.exp(warped[:, 1])
    warped[:, 0] = 5.0 * warped[:, 0] + 2.0
    assert np.array_equal(predict_matrix(train(X, y, hp), X), predict_matrix(train(warped, y, hp), warped))


def test_feature_importance_favours_signal():
    X, y = regression_data()
    model = train(X, y, Hyperparameters(n_estimators=20, max_depth=3), feature_ids=['a', 'b', 'c', 'd'])
    importance = model.feature_importance()
    assert set(importance) == {'a', 'b', 'c', 'd'}
    assert max(importance, key=importance.get) == 'b'


def test_training_errors():
    X, y = regression_data(n=10)
    hp = Hyperparameters(n_estimators=2)
    with pytest.raises(InvalidArgumentError):
        train(np.zeros((0, 3)), [], hp)
    with pytest.raises(InvalidArgumentError):
        train(X[:1], y[:1], hp)
    bad = X.copy()
    bad[2, 1] = np.nan
    with pytest.raises(InvalidArgumentError):
        train(bad, y, hp)
    with pytest.raises(InvalidArgumentError):
        train(X, y[:5], hp)

    logistic = Hyperparameters(n_estimators=2, objective='logistic')
    with pytest.raises(DegenerateTargetError):
        train(X, np.ones(10), logistic)
    with pytest.raises(InvalidArgumentError):
        train(X, np.linspace(0, 1, 10), logistic)


# Prediction plumbing and files

def test_predict_feature_vector_alignment():
    X, y = regression_data()
    ids = ['a', 'b', 'c', 'd']
    model = train(X[:, [2, 0]], y, Hyperparameters(n_estimators=5), feature_ids=['c', 'a'], catalog_version='v1')

    fv = FeatureVector(values=X[7], catalog_version='v1', feature_ids=tuple(ids))
    assert predict(model, fv) == pytest.approx(predict_matrix(model, X[7:8, [2, 0]])[0])

    with pytest.raises(IncompatibleInputError):
        predict(model, FeatureVector(values=X[7], catalog_version='v2', feature_ids=tuple(ids)))
    with pytest.raises(IncompatibleInputError):
        predict(model, FeatureVector(values=X[7, :2], catalog_version='v1', feature_ids=('a', 'b')))


def test_predict_matrix_from_dataframe():
    X, y = regression_data()
    model = train(X[:, :2], y, Hyperparameters(n_estimators=5), feature_ids=['a', 'b'])
    df = pd.DataFrame(X, columns=['a', 'b', 'c', 'd'])[['d', 'b', 'a', 'c']]
    assert np.array_equal(predict_matrix(model, df), predict_matrix(model, X[:, :2]))
    with pytest.raises(IncompatibleInputError):
        predict_matrix(model, df[['c', 'd']])
    with pytest.raises(IncompatibleInputError):
        predict_matrix(model, X)


def test_save_load_is_bit_exact(tmp_path):
    X, y = classification_data()
    model = train(X, y, Hyperparameters(n_estimators=12, max_depth=3, objective='logistic',
                                        subsample=0.8, seed=5))
    model.metrics['f1'] = 0.9
    back = load_model(save_model(model, tmp_path / 'model.json'))
    assert np.array_equal(predict_matrix(back, X), predict_matrix(model, X))
    assert back.hyperparameters == model.hyperparameters
    assert back.metrics == {'f1': 0.9}
    assert back.train_loss == model.train_loss


def test_load_rejects_unknown_format(tmp_path):
    path = tmp_path / 'model.json'
    path.write_text(json.dumps({'format_version': 99}))
    with pytest.raises(IncompatibleInputError):
        load_model(path)
