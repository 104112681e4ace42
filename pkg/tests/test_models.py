import numpy as np
import pytest

from app.business.decision_tree import (
    LEAF, best_split, bootstrap_indices, build_tree, gini, train_forest, train_tree,
)
from app.business import logistic_regression
from app.business.logistic_regression import fit_logistic, train_logreg
from app.business.logit_leaf_model import ConstantLeaf, train_llm
from app.business.model_training import expand_grid, grid_search, train_model
from app.business.predictor import (
    FOREST, LLM, LOGREG, TREE, FunctionPredictor, auc, binarize, export_model, predict_proba,
)
from app.business.preprocessing import CASE, CONTROL, EVENT
from app.business.synthetic_logs import SynthSpec, generate_log
from app.errors import ModelError, SignatureMismatchError
from conftest import make_matrix


def _brute_force_auc(labels, scores):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (greater + 0.5 * ties) / (pos.size * neg.size)


class TestAuc:
    def test_examples(self):
        assert auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
        assert auc([0, 1, 0, 1], [0.3, 0.3, 0.3, 0.3]) == 0.5
        assert auc([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.6]) == pytest.approx(0.75)

    def test_matches_pair_counting(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 501))
            labels = rng.integers(0, 2, size=n)
            labels[0], labels[1] = 0, 1
            scores = np.round(rng.random(n), int(rng.integers(1, 4)))
            assert auc(labels, scores) == pytest.approx(_brute_force_auc(labels, scores), abs=1e-12)

    def test_complement(self, rng):
        labels = np.array([0, 1] * 50)
        scores = rng.permutation(100) / 100.0
        assert auc(labels, scores) + auc(labels, 1 - scores) == pytest.approx(1.0)

    def test_single_class(self):
        with pytest.raises(ModelError, match="single-class"):
            auc([1, 1, 1], [0.1, 0.2, 0.3])

    def test_binarize_threshold_inclusive(self):
        assert list(binarize([0.2, 0.5, 0.7])) == [0, 1, 1]


class TestLogisticRegression:
    def test_separable(self):
        m = make_matrix([[-2.0], [-1.0], [1.0], [2.0]], [CASE], labels=[0, 0, 1, 1])
        model = train_logreg(m, {'l2': 0.1})
        assert model.training_auc == 1.0
        assert auc(m.labels, predict_proba(model, m)) == model.training_auc

    def test_no_signal(self, rng):
        labels = rng.integers(0, 2, size=200)
        labels[:2] = [0, 1]
        m = make_matrix(np.ones((200, 1)), [CASE], labels=labels)
        model = train_logreg(m)
        assert abs(model.parameters.coefficients[0]) < 1e-6
        assert model.training_auc == pytest.approx(0.5, abs=0.05)

    def test_recovers_coefficient_ratio(self):
        # 5 次独立拟合 (各 n=2000) 取中位数
        ratios = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x = rng.normal(size=(2000, 2))
            p = 1.0 / (1.0 + np.exp(-(2.0 * x[:, 0] - 1.0 * x[:, 1])))
            labels = (rng.random(2000) < p).astype(int)
            model = train_logreg(make_matrix(x, [CASE, EVENT], labels=labels), {'l2': 1e-4})
            coef = model.parameters.coefficients / model.parameters.scaler.scales
            ratios.append(coef[0] / coef[1])
        assert np.median(ratios) == pytest.approx(-2.0, rel=0.10)

    def test_never_takes_a_step_that_raises_the_loss(self, monkeypatch):
        # 起点之外的任何点损失都更高
        def loss(X, y, w, b, l2):
            return 1.0 if not np.any(w) and b == 0.0 else 2.0

        monkeypatch.setattr(logistic_regression, '_loss', loss)
        rows = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        parameters = fit_logistic(rows, [0, 0, 1, 1], l2=0.0, max_iter=50, tol=1e-12)
        assert parameters.coefficients.tolist() == [0.0]
        assert parameters.intercept == 0.0
        assert parameters.iterations == 1

    def test_single_class(self):
        with pytest.raises(ModelError):
            train_logreg(make_matrix([[1.0], [2.0]], [CASE], labels=[1, 1]))

    def test_export(self):
        m = make_matrix([[-2.0, 0.0], [-1.0, 1.0], [1.0, 0.0], [2.0, 1.0]], [CASE, EVENT],
                        labels=[0, 0, 1, 1])
        text = export_model(train_logreg(m))
        assert text.startswith("kind = logreg\n")
        assert "intercept = " in text
        assert sum(line.startswith("coefficient\t") for line in text.splitlines()) == 2


def _unbalanced_xor():
    # 各组数量不同, 使根节点的贪心切分收益为正
    rows, labels = [], []
    for (a, b), count in {(0, 0): 2, (0, 1): 4, (1, 0): 6, (1, 1): 8}.items():
        rows += [[a, b]] * count
        labels += [a ^ b] * count
    return make_matrix(rows, [CONTROL, CONTROL], labels=labels)


def _brute_force_best_split(rows, labels, min_leaf):
    n = len(labels)
    parent = gini(labels.sum(), n)
    best = None
    for column in range(rows.shape[1]):
        values = np.unique(rows[:, column])
        for lo, hi in zip(values[:-1], values[1:]):
            threshold = (lo + hi) / 2.0
            left = rows[:, column] <= threshold
            n_left, n_right = left.sum(), n - left.sum()
            if n_left < min_leaf or n_right < min_leaf:
                continue
            gain = parent - (n_left * gini(labels[left].sum(), n_left)
                             + n_right * gini(labels[~left].sum(), n_right)) / n
            if best is None or gain > best[0] + 1e-12:
                best = (gain, column, threshold)
    return best


def _split_gain(rows, labels, column, threshold):
    left = rows[:, column] <= threshold
    n, n_left = len(labels), left.sum()
    return gini(labels.sum(), n) - (n_left * gini(labels[left].sum(), n_left)
                                    + (n - n_left) * gini(labels[~left].sum(), n - n_left)) / n


class TestDecisionTree:
    def test_xor_depth_two(self):
        model = train_tree(_unbalanced_xor(), {'max_depth': 2, 'min_samples_leaf': 1})
        assert model.training_auc == 1.0

    def test_pure_labels_give_single_leaf(self):
        m = make_matrix([[0.0], [1.0], [2.0]], [CASE], labels=[1, 1, 1])
        model = train_tree(m)
        assert model.parameters.n_nodes == 1
        assert list(model.predict_proba(m)) == [1.0, 1.0, 1.0]
        assert model.training_auc is None

    def test_root_split_matches_exhaustive_search(self, rng):
        for _ in range(20):
            rows = rng.integers(0, 5, size=(50, 3)).astype(float)
            labels = rng.integers(0, 2, size=50)
            found = best_split(rows, labels, range(3), min_samples_leaf=1)
            expected = _brute_force_best_split(rows, labels, 1)
            assert found[0] == pytest.approx(expected[0], abs=1e-12)
            assert found[1] == expected[1]
            assert _split_gain(rows, labels, found[1], found[2]) == pytest.approx(expected[0], abs=1e-12)

    def test_impurity_weights_match_export_walk(self, rng):
        rows = rng.random((30, 4))
        labels = (rows[:, 1] + 0.3 * rows[:, 2] > 0.6).astype(int)
        tree = build_tree(rows, labels, max_depth=2, min_samples_leaf=1)
        expected = np.zeros(4)
        for node in range(tree.n_nodes):
            if tree.feature[node] == LEAF:
                continue
            left, right = tree.left[node], tree.right[node]
            n = tree.n_samples[node]
            gain = tree.impurity[node] - (tree.n_samples[left] * tree.impurity[left]
                                          + tree.n_samples[right] * tree.impurity[right]) / n
            expected[tree.feature[node]] += n / tree.n_samples[0] * gain
        weights = tree.impurity_weights(4)
        assert weights == pytest.approx(expected, abs=1e-9)
        assert np.all(weights >= 0)

    def test_single_split_weights(self):
        rows = np.zeros((20, 5))
        rows[10:, 3] = 1.0
        labels = np.array([0] * 10 + [1] * 10)
        tree = build_tree(rows, labels, max_depth=1, min_samples_leaf=1)
        weights = tree.impurity_weights(5)
        assert np.flatnonzero(weights).tolist() == [3]

    def test_depth_zero_weights(self):
        tree = build_tree(np.eye(4), [0, 1, 0, 1], max_depth=0, min_samples_leaf=1)
        assert tree.impurity_weights(4).tolist() == [0.0] * 4


class TestForest:
    @pytest.fixture
    def matrix(self, rng):
        rows = rng.random((120, 4))
        labels = (rows[:, 0] > 0.5).astype(int)
        return make_matrix(rows, [CONTROL, CASE, EVENT, EVENT], labels=labels)

    def test_single_tree_equals_tree_on_bootstrap(self, matrix):
        hyper = {'n_trees': 1, 'max_features_fraction': 1.0, 'seed': 7, 'max_depth': 3,
                 'min_samples_leaf': 2}
        forest = train_forest(matrix, hyper)
        sample = bootstrap_indices(matrix.n_rows, np.random.default_rng(7))
        tree = build_tree(matrix.rows[sample], matrix.labels[sample], max_depth=3, min_samples_leaf=2)
        assert np.array_equal(forest.predict_proba(matrix), tree.predict(matrix.rows))

    def test_mean_bound_and_determinism(self, matrix):
        hyper = {'n_trees': 10, 'seed': 3}
        forest = train_forest(matrix, hyper)
        scores = forest.predict_proba(matrix)
        members = np.array([tree.predict(matrix.rows) for tree in forest.parameters.trees])
        assert np.all(scores >= members.min(axis=0) - 1e-12)
        assert np.all(scores <= members.max(axis=0) + 1e-12)
        assert np.array_equal(scores, train_forest(matrix, hyper).predict_proba(matrix))

    def test_separable_training_auc(self, matrix):
        assert train_forest(matrix, {'n_trees': 30, 'seed': 1}).training_auc > 0.95


class TestLogitLeafModel:
    def test_forced_single_split(self, rng):
        rows = rng.random((80, 2))
        labels = (rows[:, 1] > 0.5).astype(int)
        model = train_llm(make_matrix(rows, [CASE, EVENT], labels=labels),
                          {'max_depth': 1, 'min_samples_leaf': 10})
        assert len(model.parameters.tree.leaves) == 2
        assert len(model.parameters.leaf_models) == 2

    def test_single_class_leaf_is_constant(self):
        x = np.concatenate([np.linspace(-3, -1, 20), np.linspace(1, 3, 40)])
        labels = np.array([0] * 20 + [0, 1] * 20)
        m = make_matrix(np.column_stack([x, np.arange(60) % 7]), [CASE, EVENT], labels=labels)
        model = train_llm(m, {'max_depth': 1, 'min_samples_leaf': 10})
        constants = [leaf for leaf in model.parameters.leaf_models.values()
                     if isinstance(leaf, ConstantLeaf)]
        assert constants and constants[0].probability == 0.0
        assert np.all(model.predict_proba(m)[:20] == 0.0)

    def test_beats_logreg_on_piecewise_data(self):
        x1 = np.tile(np.linspace(-3, 3, 200), 2)
        segment = np.repeat([0.0, 1.0], 200)
        labels = np.where(segment == 0, x1 > -1, x1 < -1).astype(int)
        m = make_matrix(np.column_stack([segment, x1]), [CASE, EVENT], labels=labels)
        llm = train_llm(m, {'max_depth': 1, 'min_samples_leaf': 20})
        logreg = train_logreg(m)
        assert llm.training_auc > logreg.training_auc

    def test_too_few_rows(self):
        m = make_matrix(np.arange(10.0).reshape(10, 1), [CASE], labels=[0, 1] * 5)
        with pytest.raises(ModelError, match="rows"):
            train_llm(m, {'min_samples_leaf': 20})


class TestPredictorContract:
    def test_signature_mismatch(self):
        m = make_matrix([[1.0], [2.0]], [CASE], labels=[0, 1])
        model = train_logreg(m)
        other = make_matrix([[1.0], [2.0]], [CASE], labels=[0, 1], names=['other'])
        with pytest.raises(SignatureMismatchError):
            model.predict_proba(other)

    def test_empty_rows(self):
        m = make_matrix([[1.0], [2.0]], [CASE], labels=[0, 1])
        model = train_logreg(m)
        assert predict_proba(model, m.subset([])).shape == (0,)

    def test_function_predictor(self):
        m = make_matrix([[0.2], [0.9]], [CASE])
        predictor = FunctionPredictor(m.column_names, lambda rows: rows[:, 0])
        assert list(predictor.predict_proba(m)) == [0.2, 0.9]

    def test_scores_in_unit_interval(self, rng):
        rows = rng.normal(size=(100, 3)) * 50
        labels = (rows[:, 0] > 0).astype(int)
        m = make_matrix(rows, [CONTROL, CASE, EVENT], labels=labels)
        for kind in (LOGREG, TREE, FOREST, LLM):
            scores = train_model(kind, m, {'seed': 0} if kind == FOREST else None).predict_proba(m)
            assert np.all((scores >= 0.0) & (scores <= 1.0))

    def test_unknown_kind(self):
        with pytest.raises(ModelError):
            train_model('xgboost', make_matrix([[1.0]], [CASE]))


class TestGridSearch:
    def test_expand_grid_order(self):
        assert expand_grid({'a': [1, 2], 'b': [3]}) == [{'a': 1, 'b': 3}, {'a': 2, 'b': 3}]

    def test_tie_goes_to_first_point(self):
        log = generate_log(SynthSpec(n_cases=200, seed=5))
        chosen = grid_search(TREE, log, 3, {'min_samples_leaf': [100000, 200000]})
        assert chosen['min_samples_leaf'] == 100000

    def test_picks_better_point(self):
        log = generate_log(SynthSpec(n_cases=300, seed=6, n_activities=3, min_length=1, max_length=3))
        chosen = grid_search(TREE, log, 3, {'max_depth': [0, 3]})
        assert chosen['max_depth'] == 3
