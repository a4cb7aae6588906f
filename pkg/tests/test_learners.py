import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dse.datagen import GaussianTaskSpec, LabeledDataset, paper_directions, sample_task
from dse.exceptions import ConfigError, DegenerateModelError, DegenerateTaskError, DimensionError
from dse.learners import (GmlvqConfig, GmlvqModel, SvmConfig, SvmModel, classifier_score,
                          gmlvq_cost, gmlvq_distance, gmlvq_mu, model_from_dict, model_to_dict,
                          relevance, relevance_from_gmlvq, relevance_from_svm, sample_gradient,
                          svm_score, train, train_gmlvq, train_svm, validate_relevance)
from dse.linalg import sym_eigen
from dse.metrics import roc_auc

from conftest import random_psd_unit_trace


def _model(protos, labels, omega):
    return GmlvqModel(np.array(protos, float), np.array(labels), np.array(omega, float))


def _lambda_model(lam):
    # Omega = Lambda^(1/2) reproduces Lambda exactly enough for these checks
    eig = sym_eigen(lam)
    omega = eig.eigenvectors @ np.diag(np.sqrt(np.clip(eig.eigenvalues, 0, None))) \
        @ eig.eigenvectors.T
    d = lam.shape[0]
    return _model([np.zeros(d), np.ones(d)], [1, 2], omega)


# -- distances, cost, scores -----------------------------------------------

def test_distance_identity_metric():
    d = 4
    m = _model([np.zeros(d), np.ones(d)], [1, 2], np.eye(d) / math.sqrt(d))
    x = np.array([1.0, 2.0, 0.0, -1.0])
    assert gmlvq_distance(m, np.zeros(d), x) == pytest.approx(np.sum(x ** 2) / d)
    assert gmlvq_distance(m, x, x) == 0.0


def test_distance_hand_value():
    m = _model([[0.0, 0.0], [1.0, 1.0]], [1, 2], np.eye(2) / math.sqrt(2))
    assert gmlvq_distance(m, [0.0, 0.0], [1.0, 1.0]) == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        gmlvq_distance(m, [0.0], [1.0, 1.0])


def test_mu_boundaries_and_cost():
    m = _model([[0.0, 0.0], [2.0, 0.0]], [1, 2], np.eye(2) / math.sqrt(2))
    data = LabeledDataset([[1.0, 0.0], [0.0, 0.0]], [1, 1])
    mu = gmlvq_mu(m, data)
    assert mu[0] == pytest.approx(0.0)
    assert mu[1] == pytest.approx(-1.0)
    assert gmlvq_cost(m, LabeledDataset([[1.0, 0.0]], [1])) == pytest.approx(0.5)


def test_cost_two_sample_hand_oracle():
    # Euclidean/2 metric, prototypes at 0 (class 1) and 3 (class 2) on a line
    m = _model([[0.0], [3.0]], [1, 2], [[1.0]])
    data = LabeledDataset([[1.0], [2.5]], [1, 2])
    # sample 1: dJ=1, dK=4 -> mu=-0.6 ; sample 2: dJ=0.25, dK=6.25 -> mu=-12/13
    expected = 1 / (1 + math.exp(4 * 0.6)) + 1 / (1 + math.exp(4 * 12 / 13))
    assert gmlvq_cost(m, data) == pytest.approx(expected, rel=1e-12)


def test_score_is_mu_relative_to_class_ordering():
    m = _model([[0.0], [4.0]], [1, 2], [[1.0]])
    xs = np.array([[-1.0], [0.0], [1.0], [2.0], [3.0]])
    d1 = xs[:, 0] ** 2
    d2 = (xs[:, 0] - 4) ** 2
    expected = (d1 - d2) / (d1 + d2)
    got = classifier_score(m, xs)
    np.testing.assert_allclose(got, expected, atol=1e-12)
    assert list(np.argsort(got)) == list(np.argsort(expected))
    assert classifier_score(m, [2.0]) == pytest.approx(0.0)


def test_svm_score_examples():
    m = SvmModel([1.0, 0.0], 0.0)
    assert svm_score(m, [2.0, 5.0]) == 2.0
    assert svm_score(SvmModel([1.0, -1.0], 0.5), [1.0, 1.0]) == 0.5
    assert svm_score(SvmModel([1.0, 1.0], 0.0), [1.0, -1.0]) == 0.0
    assert classifier_score(m, [2.0, 5.0]) == svm_score(m, [2.0, 5.0])
    with pytest.raises(DimensionError):
        svm_score(m, [1.0])


# -- relevances ------------------------------------------------------------

def test_relevance_examples():
    d = 5
    e1 = np.eye(d)[0]
    np.testing.assert_allclose(relevance_from_gmlvq(_lambda_model(np.outer(e1, e1))),
                               e1, atol=1e-12)
    np.testing.assert_allclose(relevance_from_gmlvq(_lambda_model(np.eye(d) / d)),
                               np.full(d, 1 / d), atol=1e-12)
    np.testing.assert_array_equal(relevance_from_svm(SvmModel(e1, 0.0)), e1)
    np.testing.assert_allclose(relevance_from_svm(SvmModel([1.0, 1.0], 0.0)), [0.5, 0.5])
    np.testing.assert_allclose(relevance_from_svm(SvmModel([3.0, 4.0], 0.0)), [0.36, 0.64],
                               atol=1e-15)
    with pytest.raises(DegenerateModelError):
        relevance_from_svm(SvmModel([0.0, 0.0], 0.0))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), d=st.integers(2, 20))
def test_relevance_equals_eigen_expansion(seed, d):
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((d, d))
    omega /= np.linalg.norm(omega)
    m = _model([np.zeros(d), np.ones(d)], [1, 2], omega)
    eig = sym_eigen(m.lambda_)
    expansion = (eig.eigenvectors ** 2) @ eig.eigenvalues
    np.testing.assert_allclose(relevance_from_gmlvq(m), expansion, atol=1e-10)


def test_validate_relevance():
    validate_relevance([0.25, 0.75])
    with pytest.raises(Exception):
        validate_relevance([0.5, 0.6])
    with pytest.raises(Exception):
        validate_relevance([1.5, -0.5])


# -- gradients -------------------------------------------------------------

def _phi(x, c, w, wl, omega, slope=4.0, eps=1e-12):
    return sample_gradient(x, c, w, wl, omega, slope, eps)[0]


def _rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 11))
    w = rng.standard_normal((2, d))
    wl = np.array([1, 2])
    omega = rng.standard_normal((d, d))
    x = rng.standard_normal(d)
    c = int(rng.integers(1, 3))
    _, _, jb, kb, gwj, gwk, gom = sample_gradient(x, c, w, wl, omega, 4.0, 1e-12)
    h = 1e-5
    fd_w = np.zeros_like(w)
    for m in range(2):
        for b in range(d):
            wp, wm = w.copy(), w.copy()
            wp[m, b] += h
            wm[m, b] -= h
            fd_w[m, b] = (_phi(x, c, wp, wl, omega) - _phi(x, c, wm, wl, omega)) / (2 * h)
    fd_o = np.zeros_like(omega)
    for a in range(d):
        for b in range(d):
            op, om = omega.copy(), omega.copy()
            op[a, b] += h
            om[a, b] -= h
            fd_o[a, b] = (_phi(x, c, w, wl, op) - _phi(x, c, w, wl, om)) / (2 * h)
    assert _rel_err(gwj, fd_w[jb]) < 1e-4
    assert _rel_err(gwk, fd_w[kb]) < 1e-4
    assert _rel_err(gom, fd_o) < 1e-4


# -- GMLVQ training --------------------------------------------------------

def test_gmlvq_separable_blobs():
    data = sample_task(GaussianTaskSpec(2, 10.0, 1.0, [1.0, 1.0], 100, seed=0))
    model = train_gmlvq(data, seed=1)
    pred = np.where(classifier_score(model, data.features) > 0, 2, 1)
    assert np.mean(pred == data.labels) >= 0.99
    assert model.cost_trace[-1] <= model.cost_trace[0]


def test_gmlvq_invariants_and_determinism(easy_task):
    a = train_gmlvq(easy_task, seed=3, monitor_every=10)
    b = train_gmlvq(easy_task, seed=3)
    assert np.trace(a.lambda_) == pytest.approx(1.0, abs=1e-10)
    assert a.monitor["max_trace_deviation"] <= 1e-10
    assert a.monitor["min_eigenvalue"] >= -1e-10
    assert a.monitor["checks"] == 100 * easy_task.n // 10
    assert a.omega.tobytes() == b.omega.tobytes()
    assert a.cost_trace[-1] <= a.cost_trace[0]


def test_gmlvq_rejects_single_class():
    with pytest.raises(DegenerateTaskError):
        train_gmlvq(LabeledDataset(np.zeros((3, 2)), [1, 1, 1]))


def test_gmlvq_config_validation():
    with pytest.raises(ConfigError):
        GmlvqConfig(epochs=-1)
    with pytest.raises(ConfigError):
        GmlvqConfig(lr_prototypes=0.0)
    assert GmlvqConfig().metric_rate == pytest.approx(0.005)


def test_gmlvq_scale_invariance(easy_task):
    scaled = LabeledDataset(easy_task.features * 1000.0, easy_task.labels)
    a, b = train_gmlvq(easy_task, seed=2), train_gmlvq(scaled, seed=2)
    np.testing.assert_allclose(relevance(a), relevance(b), atol=1e-8)


def test_gmlvq_chance_level_auc():
    aucs = []
    for s in range(40):
        data = sample_task(GaussianTaskSpec(5, 0.0, 1.0, None, 60, seed=s))
        test = sample_task(GaussianTaskSpec(5, 0.0, 1.0, None, 60, seed=1000 + s))
        model = train_gmlvq(data, GmlvqConfig(epochs=20), seed=s)
        aucs.append(roc_auc(classifier_score(model, test.features), test.labels).auc)
    assert 0.4 <= np.mean(aucs) <= 0.6


def _angle_deg(u, v):
    c = abs(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.degrees(math.acos(min(1.0, c)))


def _gmlvq_cosines(t, seeds=range(20)):
    a1, _ = paper_directions(17)
    out = []
    for s in seeds:
        data = sample_task(GaussianTaskSpec(17, t, 1.0, a1, 500, seed=300 + s))
        v = sym_eigen(train_gmlvq(data, seed=s).lambda_).eigenvectors[:, 0]
        out.append(abs(v @ a1))
    return np.array(out)


def _svm_cosines(t, seeds=range(20)):
    a1, _ = paper_directions(17)
    out = []
    for s in seeds:
        data = sample_task(GaussianTaskSpec(17, t, 1.0, a1, 500, seed=300 + s))
        w = train_svm(data, SvmConfig(standardize=False), seed=s).omega_weights
        out.append(abs(w @ a1) / np.linalg.norm(w))
    return np.array(out)


@pytest.mark.slow
def test_gmlvq_dominant_eigenvector_follows_direction():
    cos = _gmlvq_cosines(2.0)
    assert np.mean(cos >= 0.9) >= 0.8


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="single-prototype GMLVQ direction estimate is "
                   "about 17 degrees off at t=2, n=500; the cost optimum itself sits there")
def test_gmlvq_eigenvector_within_15_degrees_at_t2():
    cos = _gmlvq_cosines(2.0)
    assert np.mean(cos >= math.cos(math.radians(15))) >= 0.8


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="GMLVQ reaches |cos| >= 0.9 in roughly 60-70% "
                   "of seeds at t=1")
def test_gmlvq_direction_recovery_rate_at_t1():
    assert np.mean(_gmlvq_cosines(1.0) >= 0.9) >= 0.8


@pytest.mark.slow
def test_svm_direction_recovery_rate_at_t1():
    assert np.mean(_svm_cosines(1.0) >= 0.9) >= 0.8


# -- SVM training ----------------------------------------------------------

@pytest.mark.parametrize("penalty", ["l2", "l1"])
def test_svm_separable_1d(penalty):
    x = np.r_[np.linspace(-4, -1.1, 20), np.linspace(1.1, 4, 20)][:, None]
    y = np.r_[np.ones(20, int), np.full(20, 2)]
    model = train_svm(LabeledDataset(x, y), SvmConfig(penalty=penalty), seed=0)
    pred = np.where(classifier_score(model, x) > 0, 2, 1)
    assert np.all(pred == y)


def test_svm_duplication_invariance():
    data = sample_task(GaussianTaskSpec(6, 1.0, 1.0, None, 80, seed=3))
    twice = LabeledDataset(np.vstack([data.features, data.features]),
                           np.r_[data.labels, data.labels])
    cfg = SvmConfig(solver="dual", strength=0.01, tol=1e-12)
    a = train_svm(data, cfg, seed=0).omega_weights
    b = train_svm(twice, cfg, seed=0).omega_weights
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    assert np.linalg.norm(a - b) < 1e-6


def test_svm_direction_with_benchmark_vector():
    a1, _ = paper_directions(17)
    data = sample_task(GaussianTaskSpec(17, 2.0, 1.0, a1, 500, seed=4))
    model = train_svm(data, SvmConfig(standardize=False), seed=1)
    assert _angle_deg(model.omega_weights, a1) < 15.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_svm_objective_non_increasing(seed):
    data = sample_task(GaussianTaskSpec(10, 1.0, 1.0, None, 150, seed=seed))
    model = train_svm(data, SvmConfig(epochs=30), seed=seed)
    tr = np.array(model.objective_trace)
    assert np.all(np.diff(tr) <= 1e-12)


def test_svm_rejections():
    with pytest.raises(DegenerateTaskError):
        train_svm(LabeledDataset(np.zeros((3, 2)), [2, 2, 2]))
    with pytest.raises(ConfigError):
        SvmConfig(penalty="l0")
    with pytest.raises(ConfigError):
        SvmConfig(solver="dual", penalty="l1")


def test_svm_relevances_on_simplex(easy_task):
    for penalty in ("l1", "l2"):
        r = relevance(train_svm(easy_task, SvmConfig(penalty=penalty), seed=0))
        assert np.all(r >= 0) and abs(r.sum() - 1.0) <= 1e-10


# -- serialisation -----------------------------------------------------------

@pytest.mark.parametrize("config", [GmlvqConfig(epochs=5), SvmConfig(epochs=5)])
def test_model_dict_round_trip(easy_task, config):
    model = train(easy_task, config, seed=9)
    back = model_from_dict(model_to_dict(model))
    np.testing.assert_array_equal(classifier_score(back, easy_task.features),
                                  classifier_score(model, easy_task.features))
    assert model_to_dict(back) == model_to_dict(model)
