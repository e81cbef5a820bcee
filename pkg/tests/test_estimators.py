import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from gradlre.data import SplitSpec, stratified_split
from gradlre.estimators import GradLREClassifier, RelationEncoder
from gradlre.synthetic import generate_synthetic


@pytest.fixture(scope="module")
def data():
    corpus = generate_synthetic("semeval-like", 760, seed=3)
    lab, unl, test = stratified_split(corpus, SplitSpec(0.2, 0.4, seed=0))
    X = list(lab.mentions) + list(unl.mentions)
    y = np.concatenate([lab.labels(), np.full(len(unl), -1)])
    return X, y, list(test.mentions), test.labels()


def test_encoder_transform(data):
    X, *_ = data
    enc = RelationEncoder(h_R=16).fit(X)
    Z = enc.transform(X[:4])
    assert Z.shape == (4, 32) and enc.n_features_out_ == 32
    with pytest.raises(TypeError):
        enc.transform([1, 2])


def test_params_and_clone():
    clf = GradLREClassifier(lam=0.2, mode="self-train")
    assert clf.get_params()["lam"] == 0.2
    c = clone(clf)
    assert c.get_params() == clf.get_params()
    assert c.set_params(epochs=5).epochs == 5


def test_not_fitted():
    with pytest.raises(NotFittedError):
        GradLREClassifier().predict(np.zeros((1, 4)))


@pytest.mark.parametrize("mode", ["gradlre", "self-train", "supervised"])
def test_pipeline_fit_predict(data, mode):
    X, y, Xt, yt = data
    pipe = make_pipeline(RelationEncoder(h_R=32), GradLREClassifier(epochs=200, segments=2, mode=mode))
    pipe.fit(X, y)
    pred = pipe.predict(Xt)
    clf = pipe[-1]
    assert set(pred) <= set(clf.classes_)
    assert pipe.predict_proba(Xt).sum(axis=1) == pytest.approx(np.ones(len(Xt)))
    assert (clf.run_log_ is None) == (mode == "supervised")
    if mode != "self-train":
        assert (pred == yt).mean() > 0.2


def test_input_validation(data):
    with pytest.raises(ValueError):
        GradLREClassifier().fit(np.zeros((3, 2)), [-1, -1, -1])
    with pytest.raises(ValueError):
        GradLREClassifier(mode="x").fit(np.zeros((3, 2)), [0, 1, -1])
    clf = GradLREClassifier(epochs=1, mode="supervised").fit(np.eye(3), [0, 1, 1])
    with pytest.raises(ValueError):
        clf.predict(np.zeros((1, 5)))


def test_arbitrary_label_values_round_trip():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(loc=c, size=(10, 2)) for c in (-3, 3)])
    y = np.array([7] * 10 + [42] * 10)
    clf = GradLREClassifier(epochs=50, mode="supervised").fit(X, y)
    assert set(clf.predict(X)) <= {7, 42}
    assert clf.score(X, y) == 1.0
