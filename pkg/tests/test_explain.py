import numpy as np
import pytest

from oirdetect.explain import (EmptyBackground, SameModality, shap_values,
                               synergy, top_k_report)


def _linear(w, b=0.0):
    w = np.asarray(w, dtype=float)
    return lambda X: np.asarray(X, dtype=float) @ w + b


def test_efficiency_exact():
    rng = np.random.default_rng(0)
    f = lambda X: np.sin(X).sum(axis=1) + np.prod(X[:, :3], axis=1)
    x = rng.normal(size=10)
    bg = rng.normal(size=(6, 10))
    phi, base = shap_values(f, x, bg)
    assert abs(base + phi.sum() - f(x[None])[0]) < 1e-6


def test_linear_model_analytic():
    rng = np.random.default_rng(1)
    w = rng.normal(size=7)
    x = rng.normal(size=7)
    bg = rng.normal(size=(20, 7))
    phi, base = shap_values(_linear(w, 0.5), x, bg)
    expected = w * (x - bg.mean(axis=0))
    assert np.max(np.abs(phi - expected)) < 1e-6
    assert abs(base - (bg.mean(axis=0) @ w + 0.5)) < 1e-6


def test_sampling_close_to_exact():
    rng = np.random.default_rng(2)
    f = lambda X: np.tanh(X).sum(axis=1) + X[:, 0] * X[:, 1]
    x = rng.normal(size=8)
    bg = rng.normal(size=(8, 8))
    exact, _ = shap_values(f, x, bg)
    sampled, _ = shap_values(f, x, bg, n_samples=400, seed=0, force_sampled=True)
    assert np.max(np.abs(exact - sampled)) < 0.02


def test_constant_model_all_zero():
    f = lambda X: np.full(len(X), 3.14)
    phi, base = shap_values(f, np.zeros(5), np.ones((4, 5)))
    assert np.allclose(phi, 0.0)
    assert base == pytest.approx(3.14)


def test_empty_background():
    with pytest.raises(EmptyBackground):
        shap_values(lambda X: X.sum(axis=1), np.zeros(3),
                    np.zeros((0, 3)))


def test_additive_synergy_near_zero():
    rng = np.random.default_rng(3)
    f = _linear([1.0, -2.0, 0.5, 3.0])
    x = rng.normal(size=4)
    bg = rng.normal(size=(10, 4))
    mods = ["linguistic", "linguistic", "prosodic", "prosodic"]
    s = synergy(f, x, bg, 0, 2, mods, seed=0)
    assert abs(s) < 0.01


def test_multiplicative_synergy_detected():
    f = lambda X: X[:, 0] * X[:, 2]
    x = np.array([2.0, 0.0, 2.0, 0.0])
    bg = np.zeros((5, 4))
    mods = ["linguistic", "linguistic", "prosodic", "prosodic"]
    s = synergy(f, x, bg, 0, 2, mods, seed=0)
    assert s > 0.1


def test_same_modality_rejected():
    f = _linear([1.0, 1.0, 1.0])
    mods = ["linguistic", "linguistic", "prosodic"]
    with pytest.raises(SameModality):
        synergy(f, np.zeros(3), np.ones((3, 3)), 0, 1, mods)


def test_top_k_report_sorted_by_magnitude():
    names = ["a", "b", "c", "d"]
    phis = np.array([0.1, -5.0, 2.0, 0.0])
    rep = top_k_report(names, phis, k=3)
    assert [a.feature for a in rep] == ["b", "c", "a"]
    assert rep[0].shap == -5.0
    # k larger than the feature count is clamped
    assert len(top_k_report(names, phis, k=99)) == 4


def test_planted_dominant_feature_first():
    rng = np.random.default_rng(4)
    w = np.full(6, 0.1)
    w[3] = 10.0
    x = rng.normal(size=6) + 1.0
    bg = rng.normal(size=(12, 6)) - 1.0
    phi, _ = shap_values(_linear(w), x, bg)
    rep = top_k_report([f"f{i}" for i in range(6)], phi, k=1)
    assert rep[0].feature == "f3"
