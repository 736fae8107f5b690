import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from osruq import gallery as ga
from osruq import holistic as ho
from osruq import vmf
from tests.conftest import random_model, random_unit

# hand case: single class at mu1, gallery kappa 1, beta 0.5, d 3, probe on
# mu1 with kappa(x) = 5, temperature 1
HAND_KL1 = 0.2330765224674005
HAND_KL2 = 0.5426784642179780
HAND_MARGINAL = 0.1318214855812718
HAND_SELF_DENSITY = 0.7958108452159537
HAND_P1_T2 = 0.6033110237546010


def hand_model() -> ga.GalleryModel:
    mean = np.array([1.0, 0.0, 0.0])
    g = ga.Gallery(class_ids=("c000",), means=mean[None, :])
    return ga.GalleryModel(gallery=g, kappa=1.0, beta=0.5)


def hand_probe(kappa: float = 5.0) -> ho.ProbabilisticEmbedding:
    return ho.ProbabilisticEmbedding(mean=np.array([1.0, 0.0, 0.0]), kappa=kappa)


def test_embedding_validation():
    with pytest.raises(ValueError):
        ho.ProbabilisticEmbedding(mean=np.array([1.0, 0.0]), kappa=0.0)
    with pytest.raises(ValueError):
        ho.ProbabilisticEmbedding(mean=np.array([2.0, 0.0]), kappa=1.0)
    emb = ho.ProbabilisticEmbedding(mean=np.array([0.0, 1.0]), kappa=3.0)
    assert emb.d == 2


def test_scaled_posterior_t1_matches_unscaled(rng):
    for _ in range(10):
        model = random_model(rng, k=int(rng.integers(1, 8)), d=5)
        emb = ho.ProbabilisticEmbedding(mean=random_unit(rng, 5), kappa=4.0)
        scaled = ho.scaled_gallery_posterior(model, emb, temperature=1.0)
        base = ga.posterior(model, emb.mean)
        np.testing.assert_allclose(scaled.gallery_probs, base.gallery_probs, atol=1e-13)
        assert scaled.oog_prob == pytest.approx(base.oog_prob, abs=1e-13)


def test_scaled_posterior_hand_value_t2():
    post = ho.scaled_gallery_posterior(hand_model(), hand_probe(), temperature=2.0)
    assert post.gallery_probs[0] == pytest.approx(HAND_P1_T2, abs=1e-12)


@given(log_t=st.floats(min_value=-1.0, max_value=2.0), seed=st.integers(0, 2**31 - 1))
@settings(max_examples=80, deadline=None)
def test_scaled_posterior_sums_to_one(log_t, seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, k=int(rng.integers(1, 10)), d=4)
    emb = ho.ProbabilisticEmbedding(mean=random_unit(rng, 4), kappa=2.0)
    post = ho.scaled_gallery_posterior(model, emb, temperature=10.0 ** log_t)
    assert float(np.sum(post.gallery_probs)) + post.oog_prob == pytest.approx(1.0, abs=1e-12)


def test_scaled_posterior_flattens_at_high_temperature():
    model = hand_model()
    post = ho.scaled_gallery_posterior(model, hand_probe(), temperature=1e6)
    assert post.gallery_probs[0] == pytest.approx(0.5, abs=1e-5)
    assert post.oog_prob == pytest.approx(0.5, abs=1e-5)


def test_kl_components_hand_values():
    comps = ho.kl_components(hand_model(), hand_probe(), temperature=1.0)
    assert comps.kl1 == pytest.approx(HAND_KL1, abs=1e-12)
    assert comps.kl2 == pytest.approx(HAND_KL2, abs=1e-12)
    # the pieces the hand derivation runs through
    assert ga.log_marginal(hand_model(), np.array([1.0, 0.0, 0.0])) == pytest.approx(
        math.log(HAND_MARGINAL), abs=1e-12)
    assert vmf.log_c_d(3, 5.0) + 5.0 == pytest.approx(math.log(HAND_SELF_DENSITY), abs=1e-12)


def test_kl_components_default_temperature():
    comps = ho.kl_components(hand_model(), hand_probe())
    assert comps.temperature == 20.0


def test_kl1_zero_for_uninformative_gallery():
    # kappa 0 makes the class posterior equal the prior, so kl1 vanishes up
    # to logsumexp round-off
    g = ga.Gallery(class_ids=("a", "b"), means=np.eye(2))
    model = ga.GalleryModel(gallery=g, kappa=0.0, beta=0.4)
    emb = ho.ProbabilisticEmbedding(mean=random_unit(np.random.default_rng(0), 2), kappa=3.0)
    comps = ho.kl_components(model, emb, temperature=1.0)
    assert abs(comps.kl1) < 1e-13


def test_kl1_nonnegative_as_beta_vanishes(rng):
    # with no out-of-gallery mass the T=1 posterior lives on the full class
    # simplex and kl1 is an ordinary KL divergence; beta must undercut the
    # largest possible likelihood ratio exp(2 kappa) for the mass to vanish
    for _ in range(10):
        k = int(rng.integers(2, 8))
        base = random_model(rng, k=k, d=5, kappa_max=5.0)
        model = ga.GalleryModel(gallery=base.gallery, kappa=base.kappa, beta=1e-30)
        emb = ho.ProbabilisticEmbedding(mean=random_unit(rng, 5), kappa=2.0)
        comps = ho.kl_components(model, emb, temperature=1.0)
        assert comps.kl1 >= -1e-12


def test_kl2_increases_with_probe_concentration():
    model = hand_model()
    values = [ho.kl_components(model, hand_probe(kappa=k)).kl2 for k in (1.0, 2.0, 5.0, 10.0, 50.0)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_kl_components_validation():
    with pytest.raises(ValueError):
        ho.kl_components(hand_model(), hand_probe(), temperature=0.0)
    bad = ho.ProbabilisticEmbedding(mean=np.array([0.0, 1.0]), kappa=1.0)
    with pytest.raises(ValueError):
        ho.kl_components(hand_model(), bad)


def comps_from(values1, values2):
    return [ho.KlComponents(kl1=a, kl2=b, temperature=20.0) for a, b in zip(values1, values2)]


def test_fit_stats_values():
    stats = ho.fit_stats(comps_from([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]))
    assert stats.mean1 == pytest.approx(2.0)
    assert stats.std1 == pytest.approx(1.0)
    stats = ho.fit_stats(comps_from([0.0, 0.0, 4.0, 4.0], [1.0, 2.0, 3.0, 4.0]))
    assert stats.mean1 == pytest.approx(2.0)
    assert stats.std1 == pytest.approx(math.sqrt(16.0 / 3.0))


def test_fit_stats_errors():
    with pytest.raises(ho.CalibrationError):
        ho.fit_stats(comps_from([1.0], [1.0]))
    with pytest.raises(ho.CalibrationError):
        ho.fit_stats(comps_from([2.0, 2.0], [1.0, 3.0]))


def test_normalize_and_sum():
    stats = ho.CalibrationStats(mean1=1.0, std1=2.0, mean2=-1.0, std2=0.5)
    comps = ho.KlComponents(kl1=3.0, kl2=0.0, temperature=20.0)
    kl1n, kl2n = ho.normalize(comps, stats)
    assert kl1n == pytest.approx(1.0)
    assert kl2n == pytest.approx(2.0)
    assert ho.holue_sum(kl1n, kl2n) == pytest.approx(3.0)


def test_holue_sum_ranking_invariant_under_shift(rng):
    # adding the same offset to every probe's components cannot reorder them
    a = rng.standard_normal(20)
    b = rng.standard_normal(20)
    base = np.array([ho.holue_sum(x, y) for x, y in zip(a, b)])
    shifted = np.array([ho.holue_sum(x + 3.5, y - 1.25) for x, y in zip(a, b)])
    np.testing.assert_array_equal(np.argsort(base, kind="stable"),
                                  np.argsort(shifted, kind="stable"))


def test_training_config_validation():
    with pytest.raises(ValueError):
        ho.TrainingConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        ho.TrainingConfig(epochs=0)
    with pytest.raises(ValueError):
        ho.TrainingConfig(momentum=1.0)


def test_zero_initialized_network_predicts_half():
    sizes = [2, 16, 16, 1]
    weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    calib = ho.MlpCalibrator(weights=weights, biases=biases, config=ho.TrainingConfig(), seed=0)
    assert ho.mlp_predict(calib, 0.7, -2.0) == 0.5
    assert calib.layer_sizes() == sizes


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    sizes = [2, 4, 4, 1]
    weights = [rng.uniform(-0.5, 0.5, size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [rng.uniform(-0.5, 0.5, size=b) for b in sizes[1:]]
    x = rng.standard_normal((20, 2))
    y = (rng.random(20) < 0.5).astype(float)
    _, grad_w, grad_b = ho.loss_and_gradients(weights, biases, x, y)
    step = 1e-5
    worst = 0.0
    for layer in range(len(weights)):
        for idx in np.ndindex(weights[layer].shape):
            w_plus = [w.copy() for w in weights]
            w_minus = [w.copy() for w in weights]
            w_plus[layer][idx] += step
            w_minus[layer][idx] -= step
            lp, _, _ = ho.loss_and_gradients(w_plus, biases, x, y)
            lm, _, _ = ho.loss_and_gradients(w_minus, biases, x, y)
            worst = max(worst, abs((lp - lm) / (2 * step) - grad_w[layer][idx]))
        for j in range(biases[layer].shape[0]):
            b_plus = [b.copy() for b in biases]
            b_minus = [b.copy() for b in biases]
            b_plus[layer][j] += step
            b_minus[layer][j] -= step
            lp, _, _ = ho.loss_and_gradients(weights, b_plus, x, y)
            lm, _, _ = ho.loss_and_gradients(weights, b_minus, x, y)
            worst = max(worst, abs((lp - lm) / (2 * step) - grad_b[layer][j]))
    assert worst < 1e-6


def test_fit_mlp_learns_separable_toy():
    rng = np.random.default_rng(8)
    n = 200
    x = np.vstack([rng.normal(loc=(-2.0, -2.0), scale=0.3, size=(n // 2, 2)),
                   rng.normal(loc=(2.0, 2.0), scale=0.3, size=(n // 2, 2))])
    y = np.concatenate([np.zeros(n // 2), np.ones(n // 2)])
    calib = ho.fit_mlp(x, y, config=ho.TrainingConfig(epochs=600), seed=1)
    probs = ho.mlp_predict(calib, x[:, 0], x[:, 1])
    accuracy = float(np.mean((probs >= 0.5) == (y == 1.0)))
    assert accuracy >= 0.99
    assert calib.final_loss < 0.1


def test_fit_mlp_deterministic():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((40, 2))
    y = (x.sum(axis=1) > 0).astype(float)
    cfg = ho.TrainingConfig(epochs=50)
    a = ho.fit_mlp(x, y, config=cfg, seed=7)
    b = ho.fit_mlp(x, y, config=cfg, seed=7)
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)
    c = ho.fit_mlp(x, y, config=cfg, seed=8)
    assert any(not np.array_equal(wa, wc) for wa, wc in zip(a.weights, c.weights))


def test_fit_mlp_input_validation():
    x = np.zeros((4, 2))
    with pytest.raises(ho.TrainingError):
        ho.fit_mlp(np.zeros((4, 3)), np.array([0.0, 1.0, 0.0, 1.0]))
    with pytest.raises(ho.TrainingError):
        ho.fit_mlp(x, np.array([0.0, 1.0]))
    with pytest.raises(ho.TrainingError):
        ho.fit_mlp(x, np.array([0.0, 1.0, 0.5, 1.0]))
    with pytest.raises(ho.TrainingError):
        ho.fit_mlp(x, np.ones(4))


def test_mlp_predict_shapes_and_clipping():
    sizes = [2, 16, 16, 1]
    weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    biases[-1] = np.array([1000.0])
    calib = ho.MlpCalibrator(weights=weights, biases=biases, config=ho.TrainingConfig(), seed=0)
    out = ho.mlp_predict(calib, 0.0, 0.0)
    assert isinstance(out, float)
    assert out == 1.0 - 1e-12
    arr = ho.mlp_predict(calib, np.zeros(3), np.zeros(3))
    assert arr.shape == (3,)


def test_calibrator_json_round_trip():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((30, 2))
    y = (x[:, 0] > 0).astype(float)
    stats = ho.CalibrationStats(mean1=0.1, std1=1.2, mean2=-0.3, std2=0.8)
    calib = ho.fit_mlp(x, y, config=ho.TrainingConfig(epochs=40), seed=2, stats=stats)
    text = ho.calibrator_to_json(calib)
    back = ho.calibrator_from_json(text)
    assert back.seed == calib.seed
    assert back.config == calib.config
    assert back.stats == stats
    probe = rng.standard_normal((5, 2))
    np.testing.assert_array_equal(ho.mlp_predict(back, probe[:, 0], probe[:, 1]),
                                  ho.mlp_predict(calib, probe[:, 0], probe[:, 1]))
    # canonical form survives a second round trip byte for byte
    assert ho.calibrator_to_json(back) == text
    assert json.loads(text)["layer_sizes"] == [2, 16, 16, 1]
