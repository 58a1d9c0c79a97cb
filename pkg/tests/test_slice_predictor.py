import math

import numpy as np
import pytest

from hyfi_ee.rate_model import Slice
from hyfi_ee.slice_predictor import (FeatureEncoder, KpiRecord, LABELS,
                                     RpropParams, cross_entropy_loss, evaluate,
                                     generate_dataset, label_rule, load_model,
                                     loss_gradients, one_hot_encode, predict,
                                     rprop_step, save_model, softmax, split,
                                     train_rprop)


def _clean_record(**overrides):
    base = dict(use_case_category="emergency_alert",
                latency_requirement_ms=1.0,
                reliability_pct=99.999,
                supported_technology="hybrid",
                packet_size_bytes=128.0,
                device_density_per_km2=100.0,
                time_of_day_bucket="night",
                label=Slice.URLLC)
    base.update(overrides)
    return KpiRecord(**base)


# ---------------------------------------------------------------- dataset

def test_dataset_deterministic():
    a = generate_dataset(200, seed=5)
    b = generate_dataset(200, seed=5)
    assert a == b


def test_dataset_class_balance():
    records = generate_dataset(10_000, seed=1)
    for label in LABELS:
        share = sum(r.label == label for r in records) / len(records)
        assert 0.2 <= share <= 0.5


def test_label_rule_examples():
    assert label_rule(1.0, 99.999, 200, 100) is Slice.URLLC
    assert label_rule(50.0, 99.0, 64, 200_000) is Slice.MMTC
    assert label_rule(50.0, 99.0, 5_000, 200) is Slice.EMBB


def test_noise_rate_is_small():
    records = generate_dataset(20_000, seed=2)
    flipped = sum(
        label_rule(r.latency_requirement_ms, r.reliability_pct,
                   r.packet_size_bytes, r.device_density_per_km2) != r.label
        for r in records)
    # resampling flips ~5% * 2/3 of labels
    assert 0.02 <= flipped / len(records) <= 0.05


def test_record_validation():
    with pytest.raises(ValueError):
        _clean_record(use_case_category="nonsense")
    with pytest.raises(ValueError):
        _clean_record(latency_requirement_ms=float("nan"))


# ---------------------------------------------------------------- encoding

def test_one_hot_block_structure():
    a = _clean_record()
    b = _clean_record(supported_technology="wifi")
    features, labels, encoder = one_hot_encode([a, b, a])
    n_num = 4
    assert features.shape == (3, encoder.num_features)
    tech_block = slice(n_num + 9, n_num + 12)  # after use-case vocabulary
    assert not np.array_equal(features[0, tech_block], features[1, tech_block])
    diff = features[0] != features[1]
    assert diff.sum() == 2  # exactly the technology indicator pair
    np.testing.assert_array_equal(features[0], features[2])


def test_standardization_on_training_split():
    records = generate_dataset(500, seed=3)
    features, _, _ = one_hot_encode(records)
    means = features[:, :4].mean(axis=0)
    stds = features[:, :4].std(axis=0)
    assert np.max(np.abs(means)) <= 1e-9
    np.testing.assert_allclose(stds, 1.0, rtol=1e-9)


def test_encoder_rejects_unknown_category():
    records = generate_dataset(10, seed=0)
    encoder = FeatureEncoder().fit(records)
    encoder.vocab["supported_technology"] = ["wifi"]  # shrink the vocabulary
    with pytest.raises(ValueError, match="unknown"):
        encoder.transform([_clean_record()])


def test_split_partition():
    records = generate_dataset(1000, seed=4)
    train, test = split(records, 0.8, seed=9)
    assert len(train) == 800 and len(test) == 200
    ids = lambda rs: {id(r) for r in rs}
    assert ids(train).isdisjoint(ids(test))
    assert ids(train) | ids(test) == ids(records)
    train2, _ = split(records, 0.8, seed=9)
    assert train == train2


# ---------------------------------------------------------------- Rprop rule

def test_rprop_step_growth_on_sign_agreement():
    p = np.array([1.0])
    g = np.array([0.5])
    d = np.array([0.1])
    pg = np.array([2.0])  # same sign as g
    rprop_step([p], [g], [d], [pg], RpropParams())
    assert math.isclose(d[0], 0.12)
    assert math.isclose(p[0], 1.0 - 0.12)
    assert pg[0] == 0.5


def test_rprop_step_shrink_and_memory_clear_on_flip():
    p = np.array([1.0])
    g = np.array([0.5])
    d = np.array([0.1])
    pg = np.array([-2.0])  # sign flip
    rprop_step([p], [g], [d], [pg], RpropParams())
    assert math.isclose(d[0], 0.05)
    assert pg[0] == 0.0  # memory cleared


def test_rprop_step_caps_and_floors():
    params = RpropParams(delta_max=0.11, delta_min=0.09)
    d_up = np.array([0.1])
    rprop_step([np.array([0.0])], [np.array([1.0])], [d_up],
               [np.array([1.0])], params)
    assert math.isclose(d_up[0], 0.11)
    d_down = np.array([0.1])
    rprop_step([np.array([0.0])], [np.array([1.0])], [d_down],
               [np.array([-1.0])], params)
    assert math.isclose(d_down[0], 0.09)


def test_rprop_depends_only_on_gradient_signs():
    rng = np.random.default_rng(0)
    p1 = rng.standard_normal(6)
    p2 = p1.copy()
    d1 = np.full(6, 0.1)
    d2 = d1.copy()
    pg1 = np.zeros(6)
    pg2 = np.zeros(6)
    for _ in range(5):
        g = rng.standard_normal(6)
        rprop_step([p1], [g], [d1], [pg1], RpropParams())
        rprop_step([p2], [1000.0 * g], [d2], [pg2], RpropParams())
    np.testing.assert_allclose(p1, p2, atol=1e-15)
    np.testing.assert_allclose(d1, d2, atol=1e-15)


# ---------------------------------------------------------------- gradients

def test_backprop_matches_finite_differences():
    rng = np.random.default_rng(1)
    records = generate_dataset(40, seed=6)
    features, labels, encoder = one_hot_encode(records)
    # toy net: aim for ~10 weights by shrinking the input to 2 features
    features = features[:, :2]
    model, _ = train_rprop(features, labels, arch=(3,),
                           hyper=RpropParams(epochs=1, init_seed=2),
                           encoder=encoder)
    grads_w, grads_b = loss_gradients(model, features, labels)
    step = 1e-6
    for w, gw in zip(model.weights, grads_w):
        for idx in np.ndindex(w.shape):
            original = w[idx]
            w[idx] = original + step
            up = cross_entropy_loss(model, features, labels)
            w[idx] = original - step
            down = cross_entropy_loss(model, features, labels)
            w[idx] = original
            fd = (up - down) / (2 * step)
            if abs(fd) > 1e-8:
                assert math.isclose(gw[idx], fd, rel_tol=1e-5, abs_tol=1e-9)


# ---------------------------------------------------------------- training

def test_training_loss_decreases():
    records = generate_dataset(600, seed=7)
    features, labels, encoder = one_hot_encode(records)
    model, history = train_rprop(features, labels, arch=(16,),
                                 hyper=RpropParams(epochs=60, init_seed=0),
                                 encoder=encoder)
    assert all(math.isfinite(v) for v in history["loss"])
    assert history["loss"][-1] <= history["loss"][0]


def test_trained_model_beats_chance_quickly():
    records = generate_dataset(2000, seed=8)
    train, test = split(records, 0.8, seed=8)
    features, labels, encoder = one_hot_encode(train)
    model, _ = train_rprop(features, labels, arch=(32, 16),
                           hyper=RpropParams(epochs=80, init_seed=1),
                           encoder=encoder)
    accuracy, confusion = evaluate(model, test)
    assert accuracy >= 0.9
    assert confusion.sum() == len(test)
    counts = [sum(r.label == label for r in test) for label in LABELS]
    np.testing.assert_array_equal(confusion.sum(axis=1), counts)


# ---------------------------------------------------------------- prediction

def test_softmax_properties():
    rng = np.random.default_rng(2)
    logits = rng.standard_normal((5, 3))
    probs = softmax(logits)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    shifted = softmax(logits + 123.456)
    np.testing.assert_allclose(probs, shifted, atol=1e-12)


def test_uniform_logits_give_uniform_probs():
    probs = softmax(np.zeros((1, 3)))[0]
    np.testing.assert_allclose(probs, 1 / 3, atol=1e-12)


def test_predict_clean_urllc_record():
    records = generate_dataset(4000, seed=9)
    train, _ = split(records, 0.8, seed=9)
    features, labels, encoder = one_hot_encode(train)
    model, _ = train_rprop(features, labels, arch=(32, 16),
                           hyper=RpropParams(epochs=80, init_seed=3),
                           encoder=encoder)
    label, probs = predict(model, _clean_record())
    assert label is Slice.URLLC
    assert math.isclose(probs.sum(), 1.0, abs_tol=1e-9)


def test_oracle_labeler_scores_perfectly_on_clean_data():
    # restrict to noise-free records; the generating rule then classifies all
    records = [r for r in generate_dataset(2000, seed=10)
               if label_rule(r.latency_requirement_ms, r.reliability_pct,
                             r.packet_size_bytes,
                             r.device_density_per_km2) == r.label]
    assert len(records) > 1800
    correct = sum(label_rule(r.latency_requirement_ms, r.reliability_pct,
                             r.packet_size_bytes,
                             r.device_density_per_km2) == r.label
                  for r in records)
    assert correct == len(records)


# ---------------------------------------------------------------- persistence

def test_save_load_round_trip(tmp_path):
    records = generate_dataset(300, seed=11)
    features, labels, encoder = one_hot_encode(records)
    model, _ = train_rprop(features, labels, arch=(8,),
                           hyper=RpropParams(epochs=20, init_seed=4),
                           encoder=encoder)
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    probe = generate_dataset(100, seed=12)
    for record in probe:
        a_label, a_probs = predict(model, record)
        b_label, b_probs = predict(loaded, record)
        assert a_label == b_label
        np.testing.assert_array_equal(a_probs, b_probs)  # bit identical


def test_load_rejects_corrupt_and_missing(tmp_path):
    path = tmp_path / "model.json"
    path.write_text("{ not json")
    with pytest.raises(ValueError, match="corrupt"):
        load_model(path)
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "missing.json")


def test_load_rejects_wrong_version(tmp_path):
    records = generate_dataset(50, seed=13)
    features, labels, encoder = one_hot_encode(records)
    model, _ = train_rprop(features, labels, arch=(4,),
                           hyper=RpropParams(epochs=5), encoder=encoder)
    path = tmp_path / "model.json"
    save_model(model, path)
    import json
    payload = json.loads(path.read_text())
    payload["format_version"] = 999
    path.write_text(json.dumps(payload))
    with pytest.raises(ValueError, match="version"):
        load_model(path)
