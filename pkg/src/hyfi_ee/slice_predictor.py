"""
KPI-driven network-slice classification.

A synthetic KPI dataset stands in for the historical monitoring data: each
record carries latency/reliability requirements, traffic characteristics,
and context, and is labeled eMBB / URLLC / mMTC by a deterministic rule with
a small amount of label noise.  The classifier is a small feedforward net
(ReLU hidden layers, softmax output) trained full-batch with resilient
backpropagation: per-weight step sizes adapt on gradient-sign agreement, so
training depends only on gradient signs, not magnitudes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .rate_model import Slice

USE_CASES = (
    "video_streaming", "ar_vr", "web_browsing",
    "industrial_automation", "autonomous_vehicle", "emergency_alert",
    "smart_meter", "environment_sensor", "wearable_health",
)
TECHNOLOGIES = ("wifi", "lifi", "hybrid")
TIME_BUCKETS = ("morning", "afternoon", "evening", "night")

NUMERIC_FIELDS = ("latency_requirement_ms", "reliability_pct",
                  "packet_size_bytes", "device_density_per_km2")
CATEGORICAL_FIELDS = {
    "use_case_category": USE_CASES,
    "supported_technology": TECHNOLOGIES,
    "time_of_day_bucket": TIME_BUCKETS,
}

LABELS = (Slice.EMBB, Slice.URLLC, Slice.MMTC)

# Labeling rule thresholds.
URLLC_LATENCY_MS = 2.0
URLLC_RELIABILITY_PCT = 99.99
MMTC_DENSITY_PER_KM2 = 50_000.0
MMTC_PACKET_BYTES = 256.0

LABEL_NOISE_PROB = 0.05


@dataclass(frozen=True)
class KpiRecord:
    use_case_category: str
    latency_requirement_ms: float
    reliability_pct: float
    supported_technology: str
    packet_size_bytes: float
    device_density_per_km2: float
    time_of_day_bucket: str
    label: Slice

    def __post_init__(self):
        for name, vocab in CATEGORICAL_FIELDS.items():
            if getattr(self, name) not in vocab:
                raise ValueError(f"unknown {name} value '{getattr(self, name)}'")
        for name in NUMERIC_FIELDS:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def label_rule(latency_ms: float, reliability_pct: float,
               packet_bytes: float, density_per_km2: float) -> Slice:
    """Deterministic KPI -> slice rule (before label noise)."""
    if latency_ms <= URLLC_LATENCY_MS and reliability_pct >= URLLC_RELIABILITY_PCT:
        return Slice.URLLC
    if density_per_km2 >= MMTC_DENSITY_PER_KM2 and packet_bytes <= MMTC_PACKET_BYTES:
        return Slice.MMTC
    return Slice.EMBB


def generate_dataset(n: int, seed) -> list[KpiRecord]:
    """n synthetic KPI records, deterministic per seed.

    Features are drawn from per-slice archetypes consistent with the label
    rule; the stored label is the rule's output except that with probability
    5% it is resampled uniformly over the three slices (label noise).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        archetype = rng.choice(3, p=[0.36, 0.33, 0.31])
        if archetype == 1:  # low-latency, high-reliability traffic
            latency = rng.uniform(0.2, URLLC_LATENCY_MS)
            reliability = rng.uniform(URLLC_RELIABILITY_PCT, 99.99999)
            packet = rng.uniform(32, 512)
            density = rng.uniform(10, 20_000)
            use_case = rng.choice(
                ["industrial_automation", "autonomous_vehicle", "emergency_alert"])
        elif archetype == 2:  # dense machine-type traffic
            latency = rng.uniform(5, 100)
            reliability = rng.uniform(95, 99.9)
            packet = rng.uniform(16, MMTC_PACKET_BYTES)
            density = rng.uniform(MMTC_DENSITY_PER_KM2, 1_000_000)
            use_case = rng.choice(
                ["smart_meter", "environment_sensor", "wearable_health"])
        else:  # broadband traffic
            latency = rng.uniform(5, 100)
            reliability = rng.uniform(95, 99.9)
            packet = rng.uniform(600, 1_500_000)
            density = rng.uniform(10, 20_000)
            use_case = rng.choice(["video_streaming", "ar_vr", "web_browsing"])

        label = label_rule(latency, reliability, packet, density)
        if rng.uniform() < LABEL_NOISE_PROB:
            label = LABELS[rng.integers(0, 3)]
        records.append(KpiRecord(
            use_case_category=str(use_case),
            latency_requirement_ms=float(latency),
            reliability_pct=float(reliability),
            supported_technology=str(rng.choice(TECHNOLOGIES)),
            packet_size_bytes=float(packet),
            device_density_per_km2=float(density),
            time_of_day_bucket=str(rng.choice(TIME_BUCKETS)),
            label=label,
        ))
    return records


# =============================================================================
#  Encoding
# =============================================================================

@dataclass
class FeatureEncoder:
    """One-hot categorical expansion plus train-split standardization."""

    vocab: dict = field(default_factory=lambda: {
        name: list(values) for name, values in CATEGORICAL_FIELDS.items()})
    numeric_mean: list = None
    numeric_std: list = None

    @property
    def num_features(self) -> int:
        return len(NUMERIC_FIELDS) + sum(len(v) for v in self.vocab.values())

    def _raw(self, records):
        numeric = np.array([[getattr(r, f) for f in NUMERIC_FIELDS]
                            for r in records], dtype=float)
        blocks = [numeric]
        for name, values in self.vocab.items():
            index = {v: i for i, v in enumerate(values)}
            block = np.zeros((len(records), len(values)))
            for row, record in enumerate(records):
                value = getattr(record, name)
                if value not in index:
                    raise ValueError(f"unknown {name} value '{value}'")
                block[row, index[value]] = 1.0
            blocks.append(block)
        return numeric, np.hstack(blocks)

    def fit(self, records) -> "FeatureEncoder":
        numeric, _ = self._raw(records)
        self.numeric_mean = numeric.mean(axis=0).tolist()
        std = numeric.std(axis=0)
        std[std == 0] = 1.0
        self.numeric_std = std.tolist()
        return self

    def transform(self, records) -> np.ndarray:
        if self.numeric_mean is None:
            raise ValueError("encoder must be fitted before transform")
        _, features = self._raw(records)
        n_num = len(NUMERIC_FIELDS)
        features[:, :n_num] -= np.asarray(self.numeric_mean)
        features[:, :n_num] /= np.asarray(self.numeric_std)
        return features


def one_hot_encode(records, encoder: FeatureEncoder = None):
    """Feature matrix + integer labels; fits the encoder when none is given."""
    if encoder is None:
        encoder = FeatureEncoder().fit(records)
    features = encoder.transform(records)
    labels = np.array([LABELS.index(r.label) for r in records], dtype=int)
    return features, labels, encoder


def split(dataset, ratio: float, seed):
    """Disjoint shuffled train/test partition, deterministic per seed."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    cut = int(round(len(dataset) * ratio))
    train = [dataset[i] for i in order[:cut]]
    test = [dataset[i] for i in order[cut:]]
    return train, test


# =============================================================================
#  Model and Rprop training
# =============================================================================

@dataclass
class MLPModel:
    layer_sizes: list                 # [in, hidden..., 3]
    weights: list                     # list of (n_in, n_out) arrays
    biases: list                      # list of (n_out,) arrays
    l2: float
    encoder: FeatureEncoder

    def logits(self, features: np.ndarray) -> np.ndarray:
        activation = features
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activation @ w + b
            activation = z if i == last else np.maximum(z, 0.0)
        return activation


@dataclass(frozen=True)
class RpropParams:
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    delta_init: float = 0.1
    delta_min: float = 1e-6
    delta_max: float = 50.0
    epochs: int = 200
    l2: float = 1e-4
    init_seed: int = 0


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def cross_entropy_loss(model: MLPModel, features, labels) -> float:
    probs = softmax(model.logits(features))
    picked = probs[np.arange(len(labels)), labels]
    data = -float(np.mean(np.log(np.maximum(picked, 1e-300))))
    reg = model.l2 * sum(float(np.sum(w ** 2)) for w in model.weights)
    return data + reg


def loss_gradients(model: MLPModel, features, labels):
    """Backprop gradients of the regularized cross-entropy (mean over batch)."""
    n = len(labels)
    activations = [features]
    pre = []
    a = features
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        activations.append(a)

    delta = softmax(pre[-1])
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grads_w, grads_b = [], []
    for i in range(last, -1, -1):
        grads_w.insert(0, activations[i].T @ delta + 2.0 * model.l2 * model.weights[i])
        grads_b.insert(0, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return grads_w, grads_b


def rprop_step(params, grads, deltas, prev_grads, hyper: RpropParams):
    """One Rprop update in place; returns nothing.

    Sign agreement grows the per-weight step (capped), a sign flip shrinks
    it (floored) and clears the gradient memory; every weight then moves by
    -sign(gradient) * step.
    """
    for p, g, d, pg in zip(params, grads, deltas, prev_grads):
        sign_prod = pg * g
        d[sign_prod > 0] = np.minimum(d[sign_prod > 0] * hyper.eta_plus,
                                      hyper.delta_max)
        flipped = sign_prod < 0
        d[flipped] = np.maximum(d[flipped] * hyper.eta_minus, hyper.delta_min)
        p -= np.sign(g) * d
        pg[...] = g
        pg[flipped] = 0.0


def _init_model(num_features: int, arch, hyper: RpropParams,
                encoder: FeatureEncoder) -> MLPModel:
    sizes = [num_features, *arch, len(LABELS)]
    rng = np.random.default_rng(hyper.init_seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MLPModel(layer_sizes=sizes, weights=weights, biases=biases,
                    l2=hyper.l2, encoder=encoder)


def train_rprop(features, labels, arch=(64, 32),
                hyper: RpropParams = RpropParams(),
                encoder: FeatureEncoder = None):
    """Full-batch Rprop training; returns the model and per-epoch history."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    model = _init_model(features.shape[1], arch, hyper, encoder)

    params = model.weights + model.biases
    deltas = [np.full_like(p, hyper.delta_init) for p in params]
    prev_grads = [np.zeros_like(p) for p in params]
    history = {"loss": [], "accuracy": []}

    for _ in range(hyper.epochs):
        grads_w, grads_b = loss_gradients(model, features, labels)
        rprop_step(params, grads_w + grads_b, deltas, prev_grads, hyper)
        loss = cross_entropy_loss(model, features, labels)
        if not math.isfinite(loss):
            raise ArithmeticError("training diverged to a non-finite loss")
        predicted = np.argmax(model.logits(features), axis=1)
        history["loss"].append(loss)
        history["accuracy"].append(float(np.mean(predicted == labels)))
    return model, history


# =============================================================================
#  Prediction and evaluation
# =============================================================================

def predict(model: MLPModel, record: KpiRecord):
    """Slice label and class probabilities for one KPI record."""
    features = model.encoder.transform([record])
    probs = softmax(model.logits(features))[0]
    return LABELS[int(np.argmax(probs))], probs


def evaluate(model: MLPModel, testset):
    """Accuracy and 3x3 confusion matrix (rows = true, cols = predicted)."""
    if not testset:
        raise ValueError("testset must be nonempty")
    features, labels, _ = one_hot_encode(testset, model.encoder)
    predicted = np.argmax(model.logits(features), axis=1)
    confusion = np.zeros((3, 3), dtype=int)
    for true, pred in zip(labels, predicted):
        confusion[true, pred] += 1
    accuracy = float(np.mean(predicted == labels))
    return accuracy, confusion


# =============================================================================
#  Serialization (versioned JSON; floats survive round trips exactly)
# =============================================================================

MODEL_FORMAT_VERSION = 1


def save_model(model: MLPModel, path) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "l2": model.l2,
        "encoder": {
            "vocab": model.encoder.vocab,
            "numeric_mean": model.encoder.numeric_mean,
            "numeric_std": model.encoder.numeric_std,
        },
        "labels": [s.value for s in LABELS],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path) -> MLPModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt model file {path}: {exc}") from exc
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"unsupported model format version {payload.get('format_version')}")
    encoder = FeatureEncoder(vocab=payload["encoder"]["vocab"],
                             numeric_mean=payload["encoder"]["numeric_mean"],
                             numeric_std=payload["encoder"]["numeric_std"])
    weights = [np.array(w, dtype=float) for w in payload["weights"]]
    biases = [np.array(b, dtype=float) for b in payload["biases"]]
    sizes = payload["layer_sizes"]
    for w, (n_in, n_out) in zip(weights, zip(sizes[:-1], sizes[1:])):
        if w.shape != (n_in, n_out):
            raise ValueError("model file layer dimensions do not chain")
    return MLPModel(layer_sizes=sizes, weights=weights, biases=biases,
                    l2=payload["l2"], encoder=encoder)


# =============================================================================
#  Dataset CSV
# =============================================================================

DATASET_HEADER = [*NUMERIC_FIELDS, *CATEGORICAL_FIELDS, "label"]


def records_to_rows(records):
    rows = []
    for r in records:
        rows.append([getattr(r, f) for f in NUMERIC_FIELDS]
                    + [getattr(r, f) for f in CATEGORICAL_FIELDS]
                    + [r.label.value])
    return rows


def record_from_row(row: dict) -> KpiRecord:
    return KpiRecord(
        use_case_category=row["use_case_category"],
        latency_requirement_ms=float(row["latency_requirement_ms"]),
        reliability_pct=float(row["reliability_pct"]),
        supported_technology=row["supported_technology"],
        packet_size_bytes=float(row["packet_size_bytes"]),
        device_density_per_km2=float(row["device_density_per_km2"]),
        time_of_day_bucket=row["time_of_day_bucket"],
        label=Slice.parse(row["label"]) if row.get("label") else Slice.EMBB,
    )
