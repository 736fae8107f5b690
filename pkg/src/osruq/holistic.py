"""Holistic uncertainty from probabilistic embeddings.

A probe carries its own direction estimate and concentration kappa(x). Two
KL-style components summarize how far the temperature-scaled class posterior
sits from the prior (kl1) and how much the probe density moved the
out-of-gallery mass (kl2). Both are computed in log domain with the sign of
the bracket applied at the end; higher values mean more confidence. The
components are z-normalized against a validation split and either summed or
fed to a small MLP trained to predict the probability the decision is
correct.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import vmf
from .gallery import GalleryModel, Posterior, log_joint_terms

DEFAULT_TEMPERATURE = 20.0


class CalibrationError(ValueError):
    """Normalization statistics cannot be computed from the given components."""


class TrainingError(ValueError):
    """Calibrator training preconditions are not met."""


@dataclass(frozen=True)
class ProbabilisticEmbedding:
    """Unit mean direction plus a per-probe concentration estimate."""

    mean: np.ndarray
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "mean", vmf.as_unit_vector(self.mean))
        kappa = float(self.kappa)
        if not np.isfinite(kappa) or kappa <= 0.0:
            raise ValueError(f"kappa must be finite and > 0, got {self.kappa!r}")
        object.__setattr__(self, "kappa", kappa)

    @property
    def d(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class KlComponents:
    kl1: float
    kl2: float
    temperature: float

    def __post_init__(self):
        if not np.isfinite(self.kl1) or not np.isfinite(self.kl2):
            raise ValueError("KL components must be finite")
        if not self.temperature > 0.0:
            raise ValueError("temperature must be > 0")


@dataclass(frozen=True)
class CalibrationStats:
    """Per-component mean/std used to z-normalize (kl1, kl2)."""

    mean1: float
    std1: float
    mean2: float
    std2: float

    def __post_init__(self):
        for name in ("mean1", "std1", "mean2", "std2"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.std1 <= 0.0 or self.std2 <= 0.0:
            raise ValueError("stds must be > 0")


def scaled_gallery_posterior(model: GalleryModel, emb: ProbabilisticEmbedding, temperature: float) -> Posterior:
    """Posterior at the probe mean with every joint term tempered by 1/T.

    temperature == 1 reproduces the unscaled posterior; T -> infinity flattens
    to the uniform distribution over the K+1 outcomes.
    """
    if not temperature > 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature!r}")
    terms = log_joint_terms(model, emb.mean) / float(temperature)
    probs = np.exp(terms - logsumexp(terms))
    probs /= probs.sum()
    return Posterior(gallery_probs=probs[:-1], oog_prob=float(probs[-1]))


def kl_components(model: GalleryModel, emb: ProbabilisticEmbedding, temperature: float = DEFAULT_TEMPERATURE) -> KlComponents:
    """The two confidence components at the probe mean.

    kl1 sums P_T(c|x) log(P_T(c|x) / prior(c)) over gallery classes only; it
    can be negative because the gallery block of the posterior is a
    sub-simplex. kl2 compares the probe's self-density at its mean against
    the gallery marginal, weighted by the tempered out-of-gallery mass.
    """
    if not temperature > 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature!r}")
    t_inv = 1.0 / float(temperature)
    gal = model.gallery
    if emb.d != gal.d:
        raise ValueError(f"dimension mismatch: gallery d={gal.d}, probe d={emb.d}")

    terms = log_joint_terms(model, emb.mean)
    log_marg = float(logsumexp(terms))
    scaled = terms * t_inv
    log_post_t = scaled - logsumexp(scaled)

    log_prior = np.log((1.0 - model.beta) / gal.k)
    post_t = np.exp(log_post_t[:-1])
    active = post_t > 0.0
    kl1 = float(np.sum(post_t[active] * (log_post_t[:-1][active] - log_prior)))

    log_oog = float(terms[-1])  # log(beta / surface_area)
    log_self = float(vmf.log_c_d(emb.d, emb.kappa)) + emb.kappa  # probe density at its own mean
    bracket = (t_inv - 1.0) * log_oog + log_self - log_marg
    kl2 = float(np.exp(t_inv * log_oog - log_marg) * bracket)
    return KlComponents(kl1=kl1, kl2=kl2, temperature=float(temperature))


def fit_stats(components) -> CalibrationStats:
    """Mean/std (ddof=1) of the two components over a calibration split."""
    comps = list(components)
    if len(comps) < 2:
        raise CalibrationError(f"need at least 2 components to fit stats, got {len(comps)}")
    kl1 = np.array([c.kl1 for c in comps])
    kl2 = np.array([c.kl2 for c in comps])
    std1 = float(np.std(kl1, ddof=1))
    std2 = float(np.std(kl2, ddof=1))
    if std1 <= 0.0 or std2 <= 0.0:
        raise CalibrationError("component variance is zero; cannot normalize")
    return CalibrationStats(mean1=float(np.mean(kl1)), std1=std1, mean2=float(np.mean(kl2)), std2=std2)


def normalize(components: KlComponents, stats: CalibrationStats) -> tuple[float, float]:
    """z-normalize the two components with validation-split statistics."""
    return (
        (components.kl1 - stats.mean1) / stats.std1,
        (components.kl2 - stats.mean2) / stats.std2,
    )


def holue_sum(kl1n: float, kl2n: float) -> float:
    """Summed normalized components; higher means more confident."""
    return float(kl1n) + float(kl2n)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.05
    epochs: int = 2000
    momentum: float = 0.9
    init_scale: float = 0.5
    hidden: tuple[int, int] = (16, 16)

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or not 0.0 <= self.momentum < 1.0:
            raise ValueError("invalid training configuration")


@dataclass
class MlpCalibrator:
    """2 -> 16 -> 16 -> 1 network: tanh hidden layers, sigmoid output.

    Trained with full-batch gradient descent plus momentum to predict the
    probability that a decision is correct from (kl1n, kl2n).
    """

    weights: list
    biases: list
    config: TrainingConfig
    seed: int
    stats: CalibrationStats | None = None
    final_loss: float = field(default=float("nan"))

    def layer_sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]


def _init_params(sizes, rng: np.random.Generator, scale: float):
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.uniform(-scale, scale, size=(n_in, n_out)))
        biases.append(rng.uniform(-scale, scale, size=n_out))
    return weights, biases


def _forward(weights, biases, x: np.ndarray):
    activations = [x]
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        a = np.tanh(a @ w + b)
        activations.append(a)
    logits = a @ weights[-1] + biases[-1]
    return activations, logits


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_and_gradients(weights, biases, features: np.ndarray, labels: np.ndarray):
    """Mean binary cross-entropy and its gradients for the calibrator net.

    labels are 1.0 for correct decisions, 0.0 for errors.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    activations, logits = _forward(weights, biases, x)
    # stable BCE on logits: max(z,0) - z y + log(1 + exp(-|z|))
    loss = float(np.mean(np.maximum(logits, 0.0) - logits * y + np.log1p(np.exp(-np.abs(logits)))))
    n = x.shape[0]
    delta = (_sigmoid(logits) - y) / n
    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (1.0 - activations[layer] ** 2)
    return loss, grad_w, grad_b


def fit_mlp(features, labels, config: TrainingConfig = TrainingConfig(), seed: int = 0,
            stats: CalibrationStats | None = None) -> MlpCalibrator:
    """Train the calibrator on normalized components; deterministic per seed."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[1] != 2:
        raise TrainingError(f"features must be (n, 2), got {x.shape}")
    if y.shape[0] != x.shape[0]:
        raise TrainingError("features and labels disagree in length")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise TrainingError("labels must be 0 (error) or 1 (correct)")
    if y.min() == y.max():
        raise TrainingError("need at least one correct and one error example")

    sizes = [2, *config.hidden, 1]
    rng = np.random.default_rng(seed)
    weights, biases = _init_params(sizes, rng, config.init_scale)
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    loss = float("nan")
    for _ in range(config.epochs):
        loss, grad_w, grad_b = loss_and_gradients(weights, biases, x, y)
        for i in range(len(weights)):
            vel_w[i] = config.momentum * vel_w[i] - config.learning_rate * grad_w[i]
            vel_b[i] = config.momentum * vel_b[i] - config.learning_rate * grad_b[i]
            weights[i] = weights[i] + vel_w[i]
            biases[i] = biases[i] + vel_b[i]
    return MlpCalibrator(weights=weights, biases=biases, config=config, seed=int(seed),
                         stats=stats, final_loss=loss)


def mlp_predict(calibrator: MlpCalibrator, kl1n, kl2n) -> float | np.ndarray:
    """Predicted probability that the decision is correct, in (0, 1)."""
    x = np.column_stack([np.atleast_1d(np.asarray(kl1n, dtype=np.float64)),
                         np.atleast_1d(np.asarray(kl2n, dtype=np.float64))])
    _, logits = _forward(calibrator.weights, calibrator.biases, x)
    probs = np.clip(_sigmoid(logits[:, 0]), 1e-12, 1.0 - 1e-12)
    if np.ndim(kl1n) == 0:
        return float(probs[0])
    return probs


def calibrator_to_json(calibrator: MlpCalibrator) -> str:
    """Serialize the calibrator (weights row-major) to a JSON string."""
    payload = {
        "layer_sizes": calibrator.layer_sizes(),
        "weights": [w.tolist() for w in calibrator.weights],
        "biases": [b.tolist() for b in calibrator.biases],
        "config": {
            "learning_rate": calibrator.config.learning_rate,
            "epochs": calibrator.config.epochs,
            "momentum": calibrator.config.momentum,
            "init_scale": calibrator.config.init_scale,
            "hidden": list(calibrator.config.hidden),
        },
        "seed": calibrator.seed,
        "final_loss": calibrator.final_loss,
        "stats": None if calibrator.stats is None else {
            "mean1": calibrator.stats.mean1, "std1": calibrator.stats.std1,
            "mean2": calibrator.stats.mean2, "std2": calibrator.stats.std2,
        },
    }
    return json.dumps(payload, sort_keys=True)


def calibrator_from_json(text: str) -> MlpCalibrator:
    payload = json.loads(text)
    cfg = payload["config"]
    config = TrainingConfig(learning_rate=cfg["learning_rate"], epochs=cfg["epochs"],
                            momentum=cfg["momentum"], init_scale=cfg["init_scale"],
                            hidden=tuple(cfg["hidden"]))
    stats = payload.get("stats")
    return MlpCalibrator(
        weights=[np.asarray(w, dtype=np.float64) for w in payload["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in payload["biases"]],
        config=config,
        seed=int(payload["seed"]),
        stats=None if stats is None else CalibrationStats(**stats),
        final_loss=float(payload["final_loss"]),
    )
