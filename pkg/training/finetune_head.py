"""Classification head + linear feature projector trained on pseudo-labels

L_detection = L_im + alpha * L_distil + L_head, each term averaged over the
batch (triplets for L_im), with analytic gradients and SGD with momentum.
"""
import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from domain.constants import DEFAULT_ALPHA, DEFAULT_MARGIN, SCHEMA_VERSION
from domain.errors import ConfigError, EvaluationError, NonFiniteError, SceneFormatError, TrainingDivergedError
from perception.detector import softmax_rows
from perception.reconciliation import PseudoDataset, enumerate_triplets, select_triplets

logger = logging.getLogger(__name__)

PARAM_NAMES = ("Wc", "bc", "Wp", "bp")
CURVE_COLUMNS = ("epoch", "L_head", "L_distil", "L_im", "total")


@dataclass(frozen=True)
class HeadHyperParams:
    alpha: float = DEFAULT_ALPHA
    margin: float = DEFAULT_MARGIN
    lr: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-5
    epochs: int = 10
    batch_size: int = 16
    projector_dim: int = 8
    max_triplets: int = 64
    use_triplet: bool = True

    def __post_init__(self) -> None:
        if self.alpha < 0.0:
            raise ConfigError("alpha must be non-negative")
        if not 0.0 <= self.margin <= 1.0:
            raise ConfigError("margin must lie in [0, 1]")
        if self.lr < 0.0 or self.weight_decay < 0.0 or not 0.0 <= self.momentum < 1.0:
            raise ConfigError("invalid optimizer settings")
        if self.epochs < 0 or self.batch_size < 1 or self.projector_dim < 1 or self.max_triplets < 0:
            raise ConfigError("invalid training schedule")

    @classmethod
    def from_dict(cls, data: dict) -> "HeadHyperParams":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown finetune keys {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class HeadParams:
    """Affine classifier (C x d) and projector (d_p x d)"""
    Wc: np.ndarray
    bc: np.ndarray
    Wp: np.ndarray
    bp: np.ndarray

    def copy(self) -> "HeadParams":
        return HeadParams(*(getattr(self, name).copy() for name in PARAM_NAMES))

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **{name: getattr(self, name).tolist() for name in PARAM_NAMES}}

    @classmethod
    def from_dict(cls, data: dict) -> "HeadParams":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise SceneFormatError(f"unsupported schema_version {data.get('schema_version')!r}", "schema_version")
        try:
            return cls(*(np.asarray(data[name], dtype=float) for name in PARAM_NAMES))
        except KeyError as e:
            raise SceneFormatError(f"missing key {e}", "$") from e

    @property
    def n_classes(self) -> int:
        return self.Wc.shape[0]


def init_head(n_classes: int, feature_dim: int, projector_dim: int = 8, seed: int = 0) -> HeadParams:
    rng = np.random.default_rng([seed, 7])
    return HeadParams(
        Wc=rng.normal(0.0, 0.01, size=(n_classes, feature_dim)),
        bc=np.zeros(n_classes),
        Wp=rng.normal(0.0, 1.0 / np.sqrt(feature_dim), size=(projector_dim, feature_dim)),
        bp=np.zeros(projector_dim),
    )


def save_head(params: HeadParams) -> bytes:
    return json.dumps(params.to_dict()).encode("utf-8")


def load_head(raw: bytes) -> HeadParams:
    try:
        return HeadParams.from_dict(json.loads(raw))
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"invalid JSON: {e.msg}", f"line {e.lineno} column {e.colno}") from e


@dataclass(frozen=True, eq=False)
class TrainSample:
    feature: np.ndarray
    class_id: int
    lambda_bar: np.ndarray
    u: int
    frame_id: int = 0


def forward(params: HeadParams, feature) -> tuple[np.ndarray, np.ndarray]:
    """(logits, projected) for one feature vector"""
    feature = np.asarray(feature, dtype=float)
    if not np.isfinite(feature).all():
        raise NonFiniteError("non-finite feature")
    return params.Wc @ feature + params.bc, params.Wp @ feature + params.bp


def forward_batch(params: HeadParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if not np.isfinite(X).all():
        raise NonFiniteError("non-finite features in batch")
    return X @ params.Wc.T + params.bc, X @ params.Wp.T + params.bp


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def loss_head(logits, y: int) -> float:
    """Cross-entropy of the hard label"""
    return float(-log_softmax(np.asarray(logits, dtype=float))[y])


def loss_distil(logits, lambda_bar) -> float:
    """Cross-entropy against the aggregated softmax target"""
    return float(-(np.asarray(lambda_bar, dtype=float) * log_softmax(np.asarray(logits, dtype=float))).sum())


def loss_triplet(A, P, N, margin: float = DEFAULT_MARGIN) -> float:
    d_ap = float(np.linalg.norm(np.asarray(A) - np.asarray(P)))
    d_an = float(np.linalg.norm(np.asarray(A) - np.asarray(N)))
    return max(d_ap - d_an + margin, 0.0)


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0.0 else np.zeros_like(v)


def loss_detection(
    params: HeadParams,
    batch: list[TrainSample],
    triplets: list[tuple[int, int, int]],
    alpha: float = DEFAULT_ALPHA,
    margin: float = DEFAULT_MARGIN,
) -> tuple[float, dict[str, np.ndarray], dict[str, float]]:
    """Composite loss, gradients per parameter, and the individual terms"""
    if not batch:
        raise ConfigError("empty training batch")
    n = len(batch)
    X = np.array([s.feature for s in batch], dtype=float)
    Z, Y = forward_batch(params, X)
    logp = log_softmax(Z)
    probs = np.exp(logp)
    labels = np.array([s.class_id for s in batch])
    targets = np.array([s.lambda_bar for s in batch], dtype=float)
    onehot = np.eye(params.n_classes)[labels]

    l_head = float(-logp[np.arange(n), labels].mean())
    l_distil = float(-(targets * logp).sum(axis=1).mean())
    dZ = (probs - onehot) / n + alpha * (probs - targets) / n

    dY = np.zeros_like(Y)
    l_im = 0.0
    if triplets:
        scale = 1.0 / len(triplets)
        for a, p, q in triplets:
            ap = Y[a] - Y[p]
            an = Y[a] - Y[q]
            value = np.linalg.norm(ap) - np.linalg.norm(an) + margin
            if value <= 0.0:
                continue
            l_im += value * scale
            u_ap, u_an = _unit(ap), _unit(an)
            dY[a] += scale * (u_ap - u_an)
            dY[p] -= scale * u_ap
            dY[q] += scale * u_an

    total = l_im + alpha * l_distil + l_head
    terms = {"L_head": l_head, "L_distil": l_distil, "L_im": float(l_im), "total": float(total)}
    if not np.isfinite(total):
        raise NonFiniteError(f"non-finite detection loss {terms}")
    grads = {"Wc": dZ.T @ X, "bc": dZ.sum(axis=0), "Wp": dY.T @ X, "bp": dY.sum(axis=0)}
    return float(total), grads, terms


def batch_triplets(
    batch: list[TrainSample], rng: np.random.Generator, max_triplets: int
) -> list[tuple[int, int, int]]:
    return select_triplets(enumerate_triplets([(s.frame_id, s.u) for s in batch]), rng, max_triplets)


def train(
    params: HeadParams, samples: list[TrainSample], hyper: HeadHyperParams, seed: int = 0
) -> tuple[HeadParams, list[dict]]:
    """SGD with momentum and weight decay; returns final params and the per-epoch curve"""
    if not samples:
        raise ConfigError("training set is empty")
    params = params.copy()
    velocity = {name: np.zeros_like(getattr(params, name)) for name in PARAM_NAMES}
    curve: list[dict] = []
    for epoch in range(hyper.epochs):
        rng = np.random.default_rng([seed, epoch])
        order = rng.permutation(len(samples))
        sums = dict.fromkeys(CURVE_COLUMNS[1:], 0.0)
        n_batches = 0
        for start in range(0, len(order), hyper.batch_size):
            batch = [samples[k] for k in order[start : start + hyper.batch_size]]
            triplets = batch_triplets(batch, rng, hyper.max_triplets) if hyper.use_triplet else []
            try:
                _, grads, terms = loss_detection(params, batch, triplets, hyper.alpha, hyper.margin)
            except NonFiniteError as e:
                raise TrainingDivergedError(
                    f"loss diverged in epoch {epoch}", {"epoch": epoch, "batch_start": start, "error": str(e)}
                ) from e
            for name in PARAM_NAMES:
                value = getattr(params, name)
                g = grads[name] + hyper.weight_decay * value
                velocity[name] = hyper.momentum * velocity[name] + g
                setattr(params, name, value - hyper.lr * velocity[name])
            for key in sums:
                sums[key] += terms[key]
            n_batches += 1
        row = {"epoch": epoch, **{k: v / n_batches for k, v in sums.items()}}
        curve.append(row)
        logger.info(
            "epoch %d: L_head=%.6f L_distil=%.6f L_im=%.6f total=%.6f",
            epoch, row["L_head"], row["L_distil"], row["L_im"], row["total"],
        )
    return params, curve


def curve_to_csv(curve: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=CURVE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in curve:
        writer.writerow({k: row[k] if k == "epoch" else f"{row[k]:.9g}" for k in CURVE_COLUMNS})
    return out.getvalue()


@dataclass
class HeadEvaluation:
    accuracy: float
    per_class: dict[int, float] = field(default_factory=dict)
    n: int = 0


def evaluate_head(params: HeadParams, holdout: list[tuple[np.ndarray, int]]) -> HeadEvaluation:
    """Top-1 accuracy of the classifier on (feature, true class) pairs"""
    if not holdout:
        raise EvaluationError("holdout set is empty")
    X = np.array([f for f, _ in holdout], dtype=float)
    truth = np.array([c for _, c in holdout])
    logits, _ = forward_batch(params, X)
    predicted = logits.argmax(axis=1)
    per_class = {int(c): float((predicted[truth == c] == c).mean()) for c in np.unique(truth)}
    return HeadEvaluation(accuracy=float((predicted == truth).mean()), per_class=per_class, n=len(holdout))


def predict_classes(params: HeadParams, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(argmax class, softmax) per feature row"""
    logits, _ = forward_batch(params, np.asarray(features, dtype=float))
    probs = softmax_rows(logits)
    return probs.argmax(axis=1), probs


def samples_from_dataset(dataset: PseudoDataset) -> list[TrainSample]:
    """Reconciled pseudo-labels that carry a feature"""
    samples = []
    for label in dataset.labels():
        if label.feature is None:
            continue
        samples.append(TrainSample(label.feature, label.class_id, np.asarray(label.lambda_bar), label.u, label.frame_id))
    return samples


def hyper_for_mode(hyper: HeadHyperParams, mode: str) -> HeadHyperParams:
    """Seal mode trains on hard labels only; raw and seal labels carry no identities for triplets"""
    if mode == "seal":
        return replace(hyper, alpha=0.0, use_triplet=False)
    if mode == "raw":
        return replace(hyper, use_triplet=False)
    return hyper


def samples_from_detections(detections) -> list[TrainSample]:
    """Self-training on per-view detector outputs; every detection is its own instance"""
    samples = []
    for k, det in enumerate(detections):
        probs = softmax_rows(np.asarray(det.logits, dtype=float)[None, :])[0]
        samples.append(TrainSample(np.asarray(det.feature), det.class_id, probs, -(k + 1), det.frame_id))
    return samples
