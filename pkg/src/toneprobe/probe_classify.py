"""Classification probes over the three phone representations.

Multinomial logistic regression probes the averaged latents; a
single-layer LSTM probes the two sequence representations (dense frame
vectors, or discrete symbols through a learned embedding).  Both models
are trained with plain (mini-)batch gradient descent so that every
gradient is checkable against finite differences, and both are
deterministic given the config seed.  Scores are macro F1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from toneprobe.corpus import TaskKind
from toneprobe.represent import ProbeDataset

REPRESENTATIONS = ("Latents", "AveragedLatents", "DiscreteSymbols")

# summary rows follow the reference table layout
TASK_ROW_ORDER = (TaskKind.VOWEL_WITHOUT_TONE, TaskKind.VOWEL_WITH_TONE, TaskKind.TONE_ONLY)


class ProbeError(ValueError):
    """Invalid probe configuration or dataset."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.1
    batch_size: int = 32
    seed: int = 0
    hidden_size: int = 128
    embed_dim: int = 64
    clip_norm: float = 5.0
    l2: float = 0.0
    symbol_onehot: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.hidden_size < 1 or self.embed_dim < 1:
            raise ProbeError("epochs, batch_size, hidden_size, embed_dim must be >= 1")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ProbeError("learning_rate and clip_norm must be > 0")
        if self.l2 < 0:
            raise ProbeError("l2 must be >= 0")


# ---------------------------------------------------------------------------
# numerics


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, to avoid overflow
    e = np.exp(-np.abs(x))
    positive = 1.0 / (1.0 + e)
    return np.where(x >= 0, positive, 1.0 - positive)


def _label_indices(dataset: ProbeDataset, indices: np.ndarray) -> np.ndarray:
    lookup = {label: i for i, label in enumerate(dataset.label_vocabulary)}
    return np.array([lookup[dataset.labels[i]] for i in indices], dtype=np.int64)


# ---------------------------------------------------------------------------
# logistic regression on averaged latents


@dataclass
class LogRegModel:
    weights: np.ndarray  # C x D
    bias: np.ndarray  # C
    classes: tuple[str, ...]
    feature_mean: np.ndarray  # train-split standardization, applied at predict time
    feature_std: np.ndarray
    final_train_loss: float
    loss_trace: tuple[float, ...]


def _standardizer(x: np.ndarray):
    """Per-dimension mean/std over the train split; constant dimensions
    get std 1 so they map to 0 instead of blowing up."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def _logreg_loss_and_grad(weights, bias, x, y, l2):
    """Mean cross-entropy (+ L2 on weights) and its analytic gradient."""
    n = x.shape[0]
    logits = x @ weights.T + bias
    logp = _log_softmax(logits)
    loss = -logp[np.arange(n), y].mean() + 0.5 * l2 * float((weights**2).sum())
    delta = (_softmax(logits) - np.eye(weights.shape[0])[y]) / n
    grad_w = delta.T @ x + l2 * weights
    grad_b = delta.sum(axis=0)
    return loss, grad_w, grad_b


def _avg_view(dataset: ProbeDataset, indices: np.ndarray):
    x = np.vstack([dataset.items[i].avg_latent for i in indices]).astype(np.float64)
    return x, _label_indices(dataset, indices)


def train_logreg(dataset: ProbeDataset, config: TrainConfig) -> LogRegModel:
    """Full-batch gradient descent from zero weights (the loss is convex,
    so no randomness is involved and the loss trace is non-increasing
    for a small enough step)."""
    classes = dataset.label_vocabulary
    if len(classes) < 2:
        raise ProbeError("need at least 2 classes")
    train_idx = dataset.train_indices()
    if train_idx.shape[0] == 0:
        raise ProbeError("empty train split")
    x, y = _avg_view(dataset, train_idx)
    mean, std = _standardizer(x)
    x = (x - mean) / std
    weights = np.zeros((len(classes), x.shape[1]))
    bias = np.zeros(len(classes))
    trace = []
    for _ in range(config.epochs):
        loss, grad_w, grad_b = _logreg_loss_and_grad(weights, bias, x, y, config.l2)
        trace.append(loss)
        weights -= config.learning_rate * grad_w
        bias -= config.learning_rate * grad_b
    final_loss, _, _ = _logreg_loss_and_grad(weights, bias, x, y, config.l2)
    return LogRegModel(
        weights=weights,
        bias=bias,
        classes=classes,
        feature_mean=mean,
        feature_std=std,
        final_train_loss=final_loss,
        loss_trace=tuple(trace),
    )


def logreg_predict(model: LogRegModel, x: np.ndarray) -> np.ndarray:
    x = (x - model.feature_mean) / model.feature_std
    return np.argmax(x @ model.weights.T + model.bias, axis=1)


# ---------------------------------------------------------------------------
# LSTM on sequences

_GATES = 4  # input, forget, cell, output; stacked in that row order


@dataclass
class LstmModel:
    mode: str  # "dense", "embedded", or "onehot"
    params: dict[str, np.ndarray]
    classes: tuple[str, ...]
    hidden_size: int
    n_in: int
    codebook_k: Optional[int]
    feature_mean: Optional[np.ndarray]  # dense mode: train-split standardization
    feature_std: Optional[np.ndarray]
    final_train_loss: float
    loss_trace: tuple[float, ...]


def _init_lstm_params(rng, n_in, hidden, n_classes, embed_k=None, embed_dim=None):
    """Scaled-uniform init; forget-gate bias 1.0 so early training does
    not wash out the cell state."""

    def uniform(shape, fan_in):
        return rng.uniform(-1.0, 1.0, size=shape) / np.sqrt(fan_in)

    params = {}
    if embed_k is not None:
        params["embed"] = uniform((embed_k, embed_dim), embed_dim)
    params["W"] = uniform((_GATES * hidden, n_in), n_in)
    params["U"] = uniform((_GATES * hidden, hidden), hidden)
    params["b"] = np.zeros(_GATES * hidden)
    params["b"][hidden : 2 * hidden] = 1.0
    params["V"] = uniform((n_classes, hidden), hidden)
    params["d"] = np.zeros(n_classes)
    return params


def _lstm_forward(params, x, mask):
    """Run the recurrence over a padded batch.

    x: (B, L, n_in); mask: (B, L) with 1.0 on real steps.  Padded steps
    carry (h, c) forward unchanged, so the state after the last step is
    each sequence's true final state.  Returns logits and the step
    caches needed for backprop.
    """
    b, length, _ = x.shape
    hidden = params["U"].shape[1]
    h = np.zeros((b, hidden))
    c = np.zeros((b, hidden))
    caches = []
    for t in range(length):
        x_t = x[:, t, :]
        m = mask[:, t : t + 1]
        z = x_t @ params["W"].T + h @ params["U"].T + params["b"]
        gi = _sigmoid(z[:, :hidden])
        gf = _sigmoid(z[:, hidden : 2 * hidden])
        gg = np.tanh(z[:, 2 * hidden : 3 * hidden])
        go = _sigmoid(z[:, 3 * hidden :])
        c_new = gf * c + gi * gg
        tanh_c = np.tanh(c_new)
        h_new = go * tanh_c
        caches.append((x_t, h, c, gi, gf, gg, go, tanh_c, m))
        c = m * c_new + (1.0 - m) * c
        h = m * h_new + (1.0 - m) * h
    logits = h @ params["V"].T + params["d"]
    return logits, h, caches


def _lstm_loss_and_grads(params, x, mask, y, symbols=None):
    """Cross-entropy loss and gradients for every parameter.

    symbols (B, L) must be given in embedded mode (x is then the gathered
    embedding rows) so the embedding-table gradient can be scattered.
    """
    b = x.shape[0]
    hidden = params["U"].shape[1]
    logits, h_final, caches = _lstm_forward(params, x, mask)
    logp = _log_softmax(logits)
    loss = -logp[np.arange(b), y].mean()

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    delta = (_softmax(logits) - np.eye(params["V"].shape[0])[y]) / b
    grads["V"] = delta.T @ h_final
    grads["d"] = delta.sum(axis=0)
    dh = delta @ params["V"]
    dc = np.zeros_like(dh)
    dx = np.zeros_like(x) if symbols is not None else None

    for t in range(len(caches) - 1, -1, -1):
        x_t, h_prev, c_prev, gi, gf, gg, go, tanh_c, m = caches[t]
        dh_new = dh * m
        dc_new = dc * m
        d_go = dh_new * tanh_c
        dc_new = dc_new + dh_new * go * (1.0 - tanh_c**2)
        d_gf = dc_new * c_prev
        d_gi = dc_new * gg
        d_gg = dc_new * gi
        dz = np.concatenate(
            [
                d_gi * gi * (1.0 - gi),
                d_gf * gf * (1.0 - gf),
                d_gg * (1.0 - gg**2),
                d_go * go * (1.0 - go),
            ],
            axis=1,
        )
        grads["W"] += dz.T @ x_t
        grads["U"] += dz.T @ h_prev
        grads["b"] += dz.sum(axis=0)
        if dx is not None:
            dx[:, t, :] = dz @ params["W"]
        dh = dz @ params["U"] + dh * (1.0 - m)
        dc = dc_new * gf + dc * (1.0 - m)

    if symbols is not None:
        flat = dx.reshape(-1, dx.shape[-1])
        np.add.at(grads["embed"], symbols.reshape(-1), flat)
    return loss, grads


def _clip_grads(grads, clip_norm):
    total = np.sqrt(sum(float((g**2).sum()) for g in grads.values()))
    if total > clip_norm:
        scale = clip_norm / total
        for g in grads.values():
            g *= scale
    return grads


def _pack_dense(seqs: Sequence[np.ndarray]):
    b = len(seqs)
    length = max(s.shape[0] for s in seqs)
    dim = seqs[0].shape[1]
    x = np.zeros((b, length, dim))
    mask = np.zeros((b, length))
    for i, s in enumerate(seqs):
        x[i, : s.shape[0]] = s
        mask[i, : s.shape[0]] = 1.0
    return x, mask


def _pack_symbols(seqs: Sequence[np.ndarray]):
    b = len(seqs)
    length = max(s.shape[0] for s in seqs)
    symbols = np.zeros((b, length), dtype=np.int64)
    mask = np.zeros((b, length))
    for i, s in enumerate(seqs):
        symbols[i, : s.shape[0]] = s
        mask[i, : s.shape[0]] = 1.0
    return symbols, mask


def _sequence_view(dataset: ProbeDataset, indices: np.ndarray, representation: str):
    if representation == "latents":
        seqs = [dataset.items[i].latent_seq.astype(np.float64) for i in indices]
    elif representation == "symbols":
        seqs = [dataset.items[i].symbol_seq.astype(np.int64) for i in indices]
    else:
        raise ProbeError(f"unknown representation {representation!r}")
    for i, s in zip(indices, seqs):
        if s.shape[0] == 0:
            raise ProbeError(f"item {i} has an empty sequence")
    return seqs, _label_indices(dataset, indices)


def train_lstm(dataset: ProbeDataset, config: TrainConfig, representation: str = "latents") -> LstmModel:
    """Mini-batch gradient descent with gradient-norm clipping.

    representation selects the input view: "latents" feeds frame vectors
    directly, "symbols" feeds codebook indices through a learned
    embedding table of size dataset.codebook_k x config.embed_dim, or as
    one-hot vectors of width codebook_k when config.symbol_onehot is set.
    """
    classes = dataset.label_vocabulary
    if len(classes) < 2:
        raise ProbeError("need at least 2 classes")
    train_idx = dataset.train_indices()
    if train_idx.shape[0] == 0:
        raise ProbeError("empty train split")
    seqs, y = _sequence_view(dataset, train_idx, representation)

    rng = np.random.default_rng(config.seed)
    if representation == "symbols":
        mode = "onehot" if config.symbol_onehot else "embedded"
    else:
        mode = "dense"
    mean = std = None
    if mode == "embedded":
        n_in = config.embed_dim
        params = _init_lstm_params(
            rng, n_in, config.hidden_size, len(classes),
            embed_k=dataset.codebook_k, embed_dim=config.embed_dim,
        )
    elif mode == "onehot":
        n_in = dataset.codebook_k
        params = _init_lstm_params(rng, n_in, config.hidden_size, len(classes))
    else:
        mean, std = _standardizer(np.concatenate(seqs))
        seqs = [(s - mean) / std for s in seqs]
        n_in = seqs[0].shape[1]
        params = _init_lstm_params(rng, n_in, config.hidden_size, len(classes))

    n = len(seqs)
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            if mode == "embedded":
                symbols, mask = _pack_symbols([seqs[i] for i in batch])
                x = params["embed"][symbols]
                loss, grads = _lstm_loss_and_grads(params, x, mask, y[batch], symbols=symbols)
            elif mode == "onehot":
                symbols, mask = _pack_symbols([seqs[i] for i in batch])
                x = np.eye(n_in)[symbols]
                loss, grads = _lstm_loss_and_grads(params, x, mask, y[batch])
            else:
                x, mask = _pack_dense([seqs[i] for i in batch])
                loss, grads = _lstm_loss_and_grads(params, x, mask, y[batch])
            _clip_grads(grads, config.clip_norm)
            for key, grad in grads.items():
                params[key] -= config.learning_rate * grad
            epoch_loss += loss * batch.shape[0]
        trace.append(epoch_loss / n)

    return LstmModel(
        mode=mode,
        params=params,
        classes=classes,
        hidden_size=config.hidden_size,
        n_in=n_in,
        codebook_k=dataset.codebook_k if representation == "symbols" else None,
        feature_mean=mean,
        feature_std=std,
        final_train_loss=trace[-1],
        loss_trace=tuple(trace),
    )


def lstm_predict(model: LstmModel, seqs: Sequence[np.ndarray], chunk: int = 512) -> np.ndarray:
    preds = []
    for lo in range(0, len(seqs), chunk):
        part = seqs[lo : lo + chunk]
        if model.mode == "embedded":
            symbols, mask = _pack_symbols(part)
            x = model.params["embed"][symbols]
        elif model.mode == "onehot":
            symbols, mask = _pack_symbols(part)
            x = np.eye(model.n_in)[symbols]
        else:
            if model.feature_mean is not None:
                part = [(s - model.feature_mean) / model.feature_std for s in part]
            x, mask = _pack_dense(part)
        logits, _, _ = _lstm_forward(model.params, x, mask)
        preds.append(np.argmax(logits, axis=1))
    return np.concatenate(preds)


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class ClassificationReport:
    classes: tuple[str, ...]
    confusion: np.ndarray  # rows: true class, columns: predicted
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    missing_classes: tuple[str, ...]  # absent from the test split, scored 0

    def __post_init__(self):
        for name in ("confusion", "precision", "recall", "f1"):
            getattr(self, name).setflags(write=False)


def report_from_confusion(confusion: np.ndarray, classes: Sequence[str]) -> ClassificationReport:
    confusion = np.asarray(confusion, dtype=np.int64)
    c = len(classes)
    if confusion.shape != (c, c):
        raise ProbeError(f"confusion matrix must be {c}x{c}")
    tp = np.diagonal(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    missing = tuple(cls for cls, row in zip(classes, confusion.sum(axis=1)) if row == 0)
    return ClassificationReport(
        classes=tuple(classes),
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=float(f1.mean()),
        missing_classes=missing,
    )


def evaluate(model, dataset: ProbeDataset) -> ClassificationReport:
    """Score a trained model on the dataset's test split.

    The representation is implied by the model: LogRegModel reads the
    averaged latents, a dense LstmModel the latent sequences, an embedded
    or onehot LstmModel the symbol sequences.
    """
    if not isinstance(model, (LogRegModel, LstmModel)):
        raise ProbeError(f"unknown model type {type(model).__name__}")
    test_idx = dataset.test_indices()
    if test_idx.shape[0] == 0:
        raise ProbeError("empty test split")
    if tuple(model.classes) != tuple(dataset.label_vocabulary):
        raise ProbeError("model and dataset class lists differ")
    if isinstance(model, LogRegModel):
        x, y_true = _avg_view(dataset, test_idx)
        y_pred = logreg_predict(model, x)
    else:
        representation = "latents" if model.mode == "dense" else "symbols"
        seqs, y_true = _sequence_view(dataset, test_idx, representation)
        y_pred = lstm_predict(model, seqs)
    c = len(model.classes)
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    return report_from_confusion(confusion, model.classes)


# ---------------------------------------------------------------------------
# the 3 x 3 probe suite


def run_probe_suite(
    datasets: Mapping[TaskKind, ProbeDataset],
    lstm_config: TrainConfig,
    logreg_config: TrainConfig,
) -> dict[tuple[str, str], Optional[ClassificationReport]]:
    """Train and evaluate all representation x task cells.

    Returns a table keyed (representation, task value); a task without a
    dataset yields None cells (explicit absence markers).
    """
    table: dict[tuple[str, str], Optional[ClassificationReport]] = {}
    for task in TASK_ROW_ORDER:
        dataset = datasets.get(task)
        for representation in REPRESENTATIONS:
            key = (representation, task.value)
            if dataset is None:
                table[key] = None
                continue
            if representation == "Latents":
                model = train_lstm(dataset, lstm_config, representation="latents")
            elif representation == "AveragedLatents":
                model = train_logreg(dataset, logreg_config)
            else:
                model = train_lstm(dataset, lstm_config, representation="symbols")
            table[key] = evaluate(model, dataset)
    return table


def export_class_reports(table, path) -> None:
    """Per-class metrics CSV: representation,task,class,precision,recall,f1."""
    lines = ["representation,task,class,precision,recall,f1\n"]
    for task in TASK_ROW_ORDER:
        for representation in REPRESENTATIONS:
            report = table.get((representation, task.value))
            if report is None:
                continue
            for i, cls in enumerate(report.classes):
                lines.append(
                    f"{representation},{task.value},{cls},"
                    f"{report.precision[i]:.4f},{report.recall[i]:.4f},{report.f1[i]:.4f}\n"
                )
    Path(path).write_text("".join(lines), encoding="utf-8")


def export_summary(table, path) -> None:
    """Macro-F1 summary CSV laid out like the reference tables:
    one row per task, one column per representation."""
    lines = ["task," + ",".join(REPRESENTATIONS) + "\n"]
    for task in TASK_ROW_ORDER:
        cells = []
        for representation in REPRESENTATIONS:
            report = table.get((representation, task.value))
            cells.append("absent" if report is None else f"{report.macro_f1:.4f}")
        lines.append(f"{task.value}," + ",".join(cells) + "\n")
    Path(path).write_text("".join(lines), encoding="utf-8")
