"""Finite-difference gradient oracles shared by the probe tests.

Central differences with step 1e-5 against the analytic gradients.  The
error measure is |a - f| / max(1, |a|, |f|): relative for large entries,
absolute for near-zero ones, so tiny true gradients do not inflate the
ratio with finite-difference noise.
"""

import numpy as np

from toneprobe.probe_classify import (
    _init_lstm_params,
    _logreg_loss_and_grad,
    _lstm_loss_and_grads,
)

FD_STEP = 1e-5


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def fd_grad(loss_fn, arr: np.ndarray, eps: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of loss_fn() w.r.t. arr, in place."""
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    grad_flat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = loss_fn()
        flat[i] = orig - eps
        minus = loss_fn()
        flat[i] = orig
        grad_flat[i] = (plus - minus) / (2.0 * eps)
    return grad


def logreg_gradcheck(rng: np.random.Generator) -> float:
    """Worst-entry error between analytic and FD gradients on a random
    small logistic-regression instance."""
    n = int(rng.integers(4, 9))
    dim = int(rng.integers(2, 5))
    n_classes = int(rng.integers(2, 5))
    x = rng.normal(size=(n, dim))
    y = rng.integers(0, n_classes, size=n)
    y[: n_classes] = np.arange(n_classes) % n_classes
    weights = rng.normal(scale=0.5, size=(n_classes, dim))
    bias = rng.normal(scale=0.5, size=n_classes)
    l2 = float(rng.choice([0.0, 0.01]))

    _, grad_w, grad_b = _logreg_loss_and_grad(weights, bias, x, y, l2)
    loss_fn = lambda: _logreg_loss_and_grad(weights, bias, x, y, l2)[0]
    err_w = max_rel_err(grad_w, fd_grad(loss_fn, weights))
    err_b = max_rel_err(grad_b, fd_grad(loss_fn, bias))
    return max(err_w, err_b)


def lstm_gradcheck(rng: np.random.Generator, embedded: bool) -> float:
    """Worst-entry error over every LSTM parameter on a random small
    instance with ragged sequence lengths (exercises the padding mask)."""
    from toneprobe.probe_classify import _pack_dense, _pack_symbols

    batch = int(rng.integers(2, 5))
    hidden = int(rng.integers(2, 6))
    n_classes = int(rng.integers(2, 5))
    lengths = rng.integers(1, 6, size=batch)
    y = rng.integers(0, n_classes, size=batch)

    if embedded:
        k = int(rng.integers(3, 7))
        embed_dim = int(rng.integers(2, 5))
        seqs = [rng.integers(0, k, size=l) for l in lengths]
        symbols, mask = _pack_symbols(seqs)
        params = _init_lstm_params(rng, embed_dim, hidden, n_classes, embed_k=k, embed_dim=embed_dim)

        def loss_fn():
            x = params["embed"][symbols]
            return _lstm_loss_and_grads(params, x, mask, y, symbols=symbols)[0]

        _, grads = _lstm_loss_and_grads(params, params["embed"][symbols], mask, y, symbols=symbols)
    else:
        n_in = int(rng.integers(2, 5))
        seqs = [rng.normal(size=(l, n_in)) for l in lengths]
        x, mask = _pack_dense(seqs)
        params = _init_lstm_params(rng, n_in, hidden, n_classes)

        def loss_fn():
            return _lstm_loss_and_grads(params, x, mask, y)[0]

        _, grads = _lstm_loss_and_grads(params, x, mask, y)

    worst = 0.0
    for key in params:
        worst = max(worst, max_rel_err(grads[key], fd_grad(loss_fn, params[key])))
    return worst
