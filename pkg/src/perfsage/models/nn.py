"""Tiny fully-connected ReLU regressors trained full-batch with Adam."""

from __future__ import annotations

import math

import numpy as np

from perfsage.errors import TrainingDivergenceError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def layer_sizes(n_in: int, hidden) -> list[tuple[int, int]]:
    dims = [n_in, *hidden, 1]
    return list(zip(dims[:-1], dims[1:]))


def count_params(n_in: int, hidden) -> int:
    return sum((a + 1) * b for a, b in layer_sizes(n_in, hidden))


def init_layers(n_in: int, hidden, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """He-uniform weights, zero biases."""
    layers = []
    for fan_in, fan_out in layer_sizes(n_in, hidden):
        bound = math.sqrt(6.0 / fan_in)
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((W, np.zeros(fan_out)))
    return layers


def forward(layers, X: np.ndarray) -> np.ndarray:
    h = X
    for W, b in layers[:-1]:
        h = np.maximum(h @ W + b, 0.0)
    W, b = layers[-1]
    return (h @ W + b)[:, 0]


def loss_and_grads(layers, X: np.ndarray, y: np.ndarray):
    """Mean squared error and its gradient for every (W, b)."""
    acts = [X]
    pre = []
    h = X
    for W, b in layers[:-1]:
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    W, b = layers[-1]
    out = (h @ W + b)[:, 0]
    resid = out - y
    n = X.shape[0]
    loss = float(np.mean(resid * resid))

    grads = [None] * len(layers)
    delta = (2.0 / n) * resid[:, None]
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W.T) * (pre[i - 1] > 0)
    return loss, grads


def train_adam(layers, X, y, epochs: int, learning_rate: float):
    """Full-batch Adam on MSE. Returns (layers, per-epoch loss trace).

    The recorded loss for an epoch is the loss before that epoch's update.
    """
    layers = [(W.copy(), b.copy()) for W, b in layers]
    m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
    v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
    trace = np.empty(epochs)
    for epoch in range(epochs):
        loss, grads = loss_and_grads(layers, X, y)
        if not math.isfinite(loss):
            raise TrainingDivergenceError(epoch, loss)
        trace[epoch] = loss
        t = epoch + 1
        c1 = 1.0 - ADAM_BETA1**t
        c2 = 1.0 - ADAM_BETA2**t
        for i, ((W, b), (gW, gb)) in enumerate(zip(layers, grads)):
            mW, mb = m[i]
            vW, vb = v[i]
            mW *= ADAM_BETA1
            mW += (1 - ADAM_BETA1) * gW
            mb *= ADAM_BETA1
            mb += (1 - ADAM_BETA1) * gb
            vW *= ADAM_BETA2
            vW += (1 - ADAM_BETA2) * gW * gW
            vb *= ADAM_BETA2
            vb += (1 - ADAM_BETA2) * gb * gb
            W -= learning_rate * (mW / c1) / (np.sqrt(vW / c2) + ADAM_EPS)
            b -= learning_rate * (mb / c1) / (np.sqrt(vb / c2) + ADAM_EPS)
    return layers, trace.tolist()
