"""Dense feed-forward network with dropout, softmax output and Adam updates."""

from __future__ import annotations

import numpy as np

ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(z.dtype)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "sigmoid": (lambda z: 1.0 / (1.0 + np.exp(-z)), lambda z, a: a * (1.0 - a)),
}


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def init_params(layer_sizes, rng) -> list[np.ndarray]:
    """He-style initialisation scaled by fan-in; biases start at zero."""
    params = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        params.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def loss_and_grad(params, X, Y, activation="relu", dropout=0.0, rng=None):
    """Mean cross-entropy of one-hot targets ``Y`` and its gradient w.r.t. ``params``.

    Dropout (inverted, rate ``dropout``) is applied to hidden activations only
    when ``rng`` is given.
    """
    act, dact = ACTIVATIONS[activation]
    n_layers = len(params) // 2
    h = X
    cache = []
    for layer in range(n_layers - 1):
        W, b = params[2 * layer], params[2 * layer + 1]
        z = h @ W + b
        a = act(z)
        mask = None
        if rng is not None and dropout > 0:
            mask = (rng.random(a.shape) >= dropout) / (1.0 - dropout)
            a = a * mask
        cache.append((h, z, a, mask))
        h = a
    W, b = params[-2], params[-1]
    P = softmax(h @ W + b)
    n = len(X)
    loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / n

    grads = [None] * len(params)
    delta = (P - Y) / n
    grads[-2] = h.T @ delta
    grads[-1] = delta.sum(axis=0)
    upstream = delta @ W.T
    for layer in range(n_layers - 2, -1, -1):
        h_in, z, a, mask = cache[layer]
        g = upstream
        if mask is not None:
            g = g * mask
            a = a / np.where(mask > 0, mask, 1.0)
        g = g * dact(z, a)
        grads[2 * layer] = h_in.T @ g
        grads[2 * layer + 1] = g.sum(axis=0)
        upstream = g @ params[2 * layer].T
    return loss, grads


def forward(params, X, activation="relu") -> np.ndarray:
    act, _ = ACTIVATIONS[activation]
    h = X
    for layer in range(len(params) // 2 - 1):
        h = act(h @ params[2 * layer] + params[2 * layer + 1])
    return softmax(h @ params[-2] + params[-1])


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class NeuralNet:
    def __init__(self, hidden_layers: int = 2, units: int = 100, activation: str = "relu",
                 dropout: float = 0.5, epochs: int = 500, batch_size: int = 256,
                 learning_rate: float = 1e-3, seed: int = 0):
        self.hidden_layers = hidden_layers
        self.units = units
        self.activation = activation
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, X, y, n_classes: int) -> "NeuralNet":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        rng = np.random.default_rng(self.seed)
        sizes = [X.shape[1]] + [self.units] * self.hidden_layers + [n_classes]
        self.params_ = init_params(sizes, rng)
        Y = np.zeros((len(X), n_classes))
        Y[np.arange(len(X)), y] = 1.0
        opt = Adam(self.params_, lr=self.learning_rate)
        self.loss_curve_ = []
        for _ in range(self.epochs):
            order = rng.permutation(len(X))
            total = 0.0
            for start in range(0, len(X), self.batch_size):
                b = order[start:start + self.batch_size]
                loss, grads = loss_and_grad(self.params_, X[b], Y[b], self.activation, self.dropout, rng)
                opt.step(self.params_, grads)
                total += loss * len(b)
            self.loss_curve_.append(total / len(X))
        self.n_classes_ = n_classes
        return self

    def predict_scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            return np.zeros((0, self.n_classes_))
        return forward(self.params_, X, self.activation)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_scores(X), axis=1)
