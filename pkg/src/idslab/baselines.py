"""Classical classifier baselines: softmax regression, CART, MLP.

All three expose the same predict interface and feed the shared metrics
module, so baseline rows and DRL rows in the reports come off one scoring
path.  Training is deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn

__all__ = [
    "Classifier",
    "train_logreg",
    "train_tree",
    "train_mlp",
]


@dataclass
class Classifier:
    kind: str  # "logreg" | "tree" | "mlp"
    n_classes: int
    _predict_proba: callable = field(repr=False)
    net: object = field(default=None, repr=False)  # fitted DenseNet, if any

    def predict_proba(self, X):
        return self._predict_proba(np.atleast_2d(np.asarray(X, dtype=np.float64)))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


def _one_hot(y, k):
    out = np.zeros((y.size, k))
    out[np.arange(y.size), y] = 1.0
    return out


def _softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train_logreg(X, y, n_classes=None, l2=1e-4, epochs=300, lr=1e-2, seed=0):
    """L2-regularized softmax regression, full-batch Adam."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.size == 0:
        raise ValueError("empty training data")
    k = n_classes if n_classes is not None else int(y.max()) + 1
    n, d = X.shape
    net = nn.init_net([d, k], ["linear"], seed=seed)
    opt = nn.OptState.for_net(net, "adam", lr)
    Y = _one_hot(y, k)
    for _ in range(epochs):
        logits = X @ net.weights[0] + net.biases[0]
        probs = _softmax(logits)
        dlogits = (probs - Y) / n
        grads = [(X.T @ dlogits + l2 * net.weights[0], dlogits.sum(axis=0))]
        nn.opt_step(net, grads, opt)
    W, b = net.weights[0].copy(), net.biases[0].copy()
    return Classifier(
        kind="logreg", n_classes=k, _predict_proba=lambda A: _softmax(A @ W + b),
        net=net,
    )


# --- CART ------------------------------------------------------------------

@dataclass
class _Node:
    prediction: np.ndarray  # class distribution at this node
    feature: int = -1
    threshold: float = 0.0
    left: "_Node" = None
    right: "_Node" = None

    @property
    def is_leaf(self):
        return self.left is None


def _gini(counts):
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float((p * p).sum())


def _best_split(X, y, k):
    """Best (feature, threshold) by Gini gain; ties broken by lowest
    feature index, then lowest threshold."""
    n = y.size
    best = None  # (impurity, feature, threshold)
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        # cumulative class counts left of each candidate split
        left_counts = np.zeros((n + 1, k))
        np.add.at(left_counts, (np.arange(1, n + 1), ys), 1.0)
        left_counts = np.cumsum(left_counts, axis=0)
        total = left_counts[-1]
        boundaries = np.flatnonzero(xs[1:] > xs[:-1]) + 1  # split between distinct values
        for i in boundaries:
            lc = left_counts[i]
            rc = total - lc
            imp = (i * _gini(lc) + (n - i) * _gini(rc)) / n
            thr = 0.5 * (xs[i - 1] + xs[i])
            if best is None or imp < best[0] - 1e-15:
                best = (imp, f, thr)
    return best


def _grow(X, y, k, depth, max_depth, min_split):
    counts = np.bincount(y, minlength=k).astype(np.float64)
    node = _Node(prediction=counts / max(counts.sum(), 1.0))
    if depth >= max_depth or y.size < min_split or _gini(counts) == 0.0:
        return node
    split = _best_split(X, y, k)
    if split is None:
        return node
    _, f, thr = split
    mask = X[:, f] <= thr
    node.feature = f
    node.threshold = thr
    node.left = _grow(X[mask], y[mask], k, depth + 1, max_depth, min_split)
    node.right = _grow(X[~mask], y[~mask], k, depth + 1, max_depth, min_split)
    return node


def train_tree(X, y, max_depth=20, min_split=2, seed=0):
    """CART with Gini impurity over midpoint thresholds."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.size == 0:
        raise ValueError("empty training data")
    k = int(y.max()) + 1
    root = _grow(X, y, k, 0, max_depth, min_split)

    def predict_proba(A):
        out = np.empty((A.shape[0], k))
        for i, row in enumerate(A):
            node = root
            while not node.is_leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.prediction
        return out

    return Classifier(kind="tree", n_classes=k, _predict_proba=predict_proba)


# --- MLP -------------------------------------------------------------------

def train_mlp(X, y, hidden=(128, 64, 32), epochs=20, batch=256, lr=1e-3, seed=0):
    """ReLU MLP with softmax head, minibatch cross-entropy, Adam."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.size == 0:
        raise ValueError("empty training data")
    k = int(y.max()) + 1
    n, d = X.shape
    sizes = [d, *hidden, k]
    acts = ["relu"] * len(hidden) + ["softmax"]
    net = nn.init_net(sizes, acts, seed=seed)
    opt = nn.OptState.for_net(net, "adam", lr)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            probs, tape = nn.forward(net, X[idx])
            # d(mean cross-entropy)/d(probs); softmax backward turns this
            # into (p - onehot)/m on the logits
            target = _one_hot(y[idx], k)
            dprobs = -target / np.maximum(probs, 1e-12) / idx.size
            grads, _ = nn.backward(net, tape, dprobs)
            nn.opt_step(net, grads, opt)

    def predict_proba(A):
        out, _ = nn.forward(net, A)
        return np.atleast_2d(out)

    return Classifier(kind="mlp", n_classes=k, _predict_proba=predict_proba, net=net)
