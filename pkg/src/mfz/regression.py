"""Cross-sensor function learning.

Three interchangeable regressors: inverse-distance-weighted k-nearest
neighbors (exact kd-tree queries), geometric harmonics (Nystrom extension
of kernel eigenfunctions), and a small feed-forward network with a
randomized leaky-rectifier activation trained by adaptive-moment gradient
descent. Plus the sup-norm error metric used to score them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree


class KTooLarge(ValueError):
    """More neighbors requested than training points available."""


class IllConditioned(RuntimeError):
    """A retained kernel eigenvalue is too small to divide by safely."""


class DivergedLoss(RuntimeError):
    """Training loss became non-finite."""


class LengthMismatch(ValueError):
    """Truth and prediction vectors differ in length."""


EXACT_HIT = 1e-12

# Randomized leaky-rectifier slope range; fixed to the midpoint at inference.
RRELU_LO = 1.0 / 8.0
RRELU_HI = 1.0 / 3.0
RRELU_INFERENCE = 0.5 * (RRELU_LO + RRELU_HI)


# ---------------------------------------------------------------------------
# k-nearest neighbors

@dataclass(frozen=True)
class KnnModel:
    points: np.ndarray
    labels: np.ndarray
    k: int
    tree: cKDTree = field(repr=False, compare=False, default=None)


def knn_fit(X, y, k: int = 5) -> KnnModel:
    """Store training data behind an exact kd-tree."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > len(X):
        raise KTooLarge(f"k={k} exceeds {len(X)} training points")
    return KnnModel(points=X, labels=y, k=k, tree=cKDTree(X))


def knn_predict(model: KnnModel, q) -> np.ndarray:
    """Inverse-distance-weighted mean of the k nearest labels.

    A query within ``EXACT_HIT`` of a training point returns that point's
    label (smallest index wins among coincident points).
    """
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    Q = np.atleast_2d(q)
    dist, idx = model.tree.query(Q, k=model.k)
    dist = np.atleast_2d(dist)
    idx = np.atleast_2d(idx)
    out = np.empty((len(Q), model.labels.shape[1]))
    for r in range(len(Q)):
        d = dist[r]
        nbr = idx[r]
        if d[0] < EXACT_HIT:
            hit = nbr[d < EXACT_HIT].min()
            out[r] = model.labels[hit]
            continue
        w = 1.0 / d
        out[r] = (w[:, None] * model.labels[nbr]).sum(axis=0) / w.sum()
    result = out if model.labels.shape[1] > 1 else out[:, 0]
    return result[0] if single else result


# ---------------------------------------------------------------------------
# Geometric harmonics

@dataclass(frozen=True)
class GhModel:
    train_points: np.ndarray
    sigma: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    coefficients: np.ndarray
    lambda_cut: float


def gh_fit(X, f, m_eigs: int = 5, sigma: float = 1.0, lambda_cut_rel: float = 1e-8) -> GhModel:
    """Project training outputs onto the top kernel eigenfunctions.

    Eigenpairs whose eigenvalue falls at or below ``lambda_cut_rel`` times
    the leading one are dropped so extension never divides by a vanishing
    eigenvalue; pass 0.0 to keep a complete basis.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    n = len(X)
    if m_eigs > n:
        raise ValueError("m_eigs cannot exceed the training count")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    sq = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    W = np.exp(-sq / (2.0 * sigma * sigma))
    vals, vecs = sla.eigh(W)
    order = np.argsort(vals)[::-1][:m_eigs]
    vals = vals[order]
    vecs = vecs[:, order]
    cut = lambda_cut_rel * vals[0]
    keep = vals > cut
    vals, vecs = vals[keep], vecs[:, keep]
    coeff = vecs.T @ f
    return GhModel(
        train_points=X,
        sigma=float(sigma),
        eigenvalues=vals,
        eigenvectors=vecs,
        coefficients=coeff,
        lambda_cut=float(cut),
    )


def gh_predict(model: GhModel, q) -> np.ndarray:
    """Nystrom extension: psi_j(q) = (1/lambda_j) sum_i k(q, x_i) phi_j(x_i).

    Queries far from all training data see a vanishing kernel row and
    predict roughly zero; that is the documented out-of-range behavior.
    """
    if np.any(model.eigenvalues <= model.lambda_cut):
        raise IllConditioned("retained eigenvalue at or below the cutoff")
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    Q = np.atleast_2d(q)
    sq = ((Q[:, None, :] - model.train_points[None, :, :]) ** 2).sum(-1)
    kq = np.exp(-sq / (2.0 * model.sigma * model.sigma))
    psi = (kq @ model.eigenvectors) / model.eigenvalues[None, :]
    out = psi @ model.coefficients
    result = out if model.coefficients.shape[1] > 1 else out[:, 0]
    return result[0] if single else result


# ---------------------------------------------------------------------------
# Feed-forward network

@dataclass
class MlpModel:
    """Two hidden layers of ten units with a randomized leaky rectifier."""

    weights: list
    biases: list
    loss_history: np.ndarray
    seed: int

    @property
    def layer_sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]


def _init_params(sizes, rng):
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward(X, weights, biases, alphas):
    """Forward pass; returns layer inputs and pre-activations for backprop."""
    acts = [X]
    pres = []
    h = X
    for layer, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w + b
        pres.append(z)
        if layer < len(weights) - 1:
            a = alphas[layer]
            h = np.where(z >= 0, z, a * z)
        else:
            h = z
        acts.append(h)
    return acts, pres


def mlp_loss_and_grad(X, y, weights, biases, alphas):
    """Mean-squared-error loss and its analytic gradient.

    ``alphas`` holds one negative-slope vector per hidden layer and is
    treated as a constant, so the gradient can be checked against finite
    differences.
    """
    acts, pres = _forward(X, weights, biases, alphas)
    err = acts[-1] - y
    n = len(X)
    loss = float((err**2).mean())
    grad_w = [None] * len(weights)
    grad_b = [None] * len(weights)
    delta = 2.0 * err / err.size
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ weights[layer].T
            z = pres[layer - 1]
            slope = np.where(z >= 0, 1.0, alphas[layer - 1])
            delta = delta * slope
    return loss, grad_w, grad_b


def mlp_train(
    X,
    y,
    epochs: int = 5000,
    step_size: float = 1e-3,
    seed: int = 0,
    hidden=(10, 10),
    beta1: float = 0.9,
    beta2: float = 0.999,
    adam_eps: float = 1e-8,
) -> MlpModel:
    """Full-batch training with first/second moment accumulators and bias
    correction; the hidden-unit negative slopes are re-sampled every epoch.
    Deterministic for a fixed seed."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if epochs < 0:
        raise ValueError("epochs must be nonnegative")
    rng = np.random.default_rng(seed)
    sizes = [X.shape[1], *hidden, y.shape[1]]
    weights, biases = _init_params(sizes, rng)
    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]
    history = np.empty(epochs)
    for epoch in range(epochs):
        alphas = [rng.uniform(RRELU_LO, RRELU_HI, size=h) for h in hidden]
        loss, grad_w, grad_b = mlp_loss_and_grad(X, y, weights, biases, alphas)
        if not math.isfinite(loss):
            raise DivergedLoss(f"loss became non-finite at epoch {epoch}")
        history[epoch] = loss
        t = epoch + 1
        corr1 = 1.0 - beta1**t
        corr2 = 1.0 - beta2**t
        for i in range(len(weights)):
            m_w[i] = beta1 * m_w[i] + (1 - beta1) * grad_w[i]
            v_w[i] = beta2 * v_w[i] + (1 - beta2) * grad_w[i] ** 2
            weights[i] -= step_size * (m_w[i] / corr1) / (np.sqrt(v_w[i] / corr2) + adam_eps)
            m_b[i] = beta1 * m_b[i] + (1 - beta1) * grad_b[i]
            v_b[i] = beta2 * v_b[i] + (1 - beta2) * grad_b[i] ** 2
            biases[i] -= step_size * (m_b[i] / corr1) / (np.sqrt(v_b[i] / corr2) + adam_eps)
    return MlpModel(weights=weights, biases=biases, loss_history=history, seed=seed)


def mlp_predict(model: MlpModel, q) -> np.ndarray:
    """Deterministic forward pass with the negative slope at its midpoint."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    Q = np.atleast_2d(q)
    hidden_count = len(model.weights) - 1
    alphas = [np.full(w.shape[1], RRELU_INFERENCE) for w in model.weights[:hidden_count]]
    acts, _ = _forward(Q, model.weights, model.biases, alphas)
    out = acts[-1]
    result = out if out.shape[1] > 1 else out[:, 0]
    return result[0] if single else result


# ---------------------------------------------------------------------------
# Error metrics

def linf_error(truth, pred) -> float:
    """Sup-norm of the error divided by the sample count."""
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"shapes {truth.shape} and {pred.shape} differ")
    if truth.size == 0:
        raise LengthMismatch("empty inputs")
    return float(np.abs(truth - pred).max() / len(truth))


def relative_linf_error(truth, pred) -> float:
    """Sup-norm of the error relative to the sup-norm of the truth.

    For multi-column inputs the worst column-wise ratio is returned.
    """
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"shapes {truth.shape} and {pred.shape} differ")
    t = np.atleast_2d(truth.T).T
    p = np.atleast_2d(pred.T).T
    ratios = []
    for j in range(t.shape[1]):
        scale = np.abs(t[:, j]).max()
        if scale == 0:
            raise ValueError("truth column is identically zero")
        ratios.append(np.abs(t[:, j] - p[:, j]).max() / scale)
    return float(max(ratios))


# ---------------------------------------------------------------------------
# Serialization

def knn_to_dict(m: KnnModel) -> dict:
    return {
        "type": "knn",
        "k": m.k,
        "points": m.points.tolist(),
        "labels": m.labels.tolist(),
    }


def knn_from_dict(d: dict) -> KnnModel:
    return knn_fit(np.array(d["points"]), np.array(d["labels"]), d["k"])


def gh_to_dict(m: GhModel) -> dict:
    return {
        "type": "gh",
        "sigma": m.sigma,
        "lambda_cut": m.lambda_cut,
        "train_points": m.train_points.tolist(),
        "eigenvalues": m.eigenvalues.tolist(),
        "eigenvectors": m.eigenvectors.tolist(),
        "coefficients": m.coefficients.tolist(),
    }


def gh_from_dict(d: dict) -> GhModel:
    return GhModel(
        train_points=np.array(d["train_points"]),
        sigma=d["sigma"],
        eigenvalues=np.array(d["eigenvalues"]),
        eigenvectors=np.array(d["eigenvectors"]),
        coefficients=np.array(d["coefficients"]),
        lambda_cut=d["lambda_cut"],
    )


def mlp_to_dict(m: MlpModel) -> dict:
    return {
        "type": "mlp",
        "seed": m.seed,
        "layer_sizes": m.layer_sizes,
        "weights": [w.tolist() for w in m.weights],
        "biases": [b.tolist() for b in m.biases],
        "loss_history": m.loss_history.tolist(),
    }


def mlp_from_dict(d: dict) -> MlpModel:
    return MlpModel(
        weights=[np.array(w) for w in d["weights"]],
        biases=[np.array(b) for b in d["biases"]],
        loss_history=np.array(d["loss_history"]),
        seed=d["seed"],
    )


def model_to_json(model, path) -> None:
    if isinstance(model, KnnModel):
        d = knn_to_dict(model)
    elif isinstance(model, GhModel):
        d = gh_to_dict(model)
    elif isinstance(model, MlpModel):
        d = mlp_to_dict(model)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "w") as fh:
        json.dump(d, fh, sort_keys=True)


def model_from_json(path):
    with open(path) as fh:
        d = json.load(fh)
    return {"knn": knn_from_dict, "gh": gh_from_dict, "mlp": mlp_from_dict}[d["type"]](d)
