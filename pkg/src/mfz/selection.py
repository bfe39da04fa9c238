"""Leave-one-out local linear regression for parsimonious eigenvector
selection and per-channel identifiability classification.

Each sample's target value is predicted from a locally weighted affine fit
over all other samples, with Gaussian weights in predictor space. Targets
that are (locally) functions of the predictors come out with residuals
near zero; genuinely new directions come out near one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .embeddings import Embedding
from .kernels import median_bandwidth


class SingularLocalSystem(RuntimeError):
    """A local weighted least-squares system stayed singular even after
    ridge regularization."""


@dataclass(frozen=True)
class LlrReport:
    """Normalized leave-one-out residual per target."""

    targets: tuple
    residuals: np.ndarray
    bandwidths: np.ndarray
    bandwidth_scale: float

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "residuals", np.asarray(self.residuals, float))
        object.__setattr__(self, "bandwidths", np.asarray(self.bandwidths, float))

    def as_dict(self) -> dict:
        return {
            "parameters": {
                "bandwidth_scale": self.bandwidth_scale,
                "bandwidths": self.bandwidths.tolist(),
            },
            "residuals": [
                {"target": t, "residual": float(r)}
                for t, r in zip(self.targets, self.residuals)
            ],
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)


def llr_residual(target, predictors, bandwidth: float) -> float:
    """Normalized leave-one-out locally linear fit residual.

    For every sample i an affine model is fit to all other samples with
    Gaussian weights exp(-||p_i - p_j||^2 / (2 h^2)) in predictor space and
    used to predict the (mean-centered) target at i. Returns
    ||target - prediction||_2 / ||target||_2 on the centered target.
    Local normal equations get a ridge of 1e-10 times their trace to cope
    with collinear neighborhoods.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    t = np.asarray(target, dtype=float)
    P = np.atleast_2d(np.asarray(predictors, dtype=float))
    if P.shape[0] != t.shape[0]:
        raise ValueError("target and predictors must be aligned")
    n, p = P.shape
    if n <= p + 1:
        raise ValueError("need more samples than predictors plus one")
    t = t - t.mean()
    t_norm = np.linalg.norm(t)
    if t_norm == 0:
        return 0.0
    K = np.exp(-squareform(pdist(P, "sqeuclidean")) / (2.0 * bandwidth * bandwidth))
    np.fill_diagonal(K, 0.0)
    G = np.column_stack([np.ones(n), P])
    outer = G[:, :, None] * G[:, None, :]
    M = np.tensordot(K, outer.reshape(n, -1), axes=1).reshape(n, p + 1, p + 1)
    b = K @ (G * t[:, None])
    trace = np.trace(M, axis1=1, axis2=2)
    if np.any(trace <= 0):
        raise SingularLocalSystem("a sample has no weighted neighbors")
    M += (1e-10 * trace)[:, None, None] * np.eye(p + 1)[None, :, :]
    try:
        coef = np.linalg.solve(M, b[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as err:
        raise SingularLocalSystem(str(err)) from err
    pred = np.einsum("ia,ia->i", G, coef)
    return float(np.linalg.norm(t - pred) / t_norm)


def _predictor_bandwidth(P: np.ndarray, scale: float) -> float:
    return median_bandwidth(P, scale)


def eigenvector_residuals(
    emb: Embedding,
    bandwidth_scale: float = 1.0 / 3.0,
    n: int | None = None,
) -> LlrReport:
    """Residual of each nontrivial eigenvector against all previous ones.

    The constant eigenvector (index 0) is skipped; the first nontrivial one
    has no predecessors and gets residual 1 by definition.
    """
    n = emb.n_vectors if n is None else min(n, emb.n_vectors)
    if n < 3:
        raise ValueError("need at least three eigenvectors")
    targets = []
    residuals = []
    bandwidths = []
    for k in range(1, n):
        targets.append(f"phi{k}")
        if k == 1:
            residuals.append(1.0)
            bandwidths.append(np.nan)
            continue
        P = emb.eigenvectors[:, 1:k]
        h = _predictor_bandwidth(P, bandwidth_scale)
        residuals.append(llr_residual(emb.eigenvectors[:, k], P, h))
        bandwidths.append(h)
    return LlrReport(
        targets=targets,
        residuals=residuals,
        bandwidths=bandwidths,
        bandwidth_scale=bandwidth_scale,
    )


def select_parsimonious(
    emb: Embedding,
    threshold: float = 0.5,
    bandwidth_scale: float = 1.0 / 3.0,
    n: int | None = None,
    report: LlrReport | None = None,
) -> list[int]:
    """Indices of eigenvectors that carry unique directions.

    Index 0 (constant) is skipped, index 1 is always selected, and each
    later eigenvector is selected when its residual against all previous
    nontrivial eigenvectors exceeds ``threshold``.
    """
    if report is None:
        report = eigenvector_residuals(emb, bandwidth_scale, n)
    selected = [1]
    for target, r in zip(report.targets[1:], report.residuals[1:]):
        if r > threshold:
            selected.append(int(target.removeprefix("phi")))
    return selected


def channel_identifiability(
    stream,
    coords,
    threshold: float = 0.5,
    bandwidth_scale: float = 1.0 / 3.0,
) -> tuple[list[str], LlrReport]:
    """Classify each channel as common or sensor-specific.

    A channel readable as a function of the selected embedding coordinates
    (residual below ``threshold``) belongs to the common system.
    """
    data = stream.data if hasattr(stream, "data") else np.asarray(stream, float)
    P = coords.eigenvectors if isinstance(coords, Embedding) else np.asarray(coords, float)
    if P.shape[0] != data.shape[0]:
        raise ValueError("stream and embedding must be aligned")
    h = _predictor_bandwidth(P, bandwidth_scale)
    labels = (
        stream.channel_labels()
        if hasattr(stream, "channel_labels")
        else [f"ch{i}" for i in range(data.shape[1])]
    )
    residuals = [llr_residual(data[:, j], P, h) for j in range(data.shape[1])]
    classes = ["common" if r < threshold else "sensor-specific" for r in residuals]
    report = LlrReport(
        targets=labels,
        residuals=residuals,
        bandwidths=[h] * len(labels),
        bandwidth_scale=bandwidth_scale,
    )
    return classes, report
