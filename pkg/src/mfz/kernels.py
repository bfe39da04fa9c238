"""Gaussian affinities, bandwidth selection, and diffusion normalization.

Affinities use the convention w_ij = exp(-||x_i - x_j||^2 / (2 sigma^2));
diffusion operators are column-stochastic, P_ij = w_ij / sum_l w_lj.
Matrices are kept dense: sample counts stay in the low thousands and the
spectra must be exactly those of the full construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform


class AllPointsIdentical(ValueError):
    """No nonzero pairwise distance exists; no bandwidth can be derived."""


class ZeroColumn(ValueError):
    """A kernel column sums to zero and cannot be normalized."""


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric Gaussian affinity matrix with its bandwidth record."""

    W: np.ndarray
    sigma: float


@dataclass(frozen=True)
class DiffusionOperator:
    """Column-stochastic normalization of an affinity matrix.

    ``col_sums`` keeps the pre-normalization column sums so spectral
    routines can symmetrize by conjugation.
    """

    P: np.ndarray
    col_sums: np.ndarray
    normalization: str = "column"

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def symmetric_part(self) -> np.ndarray:
        cached = getattr(self, "_symmetric_part", None)
        if cached is None:
            cached = 0.5 * (self.P + self.P.T)
            object.__setattr__(self, "_symmetric_part", cached)
        return cached


def gaussian_affinity(X: np.ndarray, sigma: float) -> KernelMatrix:
    """Dense Gaussian affinities; exactly symmetric with unit diagonal."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    sq = squareform(pdist(X, "sqeuclidean"))
    return KernelMatrix(W=np.exp(-sq / (2.0 * sigma * sigma)), sigma=float(sigma))


def median_bandwidth(X: np.ndarray, scale: float = 1.0) -> float:
    """``scale`` times the median of the nonzero pairwise distances."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = pdist(X)
    nz = d[d > 0]
    if nz.size == 0:
        raise AllPointsIdentical("all samples coincide")
    return float(scale * np.median(nz))


def column_normalize(k: KernelMatrix | np.ndarray) -> DiffusionOperator:
    """Normalize each column to sum to one."""
    W = k.W if isinstance(k, KernelMatrix) else np.asarray(k, dtype=float)
    sums = W.sum(axis=0)
    if np.any(sums <= 0):
        raise ZeroColumn(f"column {int(np.argmin(sums))} has nonpositive sum")
    return DiffusionOperator(P=W / sums[np.newaxis, :], col_sums=sums)
