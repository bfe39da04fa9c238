"""Spectral embeddings: diffusion maps, alternating diffusion, jointly
smooth functions, output-informed diffusion maps, and Dirichlet-energy
smoothness scoring.

Embedding coordinates are the smooth eigenfunctions of the diffusion
operator, i.e. the right eigenvectors of the transpose of the
column-stochastic matrix; the trivial top eigenvector is then constant.
A deterministic sign convention makes repeated runs bit-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import pdist, squareform

from .kernels import (
    DiffusionOperator,
    KernelMatrix,
    column_normalize,
    gaussian_affinity,
    median_bandwidth,
)


class ComplexSpectrum(RuntimeError):
    """Leading alternating-diffusion eigenvalues have imaginary parts
    beyond tolerance; usually signals an asymmetric kernel upstream."""


class ConvergenceFailure(RuntimeError):
    """The underlying eigensolver did not converge."""


@dataclass(frozen=True)
class Embedding:
    """Eigenvalues (descending) and unit-norm eigenvectors over N samples."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source: str = ""

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=float)
        vecs = np.asarray(self.eigenvectors, dtype=float)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenvectors", vecs)
        if vecs.ndim != 2 or vecs.shape[1] != len(vals):
            raise ValueError("one eigenvector column per eigenvalue required")

    @property
    def n_samples(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def n_vectors(self) -> int:
        return self.eigenvectors.shape[1]

    def coords(self, indices) -> np.ndarray:
        return self.eigenvectors[:, list(indices)]

    def subset(self, indices) -> "Embedding":
        idx = list(indices)
        return Embedding(
            eigenvalues=self.eigenvalues[idx],
            eigenvectors=self.eigenvectors[:, idx],
            source=self.source,
        )


@dataclass(frozen=True)
class JsfSet:
    """Jointly smooth functions with their singular values and, per
    function, the Dirichlet energy against each sensor's operator."""

    functions: np.ndarray
    singular_values: np.ndarray
    energies: np.ndarray

    @property
    def n_functions(self) -> int:
        return self.functions.shape[1]


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip each column so its first above-noise component is positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        pivot = nz[0] if nz.size else int(np.argmax(np.abs(col)))
        if col[pivot] < 0:
            out[:, j] = -col
    return out


def diffusion_maps(op: DiffusionOperator, n: int, source: str = "diffusion") -> Embedding:
    """Top-n eigenpairs of a column-stochastic operator.

    Solved through the symmetric conjugation M = D^(-1/2) W D^(-1/2) with
    D the pre-normalization column sums; eigenvectors are mapped back by
    D^(-1/2), which makes the trivial top eigenvector constant, then
    L2-normalized and sign-fixed.
    """
    if n >= op.n:
        raise ValueError("n must be smaller than the sample count")
    d_sqrt = np.sqrt(op.col_sums)
    d_isqrt = 1.0 / d_sqrt
    # M = D^(-1/2) P D^(1/2) = D^(-1/2) W D^(-1/2); symmetrize away the
    # roundoff left by the normalization divisions.
    M = op.P * (d_isqrt[:, None] * d_sqrt[None, :])
    M = 0.5 * (M + M.T)
    try:
        vals, vecs = sla.eigh(M, subset_by_index=[op.n - n, op.n - 1])
    except (sla.LinAlgError, np.linalg.LinAlgError) as err:
        raise ConvergenceFailure(str(err)) from err
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order] * d_isqrt[:, None]
    vecs /= np.linalg.norm(vecs, axis=0)
    return Embedding(eigenvalues=vals, eigenvectors=_fix_signs(vecs), source=source)


def alternating_diffusion(
    op1: DiffusionOperator,
    op2: DiffusionOperator,
    n: int,
    imag_tol: float = 1e-8,
) -> Embedding:
    """Embedding of the alternating operator P = P2 @ P1.

    The product is nonsymmetric, so a general dense eigensolver is used on
    its transpose (whose right eigenvectors are the smooth coordinate
    functions). Eigenpairs are sorted by |lambda|; if any of the returned
    leading eigenvalues carries an imaginary part above ``imag_tol`` a
    :class:`ComplexSpectrum` error is raised.
    """
    if op1.n != op2.n:
        raise ValueError("operators must be built on the same samples")
    if n >= op1.n:
        raise ValueError("n must be smaller than the sample count")
    A = op2.P @ op1.P
    try:
        vals, vecs = sla.eig(A.T)
    except (sla.LinAlgError, np.linalg.LinAlgError) as err:
        raise ConvergenceFailure(str(err)) from err
    order = np.argsort(-np.abs(vals))[:n]
    vals = vals[order]
    vecs = vecs[:, order]
    worst = float(np.max(np.abs(vals.imag)))
    if worst > imag_tol:
        raise ComplexSpectrum(
            f"leading alternating eigenvalues have |Im| up to {worst:.3e}"
        )
    # Rotate each eigenvector's complex phase away before taking real parts.
    out = np.empty((vecs.shape[0], n))
    for j in range(n):
        col = vecs[:, j]
        pivot = int(np.argmax(np.abs(col)))
        phase = col[pivot] / abs(col[pivot])
        col = col / phase
        out[:, j] = col.real
    out /= np.linalg.norm(out, axis=0)
    return Embedding(
        eigenvalues=vals.real,
        eigenvectors=_fix_signs(out),
        source="alternating",
    )


def dirichlet_energy(f: np.ndarray, op: DiffusionOperator) -> float:
    """Quadratic roughness of f against the symmetrized operator.

    E(f) = f^T (I - P_sym) f / (f^T f); zero for constants because the
    operator's total mass equals the sample count.
    """
    f = np.asarray(f, dtype=float)
    denom = float(f @ f)
    if denom == 0:
        raise ValueError("f must be nonzero")
    e = (denom - float(f @ (op.symmetric_part @ f))) / denom
    return max(e, 0.0)


def jsf(
    datasets,
    d: int = 64,
    M: int = 10,
    sigma_scale: float = 1.0,
) -> JsfSet:
    """Jointly smooth functions across K aligned datasets.

    Each dataset gets a Gaussian kernel (median-heuristic bandwidth times
    ``sigma_scale``); the top-d kernel eigenvectors per dataset are
    concatenated and an SVD extracts the M best-shared directions. The
    energy table scores every function against every dataset's diffusion
    operator.
    """
    arrays = [ds.data if hasattr(ds, "data") else np.asarray(ds, float) for ds in datasets]
    if not arrays:
        raise ValueError("at least one dataset required")
    n_samples = arrays[0].shape[0]
    if any(a.shape[0] != n_samples for a in arrays):
        raise ValueError("datasets must share the sample count")
    if d > n_samples:
        raise ValueError("d cannot exceed the sample count")
    if M > d * len(arrays):
        raise ValueError("M cannot exceed K*d")
    bases = []
    ops = []
    for a in arrays:
        kern = gaussian_affinity(a, median_bandwidth(a, sigma_scale))
        try:
            vals, vecs = sla.eigh(kern.W, subset_by_index=[n_samples - d, n_samples - 1])
        except (sla.LinAlgError, np.linalg.LinAlgError) as err:
            raise ConvergenceFailure(str(err)) from err
        bases.append(vecs[:, np.argsort(vals)[::-1]])
        ops.append(column_normalize(kern))
    stacked = np.hstack(bases)
    try:
        U, S, _ = sla.svd(stacked, full_matrices=False)
    except (sla.LinAlgError, np.linalg.LinAlgError) as err:
        raise ConvergenceFailure(str(err)) from err
    funcs = _fix_signs(U[:, :M])
    energies = np.array(
        [[dirichlet_energy(funcs[:, m], op) for op in ops] for m in range(M)]
    )
    return JsfSet(functions=funcs, singular_values=S[:M], energies=energies)


def jsf_smooth_count(jsf_set: JsfSet) -> tuple[int, float]:
    """Number of smooth functions and the energy gap that separates them.

    The per-function max-over-sensors energies are sorted ascending and the
    split is placed at the largest consecutive ratio. Returns (count, gap).
    """
    scores = np.sort(jsf_set.energies.max(axis=1))
    floor = max(scores.max(), 1e-300) * 1e-12
    ratios = scores[1:] / np.maximum(scores[:-1], floor)
    split = int(np.argmax(ratios))
    return split + 1, float(ratios[split])


def output_informed_kernel(Y: np.ndarray, F: np.ndarray, eps: float) -> KernelMatrix:
    """Two-scale kernel: exp(-||f_i-f_j||^2/eps^2 - ||y_i-y_j||^2/eps).

    With eps below one, output differences are penalized on a finer scale
    than input differences, so input directions that actually move the
    output dominate the leading spectrum.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if Y.shape[0] != F.shape[0]:
        raise ValueError("inputs and outputs must be aligned")
    sq_y = squareform(pdist(Y, "sqeuclidean"))
    sq_f = squareform(pdist(F, "sqeuclidean"))
    W = np.exp(-sq_f / (eps * eps) - sq_y / eps)
    return KernelMatrix(W=W, sigma=float(eps))


def output_informed_embed(
    sensor,
    output: Embedding | np.ndarray,
    n: int = 20,
    eps: float = 0.5,
) -> Embedding:
    """Diffusion maps over the output-informed kernel.

    ``sensor`` supplies the input manifold (a stream or array), ``output``
    the response coordinates (usually an embedding restricted to its
    selected parsimonious coordinates). Both are standardized per column
    and jointly rescaled so the median pairwise distance equals ``eps``,
    which keeps the two-scale exponent in its intended eps < 1 regime.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    Y = sensor.data if hasattr(sensor, "data") else np.asarray(sensor, float)
    F = output.eigenvectors if isinstance(output, Embedding) else np.asarray(output, float)
    Y = (Y - Y.mean(axis=0)) / Y.std(axis=0)
    F = (F - F.mean(axis=0)) / F.std(axis=0)
    joint = np.hstack([Y, F])
    med = median_bandwidth(joint)
    s = eps / med
    kern = output_informed_kernel(Y * s, F * s, eps)
    return diffusion_maps(column_normalize(kern), n, source="output_informed")


def embedding_to_csv(emb: Embedding, path, metadata: dict | None = None) -> None:
    """Write eigenvector columns as CSV plus a JSON metadata sidecar."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample"] + [f"phi{k}" for k in range(emb.n_vectors)])
        for i, row in enumerate(emb.eigenvectors):
            writer.writerow([i] + [f"{x:.17g}" for x in row])
    meta = {
        "eigenvalues": emb.eigenvalues.tolist(),
        "source": emb.source,
    }
    if metadata:
        meta.update(metadata)
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
