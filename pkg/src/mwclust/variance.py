"""Plug-in variance estimation over dependent pairs.

Two independent computation paths are kept for cross-checking: direct
enumeration of neighborhoods, and inclusion-exclusion over the two one-way
cluster sums minus the intersection-cell sum.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from mwclust.clusters import NeighborhoodIndex, SchemaError, WeightedSample


class DegenerateWeightsError(ValueError):
    """Weight sum is zero, so no weighted mean exists."""


@dataclass(frozen=True)
class VarianceEstimate:
    """Symmetric K-by-K pair-sum variance matrix with provenance."""

    Q_hat: np.ndarray
    lambda_min: float
    method: str
    demeaned: bool
    psd_projected: bool = False


def _jacobi_rotate(a, v, p, q):
    apq = a[p, q]
    tau = (a[q, q] - a[p, p]) / (2.0 * apq)
    t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0 else 1.0
    c = 1.0 / np.hypot(1.0, t)
    s = t * c
    rp, rq = a[p].copy(), a[q].copy()
    a[p, :] = c * rp - s * rq
    a[q, :] = s * rp + c * rq
    cp, cq = a[:, p].copy(), a[:, q].copy()
    a[:, p] = c * cp - s * cq
    a[:, q] = s * cp + c * cq
    a[p, q] = a[q, p] = 0.0
    vp, vq = v[:, p].copy(), v[:, q].copy()
    v[:, p] = c * vp - s * vq
    v[:, q] = s * vp + c * vq


def jacobi_eigh(M, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigendecomposition of a small dense symmetric matrix by cyclic Jacobi sweeps.

    Returns (eigenvalues ascending, eigenvectors as columns). Raises on
    asymmetric input.
    """
    a = np.array(M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > 1e-12 * scale:
        raise ValueError("matrix is not symmetric within tolerance 1e-12")
    a = 0.5 * (a + a.T)
    k = a.shape[0]
    v = np.eye(k)
    if k == 1:
        return a.diagonal().copy(), v
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                if abs(a[p, q]) > tol * scale:
                    _jacobi_rotate(a, v, p, q)
    vals = a.diagonal().copy()
    order = np.argsort(vals)
    return vals[order], v[:, order]


def smallest_eigenvalue(M) -> float:
    """Smallest eigenvalue of a symmetric matrix via the Jacobi solver."""
    vals, _ = jacobi_eigh(M)
    return float(vals[0])


def weighted_mean(sample: WeightedSample) -> np.ndarray:
    """Weighted average of the sample rows."""
    total = sample.omega.sum()
    if total == 0:
        raise DegenerateWeightsError("weights sum to zero")
    return sample.omega @ sample.W / total


def _cluster_outer(labels, n_clusters, V):
    """Sum of outer products of per-cluster weighted sums."""
    K = V.shape[1]
    S = np.zeros((n_clusters, K))
    np.add.at(S, labels, V)
    return S.T @ S


def _pair_enum(W, omega, index: NeighborhoodIndex) -> np.ndarray:
    # Kahan-compensated accumulation: up to ~n * max N_i terms of mixed sign.
    K = W.shape[1]
    acc = np.zeros((K, K))
    comp = np.zeros((K, K))
    V = omega[:, None] * W
    for i in range(index.n):
        nbrs = index.neighborhood(i)
        term = np.outer(V[i], V[nbrs].sum(axis=0))
        y = term - comp
        s = acc + y
        comp = (s - acc) - y
        acc = s
    return acc


def _inclusion_exclusion(W, omega, index: NeighborhoodIndex) -> np.ndarray:
    V = omega[:, None] * W
    g, h = index.scheme.labels
    Q = _cluster_outer(g, index.cluster_sizes[0].size, V)
    Q += _cluster_outer(h, index.cluster_sizes[1].size, V)
    Q -= _cluster_outer(index.cell_dense, index.n_cells, V)
    return Q


_METHODS = {
    "pair-enum": _pair_enum,
    "inclusion-exclusion": _inclusion_exclusion,
}


def _dof_factors(index: NeighborhoodIndex) -> float:
    factor = 1.0
    for sizes in index.cluster_sizes:
        C = sizes.size
        if C > 1:
            factor *= C / (C - 1.0)
    return factor


def cgm_raw(
    sample: WeightedSample,
    index: NeighborhoodIndex,
    method: str = "inclusion-exclusion",
    dof_correction: bool = False,
) -> VarianceEstimate:
    """Sum omega_i omega_j W_i W_j' over all dependent ordered pairs.

    ``dof_correction`` applies a multiplicative C/(C-1) factor per dimension;
    it is off by default and excluded from cross-path equivalence checks.
    """
    if index.n != sample.n:
        raise SchemaError(f"index has n={index.n} but sample has n={sample.n}")
    try:
        Q = _METHODS[method](sample.W, sample.omega, index)
    except KeyError:
        raise ValueError(f"unknown method {method!r}") from None
    if dof_correction:
        Q = Q * _dof_factors(index)
    Q = 0.5 * (Q + Q.T)
    return VarianceEstimate(
        Q_hat=Q,
        lambda_min=smallest_eigenvalue(Q),
        method=method,
        demeaned=False,
    )


def cgm_demeaned(
    sample: WeightedSample,
    index: NeighborhoodIndex,
    method: str = "inclusion-exclusion",
    dof_correction: bool = False,
):
    """Recentre at the weighted mean, then apply the raw pair-sum estimator.

    Returns (mean, VarianceEstimate).
    """
    mean = weighted_mean(sample)
    centered = WeightedSample(W=sample.W - mean, omega=sample.omega)
    est = cgm_raw(centered, index, method=method, dof_correction=dof_correction)
    return mean, replace(est, demeaned=True)


def psd_project(est: VarianceEstimate) -> VarianceEstimate:
    """Clip negative eigenvalues at zero. Idempotent."""
    vals, vecs = jacobi_eigh(est.Q_hat)
    clipped = np.clip(vals, 0.0, None)
    Q = vecs @ np.diag(clipped) @ vecs.T
    Q = 0.5 * (Q + Q.T)
    return replace(
        est,
        Q_hat=Q,
        lambda_min=max(0.0, smallest_eigenvalue(Q)),
        psd_projected=True,
    )
