"""Cluster assignments and the dependency-neighborhood structure.

An observation's neighborhood is the union of its clusters on every
dimension; two observations outside each other's neighborhoods are treated
as independent by every estimator in this package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SchemaError(ValueError):
    """Malformed cluster scheme or inconsistent array lengths."""


@dataclass(frozen=True)
class ClusterScheme:
    """Per-observation cluster labels on each clustering dimension.

    Labels are stored as dense integers ``0..C-1`` per dimension; use
    :meth:`from_labels` to canonicalize arbitrary label values (strings,
    sparse ints) at ingestion.
    """

    dims: tuple[str, ...]
    labels: tuple[np.ndarray, ...]  # one dense int64 vector per dimension
    label_values: tuple[tuple, ...] = field(default=())  # original value per dense id

    def __post_init__(self):
        if len(self.dims) != len(self.labels):
            raise SchemaError("one label vector required per dimension")
        if not self.labels:
            raise SchemaError("at least one clustering dimension required")
        n = len(self.labels[0])
        if n < 1:
            raise SchemaError("scheme requires n >= 1")
        for dim, lab in zip(self.dims, self.labels):
            if len(lab) != n:
                raise SchemaError(
                    f"label vector for dimension {dim!r} has length {len(lab)}, expected {n}"
                )

    @property
    def n(self) -> int:
        return len(self.labels[0])

    @property
    def n_clusters(self) -> tuple[int, ...]:
        return tuple(int(lab.max()) + 1 for lab in self.labels)

    @classmethod
    def from_labels(cls, *label_vectors, dims=None) -> "ClusterScheme":
        """Build a scheme from raw label vectors, canonicalizing to dense ints.

        Unused labels are dropped; the mapping back to original values is
        retained in ``label_values``.
        """
        if dims is None:
            dims = tuple("GH"[i] if i < 2 else f"C{i}" for i in range(len(label_vectors)))
        dense = []
        values = []
        n = None
        for dim, raw in zip(dims, label_vectors):
            arr = np.asarray(raw)
            if arr.ndim != 1:
                raise SchemaError(f"labels for dimension {dim!r} must be one-dimensional")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise SchemaError(
                    f"label vector for dimension {dim!r} has length {arr.size}, expected {n}"
                )
            uniq, inv = np.unique(arr, return_inverse=True)
            dense.append(inv.astype(np.int64))
            values.append(tuple(uniq.tolist()))
        return cls(dims=tuple(dims), labels=tuple(dense), label_values=tuple(values))


@dataclass(frozen=True)
class WeightedSample:
    """An n-by-K outcome matrix with nonstochastic per-observation weights."""

    W: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        if W.shape[0] == 1 and np.asarray(self.W).ndim == 1:
            W = W.T
        omega = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "omega", omega)
        if W.ndim != 2 or W.shape[1] < 1:
            raise SchemaError("W must be an n-by-K matrix with K >= 1")
        if omega.shape != (W.shape[0],):
            raise SchemaError("omega must be an n-vector matching W")
        if not (np.isfinite(W).all() and np.isfinite(omega).all()):
            raise SchemaError("W and omega must be finite")

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def K(self) -> int:
        return self.W.shape[1]


class NeighborhoodIndex:
    """Precomputed cluster membership enabling iteration over dependent pairs.

    Immutable once built; safe to share across concurrent readers.
    """

    def __init__(self, scheme: ClusterScheme):
        if len(scheme.dims) != 2:
            raise SchemaError(
                f"algorithms require exactly 2 clustering dimensions, got {len(scheme.dims)}"
            )
        self.scheme = scheme
        self.n = scheme.n
        self.members: list[list[np.ndarray]] = []
        self.cluster_sizes: list[np.ndarray] = []
        for lab in scheme.labels:
            n_c = int(lab.max()) + 1
            order = np.argsort(lab, kind="stable")
            counts = np.bincount(lab, minlength=n_c)
            splits = np.split(order, np.cumsum(counts)[:-1])
            self.members.append([np.sort(m) for m in splits])
            self.cluster_sizes.append(counts)
        g, h = scheme.labels
        n_h = int(h.max()) + 1
        self.cell_id = g * n_h + h
        uniq, inv = np.unique(self.cell_id, return_inverse=True)
        self.cell_dense = inv
        self.n_cells = uniq.size
        order = np.argsort(inv, kind="stable")
        counts = np.bincount(inv, minlength=self.n_cells)
        self.cell_members = [np.sort(m) for m in np.split(order, np.cumsum(counts)[:-1])]
        self.cell_sizes = counts

    def neighborhood(self, i: int) -> np.ndarray:
        """Sorted ids of observations sharing a cluster with ``i`` on any dimension."""
        if not 0 <= i < self.n:
            raise IndexError(f"observation id {i} out of range [0, {self.n})")
        g, h = (lab[i] for lab in self.scheme.labels)
        return np.union1d(self.members[0][g], self.members[1][h])

    def neighborhood_sizes(self) -> np.ndarray:
        """N_i for every observation, by inclusion-exclusion over the two dimensions."""
        g, h = self.scheme.labels
        return (
            self.cluster_sizes[0][g]
            + self.cluster_sizes[1][h]
            - self.cell_sizes[self.cell_dense]
        )


def build_index(scheme: ClusterScheme) -> NeighborhoodIndex:
    """Materialize cluster membership and intersection-cell structure."""
    return NeighborhoodIndex(scheme)


def pair_weight_sums(index: NeighborhoodIndex, omega, mode: str):
    """Per-dimension weight aggregates used by the regularity diagnostics.

    mode "per-cluster-L1-squared" returns, per dimension, the vector of
    squared absolute-weight cluster sums (callers take max or sum); mode
    "cross-pair-abs" returns the scalar sum over all within-cluster pairs of
    ``|omega_i omega_j|``, which equals the sum of the per-cluster values
    exactly.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (index.n,):
        raise SchemaError("omega length does not match index")
    out = {}
    for dim, lab, sizes in zip(index.scheme.dims, index.scheme.labels, index.cluster_sizes):
        sums = np.bincount(lab, weights=np.abs(omega), minlength=sizes.size)
        sq = sums * sums
        if mode == "per-cluster-L1-squared":
            out[dim] = sq
        elif mode == "cross-pair-abs":
            out[dim] = float(sq.sum())
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return out
