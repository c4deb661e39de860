"""Simulation designs with known ground truth.

Each variant ships an oracle carrying exact means, the exact variance of
the weighted sum, the true pairwise dependence indicator, and (where the
additive structure allows) closed-form third moments. Replication streams
are counter-based so parallel generation is replication-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mwclust.clusters import ClusterScheme, WeightedSample, build_index

VARIANTS = (
    "additive-re",
    "interactive-chaos",
    "iid-conservative",
    "nonzero-mean-triple",
)

DISTRIBUTIONS = ("gaussian", "centered-exponential", "rademacher")

# Third central moment of each unit-variance component family.
_M3 = {"gaussian": 0.0, "centered-exponential": 2.0, "rademacher": 0.0}

# Component ids for counter-based stream separation within a replication.
COMP_ALPHA, COMP_GAMMA, COMP_EPS = 0, 1, 2


@dataclass(frozen=True)
class DgpSpec:
    """Declarative simulation configuration."""

    variant: str
    M: int = 4  # grid side, or number of replicated blocks for the triple
    cell_size: int = 1
    dist_alpha: str = "gaussian"
    dist_gamma: str = "gaussian"
    dist_eps: str = "gaussian"
    sigma_alpha: float = 1.0
    sigma_gamma: float = 1.0
    sigma_eps: float = 1.0
    hetero_alpha: bool = False
    hetero_gamma: bool = False
    hetero_eps: bool = False
    triple_one_way: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        for dist in (self.dist_alpha, self.dist_gamma, self.dist_eps):
            if dist not in DISTRIBUTIONS:
                raise ValueError(f"unknown distribution {dist!r}")
        if self.M < 1 or self.cell_size < 1:
            raise ValueError("grid must be nonempty")
        if self.variant == "interactive-chaos" and self.cell_size != 1:
            raise ValueError("interactive-chaos requires cell_size = 1")
        if min(self.sigma_alpha, self.sigma_gamma, self.sigma_eps) < 0:
            raise ValueError("scales must be nonnegative")


@dataclass
class MomentOracle:
    """Analytic moments for a simulation design."""

    mean: np.ndarray
    true_Q: float
    scheme: ClusterScheme
    gaussian: bool
    dependence_kind: str  # "neighborhood" | "self" | "custom"
    dependent: callable  # vectorized pair predicate (i, j) -> bool
    third_moment: callable | None = None  # (i, j, k) -> float, additive designs only
    # closed-form sum of E[X_i X_j X_k] over j, k in i's dependency
    # neighborhood (the triple enumeration collapsed by shared-component
    # counting); additive designs only
    third_inner_sum: callable | None = None
    _cov_builder: callable = None
    _cov: np.ndarray = field(default=None, repr=False)

    def cov(self) -> np.ndarray:
        """Dense n-by-n covariance of the observations (built lazily)."""
        if self._cov is None:
            self._cov = self._cov_builder()
        return self._cov

    def adjacency(self) -> np.ndarray:
        """Dense boolean matrix of truly dependent pairs."""
        n = self.scheme.n
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        return self.dependent(ii.ravel(), jj.ravel()).reshape(n, n)


def _schedule(base: float, count: int, hetero: bool) -> np.ndarray:
    if hetero:
        return base * (1.0 + np.arange(count) / count)
    return np.full(count, base)


def _stream(seed: int, rep: int, comp: int) -> np.random.Generator:
    counter = np.array([0, 0, rep, comp], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=np.uint64(seed), counter=counter))


def _draw(rng: np.random.Generator, dist: str, size: int) -> np.ndarray:
    if dist == "gaussian":
        return rng.standard_normal(size)
    if dist == "centered-exponential":
        return rng.standard_exponential(size) - 1.0
    return rng.integers(0, 2, size=size) * 2.0 - 1.0


def _grid_scheme(M: int, cell: int) -> ClusterScheme:
    g = np.repeat(np.arange(M, dtype=np.int64), M * cell)
    h = np.tile(np.repeat(np.arange(M, dtype=np.int64), cell), M)
    return ClusterScheme(dims=("G", "H"), labels=(g, h))


def _triple_scheme(blocks: int, one_way: bool) -> ClusterScheme:
    b = np.repeat(np.arange(blocks, dtype=np.int64), 3)
    if one_way:
        g = np.zeros(3 * blocks, dtype=np.int64)
        h = np.arange(3 * blocks, dtype=np.int64)
    else:
        g = 2 * b + np.tile(np.array([0, 0, 1], dtype=np.int64), blocks)
        h = 2 * b + np.tile(np.array([0, 1, 1], dtype=np.int64), blocks)
    return ClusterScheme(dims=("G", "H"), labels=(g, h))


def _shared_cluster_predicate(scheme: ClusterScheme):
    g, h = scheme.labels

    def dependent(i, j):
        i = np.asarray(i)
        j = np.asarray(j)
        return (g[i] == g[j]) | (h[i] == h[j])

    return dependent


def structure(spec: DgpSpec):
    """Scheme and moment oracle for a spec; deterministic, no draws.

    Identical across replications, so callers can build the neighborhood
    index once per study.
    """
    M, cell = spec.M, spec.cell_size
    if spec.variant == "nonzero-mean-triple":
        return _triple_structure(spec)

    scheme = _grid_scheme(M, cell)
    n = scheme.n
    g, h = scheme.labels
    sa = _schedule(spec.sigma_alpha, M, spec.hetero_alpha)
    sg = _schedule(spec.sigma_gamma, M, spec.hetero_gamma)
    se = _schedule(spec.sigma_eps, n, spec.hetero_eps)
    mean = np.zeros(n)

    if spec.variant == "additive-re":
        sizes_g = np.bincount(g, minlength=M).astype(float)
        sizes_h = np.bincount(h, minlength=M).astype(float)
        true_Q = float(
            (sizes_g**2 * sa**2).sum() + (sizes_h**2 * sg**2).sum() + (se**2).sum()
        )
        m3a = _M3[spec.dist_alpha] * sa**3
        m3g = _M3[spec.dist_gamma] * sg**3
        m3e = _M3[spec.dist_eps] * se**3

        def cov_builder():
            same_g = g[:, None] == g[None, :]
            same_h = h[:, None] == h[None, :]
            C = np.where(same_g, sa[g][:, None] * sa[g][None, :], 0.0)
            C += np.where(same_h, sg[h][:, None] * sg[h][None, :], 0.0)
            C[np.diag_indices(n)] += se**2
            return C

        def third_moment(i, j, k):
            val = 0.0
            if g[i] == g[j] == g[k]:
                val += m3a[g[i]]
            if h[i] == h[j] == h[k]:
                val += m3g[h[i]]
            if i == j == k:
                val += m3e[i]
            return val

        def third_inner_sum(i):
            return float(
                m3a[g[i]] * sizes_g[g[i]] ** 2
                + m3g[h[i]] * sizes_h[h[i]] ** 2
                + m3e[i]
            )

        gaussian = {spec.dist_alpha, spec.dist_gamma, spec.dist_eps} == {"gaussian"}
        oracle = MomentOracle(
            mean=mean,
            true_Q=true_Q,
            scheme=scheme,
            gaussian=gaussian,
            dependence_kind="neighborhood",
            dependent=_shared_cluster_predicate(scheme),
            third_moment=third_moment,
            third_inner_sum=third_inner_sum,
            _cov_builder=cov_builder,
        )
        return scheme, oracle

    if spec.variant == "iid-conservative":
        m3e = _M3[spec.dist_eps] * se**3

        def cov_builder():
            return np.diag(se**2)

        def dependent(i, j):
            return np.asarray(i) == np.asarray(j)

        def third_moment(i, j, k):
            return float(m3e[i]) if i == j == k else 0.0

        def third_inner_sum(i):
            return float(m3e[i])

        oracle = MomentOracle(
            mean=mean,
            true_Q=float((se**2).sum()),
            scheme=scheme,
            gaussian=spec.dist_eps == "gaussian",
            dependence_kind="self",
            dependent=dependent,
            third_moment=third_moment,
            third_inner_sum=third_inner_sum,
            _cov_builder=cov_builder,
        )
        return scheme, oracle

    # interactive-chaos: uncorrelated but within-row/column dependent
    var_i = sa[g] ** 2 * sg[h] ** 2

    def cov_builder():
        return np.diag(var_i)

    oracle = MomentOracle(
        mean=mean,
        true_Q=float(var_i.sum()),
        scheme=scheme,
        gaussian=False,  # products of normals are not normal
        dependence_kind="neighborhood",
        dependent=_shared_cluster_predicate(scheme),
        _cov_builder=cov_builder,
    )
    return scheme, oracle


def _triple_structure(spec: DgpSpec):
    blocks = spec.M
    scheme = _triple_scheme(blocks, spec.triple_one_way)
    n = 3 * blocks
    mean = np.tile(np.array([1.0, -1.0, 1.0]), blocks)
    block = np.repeat(np.arange(blocks), 3)
    pos = np.tile(np.arange(3), blocks)

    def dependent(i, j):
        # actual dependence: shared block component, regardless of scheme
        i = np.asarray(i)
        j = np.asarray(j)
        same_block = block[i] == block[j]
        skip = (np.minimum(pos[i], pos[j]) == 0) & (np.maximum(pos[i], pos[j]) == 2)
        return same_block & ~skip

    block_cov = np.array([[1.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 1.0]])

    def cov_builder():
        C = np.zeros((n, n))
        for b in range(blocks):
            C[3 * b : 3 * b + 3, 3 * b : 3 * b + 3] = block_cov
        return C

    gaussian = {spec.dist_alpha, spec.dist_gamma} == {"gaussian"}
    oracle = MomentOracle(
        mean=mean,
        true_Q=8.0 * blocks,
        scheme=scheme,
        gaussian=gaussian,
        dependence_kind="custom" if spec.triple_one_way else "neighborhood",
        dependent=dependent,
        _cov_builder=cov_builder,
    )
    return scheme, oracle


def draw(spec: DgpSpec, rep: int = 0) -> np.ndarray:
    """One replication of the outcome vector. Deterministic in (seed, rep)."""
    M, cell = spec.M, spec.cell_size
    if spec.variant == "nonzero-mean-triple":
        a = _draw(_stream(spec.seed, rep, COMP_ALPHA), spec.dist_alpha, M)
        c = _draw(_stream(spec.seed, rep, COMP_GAMMA), spec.dist_gamma, M)
        block = np.repeat(np.arange(M), 3)
        pattern_a = np.tile(np.array([1.0, 1.0, 0.0]), M)
        pattern_c = np.tile(np.array([0.0, 1.0, 1.0]), M)
        mean = np.tile(np.array([1.0, -1.0, 1.0]), M)
        return mean + a[block] * pattern_a + c[block] * pattern_c

    n = M * M * cell
    g = np.repeat(np.arange(M), M * cell)
    h = np.tile(np.repeat(np.arange(M), cell), M)
    se = _schedule(spec.sigma_eps, n, spec.hetero_eps)
    if spec.variant == "iid-conservative":
        return se * _draw(_stream(spec.seed, rep, COMP_EPS), spec.dist_eps, n)
    sa = _schedule(spec.sigma_alpha, M, spec.hetero_alpha)
    sg = _schedule(spec.sigma_gamma, M, spec.hetero_gamma)
    alpha = sa * _draw(_stream(spec.seed, rep, COMP_ALPHA), spec.dist_alpha, M)
    gamma = sg * _draw(_stream(spec.seed, rep, COMP_GAMMA), spec.dist_gamma, M)
    if spec.variant == "interactive-chaos":
        return alpha[g] * gamma[h]
    eps = se * _draw(_stream(spec.seed, rep, COMP_EPS), spec.dist_eps, n)
    return alpha[g] + gamma[h] + eps


def generate(spec: DgpSpec, rep: int = 0):
    """One replication: (WeightedSample, ClusterScheme, MomentOracle)."""
    scheme, oracle = structure(spec)
    W = draw(spec, rep)
    sample = WeightedSample(W=W[:, None], omega=np.ones(scheme.n))
    return sample, scheme, oracle


def true_bias_term(oracle: MomentOracle) -> float:
    """Exact sum of mean products over all neighborhood pairs.

    The sign of this term determines whether a nonzero-mean design over- or
    under-states the variance.
    """
    index = build_index(oracle.scheme)
    mu = oracle.mean
    total = 0.0
    for i in range(oracle.scheme.n):
        total += mu[i] * mu[index.neighborhood(i)].sum()
    return float(total)
