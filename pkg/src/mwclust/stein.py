"""Non-asymptotic normal-approximation bounds for simulated designs.

The Wasserstein bound is the sum of a third-moment term and a
pair-sum-variance term; the Kolmogorov conversion is (2/pi)^(1/4) times
the square root. True moments are required, so everything here is
simulation-only and works off a moment oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mwclust.clusters import build_index
from mwclust.dgp import DgpSpec, MomentOracle, draw, structure

_VAR_COEF = math.sqrt(2.0 / math.pi)
_DK_COEF = (2.0 / math.pi) ** 0.25


@dataclass(frozen=True)
class BoundReport:
    term_third: float
    term_var: float
    d_W_bound: float
    d_K_bound: float
    method: str
    mc_se: float | None = None

    def to_dict(self) -> dict:
        return {
            "term_third": self.term_third,
            "term_var": self.term_var,
            "d_W_bound": self.d_W_bound,
            "d_K_bound": self.d_K_bound,
            "method": self.method,
            "mc_se": self.mc_se,
        }


def kolmogorov_bound(d_W: float) -> float:
    """Convert a Wasserstein bound to a Kolmogorov-distance bound."""
    if d_W < 0:
        raise ValueError("d_W must be nonnegative")
    return _DK_COEF * math.sqrt(d_W)


class _PairSummer:
    """Fast per-replication pair sums over truly dependent pairs.

    Pairs are pruned by the true dependence indicator: for iid designs only
    the self pair survives, which is the minimal valid dependency
    neighborhood.
    """

    def __init__(self, oracle: MomentOracle):
        self.kind = oracle.dependence_kind
        if self.kind == "neighborhood":
            index = build_index(oracle.scheme)
            self.g, self.h = oracle.scheme.labels
            self.cell = index.cell_dense
            self.sizes = (
                index.cluster_sizes[0].size,
                index.cluster_sizes[1].size,
                index.n_cells,
            )
        elif self.kind == "custom":
            self.B = oracle.adjacency().astype(float)

    def neighbor_sums(self, x: np.ndarray) -> np.ndarray:
        """t_i = sum of x_j over i's dependent set (including i)."""
        if self.kind == "self":
            return x
        if self.kind == "custom":
            return self.B @ x
        sg = np.bincount(self.g, weights=x, minlength=self.sizes[0])
        sh = np.bincount(self.h, weights=x, minlength=self.sizes[1])
        sc = np.bincount(self.cell, weights=x, minlength=self.sizes[2])
        return sg[self.g] + sh[self.h] - sc[self.cell]


def _dependent_adjacency(oracle: MomentOracle) -> np.ndarray:
    if oracle.dependence_kind == "self":
        return np.eye(oracle.scheme.n)
    return oracle.adjacency().astype(float)


def _analytic(oracle: MomentOracle) -> BoundReport:
    if not oracle.gaussian:
        raise ValueError(
            "analytic bound requires Gaussian components; use the monte-carlo method"
        )
    sigma_sq = oracle.true_Q
    # odd moments of symmetric Gaussian components vanish identically
    term_third = 0.0
    if oracle.third_inner_sum is not None:
        term_third = sum(
            abs(oracle.third_inner_sum(i)) for i in range(oracle.scheme.n)
        ) / sigma_sq**1.5
    B = _dependent_adjacency(oracle)
    C = oracle.cov()
    BC = B @ C
    var_pair_sum = 2.0 * float(np.einsum("ij,ji->", BC, BC))
    term_var = _VAR_COEF * math.sqrt(var_pair_sum) / sigma_sq
    d_W = term_third + term_var
    return BoundReport(
        term_third=term_third,
        term_var=term_var,
        d_W_bound=d_W,
        d_K_bound=kolmogorov_bound(d_W),
        method="analytic",
    )


def _monte_carlo(spec: DgpSpec, oracle: MomentOracle, reps: int) -> BoundReport:
    n = oracle.scheme.n
    summer = _PairSummer(oracle)
    sigma_sq = oracle.true_Q
    u_sum = np.zeros(n)
    u_sumsq = np.zeros(n)
    T = np.empty(reps)
    for r in range(reps):
        x = draw(spec, r) - oracle.mean
        t = summer.neighbor_sums(x)
        T[r] = float(x @ t)
        u = x * t * t
        u_sum += u
        u_sumsq += u * u
    e = u_sum / reps
    term_third = float(np.abs(e).sum()) / sigma_sq**1.5
    var_u = np.maximum(u_sumsq / reps - e * e, 0.0)
    se_third = math.sqrt(float(var_u.sum()) / reps) / sigma_sq**1.5
    var_T = float(np.var(T, ddof=1))
    centered = T - T.mean()
    m4 = float(np.mean(centered**4))
    se_var_T = math.sqrt(max(m4 - var_T**2, 0.0) / reps)
    term_var = _VAR_COEF * math.sqrt(var_T) / sigma_sq
    se_var = (
        _VAR_COEF * se_var_T / (2.0 * math.sqrt(var_T)) / sigma_sq if var_T > 0 else 0.0
    )
    d_W = term_third + term_var
    return BoundReport(
        term_third=term_third,
        term_var=term_var,
        d_W_bound=d_W,
        d_K_bound=kolmogorov_bound(d_W),
        method="monte-carlo",
        mc_se=math.sqrt(se_third**2 + se_var**2),
    )


def wasserstein_bound(
    spec: DgpSpec, method: str = "analytic", reps: int = 10_000
) -> BoundReport:
    """Evaluate the Wasserstein bound for a simulation design.

    The analytic path needs Gaussian components (fourth moments via the
    Gaussian product rule); the monte-carlo path estimates the moment terms
    over ``reps`` replications and reports a standard error.
    """
    _, oracle = structure(spec)
    if oracle.true_Q <= 0:
        raise ValueError("design has zero variance; bound undefined")
    if method == "analytic":
        return _analytic(oracle)
    if method == "monte-carlo":
        return _monte_carlo(spec, oracle, reps)
    raise ValueError(f"unknown method {method!r}")
