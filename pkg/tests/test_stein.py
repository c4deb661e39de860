import math

import numpy as np
import pytest

from mwclust.dgp import DgpSpec, draw, structure
from mwclust.stein import (
    BoundReport,
    kolmogorov_bound,
    wasserstein_bound,
)


class TestKolmogorovConversion:
    def test_constant_and_monotonicity(self):
        assert kolmogorov_bound(0.0) == 0.0
        assert kolmogorov_bound(1.0) == pytest.approx((2.0 / math.pi) ** 0.25)
        assert kolmogorov_bound(0.25) == pytest.approx(0.5 * (2.0 / math.pi) ** 0.25)
        assert kolmogorov_bound(0.01) < kolmogorov_bound(0.04)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            kolmogorov_bound(-1e-9)


class TestAnalytic:
    def test_iid_gaussian_closed_form(self):
        # n iid standard normals with self-only dependence:
        # Var(sum x_i^2) = 2n, sigma^2 = n
        for M in (2, 4):
            n = M * M
            rep = wasserstein_bound(DgpSpec(variant="iid-conservative", M=M))
            assert rep.term_third == 0.0
            expect = math.sqrt(2.0 / math.pi) * math.sqrt(2.0 * n) / n
            assert rep.term_var == pytest.approx(expect, rel=1e-12)
            assert rep.d_W_bound == rep.term_var
            assert rep.d_K_bound == pytest.approx(
                (2.0 / math.pi) ** 0.25 * math.sqrt(rep.d_W_bound)
            )

    def test_gaussian_additive_third_term_vanishes(self):
        rep = wasserstein_bound(DgpSpec(variant="additive-re", M=6))
        assert rep.term_third == 0.0

    def test_additive_var_term_matches_direct_quadratic_form(self):
        spec = DgpSpec(variant="additive-re", M=3, hetero_alpha=True)
        scheme, oracle = structure(spec)
        rep = wasserstein_bound(spec)
        B = oracle.adjacency().astype(float)
        C = oracle.cov()
        var = 2.0 * np.trace(B @ C @ B @ C)
        expect = math.sqrt(2.0 / math.pi) * math.sqrt(var) / oracle.true_Q
        assert rep.term_var == pytest.approx(expect, rel=1e-12)

    def test_non_gaussian_design_refused(self):
        with pytest.raises(ValueError):
            wasserstein_bound(DgpSpec(variant="interactive-chaos", M=4))

    def test_decreases_with_grid_size(self):
        bounds = [
            wasserstein_bound(DgpSpec(variant="additive-re", M=M)).d_W_bound
            for M in (4, 8, 16)
        ]
        assert bounds[0] > bounds[1] > bounds[2]


class TestMonteCarlo:
    def test_agrees_with_analytic_on_gaussian_design(self):
        spec = DgpSpec(variant="additive-re", M=6)
        ana = wasserstein_bound(spec, method="analytic")
        mc = wasserstein_bound(spec, method="monte-carlo", reps=4000)
        assert mc.mc_se is not None and mc.mc_se > 0
        # third term is estimated noise around zero; variance term should be
        # within a few standard errors
        assert abs(mc.term_var - ana.term_var) < 6 * mc.mc_se + 0.02

    def test_nonzero_third_term_for_skewed_components(self):
        spec = DgpSpec(
            variant="iid-conservative", M=3, dist_eps="centered-exponential"
        )
        mc = wasserstein_bound(spec, method="monte-carlo", reps=20_000)
        # E[x_i^3] = 2 for unit-scale centered exponentials, sigma^2 = n:
        # term = n * 2 / n^{3/2}
        n = 9
        expect = 2.0 * n / n**1.5
        assert mc.term_third == pytest.approx(expect, rel=0.15)

    def test_deterministic_given_seed(self):
        spec = DgpSpec(variant="additive-re", M=4, seed=3)
        a = wasserstein_bound(spec, method="monte-carlo", reps=500)
        b = wasserstein_bound(spec, method="monte-carlo", reps=500)
        assert a == b

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            wasserstein_bound(DgpSpec(variant="additive-re"), method="exact")

    def test_zero_variance_design_refused(self):
        spec = DgpSpec(
            variant="additive-re", M=2, sigma_alpha=0.0, sigma_gamma=0.0, sigma_eps=0.0
        )
        with pytest.raises(ValueError):
            wasserstein_bound(spec)


class TestReport:
    def test_serializes(self):
        import json

        rep = wasserstein_bound(DgpSpec(variant="additive-re", M=4))
        doc = json.loads(json.dumps(rep.to_dict()))
        assert doc["method"] == "analytic"
        assert isinstance(rep, BoundReport)
