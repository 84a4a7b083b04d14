"""Capacity law, iso-loss algebra, and planning multipliers."""

import math

import numpy as np
import pytest

from atlas_kit import (
    CapacityParams,
    DomainError,
    LawParams,
    baseline_weights,
    compute_optimal_multipliers,
    compute_optimal_weights,
    derive_capacity_observations,
    frontier_sweep,
    isoloss_constraint_residual,
    isoloss_solve,
    marginal_sensitivities,
    multipliers_from_ratios,
    predict_capacity_loss,
    predict_loss,
)
from atlas_kit.run_data import RunSet

from conftest import make_record

P = CapacityParams(l_inf=0.6, log_a=7.0, log_b=6.5, alpha=0.35, beta=0.3, phi=0.12, psi=-0.05)


class TestCapacityLoss:
    def test_k1_reduces_to_plain_power_law(self):
        plain = LawParams(variant="bsl", e_irreducible=0.6, log_a=7.0, log_b=6.5,
                          alpha=0.35, beta=0.3)
        n, d = 5e8, 3e10
        assert predict_capacity_loss(P, 1, n, d) == predict_loss(plain, n, d)

    def test_zero_exponents_ignore_k(self):
        p0 = CapacityParams(l_inf=0.6, log_a=7.0, log_b=6.5, alpha=0.35, beta=0.3,
                            phi=0.0, psi=0.0)
        assert predict_capacity_loss(p0, 1, 1e8, 1e10) == predict_capacity_loss(p0, 32, 1e8, 1e10)

    def test_doubling_k_with_phi_one(self):
        p1 = CapacityParams(l_inf=0.0, log_a=7.0, log_b=6.5, alpha=0.35, beta=0.3,
                            phi=1.0, psi=0.0)
        n, d = 1e8, 1e10
        d_term = math.exp(6.5) / d**0.3
        one = predict_capacity_loss(p1, 1, n, d) - d_term
        two = predict_capacity_loss(p1, 2, n, d) - d_term
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            predict_capacity_loss(P, 0, 1e8, 1e10)
        with pytest.raises(DomainError):
            predict_capacity_loss(P, 1, 0, 1e10)
        with pytest.raises(DomainError):
            predict_capacity_loss(P, 1, 1e8, 0)


class TestWeights:
    def test_equal_terms_give_half(self):
        # pick (n, d) so both error terms match exactly
        p = CapacityParams(l_inf=0.0, log_a=2.0, log_b=2.0, alpha=0.5, beta=0.5,
                           phi=0.0, psi=0.0)
        w_n, w_d = baseline_weights(p, 1, 1e6, 1e6)
        assert (w_n, w_d) == (0.5, 0.5)

    def test_compute_optimal_symmetric(self):
        assert compute_optimal_weights(0.4, 0.4) == (0.5, 0.5)

    def test_compute_optimal_ratio(self):
        w_n, w_d = compute_optimal_weights(0.3, 0.6)
        assert w_n == pytest.approx(2 / 3, abs=1e-15)
        assert w_d == pytest.approx(1 / 3, abs=1e-15)


class TestIsoloss:
    def test_no_change_identity(self):
        t = isoloss_solve(r=1.0, w_n=0.4, w_d=0.6, alpha=0.3, beta=0.4,
                          phi=0.11, psi=-0.04, s=1.0)
        assert t == pytest.approx(1.0, abs=1e-12)

    def test_limit_as_s_grows(self):
        r, w_d, beta, psi = 4.0, 0.5, 0.4, -0.04
        t = isoloss_solve(r=r, w_n=0.5, w_d=w_d, alpha=0.3, beta=beta,
                          phi=0.11, psi=psi, s=1e15)
        assert t == pytest.approx((r**psi * w_d) ** (1 / beta), rel=1e-4)

    def test_boundary_blowup(self):
        r, w_n, alpha, phi = 4.0, 0.5, 0.3, 0.11
        s_min = (r**phi * w_n) ** (1 / alpha)
        previous = None
        for eps in (1e-2, 1e-4, 1e-6):
            t = isoloss_solve(r=r, w_n=w_n, w_d=0.5, alpha=alpha, beta=0.4,
                              phi=phi, psi=-0.04, s=s_min * (1 + eps))
            assert previous is None or t > previous
            previous = t
        assert previous > 1e3
        with pytest.raises(DomainError, match="s\\^alpha"):
            isoloss_solve(r=r, w_n=w_n, w_d=0.5, alpha=alpha, beta=0.4,
                          phi=phi, psi=-0.04, s=s_min * 0.999)

    def test_solutions_satisfy_constraint_both_ways(self):
        kwargs = dict(r=3.0, w_n=0.55, w_d=0.45, alpha=0.35, beta=0.45, phi=0.2, psi=-0.1)
        s = 1.6
        t = isoloss_solve(s=s, **kwargs)
        assert abs(isoloss_constraint_residual(**kwargs, s=s, t=t)) <= 1e-9
        s_back = isoloss_solve(t=t, **kwargs)
        assert s_back == pytest.approx(s, rel=1e-9)


class TestMultipliers:
    def test_r_one_is_identity(self):
        m = compute_optimal_multipliers(0.11, -0.04, 0.3, 0.4, 1.0)
        assert (m.n_ratio, m.d_t_ratio, m.d_tot_ratio, m.c_ratio) == (1, 1, 1, 1)

    def test_published_r4_multipliers(self):
        m = multipliers_from_ratios(0.2427, -0.2727, 4.0)
        assert m.n_ratio == pytest.approx(1.40, abs=0.01)
        assert m.d_tot_ratio == pytest.approx(2.74, abs=0.01)
        assert m.c_ratio == pytest.approx(4**0.97, abs=1e-12)
        assert m.d_t_ratio == pytest.approx(0.685, abs=0.005)

    def test_negative_psi_cuts_per_language_data(self):
        m = compute_optimal_multipliers(0.11, -0.04, 0.3, 0.4, 4.0)
        assert m.d_t_ratio < 1.0

    def test_compute_identity_exact(self):
        m = compute_optimal_multipliers(0.17, -0.06, 0.41, 0.33, 3.7)
        assert m.c_ratio == m.n_ratio * m.d_tot_ratio

    def test_optimum_restores_each_term(self):
        # (s, t) = (r^(phi/alpha), r^(psi/beta)) lies on the iso-loss curve
        phi, psi, alpha, beta, r = 0.11, -0.04, 0.3, 0.4, 4.0
        w_n, w_d = compute_optimal_weights(alpha, beta)
        m = compute_optimal_multipliers(phi, psi, alpha, beta, r)
        residual = isoloss_constraint_residual(r, w_n, w_d, alpha, beta, phi, psi,
                                               m.n_ratio, m.d_t_ratio)
        assert abs(residual) <= 1e-9


class TestSensitivities:
    def test_matched_terms_alpha_dominates(self):
        # with alpha = 2*beta the terms match at d = n^2; then the model-size
        # sensitivity is exactly alpha/beta times larger
        p = CapacityParams(l_inf=0.0, log_a=2.0, log_b=2.0, alpha=0.6, beta=0.3,
                           phi=0.0, psi=0.0)
        dn, dd = marginal_sensitivities(p, 1, 1e3, 1e6)
        assert abs(dn) > abs(dd)
        assert abs(dn) == pytest.approx(2 * abs(dd), rel=1e-9)

    def test_finite_difference_oracle(self):
        # draw the two error terms in a moderate range so central differences
        # on the total loss resolve them to better than 1e-6 relative
        rng = np.random.default_rng(0)
        for _ in range(25):
            alpha = rng.uniform(0.2, 0.7)
            beta = rng.uniform(0.2, 0.7)
            phi = rng.uniform(-0.3, 0.4)
            psi = rng.uniform(-0.3, 0.4)
            k = int(rng.integers(1, 30))
            n = 10 ** rng.uniform(6, 10)
            d = 10 ** rng.uniform(8, 12)
            n_term = rng.uniform(0.05, 5.0)
            d_term = rng.uniform(0.05, 5.0)
            p = CapacityParams(
                l_inf=rng.uniform(0, 1),
                log_a=math.log(n_term) + alpha * math.log(n) - phi * math.log(k),
                log_b=math.log(d_term) + beta * math.log(d) - psi * math.log(k),
                alpha=alpha, beta=beta, phi=phi, psi=psi,
            )
            dn, dd = marginal_sensitivities(p, k, n, d)
            assert dn == pytest.approx(-alpha * n_term, rel=1e-9)
            assert dd == pytest.approx(-beta * d_term, rel=1e-9)
            h = 1e-3
            fd_n = (predict_capacity_loss(p, k, n * math.exp(h), d)
                    - predict_capacity_loss(p, k, n * math.exp(-h), d)) / (2 * h)
            fd_d = (predict_capacity_loss(p, k, n, d * math.exp(h))
                    - predict_capacity_loss(p, k, n, d * math.exp(-h))) / (2 * h)
            assert fd_n == pytest.approx(dn, rel=1e-6)
            assert fd_d == pytest.approx(dd, rel=1e-6)

    def test_vanishing_at_large_n(self):
        dn, _ = marginal_sensitivities(P, 4, 1e300, 1e10)
        assert abs(dn) < 1e-30


class TestFrontier:
    def test_points_satisfy_constraint(self):
        points = frontier_sweep(r=4.0, w_n=0.5, w_d=0.5, alpha=0.3, beta=0.4,
                                phi=0.11, psi=-0.04, n_points=64)
        assert len(points) == 64
        for p in points:
            residual = isoloss_constraint_residual(4.0, 0.5, 0.5, 0.3, 0.4,
                                                   0.11, -0.04, p.s, p.t)
            assert abs(residual) <= 1e-9
            assert p.c_ratio == pytest.approx(p.s * p.d_tot_ratio, rel=1e-12)

    def test_explicit_s_values(self):
        points = frontier_sweep(r=2.0, w_n=0.5, w_d=0.5, alpha=0.3, beta=0.4,
                                phi=0.1, psi=0.0, s_values=[1.5, 2.0])
        assert [p.s for p in points] == [1.5, 2.0]


class TestObservations:
    def test_uniform_mixtures_extracted(self):
        records = (
            make_record(run_id="u4", weights={"fr": 0.25, "en": 0.25, "de": 0.25, "es": 0.25},
                        tokens={"fr": 25, "en": 25, "de": 25, "es": 25}, total=100),
            make_record(run_id="skewed", weights={"fr": 0.7, "en": 0.3},
                        tokens={"fr": 70, "en": 30}, total=100),
            make_record(run_id="mono", weights={"fr": 1.0}, tokens={"fr": 100}, total=100),
            make_record(run_id="wrong-lang", weights={"en": 1.0}, tokens={"en": 100},
                        total=100, eval_language="en"),
        )
        obs = derive_capacity_observations(RunSet(records), "fr")
        # uniform mixtures only: the 4-language run (k=4, d_t=25) and the
        # monolingual run (k=1, d_t=100)
        assert obs.shape == (2, 4)
        assert sorted(obs[:, 0]) == [1.0, 4.0]
        row4 = obs[obs[:, 0] == 4.0][0]
        assert row4[2] == 25.0

    def test_pooled_includes_all_languages(self):
        records = (
            make_record(run_id="a", weights={"fr": 1.0}, tokens={"fr": 100}, total=100),
            make_record(run_id="b", weights={"en": 1.0}, tokens={"en": 100},
                        total=100, eval_language="en"),
        )
        obs = derive_capacity_observations(RunSet(records))
        assert obs.shape == (2, 4)


class TestPlanQuery:
    def test_compute_optimal_plan(self):
        from atlas_kit.capacity import PlanQuery, plan

        result = plan(P, PlanQuery(r=4.0, sweep_points=32))
        assert len(result.frontier) == 32
        w_n, w_d = compute_optimal_weights(P.alpha, P.beta)
        assert (result.w_n, result.w_d) == (w_n, w_d)
        m = compute_optimal_multipliers(P.phi, P.psi, P.alpha, P.beta, 4.0)
        assert result.multipliers == m

    def test_explicit_baseline_plan(self):
        from atlas_kit.capacity import PlanQuery, plan

        result = plan(P, PlanQuery(r=2.0, baseline=(4.0, 1e9, 1e10)))
        w_n, w_d = baseline_weights(P, 4.0, 1e9, 1e10)
        assert result.w_n == w_n
        for point in result.frontier:
            residual = isoloss_constraint_residual(
                2.0, w_n, w_d, P.alpha, P.beta, P.phi, P.psi, point.s, point.t
            )
            assert abs(residual) <= 1e-9

    def test_query_validation(self):
        from atlas_kit import SchemaError
        from atlas_kit.capacity import PlanQuery

        with pytest.raises(SchemaError):
            PlanQuery(r=0.0)
        with pytest.raises(SchemaError):
            PlanQuery(r=2.0, baseline="whatever")
