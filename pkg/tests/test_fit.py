import math

import numpy as np
import pytest

from remgof import (ConvergenceError, TermSpec, ValidationError, dgp,
                    fit_model, fit_pmle, loglik_generic, loglik_logistic,
                    observed_information, sample_risk_sets,
                    build_paired_design, select_lambda)
from remgof.basis import PenaltyBlock
from remgof.fit import DEFAULT_LAMBDA_GRID, edf_profile, logistic_parts

from oracles import finite_diff_gradient, finite_diff_hessian


def synthetic_paired(n=80, p=3, seed=0, scale=1.0):
    """A PairedDesign stand-in built from a tiny real pipeline."""
    rng = np.random.default_rng(seed)
    spec = dgp.build_dgp(dgp.get_scenario("fle"), n, seed)
    seq = dgp.simulate_sequence(spec)
    sets = sample_risk_sets(seq, m=2, seed=seed)
    terms = [TermSpec("x", "fle", source="exo:x")]
    paired = build_paired_design(seq, sets, terms, exo=spec.exo, seed=seed)
    return paired


class TestLoglik:
    def test_gamma_zero_is_n_log2(self):
        delta = np.random.default_rng(0).normal(size=(50, 3))
        assert loglik_logistic(np.zeros(3), delta) == pytest.approx(
            -50 * math.log(2.0), rel=1e-12)

    def test_degenerate_design_any_gamma(self):
        delta = np.zeros((20, 2))
        for gamma in (np.zeros(2), np.array([3.0, -1.0])):
            assert loglik_logistic(gamma, delta) == pytest.approx(
                -20 * math.log(2.0))

    def test_hand_single_event(self):
        val = loglik_logistic(np.array([1.0]), np.array([[1.0]]))
        assert val == pytest.approx(1.0 - math.log(1.0 + math.e), rel=1e-12)
        assert round(val, 4) == -0.3133

    def test_generic_gamma_zero_m5(self):
        rng = np.random.default_rng(1)
        h = rng.normal(size=(30, 5, 2)) * 0.0
        pi = np.full((30, 5), 0.2)
        assert loglik_generic(np.zeros(2), h, pi) == pytest.approx(
            -30 * math.log(5.0))

    def test_generic_overflow_guard(self):
        h = np.full((2, 2, 1), np.inf)
        with pytest.raises(OverflowError):
            loglik_generic(np.array([1.0]), h, np.full((2, 2), 0.5))

    def test_extreme_eta_stable(self):
        delta = np.array([[500.0], [-500.0]])
        val = loglik_logistic(np.array([1.0]), delta)
        assert np.isfinite(val)

    @pytest.mark.parametrize("seed", range(5))
    def test_reduction_identity(self, seed):
        # Generic likelihood with m=2 equals the logistic form exactly.
        rng = np.random.default_rng(seed)
        n, p = 40, 4
        h_ctrl = rng.normal(size=(n, p))
        delta = rng.normal(size=(n, p))
        h = np.stack([h_ctrl + delta, h_ctrl], axis=1)
        pi = np.full((n, 2), 1.0 / 7.0)
        gamma = rng.normal(size=p)
        assert abs(loglik_generic(gamma, h, pi)
                   - loglik_logistic(gamma, delta)) < 1e-10


class TestDerivatives:
    @pytest.mark.parametrize("seed", range(4))
    def test_gradient_and_hessian_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        n, p = 60, 4
        delta = rng.normal(size=(n, p))
        gamma = rng.normal(size=p) * 0.5

        def f(g):
            return loglik_logistic(g, delta)

        ll, grad, info = logistic_parts(gamma, delta)
        fd_grad = finite_diff_gradient(f, gamma)
        fd_hess = finite_diff_hessian(f, gamma)
        assert np.allclose(grad, fd_grad, rtol=1e-5, atol=1e-7)
        assert np.allclose(-info, fd_hess, rtol=1e-4, atol=1e-5)

    def test_observed_information_hand_case(self):
        # All rows equal to 1 at gamma=0: information is n/4.
        delta = np.ones((40, 1))
        info = observed_information(np.zeros(1), delta)
        assert info[0, 0] == pytest.approx(10.0)

    def test_observed_information_zero_design(self):
        info = observed_information(np.array([1.0, 2.0]), np.zeros((10, 2)))
        assert np.allclose(info, 0.0)


class TestNewton:
    def test_score_zero_at_solution(self):
        paired = synthetic_paired(n=400, seed=2)
        res = fit_pmle(paired)
        _, grad, _ = logistic_parts(res.gamma_hat, paired.delta)
        assert np.max(np.abs(grad - res.penalty_gradient_at_solution)) < 1e-8
        assert res.converged

    def test_objective_monotone(self):
        paired = synthetic_paired(n=300, seed=3)
        res = fit_pmle(paired)
        objs = [t["objective"] for t in res.trace]
        assert all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))

    def test_all_zero_covariate_flagged_degenerate(self):
        paired = synthetic_paired(n=100, seed=4)
        paired.delta = np.hstack([paired.delta, np.zeros((paired.n, 1))])
        from remgof.basis import DesignLayout, ResolvedTerm
        extra = ResolvedTerm(TermSpec("z", "fle", source="exo:z"),
                             paired.layout.p, 1)
        paired.layout = DesignLayout(paired.layout.terms + (extra,),
                                     paired.layout.n_actors)
        res = fit_pmle(paired)
        assert res.gamma_hat[-1] == 0.0
        assert list(res.degenerate_coords) == [paired.layout.p - 1]

    def test_nonconvergence_raises_with_trace(self):
        paired = synthetic_paired(n=300, seed=5)
        with pytest.raises(ConvergenceError) as err:
            fit_pmle(paired, max_iter=1)
        assert len(err.value.trace) >= 1

    def test_observed_information_psd(self):
        paired = synthetic_paired(n=200, seed=6)
        res = fit_pmle(paired)
        eigs = np.linalg.eigvalsh(res.observed_information)
        assert eigs.min() >= -1e-8
        assert np.allclose(res.observed_information,
                           res.observed_information.T)

    def test_missing_lambda_rejected(self):
        paired = synthetic_paired(n=100, seed=7)
        blocks = [PenaltyBlock("ghost", np.array([0]), np.eye(1))]
        with pytest.raises(ValidationError):
            fit_pmle(paired, blocks=blocks, lambdas={})


class TestEdfAic:
    def test_unpenalized_edf_is_p(self):
        paired = synthetic_paired(n=200, seed=8)
        res = fit_pmle(paired)
        assert res.edf["total"] == pytest.approx(paired.p)
        assert res.aic == pytest.approx(-2 * res.log_likelihood
                                        + 2 * paired.p)

    def test_heavy_penalty_shrinks_edf(self):
        rng = np.random.default_rng(9)
        delta = rng.normal(size=(150, 4))
        info = observed_information(np.zeros(4), delta)
        light = edf_profile(info, [PenaltyBlock("b", np.arange(4), np.eye(4),
                                                lam=1e-6)],
                            {"b": np.arange(4)})
        heavy = edf_profile(info, [PenaltyBlock("b", np.arange(4), np.eye(4),
                                                lam=1e6)],
                            {"b": np.arange(4)})
        assert light["total"] == pytest.approx(4.0, abs=1e-3)
        assert heavy["total"] < 0.05


class TestLambdaSelection:
    def test_no_penalized_blocks(self):
        paired = synthetic_paired(n=100, seed=10)
        lambdas, gamma, blocks = select_lambda(paired, [])
        assert lambdas == {} and blocks == []

    def test_irrelevant_smooth_shrinks_to_max_lambda(self):
        # True effect of the smoothed covariate is zero, so GCV should
        # push the penalty to the top of the grid in most replicates.
        hits = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            spec = dgp.build_dgp(dgp.get_scenario("fle"), 400, seed)
            spec.exo["noise"] = rng.uniform(0.0, 1.0,
                                            (spec.n_actors, spec.n_actors))
            seq = dgp.simulate_sequence(spec)
            terms = [TermSpec("x", "fle", source="exo:x"),
                     TermSpec("f", "nle", source="exo:noise", q=6)]
            res, _ = fit_model(seq, terms, seed=seed, exo=spec.exo)
            if res.lambda_hat["f"] >= DEFAULT_LAMBDA_GRID[-2]:
                hits += 1
        assert hits >= 9

    def test_re_variance_recovered_within_factor_two(self):
        # True sender-intercept sd is 1; the ridge correspondence should
        # land within a factor of two in nearly every replicate.
        hits = 0
        for seed in range(5):
            spec = dgp.build_dgp(dgp.get_scenario("coverage-re"), 50,
                                 7100 + seed)
            spec.n_events = 10_000
            seq = dgp.simulate_sequence(spec)
            terms = [TermSpec("act", "re", level="sender")]
            res, _ = fit_model(seq, terms, seed=seed)
            sigma = res.re_sigma()["act"]
            if 0.5 <= sigma <= 2.0:
                hits += 1
        assert hits >= 4

    def test_fit_with_pinned_lambdas_skips_selection(self):
        paired = synthetic_paired(n=150, seed=11)
        res = fit_pmle(paired, lambdas={})
        assert res.lambda_hat == {}


class TestConsistency:
    def test_fle_estimates_near_truth(self):
        # True coefficient 1.0; estimates should sit within 3 standard
        # errors in nearly every replicate.
        inside = 0
        reps = 20
        for seed in range(reps):
            spec = dgp.build_dgp(dgp.get_scenario("fle"), 2000, 300 + seed)
            seq = dgp.simulate_sequence(spec)
            terms = [TermSpec("x", "fle", source="exo:x")]
            res, _ = fit_model(seq, terms, seed=seed, exo=spec.exo)
            se = 1.0 / math.sqrt(res.observed_information[0, 0])
            if abs(res.gamma_hat[0] - 1.0) <= 3.0 * se:
                inside += 1
        assert inside >= reps - 1

    def test_stratified_single_stratum_identical_fit(self):
        spec = dgp.build_dgp(dgp.get_scenario("fle"), 300, 17)
        seq = dgp.simulate_sequence(spec)
        terms = [TermSpec("x", "fle", source="exo:x")]
        plain, _ = fit_model(seq, terms, seed=5, exo=spec.exo)
        strat, _ = fit_model(seq, terms, seed=5, exo=spec.exo,
                             stratified=True,
                             strata=np.zeros((seq.n_actors, seq.n_actors),
                                             dtype=int))
        assert np.array_equal(plain.gamma_hat, strat.gamma_hat)
