import numpy as np
import pytest
import scipy.stats

from remgof import (DgpError, ValidationError, dgp)
from remgof.dgp import (DgpEffect, DgpSpec, ExperimentGrid, build_dgp,
                        get_scenario, run_experiment, run_replicate,
                        simulate_sequence)


def two_actor_spec(n_events=10_000, baseline=1.0, effects=(), seed=0):
    return DgpSpec(n_actors=2, n_events=n_events, baseline=baseline,
                   effects=tuple(effects), seed=seed)


class TestSimulate:
    def test_determinism(self):
        spec = build_dgp(get_scenario("coverage-nle"), 300, seed=5)
        a = simulate_sequence(spec)
        b = simulate_sequence(spec)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.senders, b.senders)
        assert np.array_equal(a.receivers, b.receivers)

    def test_core_invariants_by_construction(self):
        spec = build_dgp(get_scenario("omnibus-l4"), 500, seed=1)
        seq = simulate_sequence(spec)
        assert np.all(np.diff(seq.times) > 0)
        assert np.all(seq.senders != seq.receivers)
        assert seq.times[0] > 0

    def test_constant_baseline_interarrivals_exponential(self):
        spec = two_actor_spec(n_events=10_000, baseline=1.0)
        seq = simulate_sequence(spec)
        gaps = np.diff(np.concatenate([[0.0], seq.times]))
        # Two dyads at rate 1 each: total rate 2.
        ks = scipy.stats.kstest(gaps, "expon", args=(0.0, 0.5))
        assert ks.pvalue > 0.01

    def test_zero_baseline_rejected(self):
        with pytest.raises(DgpError):
            simulate_sequence(two_actor_spec(baseline=0.0))

    def test_single_actor_rejected(self):
        spec = DgpSpec(n_actors=1, n_events=5, baseline=1.0, effects=())
        with pytest.raises(DgpError):
            simulate_sequence(spec)

    def test_degenerate_re_gives_uniform_senders(self):
        spec = DgpSpec(n_actors=10, n_events=20_000, baseline=0.1,
                       effects=(DgpEffect(kind="sender-re", sigma=0.0),),
                       seed=3)
        seq = simulate_sequence(spec)
        counts = np.bincount(seq.senders, minlength=10)
        chi2 = scipy.stats.chisquare(counts)
        assert chi2.pvalue > 0.01

    def test_sender_re_spread_consistent_with_sigma(self):
        spec = DgpSpec(n_actors=50, n_events=50_000, baseline=0.02,
                       effects=(DgpEffect(kind="sender-re", sigma=1.0),),
                       seed=4)
        seq = simulate_sequence(spec)
        counts = np.bincount(seq.senders, minlength=50).astype(float)
        spread = np.std(np.log(np.maximum(counts, 0.5)))
        assert 0.5 <= spread <= 2.0

    def test_exo_effect_orders_rates(self):
        rng = np.random.default_rng(0)
        x = rng.normal(0, 1, (5, 5))
        spec = DgpSpec(n_actors=5, n_events=20_000, baseline=0.05,
                       effects=(DgpEffect(kind="exo", exo="x", beta=1.0),),
                       seed=5, exo={"x": x})
        seq = simulate_sequence(spec)
        counts = np.zeros((5, 5))
        for s, r in zip(seq.senders, seq.receivers):
            counts[s, r] += 1
        off = ~np.eye(5, dtype=bool)
        corr = scipy.stats.spearmanr(x[off], counts[off]).statistic
        assert corr > 0.9


class TestThinningOracle:
    def simulate_by_thinning(self, spec, seed):
        """Independent rejection sampler for decaying-intensity DGPs.

        With non-negative effect coefficients on decaying covariates the
        total intensity is maximal right after each event, so that value
        is a valid thinning bound until the next accepted point.
        """
        rng = np.random.default_rng(seed)
        n_act = spec.n_actors
        last = np.full((n_act, n_act), np.nan)
        diag = np.eye(n_act, dtype=bool)

        def rates(t):
            log_rate = np.full((n_act, n_act), np.log(spec.baseline))
            for eff in spec.effects:
                if eff.dynamic == "reciprocity":
                    lt = last.T
                    qual = ~np.isnan(lt) & (np.isnan(last) | (last < lt))
                    v = np.where(qual,
                                 np.exp(-eff.decay
                                        * (t - np.where(qual, lt, t))), 0.0)
                else:
                    ok = ~np.isnan(last)
                    v = np.where(ok,
                                 np.exp(-eff.decay
                                        * (t - np.where(ok, last, t))), 0.0)
                log_rate += eff.beta * v ** eff.power
            out = np.exp(log_rate)
            out[diag] = 0.0
            return out

        times, senders, receivers = [], [], []
        t = 0.0
        while len(times) < spec.n_events:
            bound = float(rates(t).sum())
            cand = t + rng.exponential(1.0 / bound)
            lam = rates(cand)
            total = float(lam.sum())
            if rng.uniform() <= total / bound:
                cum = np.cumsum(lam.ravel())
                pick = int(np.searchsorted(cum, rng.uniform(0.0, total),
                                           side="right"))
                s, r = divmod(min(pick, n_act * n_act - 1), n_act)
                times.append(cand)
                senders.append(s)
                receivers.append(r)
                last[s, r] = cand
            t = cand
        return np.array(times), np.array(senders), np.array(receivers)

    def test_dyad_choice_frequencies_match(self):
        effects = (DgpEffect(kind="endo", dynamic="reciprocity",
                             beta=1.5, power=1.0, decay=1.0),)
        spec = two_actor_spec(n_events=10_000, baseline=0.8,
                              effects=effects, seed=11)
        seq = simulate_sequence(spec)
        t_times, t_send, _ = self.simulate_by_thinning(spec, seed=77)

        # The partial likelihood only sees which dyad interacts given an
        # event, so the cross-check bounds dyad-choice behaviour: marginal
        # frequencies (total variation) and the reciprocation probability
        # (next event answers the previous one).  The waiting-time
        # marginal is deliberately not compared: freezing rates over the
        # wait distorts the clock, which cancels from the likelihood.
        f_comp = np.bincount(seq.senders, minlength=2) / len(seq)
        f_thin = np.bincount(t_send, minlength=2) / len(t_send)
        assert 0.5 * np.abs(f_comp - f_thin).sum() < 0.02

        def answer_rate(send):
            return np.mean(send[1:] != send[:-1])
        assert answer_rate(seq.senders) == pytest.approx(
            answer_rate(t_send), abs=0.02)
        del t_times


class TestScenarios:
    def test_unknown_scenario(self):
        with pytest.raises(ValidationError):
            get_scenario("nope")

    def test_registry_variants_resolve(self):
        for name, sc in dgp.SCENARIOS.items():
            assert sc.variants, name
            for terms in sc.variants.values():
                assert terms

    def test_run_replicate_unknown_variant(self):
        with pytest.raises(ValidationError):
            run_replicate("fle", "bogus", 100, seed=0)

    def test_run_replicate_returns_p(self):
        out = run_replicate("fle", "cs", 300, seed=12, B=200)
        assert 0.0 <= out["p_value"] <= 1.0
        assert "x" in out["per_term"]


class TestExperimentHarness:
    def test_grid_validation(self):
        with pytest.raises(ValidationError):
            ExperimentGrid(scenario="fle", replicates=0)
        with pytest.raises(ValidationError):
            run_experiment(ExperimentGrid(scenario="nope"), "/tmp/x")

    def test_run_and_resume(self, tmp_path):
        grid = ExperimentGrid(scenario="fle", variant="cs", sizes=(200,),
                              replicates=4, B=200, seed=3)
        report = run_experiment(grid, tmp_path)
        assert report["scenario_version"] == dgp.SCENARIO_VERSION
        cell = report["cells"][0]
        assert cell["replicates"] == 4
        assert 0.0 <= cell["rejection_rate"] <= 1.0
        assert (tmp_path / "summary.json").exists()
        pv = tmp_path / cell["pvalues_file"]
        first = pv.read_text()
        # Second run loads the completed cell without recomputing.
        report2 = run_experiment(grid, tmp_path)
        assert pv.read_text() == first
        assert report2["cells"][0]["rejection_rate"] == \
            cell["rejection_rate"]

    def test_partial_cell_resumes(self, tmp_path):
        grid = ExperimentGrid(scenario="fle", variant="cs", sizes=(150,),
                              replicates=2, B=200, seed=4)
        run_experiment(grid, tmp_path)
        pv = tmp_path / f"fle_cs_150_pvalues.csv"
        lines = pv.read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2
        grid.replicates = 4
        report = run_experiment(grid, tmp_path)
        lines = pv.read_text().strip().splitlines()
        assert len(lines) == 5
        assert report["cells"][0]["replicates"] == 4
