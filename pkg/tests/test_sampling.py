import numpy as np
import pytest
import scipy.stats

from remgof import (ActorRegistry, EndoState, EventSequence, SamplingError,
                    TermSpec, UnsupportedError, build_design_row,
                    build_generic_design, build_paired_design, endo_advance,
                    sample_risk_sets)
from remgof.sampling import export_controls


def fixed_dyad_seq(n_events=1000, n_actors=3):
    reg = ActorRegistry([str(i) for i in range(n_actors)])
    times = np.arange(1.0, n_events + 1.0)
    return EventSequence(times, np.zeros(n_events, dtype=int),
                         np.ones(n_events, dtype=int), reg)


def random_seq(rng, n_events=200, n_actors=6):
    times = np.cumsum(rng.exponential(0.3, n_events))
    senders = rng.integers(0, n_actors, n_events)
    receivers = (senders + rng.integers(1, n_actors, n_events)) % n_actors
    reg = ActorRegistry([str(i) for i in range(n_actors)])
    return EventSequence(times, senders, receivers, reg)


class TestSampleRiskSets:
    def test_control_uniform_over_remaining(self):
        # Case is always (0, 1); the 5 other ordered dyads of a 3-actor
        # registry should be drawn equally often: chi-square at alpha=0.01
        # over 1e5 draws.
        seq = fixed_dyad_seq(1000, 3)
        counts = {}
        for seed in range(100):
            for srk in sample_risk_sets(seq, m=2, seed=seed):
                assert srk.controls[0] != srk.case
                counts[srk.controls[0]] = counts.get(srk.controls[0], 0) + 1
        assert set(counts) == {(0, 2), (1, 0), (1, 2), (2, 0), (2, 1)}
        freq = np.array(list(counts.values()))
        assert freq.sum() == 100_000
        chi2 = scipy.stats.chisquare(freq)
        assert chi2.pvalue > 0.01

    def test_full_risk_set_degenerate_pi(self):
        seq = fixed_dyad_seq(10, 3)
        sets = sample_risk_sets(seq, m=6, seed=0)
        for srk in sets:
            assert len(srk.members) == 6
            assert len(set(srk.members)) == 6
            assert srk.pi == 1.0

    def test_seed_reproducibility(self):
        seq = fixed_dyad_seq(50, 4)
        a = sample_risk_sets(seq, m=2, seed=9)
        b = sample_risk_sets(seq, m=2, seed=9)
        assert [s.controls for s in a] == [s.controls for s in b]
        c = sample_risk_sets(seq, m=2, seed=10)
        assert [s.controls for s in a] != [s.controls for s in c]

    def test_pi_value_m2(self):
        seq = fixed_dyad_seq(5, 3)
        sets = sample_risk_sets(seq, m=2, seed=0)
        assert all(s.pi == pytest.approx(1.0 / 5.0) for s in sets)

    def test_risk_set_too_small(self):
        seq = fixed_dyad_seq(5, 2)  # only 2 ordered dyads
        with pytest.raises(SamplingError) as err:
            sample_risk_sets(seq, m=3, seed=0)
        assert err.value.event_index == 0

    def test_stratified_controls_share_stratum(self):
        rng = np.random.default_rng(0)
        seq = random_seq(rng, 100, 6)
        strata = (np.add.outer(np.arange(6), np.arange(6)) % 2).astype(int)
        sets = sample_risk_sets(seq, m=2, seed=4, stratified=True,
                                strata=strata)
        for srk in sets:
            assert strata[srk.controls[0]] == strata[srk.case]
            assert srk.stratum == strata[srk.case]

    def test_single_stratum_bit_identical_to_unstratified(self):
        rng = np.random.default_rng(1)
        seq = random_seq(rng, 150, 5)
        plain = sample_risk_sets(seq, m=2, seed=7)
        one = sample_risk_sets(seq, m=2, seed=7, stratified=True,
                               strata=np.zeros((5, 5), dtype=int))
        assert [s.controls for s in plain] == [s.controls for s in one]

    def test_stratified_requires_strata(self):
        seq = fixed_dyad_seq(5, 3)
        with pytest.raises(Exception):
            sample_risk_sets(seq, m=2, seed=0, stratified=True)


class TestPairedDesign:
    def terms(self):
        return [TermSpec("rec", "fle", source="endo:rec:time"),
                TermSpec("rep", "fle", source="endo:rep:id")]

    def test_identical_covariates_give_zero_row(self):
        seq = fixed_dyad_seq(5, 3)
        sets = sample_risk_sets(seq, m=2, seed=0)
        terms = [TermSpec("c", "fle", source="exo:c")]
        exo = {"c": np.ones((3, 3))}
        paired = build_paired_design(seq, sets, terms, exo=exo)
        assert np.allclose(paired.delta, 0.0)

    def test_single_fle_difference(self):
        seq = fixed_dyad_seq(3, 3)
        sets = sample_risk_sets(seq, m=2, seed=0)
        exo = {"c": np.zeros((3, 3))}
        exo["c"][0, 1] = 1.0  # case dyad carries 1, every control 0
        terms = [TermSpec("c", "fle", source="exo:c")]
        paired = build_paired_design(seq, sets, terms, exo=exo)
        assert np.allclose(paired.delta[:, 0], 1.0)

    def test_m_not_two_unsupported(self):
        seq = fixed_dyad_seq(5, 3)
        sets = sample_risk_sets(seq, m=3, seed=0)
        with pytest.raises(UnsupportedError):
            build_paired_design(seq, sets, self.terms())

    @pytest.mark.parametrize("seed", [0, 1])
    def test_rows_match_independent_recomputation(self, seed):
        # Every row must equal a from-scratch design evaluation against
        # the exact prefix history, for case and control alike.
        rng = np.random.default_rng(seed)
        seq = random_seq(rng, 120, 5)
        sets = sample_risk_sets(seq, m=2, seed=seed)
        terms = self.terms()
        paired = build_paired_design(seq, sets, terms, seed=seed)
        layout = paired.layout
        for k in (0, 3, 50, 119):
            state = EndoState(5)
            for j in range(k):
                endo_advance(state, int(seq.senders[j]),
                             int(seq.receivers[j]), float(seq.times[j]))
            u_k = (k + 1.0) / len(seq)
            h_case = build_design_row(layout, sets[k].case,
                                      float(seq.times[k]), state, u=u_k)
            h_ctrl = build_design_row(layout, sets[k].controls[0],
                                      float(seq.times[k]), state, u=u_k)
            assert np.allclose(paired.delta[k], h_case - h_ctrl, atol=1e-12)

    def test_generic_design_case_first(self):
        rng = np.random.default_rng(3)
        seq = random_seq(rng, 40, 5)
        sets = sample_risk_sets(seq, m=4, seed=3)
        gen = build_generic_design(seq, sets, self.terms())
        assert gen.h.shape == (40, 4, 2)
        paired_sets = sample_risk_sets(seq, m=2, seed=3)
        paired = build_paired_design(seq, paired_sets, self.terms(), seed=3)
        assert np.allclose(gen.h[:, 0, :],
                           paired.delta + _ctrl_rows(seq, paired_sets,
                                                     self.terms()))

    def test_export_controls(self, tmp_path):
        seq = fixed_dyad_seq(4, 3)
        sets = sample_risk_sets(seq, m=2, seed=0)
        path = tmp_path / "controls.csv"
        export_controls(sets, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "event_index,control_sender,control_receiver"
        assert len(lines) == 5


def _ctrl_rows(seq, sets, terms):
    gen = build_generic_design(seq, sets, terms)
    return gen.h[:, 1, :]
