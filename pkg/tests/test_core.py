import numpy as np
import pytest
from hypothesis import given, strategies as st

from remgof import (ActorRegistry, EventSequence, ParseError, RiskSetPolicy,
                    TieError, ValidationError, ingest_events, jitter_ties,
                    risk_set, write_events)


def write_csv(path, rows, header="time,sender,receiver"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


@pytest.fixture
def toy_csv(tmp_path):
    return write_csv(tmp_path / "events.csv",
                     ["1.0,a,b", "2.0,b,c", "3.0,c,a"])


def test_ingest_minimal(toy_csv):
    seq = ingest_events(toy_csv)
    assert len(seq) == 3
    assert seq.n_actors == 3
    assert seq.t_end == 3.0
    assert seq.actors.labels == ("a", "b", "c")


def test_ingest_duplicate_timestamp_is_tie_error(tmp_path):
    path = write_csv(tmp_path / "tied.csv", ["1.0,a,b", "2.0,b,c", "2.0,c,a"])
    with pytest.raises(TieError) as err:
        ingest_events(path)
    assert err.value.rows == (2,)


def test_ingest_with_jitter_repairs_ties(tmp_path):
    path = write_csv(tmp_path / "tied.csv", ["1.0,a,b", "2.0,b,c", "2.0,c,a"])
    seq = ingest_events(path, jitter=0.001)
    assert list(seq.times) == [1.0, 2.0, 2.001]


def test_ingest_self_loop_rejected(tmp_path):
    path = write_csv(tmp_path / "loop.csv", ["1.0,a,a", "2.0,a,b"])
    with pytest.raises(ValidationError):
        ingest_events(path)
    seq = ingest_events(path, drop_self_loops=True)
    assert len(seq) == 1


def test_ingest_duplicate_rows_flag(tmp_path):
    path = write_csv(tmp_path / "dup.csv", ["1.0,a,b", "1.0,a,b", "2.0,b,a"])
    seq = ingest_events(path, drop_duplicates=True)
    assert len(seq) == 2


def test_ingest_parse_error_carries_line(tmp_path):
    path = write_csv(tmp_path / "bad.csv", ["1.0,a,b", "oops,b,c"])
    with pytest.raises(ParseError) as err:
        ingest_events(path)
    assert err.value.line == 3  # header is line 1


def test_ingest_missing_column(tmp_path):
    path = (tmp_path / "cols.csv")
    path.write_text("when,sender,receiver\n1.0,a,b\n")
    with pytest.raises(ParseError):
        ingest_events(path)
    seq = ingest_events(path, schema={"time": "when"})
    assert len(seq) == 1


def test_ingest_stratum_column(tmp_path):
    path = write_csv(tmp_path / "strat.csv", ["1.0,a,b,0", "2.0,b,a,1"],
                     header="time,sender,receiver,stratum")
    seq = ingest_events(path)
    assert list(seq.strata) == [0, 1]


def test_first_event_at_zero_rejected():
    reg = ActorRegistry(["a", "b"])
    with pytest.raises(ValidationError):
        EventSequence([0.0, 1.0], [0, 1], [1, 0], reg)


def test_roundtrip_is_exact(tmp_path, toy_csv):
    seq = ingest_events(toy_csv)
    out = tmp_path / "out.csv"
    write_events(seq, out)
    back = ingest_events(out)
    assert np.array_equal(back.times, seq.times)
    assert np.array_equal(back.senders, seq.senders)
    assert np.array_equal(back.receivers, seq.receivers)
    assert back.actors == seq.actors
    # Re-emission is byte-stable.
    out2 = tmp_path / "out2.csv"
    write_events(back, out2)
    assert out.read_bytes() == out2.read_bytes()


def test_roundtrip_awkward_floats(tmp_path):
    times = [0.1, 0.2, 0.30000000000000004, 1e-3 + 1.0]
    reg = ActorRegistry(["a", "b"])
    seq = EventSequence(sorted(times), [0, 1, 0, 1], [1, 0, 1, 0], reg)
    out = tmp_path / "float.csv"
    write_events(seq, out)
    assert np.array_equal(ingest_events(out).times, seq.times)


class TestJitter:
    def test_spec_example(self):
        assert list(jitter_ties([1.0, 2.0, 2.0, 3.0], 0.001)) == \
            [1.0, 2.0, 2.001, 3.0]

    def test_identity_without_ties(self):
        times = [1.0, 2.0, 3.5]
        assert list(jitter_ties(times, 0.1)) == times

    def test_triple_tie(self):
        out = jitter_ties([1.0, 1.0, 1.0], 0.1)
        assert np.allclose(out, [1.0, 1.1, 1.2])

    def test_epsilon_too_large(self):
        with pytest.raises(ValidationError):
            jitter_ties([1.0, 2.0, 2.0, 2.05], 0.1)

    def test_epsilon_nonpositive(self):
        with pytest.raises(ValidationError):
            jitter_ties([1.0, 1.0], 0.0)

    @given(st.lists(st.integers(min_value=1, max_value=50), min_size=1,
                    max_size=30))
    def test_output_strictly_increasing(self, raw):
        times = np.sort(np.asarray(raw, dtype=float))
        out = jitter_ties(times, 1e-6)
        assert np.all(np.diff(out) > 0)
        # Original values are only ever nudged upward, never reordered.
        assert np.all(out >= times)


class TestRiskSet:
    def make_seq(self, n_actors, n_events=4):
        reg = ActorRegistry([f"a{i}" for i in range(n_actors)])
        times = np.arange(1.0, n_events + 1.0)
        senders = [k % n_actors for k in range(n_events)]
        receivers = [(k + 1) % n_actors for k in range(n_events)]
        return EventSequence(times, senders, receivers, reg)

    def test_three_actors(self):
        seq = self.make_seq(3)
        assert len(risk_set(seq, 2.0)) == 6

    def test_159_actors(self):
        seq = self.make_seq(159)
        assert len(risk_set(seq, 1.5)) == 25122

    def test_explicit_exit(self):
        seq = self.make_seq(3)
        policy = RiskSetPolicy(mode="explicit-onset-exit",
                               exit={"a2": 5.0})
        full = risk_set(seq, 4.0, policy)
        assert len(full) == 6  # t <= exit keeps the actor
        seq2 = self.make_seq(3, n_events=8)
        late = risk_set(seq2, 6.0, policy)
        assert len(late) == 2
        assert all(2 not in dyad for dyad in late)

    def test_exits_never_add_dyads(self):
        seq = self.make_seq(4, n_events=6)
        base = RiskSetPolicy()
        policy = RiskSetPolicy(mode="explicit-onset-exit",
                               exit={"a0": 3.0, "a1": 4.5})
        for t in (1.0, 2.5, 3.5, 5.0, 6.0):
            assert risk_set(seq, t, policy) <= risk_set(seq, t, base)

    def test_t_outside_window(self):
        seq = self.make_seq(3)
        with pytest.raises(ValidationError):
            risk_set(seq, 0.0)
        with pytest.raises(ValidationError):
            risk_set(seq, seq.t_end + 1.0)


def test_ingest_corpus_scale(tmp_path):
    # Large-log smoke at a realistic corpus size: 57,791 rows over 159
    # distinct actor labels.
    rng = np.random.default_rng(0)
    n, n_act = 57_791, 159
    times = np.cumsum(rng.exponential(0.01, n))
    senders = rng.integers(0, n_act, n)
    receivers = (senders + rng.integers(1, n_act, n)) % n_act
    path = tmp_path / "corpus.csv"
    with open(path, "w") as fh:
        fh.write("time,sender,receiver\n")
        for t, s, r in zip(times, senders, receivers):
            fh.write(f"{float(t)!r},emp{s},emp{r}\n")
    seq = ingest_events(path)
    assert len(seq) == 57_791
    assert seq.n_actors == 159


def test_event_view(toy_csv):
    seq = ingest_events(toy_csv)
    ev = seq.event(1)
    assert ev.time == 2.0
    assert ev.sender.id == "b"
    assert ev.receiver.index == 2
    assert [e.sender.id for e in seq.events] == ["a", "b", "c"]
