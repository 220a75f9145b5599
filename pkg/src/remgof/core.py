"""Event data model: actors, relational events, risk sets, CSV ingestion.

An event log is a temporally ordered sequence of directed interactions
``(sender, receiver, time)``.  The sequence must satisfy two structural
assumptions before any downstream machinery applies: no event at time 0,
and no two events share a timestamp.  Violations are hard errors here;
:func:`jitter_ties` is the explicit opt-in repair for tied logs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OrderError, ParseError, TieError, ValidationError


@dataclass(frozen=True)
class Actor:
    """An actor label together with its dense integer index."""

    id: str
    index: int


class ActorRegistry:
    """Bijection between opaque actor labels and indices ``0..n-1``.

    Labels are registered in first-appearance order, which keeps indexing
    deterministic for a given input file.
    """

    def __init__(self, labels=()):
        self._labels: list[str] = []
        self._index: dict[str, int] = {}
        for lab in labels:
            self.add(str(lab))

    def add(self, label: str) -> int:
        idx = self._index.get(label)
        if idx is None:
            idx = len(self._labels)
            self._labels.append(label)
            self._index[label] = idx
        return idx

    def index_of(self, label: str) -> int:
        return self._index[label]

    def label_of(self, index: int) -> str:
        return self._labels[index]

    def actor(self, label: str) -> Actor:
        return Actor(label, self._index[label])

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label) -> bool:
        return label in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, ActorRegistry) and self._labels == other._labels


@dataclass(frozen=True)
class RelationalEvent:
    """A single directed interaction ``sender -> receiver`` at ``time``."""

    time: float
    sender: Actor
    receiver: Actor
    stratum: int | None = None


class EventSequence:
    """Immutable, array-backed sequence of relational events.

    Invariants enforced on construction:

    * event times are strictly increasing and finite,
    * the first event time is > 0,
    * no self-loops (sender differs from receiver).

    Times, sender indices and receiver indices are stored as numpy arrays
    (``times``, ``senders``, ``receivers``); ``strata`` is ``None`` or an
    integer array.  Concurrent readers are safe; nothing mutates after
    ``__init__``.
    """

    def __init__(self, times, senders, receivers, actors: ActorRegistry,
                 strata=None):
        times = np.asarray(times, dtype=np.float64)
        senders = np.asarray(senders, dtype=np.int64)
        receivers = np.asarray(receivers, dtype=np.int64)
        if not (len(times) == len(senders) == len(receivers)):
            raise ValidationError("times/senders/receivers length mismatch")
        if strata is not None:
            strata = np.asarray(strata, dtype=np.int64)
            if len(strata) != len(times):
                raise ValidationError("strata length mismatch")
        if len(times) and not np.all(np.isfinite(times)):
            raise ValidationError("event times must be finite")
        if len(times) and times[0] <= 0.0:
            raise ValidationError(
                f"first event time must be > 0, got {times[0]}")
        bad = np.nonzero(np.diff(times) <= 0)[0]
        if bad.size:
            raise TieError(
                "event times are not strictly increasing at rows "
                f"{[int(b) + 1 for b in bad[:10]]}",
                rows=[int(b) + 1 for b in bad])
        loops = np.nonzero(senders == receivers)[0]
        if loops.size:
            raise ValidationError(
                f"self-loop events at rows {[int(i) for i in loops[:10]]}")
        n_act = len(actors)
        for arr in (senders, receivers):
            if len(arr) and (arr.min() < 0 or arr.max() >= n_act):
                raise ValidationError("actor index outside registry")
        self.times = times
        self.times.setflags(write=False)
        self.senders = senders
        self.senders.setflags(write=False)
        self.receivers = receivers
        self.receivers.setflags(write=False)
        self.strata = strata
        if strata is not None:
            self.strata.setflags(write=False)
        self.actors = actors

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n_actors(self) -> int:
        return len(self.actors)

    @property
    def t_end(self) -> float:
        """Time of the last event (the end of the observation window)."""
        return float(self.times[-1]) if len(self) else 0.0

    def event(self, k: int) -> RelationalEvent:
        return RelationalEvent(
            time=float(self.times[k]),
            sender=Actor(self.actors.label_of(int(self.senders[k])),
                         int(self.senders[k])),
            receiver=Actor(self.actors.label_of(int(self.receivers[k])),
                           int(self.receivers[k])),
            stratum=None if self.strata is None else int(self.strata[k]),
        )

    @property
    def events(self):
        """Iterator over :class:`RelationalEvent` views (convenience only)."""
        return (self.event(k) for k in range(len(self)))


@dataclass(frozen=True)
class RiskSetPolicy:
    """Which dyads are at risk of interacting at a given time.

    ``mode="all-ordered-dyads"`` (the default) puts every ordered pair of
    distinct registered actors at risk for the whole window.  With
    ``mode="explicit-onset-exit"``, per-actor ``onset``/``exit`` tables
    (label -> time) restrict presence: an actor is present at ``t`` iff
    ``onset <= t <= exit``; both endpoints default to the full window.
    """

    mode: str = "all-ordered-dyads"
    onset: dict = field(default_factory=dict)
    exit: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("all-ordered-dyads", "explicit-onset-exit"):
            raise ValidationError(f"unknown risk-set mode {self.mode!r}")

    def present_mask(self, actors: ActorRegistry, t: float) -> np.ndarray:
        """Boolean presence indicator per actor index at time ``t``."""
        n = len(actors)
        if self.mode == "all-ordered-dyads":
            return np.ones(n, dtype=bool)
        mask = np.ones(n, dtype=bool)
        for label, onset in self.onset.items():
            if label in actors:
                mask[actors.index_of(label)] &= (onset <= t)
        for label, exit_t in self.exit.items():
            if label in actors:
                mask[actors.index_of(label)] &= (t <= exit_t)
        return mask


def risk_set(seq: EventSequence, t: float, policy: RiskSetPolicy | None = None):
    """All ordered dyads with at-risk indicator 1 at time ``t``.

    Returns a set of ``(sender_index, receiver_index)`` pairs.  Under the
    default policy the size is ``n_actors * (n_actors - 1)`` for any ``t``.
    """
    if policy is None:
        policy = RiskSetPolicy()
    if not (0.0 < t <= seq.t_end):
        raise ValidationError(f"t={t} outside (0, t_end={seq.t_end}]")
    mask = policy.present_mask(seq.actors, t)
    present = np.nonzero(mask)[0]
    return {(int(s), int(r)) for s in present for r in present if s != r}


def _parse_time(token: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"line {line}: cannot parse time {token!r}",
                         line=line) from None
    if not math.isfinite(value):
        raise ParseError(f"line {line}: non-finite time {token!r}", line=line)
    return value


def ingest_events(path, schema=None, *, drop_self_loops=False,
                  drop_duplicates=False, jitter=None) -> EventSequence:
    """Read an event CSV into a validated :class:`EventSequence`.

    The file must carry a header naming at least time, sender and receiver
    columns (default names ``time,sender,receiver``, remappable through
    ``schema``); a stratum column is optional.  Rows must already be in
    strictly increasing time order: duplicated timestamps raise
    :class:`TieError` rather than being repaired silently (see
    :func:`jitter_ties`), and decreasing ones always do.

    ``drop_self_loops`` removes rows with sender == receiver instead of
    failing; ``drop_duplicates`` removes rows identical to their
    predecessor in (time, sender, receiver).  The two filters are applied
    in the order given by the flags' own semantics (duplicates first),
    but both are off by default.  ``jitter`` (an epsilon > 0) repairs tied
    timestamps via :func:`jitter_ties` before validation.
    """
    schema = dict(schema or {})
    time_col = schema.get("time", "time")
    sender_col = schema.get("sender", "sender")
    receiver_col = schema.get("receiver", "receiver")
    stratum_col = schema.get("stratum", "stratum")

    times, send_lab, recv_lab, strat = [], [], [], []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("empty file", line=1)
        for col in (time_col, sender_col, receiver_col):
            if col not in reader.fieldnames:
                raise ParseError(f"missing required column {col!r}", line=1)
        has_stratum = stratum_col in reader.fieldnames
        for row in reader:
            line = reader.line_num
            if row.get(time_col) is None:
                raise ParseError(f"line {line}: short row", line=line)
            times.append(_parse_time(row[time_col], line))
            send_lab.append(row[sender_col])
            recv_lab.append(row[receiver_col])
            if has_stratum:
                try:
                    strat.append(int(row[stratum_col]))
                except (TypeError, ValueError):
                    raise ParseError(
                        f"line {line}: bad stratum {row[stratum_col]!r}",
                        line=line) from None

    if drop_duplicates:
        keep = [0] if times else []
        for i in range(1, len(times)):
            prev = keep[-1]
            if (times[i] == times[prev] and send_lab[i] == send_lab[prev]
                    and recv_lab[i] == recv_lab[prev]):
                continue
            keep.append(i)
        times = [times[i] for i in keep]
        send_lab = [send_lab[i] for i in keep]
        recv_lab = [recv_lab[i] for i in keep]
        if has_stratum:
            strat = [strat[i] for i in keep]
    if drop_self_loops:
        keep = [i for i in range(len(times)) if send_lab[i] != recv_lab[i]]
        times = [times[i] for i in keep]
        send_lab = [send_lab[i] for i in keep]
        recv_lab = [recv_lab[i] for i in keep]
        if has_stratum:
            strat = [strat[i] for i in keep]

    if jitter is not None:
        times = jitter_ties(times, jitter)

    registry = ActorRegistry()
    senders = [registry.add(lab) for lab in send_lab]
    receivers = [registry.add(lab) for lab in recv_lab]
    return EventSequence(times, senders, receivers, registry,
                         strata=strat if has_stratum else None)


def write_events(seq: EventSequence, path) -> None:
    """Emit a sequence as CSV with the canonical column order.

    ``ingest_events(write_events(seq))`` reproduces ``seq`` exactly:
    float times are written with round-trip precision.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["time", "sender", "receiver"]
        if seq.strata is not None:
            header.append("stratum")
        writer.writerow(header)
        for k in range(len(seq)):
            row = [repr(float(seq.times[k])),
                   seq.actors.label_of(int(seq.senders[k])),
                   seq.actors.label_of(int(seq.receivers[k]))]
            if seq.strata is not None:
                row.append(int(seq.strata[k]))
            writer.writerow(row)


def jitter_ties(seq_or_times, epsilon: float):
    """Perturb tied timestamps into strictly increasing order.

    Within a run of ``r`` equal times ``t`` the rows become
    ``t, t+eps, ..., t+(r-1)*eps`` preserving input order.  Deterministic.
    Raising :class:`ValidationError` when ``epsilon`` is not positive,
    not smaller than the minimal positive inter-event gap, or when the
    jittered times fail to be strictly increasing.

    Accepts either a raw (sorted, possibly tied) time array plus parallel
    construction inputs, or an already-valid :class:`EventSequence`
    (returned unchanged apart from times, which are already strict).
    """
    if isinstance(seq_or_times, EventSequence):
        return seq_or_times  # already strictly increasing by construction
    times = np.asarray(seq_or_times, dtype=np.float64)
    if epsilon <= 0:
        raise ValidationError("epsilon must be > 0")
    if np.any(np.diff(times) < 0):
        raise OrderError("times must be non-decreasing before jitter")
    gaps = np.diff(times)
    pos = gaps[gaps > 0]
    if pos.size and epsilon >= pos.min():
        raise ValidationError(
            f"epsilon {epsilon} not smaller than minimal positive gap "
            f"{pos.min()}")
    out = times.copy()
    run = 0
    for i in range(1, len(out)):
        if times[i] == times[i - 1]:
            run += 1
            out[i] = times[i] + run * epsilon
        else:
            run = 0
    if np.any(np.diff(out) <= 0):
        raise ValidationError("epsilon too large: jitter breaks ordering")
    return out
