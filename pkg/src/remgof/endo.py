"""Incremental endogenous network statistics.

Four relational dynamics are supported, each in an identity (0/1) and a
time-decayed form:

* reciprocity  -- an event (r, s) more recent than the last (s, r);
  sending (s, r) afterwards "answers" it and clears the pending state,
* repetition   -- any prior (s, r) event; never clears,
* cyclic closure     -- a two-path (r, k) then (k, s) through a common
  counterpart k,
* transitive closure -- a two-path (s, k) then (k, r).

The time form is ``exp(-b * (t - t_star))`` where ``t_star`` is the time
of the most recent qualifying configuration, and 0 when none exists, so
all values live in [0, 1].  Triadic ordering follows the chain
``last(s,r) < first leg < second leg < t`` with the ``last(s,r)``
constraint applied only when an (s, r) event exists at all.

State updates are incremental (one event at a time); queries look only at
events strictly before the query time, which keeps every statistic a
predictable process.  Triadic queries cost O(min degree) via per-actor
adjacency sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OrderError, ValidationError

DYNAMICS = ("reciprocity", "repetition", "cyclic", "transitive")
FORMS = ("identity", "time")

_ALIASES = {"rec": "reciprocity", "rep": "repetition",
            "cyc": "cyclic", "trs": "transitive"}
_SHORT = {v: k for k, v in _ALIASES.items()}


@dataclass(frozen=True)
class EndoKind:
    """One relational dynamic in one quantification form."""

    dynamic: str
    form: str = "identity"

    def __post_init__(self):
        if self.dynamic not in DYNAMICS:
            raise ValidationError(f"unknown dynamic {self.dynamic!r}")
        if self.form not in FORMS:
            raise ValidationError(f"unknown form {self.form!r}")

    @classmethod
    def parse(cls, text: str) -> "EndoKind":
        """Parse shorthand like ``rec:time`` or ``repetition:id``."""
        parts = text.split(":")
        if len(parts) != 2:
            raise ValidationError(f"bad endo spec {text!r}, want dyn:form")
        dyn = _ALIASES.get(parts[0], parts[0])
        form = {"id": "identity"}.get(parts[1], parts[1])
        return cls(dyn, form)

    @property
    def short(self) -> str:
        return f"{_SHORT[self.dynamic]}:{'id' if self.form == 'identity' else 'time'}"


class EndoState:
    """Rolling history summary sufficient to evaluate every statistic.

    ``last[s, r]`` is the time of the most recent (s, r) event (nan if
    none); ``out_adj[s]`` / ``in_adj[r]`` index which entries exist.
    Single writer via :func:`endo_advance`; reads are side-effect free.
    """

    def __init__(self, n_actors: int, b: float = 1.0):
        if b <= 0:
            raise ValidationError("decay rate b must be > 0")
        self.n_actors = n_actors
        self.b = b
        self.last = np.full((n_actors, n_actors), np.nan)
        self.out_adj = [set() for _ in range(n_actors)]
        self.in_adj = [set() for _ in range(n_actors)]
        self.t_max = -math.inf

    def copy(self) -> "EndoState":
        snap = EndoState.__new__(EndoState)
        snap.n_actors = self.n_actors
        snap.b = self.b
        snap.last = self.last.copy()
        snap.out_adj = [set(s) for s in self.out_adj]
        snap.in_adj = [set(s) for s in self.in_adj]
        snap.t_max = self.t_max
        return snap


def endo_advance(state: EndoState, sender: int, receiver: int,
                 time: float) -> EndoState:
    """Record one event; its time must exceed everything recorded so far."""
    if time <= state.t_max:
        raise OrderError(
            f"event at t={time} not after recorded history (t_max="
            f"{state.t_max})")
    state.last[sender, receiver] = time
    state.out_adj[sender].add(receiver)
    state.in_adj[receiver].add(sender)
    state.t_max = time
    return state


def _t_star(state: EndoState, dynamic: str, s: int, r: int):
    """Time of the most recent qualifying configuration, or None."""
    last = state.last
    t_sr = last[s, r]
    if dynamic == "repetition":
        return None if math.isnan(t_sr) else t_sr
    if dynamic == "reciprocity":
        t_rs = last[r, s]
        if math.isnan(t_rs):
            return None
        if not math.isnan(t_sr) and t_sr >= t_rs:
            return None  # already answered
        return t_rs
    # Triadic: pick legs (first, second) through a common counterpart k.
    if dynamic == "cyclic":
        firsts, seconds = state.out_adj[r], state.in_adj[s]

        def legs(k):
            return last[r, k], last[k, s]
    elif dynamic == "transitive":
        firsts, seconds = state.out_adj[s], state.in_adj[r]

        def legs(k):
            return last[s, k], last[k, r]
    else:
        raise ValidationError(f"unknown dynamic {dynamic!r}")
    if len(seconds) < len(firsts):
        candidates = (k for k in seconds if k in firsts)
    else:
        candidates = (k for k in firsts if k in seconds)
    best = None
    best_k = None
    for k in candidates:
        if k == s or k == r:
            continue
        t1, t2 = legs(k)
        if not t1 < t2:
            continue
        if not math.isnan(t_sr) and not t_sr < t1:
            continue
        if best is None or t2 > best or (t2 == best and k < best_k):
            best, best_k = t2, k
    return best


def endo_value(state: EndoState, kind: EndoKind, dyad, t: float,
               b: float | None = None) -> float:
    """Evaluate one statistic for ``dyad`` at time ``t``.

    The state must reflect exactly the events strictly before ``t``.
    Total function: returns 0 whenever the qualifying configuration is
    absent.
    """
    s, r = dyad
    t_star = _t_star(state, kind.dynamic, s, r)
    if t_star is None:
        return 0.0
    if kind.form == "identity":
        return 1.0
    rate = state.b if b is None else b
    return math.exp(-rate * (t - t_star))


def endo_matrix(seq, kinds, queries, b: float | None = None) -> np.ndarray:
    """Batch-evaluate statistics with one forward pass over ``seq``.

    ``queries`` is a list of ``((s, r), t)`` sorted by non-decreasing
    ``t``; each output row equals the corresponding
    :func:`endo_value` call against the history strictly before ``t``.
    """
    kinds = list(kinds)
    out = np.zeros((len(queries), len(kinds)))
    state = EndoState(seq.n_actors)
    pos = 0
    prev_t = -math.inf
    for i, (dyad, t) in enumerate(queries):
        if t < prev_t:
            raise OrderError(f"query {i} at t={t} before t={prev_t}")
        prev_t = t
        while pos < len(seq) and seq.times[pos] < t:
            endo_advance(state, int(seq.senders[pos]),
                         int(seq.receivers[pos]), float(seq.times[pos]))
            pos += 1
        for j, kind in enumerate(kinds):
            out[i, j] = endo_value(state, kind, dyad, t, b=b)
    return out
