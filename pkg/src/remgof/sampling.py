"""Nested case-control sampling and paired design construction.

At each event the full risk set is replaced by the event dyad (the case)
plus ``m - 1`` controls drawn uniformly without replacement from the
remaining at-risk dyads, independently across events.  Control draws use
a dedicated RNG stream keyed by ``(seed, event_index)``, so sampling is
reproducible and independent of evaluation order.

The primary inferential path is ``m = 2``: one control per event, and the
model reduces to a no-intercept logistic regression on the covariate
differences ``delta_h = h_case - h_control``.  Building those rows takes
a single forward pass that interleaves design evaluation (against the
history strictly before each event) with the history update, preserving
predictability of every covariate.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from . import basis
from .core import EventSequence, RiskSetPolicy
from .endo import EndoState, endo_advance
from .errors import SamplingError, UnsupportedError, ValidationError


@dataclass(frozen=True)
class SampledRiskSet:
    """Case plus sampled controls for one event."""

    event_index: int
    time: float
    case: tuple
    controls: tuple          # (m-1) dyads
    pi: float                # sampling probability per member
    stratum: int | None = None

    @property
    def members(self) -> tuple:
        return (self.case,) + self.controls


def _enumerate_eligible(n_actors, present, case, strata, case_stratum):
    """Lexicographically ordered eligible dyads excluding the case."""
    out = []
    for s in present:
        for r in present:
            if s == r or (s, r) == case:
                continue
            if strata is not None and strata[s, r] != case_stratum:
                continue
            out.append((int(s), int(r)))
    return out


def sample_risk_sets(seq: EventSequence, m: int = 2,
                     policy: RiskSetPolicy | None = None,
                     seed: int = 0, stratified: bool = False,
                     strata=None) -> list[SampledRiskSet]:
    """Draw the sampled risk set for every event.

    ``strata`` is an (n_actors x n_actors) integer label matrix; with
    ``stratified=True`` controls come from the case's stratum only.  A
    single-stratum matrix reproduces the unstratified draw bit for bit,
    because both paths consume the keyed RNG identically.
    """
    if m < 2:
        raise ValidationError("m must be >= 2")
    if stratified and strata is None:
        raise ValidationError("stratified sampling needs a strata matrix")
    if policy is None:
        policy = RiskSetPolicy()
    n_act = seq.n_actors
    trivial_policy = policy.mode == "all-ordered-dyads"
    strata_arr = np.asarray(strata) if stratified else None

    sets = []
    for k in range(len(seq)):
        t = float(seq.times[k])
        case = (int(seq.senders[k]), int(seq.receivers[k]))
        case_stratum = (int(strata_arr[case]) if strata_arr is not None
                        else (int(seq.strata[k]) if seq.strata is not None
                              else None))
        if trivial_policy and strata_arr is None:
            n_elig = n_act * (n_act - 1) - 1
            eligible = None
        else:
            present = np.nonzero(policy.present_mask(seq.actors, t))[0]
            eligible = _enumerate_eligible(
                n_act, present, case,
                strata_arr, case_stratum)
            n_elig = len(eligible)
        if m - 1 > n_elig:
            raise SamplingError(
                f"event {k}: risk set has {n_elig} non-event dyads, "
                f"need {m - 1}", event_index=k)
        rng = np.random.default_rng((seed, k))
        draws = rng.choice(n_elig, size=m - 1, replace=False)
        controls = []
        if eligible is None:
            case_rank = case[0] * (n_act - 1) + (
                case[1] if case[1] < case[0] else case[1] - 1)
            for j in map(int, np.atleast_1d(draws)):
                if j >= case_rank:
                    j += 1
                s, rem = divmod(j, n_act - 1)
                r = rem if rem < s else rem + 1
                controls.append((s, r))
        else:
            controls = [eligible[int(j)] for j in np.atleast_1d(draws)]
        # Uniform sampling without replacement: every size-m set containing
        # the case is equally likely.
        pi = 1.0 / comb(n_elig, m - 1)
        sets.append(SampledRiskSet(k, t, case, tuple(controls), pi,
                                   stratum=case_stratum))
    return sets


@dataclass
class PairedDesign:
    """Per-event design differences for the m = 2 logistic reduction.

    ``delta[k]`` is ``h_case(t_k) - h_control(t_k)`` in R^P.  Raw source
    values and actor levels for both members are retained so that
    residual processes and auxiliary statistics can be evaluated without
    another pass over the history.
    """

    delta: np.ndarray          # (n, P)
    layout: basis.DesignLayout
    sets: list
    seed: int
    u: np.ndarray              # analysis times k/n, k = 1..n
    times: np.ndarray
    case_values: dict
    ctrl_values: dict
    case_levels: dict
    ctrl_levels: dict

    @property
    def n(self) -> int:
        return self.delta.shape[0]

    @property
    def p(self) -> int:
        return self.delta.shape[1]


def _collect_raw(seq, sets, terms, exo):
    """One forward pass: source values for case and each control."""
    n = len(seq)
    m_minus_1 = len(sets[0].controls) if sets else 1
    state = EndoState(seq.n_actors)
    u = (np.arange(n) + 1.0) / n
    sourced = [s for s in terms if s.effect in ("fle", "tve", "nle")]
    re_terms = [s for s in terms if s.effect == "re"]
    case_values = {s.name: np.zeros(n) for s in sourced}
    ctrl_values = {s.name: np.zeros((n, m_minus_1)) for s in sourced}
    case_levels = {s.name: np.zeros(n, dtype=int) for s in re_terms}
    ctrl_levels = {s.name: np.zeros((n, m_minus_1), dtype=int)
                   for s in re_terms}
    for k in range(n):
        srk = sets[k]
        t = srk.time
        for spec in sourced:
            case_values[spec.name][k] = basis.eval_source(
                spec.source, srk.case, t, state, exo=exo, u=u[k], b=spec.b)
            for j, ctrl in enumerate(srk.controls):
                ctrl_values[spec.name][k, j] = basis.eval_source(
                    spec.source, ctrl, t, state, exo=exo, u=u[k], b=spec.b)
        for spec in re_terms:
            pick = 0 if spec.level == "sender" else 1
            case_levels[spec.name][k] = srk.case[pick]
            for j, ctrl in enumerate(srk.controls):
                ctrl_levels[spec.name][k, j] = ctrl[pick]
        endo_advance(state, int(seq.senders[k]), int(seq.receivers[k]),
                     float(seq.times[k]))
    return u, case_values, ctrl_values, case_levels, ctrl_levels


def _expand(layout, values, levels, u):
    cols = []
    for term in layout.terms:
        v = values.get(term.name)
        lv = levels.get(term.name)
        cols.append(basis.expand_block(term, v, lv, u))
    return np.hstack(cols) if cols else np.zeros((len(u), 0))


def build_paired_design(seq: EventSequence, sets, terms, exo=None,
                        layout=None, seed: int = 0) -> PairedDesign:
    """Assemble the event-minus-control design for every event.

    Only ``m = 2`` risk sets are supported here; larger sets belong to
    the generic likelihood path (:func:`build_generic_design`).
    """
    if not sets:
        raise ValidationError("no sampled risk sets")
    if any(len(s.controls) != 1 for s in sets):
        raise UnsupportedError(
            "paired design requires m=2; use build_generic_design for "
            "general m")
    u, case_values, ctrl_values, case_levels, ctrl_levels = _collect_raw(
        seq, sets, terms, exo)
    if layout is None:
        layout = basis.resolve_layout(terms, case_values, u, seq.n_actors)
    h_case = _expand(layout, case_values, case_levels, u)
    h_ctrl = _expand(layout,
                     {k: v[:, 0] for k, v in ctrl_values.items()},
                     {k: v[:, 0] for k, v in ctrl_levels.items()}, u)
    return PairedDesign(
        delta=h_case - h_ctrl,
        layout=layout,
        sets=sets,
        seed=seed,
        u=u,
        times=seq.times.copy(),
        case_values=case_values,
        ctrl_values={k: v[:, 0] for k, v in ctrl_values.items()},
        case_levels=case_levels,
        ctrl_levels={k: v[:, 0] for k, v in ctrl_levels.items()},
    )


@dataclass
class GenericDesign:
    """Member-level design rows for the generic likelihood (any m).

    ``h[k]`` is an (m x P) matrix with the case in row 0; ``pi[k]`` the
    sampling probabilities aligned with the rows.
    """

    h: np.ndarray            # (n, m, P)
    pi: np.ndarray           # (n, m)
    layout: basis.DesignLayout


def build_generic_design(seq: EventSequence, sets, terms, exo=None,
                         layout=None) -> GenericDesign:
    """Evaluate h for every member of every sampled risk set."""
    if not sets:
        raise ValidationError("no sampled risk sets")
    m = 1 + len(sets[0].controls)
    u, case_values, ctrl_values, case_levels, ctrl_levels = _collect_raw(
        seq, sets, terms, exo)
    if layout is None:
        layout = basis.resolve_layout(terms, case_values, u, seq.n_actors)
    n = len(seq)
    h = np.zeros((n, m, layout.p))
    h[:, 0, :] = _expand(layout, case_values, case_levels, u)
    for j in range(m - 1):
        h[:, j + 1, :] = _expand(
            layout,
            {k: v[:, j] for k, v in ctrl_values.items()},
            {k: v[:, j] for k, v in ctrl_levels.items()}, u)
    pi = np.repeat(np.array([[s.pi] for s in sets]), m, axis=1)
    return GenericDesign(h=h, pi=pi, layout=layout)


def export_controls(sets, path) -> None:
    """Write sampled controls as CSV ``event_index,control_sender,...``."""
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_index", "control_sender", "control_receiver"])
        for srk in sets:
            for s, r in srk.controls:
                writer.writerow([srk.event_index, s, r])
