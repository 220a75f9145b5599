"""Design-row assembly: spline bases, penalties, term layout.

A model is a list of :class:`TermSpec`, each binding a covariate source to
one of four effect structures:

* ``fle`` -- fixed linear effect, one column,
* ``tve`` -- time-varying effect, ``q`` radial-basis columns in analysis
  time multiplied by the covariate,
* ``nle`` -- non-linear effect, radial-basis columns in the covariate
  value, reduced to ``q - 1`` columns by the zero-mean identifiability
  constraint,
* ``re``  -- random effect, one column per actor level (optionally loaded
  by a covariate such as analysis time), ridge-penalized.

The radial basis is ``psi(r) = r^2 log r`` with ``psi(0) = 0``.  Smooth
terms carry a curvature penalty (Gram matrix of second derivatives on a
quadrature grid, so straight lines are free); random effects carry the
identity penalty, whose tuning parameter maps to a Gaussian standard
deviation via ``sigma = (2 lambda)**-0.5``.

Covariate sources are strings: ``endo:rec:time`` (an endogenous network
statistic), ``exo:name`` (a per-dyad table), or ``time`` (analysis time
``u = k/n``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .endo import EndoKind, endo_value
from .errors import LevelError, ValidationError

EFFECTS = ("fle", "tve", "nle", "re")


def thin_plate_basis(t, controls) -> np.ndarray:
    """Radial basis ``psi(|t - c_l|)`` with ``psi(r) = r^2 log r``.

    ``t`` may be a scalar (returns a length-q vector) or an array
    (returns ``len(t) x q``).  ``psi(0) = 0`` by continuity.
    """
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 1 or len(np.unique(controls)) != len(controls):
        raise ValidationError("control points must be 1-d and distinct")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    r = np.abs(t_arr[:, None] - controls[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0.0, r * r * np.log(np.where(r > 0.0, r, 1.0)), 0.0)
    return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


def nle_basis(v, knots) -> np.ndarray:
    """Radial basis in the covariate argument (pre-centering)."""
    return thin_plate_basis(v, knots)


def quantile_knots(values, q: int) -> np.ndarray:
    """``q`` distinct knots at empirical quantiles of ``values``.

    Quantiles are taken over the distinct observed values so that point
    masses (e.g. a zero atom in a decayed covariate) do not collapse the
    knot sequence.  Fewer than ``q`` knots come back when the covariate
    has fewer distinct values; callers must use the actual count.
    """
    values = np.unique(np.asarray(values, dtype=float))
    if values.size == 0:
        raise ValidationError("cannot place knots on empty sample")
    probs = np.linspace(0.0, 1.0, q)
    return np.unique(np.quantile(values, probs))


def curvature_penalty(knots, lo: float, hi: float, n_grid: int = 512) -> np.ndarray:
    """Gram matrix of basis second derivatives over ``[lo, hi]``.

    ``d2/dx2 psi(|x - c|) = 2 log|x - c| + 3``; the integral of products
    is taken by the midpoint rule (midpoints dodge the log singularity at
    the knots).  PSD by construction, zero on coefficient vectors whose
    fitted function is affine.  Normalized to ``trace = q`` so tuning
    parameters are comparable across terms.
    """
    knots = np.asarray(knots, dtype=float)
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_grid + 1)
    x = 0.5 * (edges[:-1] + edges[1:])
    w = (hi - lo) / n_grid
    r = np.abs(x[None, :] - knots[:, None])
    d2 = 2.0 * np.log(np.maximum(r, 1e-12)) + 3.0
    s = (d2 * w) @ d2.T
    s = 0.5 * (s + s.T)
    tr = np.trace(s)
    if tr > 0:
        s *= len(knots) / tr
    return s


def centering_transform(case_basis: np.ndarray) -> np.ndarray:
    """Null-space transform enforcing a zero event-weighted column mean.

    Given the raw basis evaluated on the n case rows, returns ``Z`` of
    shape ``(q, q-1)`` such that the columns of ``X @ Z`` sum to zero
    over events.  This is the identifiability constraint that absorbs
    the constant into the baseline; it drops exactly one dimension.
    """
    colsum = case_basis.sum(axis=0, keepdims=True)
    norm = np.linalg.norm(colsum)
    if norm == 0.0:
        # Basis already centered; drop the last coordinate for dimension
        # bookkeeping consistency.
        q = case_basis.shape[1]
        return np.eye(q)[:, : q - 1]
    z = scipy.linalg.null_space(colsum / norm)
    return z


@dataclass(frozen=True)
class TermSpec:
    """Declarative description of one model term."""

    name: str
    effect: str
    source: str = ""
    q: int = 10
    b: float | None = None       # decay override for endo sources
    level: str = "sender"        # re only: which actor the level tracks
    covariate: str | None = None  # re only: optional loading ('time')

    def __post_init__(self):
        if self.effect not in EFFECTS:
            raise ValidationError(f"unknown effect {self.effect!r}")
        if self.effect in ("fle", "tve", "nle") and not self.source:
            raise ValidationError(f"term {self.name!r} needs a source")
        if self.effect in ("tve", "nle") and self.q < 3:
            raise ValidationError("basis dimension q must be >= 3")
        if self.effect == "re" and self.level not in ("sender", "receiver"):
            raise ValidationError("re level must be sender or receiver")


def eval_source(source: str, dyad, t: float, state, exo=None, u=None,
                b: float | None = None) -> float:
    """Evaluate one covariate source for one dyad at one time."""
    if source == "time":
        if u is None:
            raise ValidationError("source 'time' needs the analysis time u")
        return float(u)
    if source.startswith("endo:"):
        kind = EndoKind.parse(source[5:])
        return endo_value(state, kind, dyad, t, b=b)
    if source.startswith("exo:"):
        name = source[4:]
        if exo is None or name not in exo:
            raise ValidationError(f"exogenous table {name!r} not provided")
        return float(np.asarray(exo[name])[dyad[0], dyad[1]])
    raise ValidationError(f"unknown covariate source {source!r}")


@dataclass(frozen=True)
class ResolvedTerm:
    """A term bound to concrete columns, knots and transforms."""

    spec: TermSpec
    start: int
    width: int            # number of coefficient columns
    knots: np.ndarray | None = None
    transform: np.ndarray | None = None  # nle centering (q_raw x width)
    n_levels: int = 0

    @property
    def name(self):
        return self.spec.name

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.width)

    @property
    def q_raw(self) -> int:
        """Basis dimension before the identifiability constraint."""
        return len(self.knots) if self.knots is not None else self.width


@dataclass(frozen=True)
class PenaltyBlock:
    """Quadratic penalty ``lam * gamma_i' S gamma_i`` on an index set."""

    name: str
    indices: np.ndarray
    matrix: np.ndarray
    lam: float = 0.0

    def with_lambda(self, lam: float) -> "PenaltyBlock":
        return replace(self, lam=float(lam))


@dataclass(frozen=True)
class DesignLayout:
    """Resolved column layout for a term list; rows live in R^P."""

    terms: tuple
    n_actors: int
    p: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "p", sum(t.width for t in self.terms))

    def term(self, name: str) -> ResolvedTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise ValidationError(f"no term named {name!r}")

    def index_set(self, name: str) -> np.ndarray:
        return self.term(name).indices

    def penalty_blocks(self) -> list[PenaltyBlock]:
        """One block per penalized term (smooths and random effects)."""
        blocks = []
        for t in self.terms:
            if t.spec.effect == "fle":
                continue
            if t.spec.effect == "re":
                s = np.eye(t.width)
            else:
                lo = float(t.knots.min())
                hi = float(t.knots.max())
                s_raw = curvature_penalty(t.knots, lo, hi)
                if t.transform is not None:
                    s = t.transform.T @ s_raw @ t.transform
                else:
                    s = s_raw
                s = 0.5 * (s + s.T)
            blocks.append(PenaltyBlock(t.name, t.indices, s))
        return blocks


def resolve_layout(terms, case_values: dict, u: np.ndarray,
                   n_actors: int) -> DesignLayout:
    """Bind term specs to columns using observed case covariates.

    ``case_values[name]`` holds the source values on the n event (case)
    rows, which drive quantile knot placement and, for nle terms, the
    zero-mean centering transform.  TVE knots sit at quantiles of the
    analysis times ``u``.
    """
    resolved = []
    start = 0
    for spec in terms:
        if spec.effect == "fle":
            rt = ResolvedTerm(spec, start, 1)
        elif spec.effect == "tve":
            knots = quantile_knots(u, spec.q)
            rt = ResolvedTerm(spec, start, len(knots), knots=knots)
        elif spec.effect == "nle":
            vals = np.asarray(case_values[spec.name], dtype=float)
            knots = quantile_knots(vals, spec.q)
            raw = nle_basis(vals, knots)
            z = centering_transform(raw)
            rt = ResolvedTerm(spec, start, z.shape[1], knots=knots,
                              transform=z)
        elif spec.effect == "re":
            cov = spec.covariate
            if cov not in (None, "time"):
                raise ValidationError(
                    f"re covariate must be None or 'time', got {cov!r}")
            rt = ResolvedTerm(spec, start, n_actors, n_levels=n_actors)
        resolved.append(rt)
        start += rt.width
    return DesignLayout(tuple(resolved), n_actors)


def expand_block(term: ResolvedTerm, values: np.ndarray | None,
                 levels: np.ndarray | None, u: np.ndarray) -> np.ndarray:
    """Expand one term's raw values into its design columns (n x width)."""
    spec = term.spec
    n = len(u)
    if spec.effect == "fle":
        return np.asarray(values, dtype=float).reshape(n, 1)
    if spec.effect == "tve":
        psi = thin_plate_basis(np.asarray(u, dtype=float), term.knots)
        return psi * np.asarray(values, dtype=float)[:, None]
    if spec.effect == "nle":
        raw = nle_basis(np.asarray(values, dtype=float), term.knots)
        return raw @ term.transform
    # re
    levels = np.asarray(levels)
    if levels.min() < 0 or levels.max() >= term.n_levels:
        raise LevelError(
            f"term {term.name!r}: actor level outside 0..{term.n_levels - 1}")
    block = np.zeros((n, term.width))
    load = np.ones(n) if spec.covariate is None else np.asarray(u, dtype=float)
    block[np.arange(n), levels] = load
    return block


def build_design_row(layout: DesignLayout, dyad, t: float, state,
                     exo=None, u: float | None = None) -> np.ndarray:
    """Evaluate the full design row ``h_dyad(t)`` against a history state.

    Pure function of (layout, dyad, t, history before t); the endo state
    must reflect exactly the events strictly before ``t``.
    """
    row = np.zeros(layout.p)
    for term in layout.terms:
        spec = term.spec
        if spec.effect == "re":
            level = dyad[0] if spec.level == "sender" else dyad[1]
            if level < 0 or level >= term.n_levels:
                raise LevelError(
                    f"term {term.name!r}: unknown actor level {level}")
            load = 1.0 if spec.covariate is None else float(u)
            row[term.start + level] = load
            continue
        v = eval_source(spec.source, dyad, t, state, exo=exo, u=u, b=spec.b)
        if spec.effect == "fle":
            row[term.start] = v
        elif spec.effect == "tve":
            row[term.indices] = v * thin_plate_basis(float(u), term.knots)
        else:  # nle
            row[term.indices] = nle_basis(v, term.knots) @ term.transform
    return row


def penalty_value(blocks, gamma: np.ndarray) -> float:
    """Total penalty ``sum_l lam_l * gamma_i' S_l gamma_i``."""
    total = 0.0
    for blk in blocks:
        g = gamma[blk.indices]
        total += blk.lam * float(g @ blk.matrix @ g)
    return total


def penalty_gradient(blocks, gamma: np.ndarray) -> np.ndarray:
    """Gradient of the total penalty, assembled into a length-P vector.

    Zero on coordinates outside every block (in particular on all fixed
    linear effect columns).
    """
    grad = np.zeros_like(gamma, dtype=float)
    for blk in blocks:
        grad[blk.indices] += 2.0 * blk.lam * (blk.matrix @ gamma[blk.indices])
    return grad


def penalty_hessian(blocks, p: int) -> np.ndarray:
    """Hessian of the total penalty (2 lam S per block, embedded in PxP)."""
    h = np.zeros((p, p))
    for blk in blocks:
        idx = blk.indices
        h[np.ix_(idx, idx)] += 2.0 * blk.lam * blk.matrix
    return h


def parse_model_file(path) -> list[TermSpec]:
    """Parse the model spec grammar (one ``term`` directive per line).

    Grammar::

        term NAME type=fle|tve|nle|re [source=SRC] [q=INT] [b=FLOAT]
             [level=sender|receiver] [covariate=time]

    ``#`` starts a comment; blank lines are skipped.
    """
    specs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] != "term" or len(parts) < 3:
                raise ValidationError(
                    f"line {lineno}: expected 'term NAME key=value ...'")
            name = parts[1]
            kv = {}
            for tok in parts[2:]:
                if "=" not in tok:
                    raise ValidationError(
                        f"line {lineno}: bad token {tok!r}")
                key, val = tok.split("=", 1)
                kv[key] = val
            effect = kv.pop("type", None)
            if effect is None:
                raise ValidationError(f"line {lineno}: missing type=")
            spec = TermSpec(
                name=name,
                effect=effect,
                source=kv.pop("source", ""),
                q=int(kv.pop("q", 10)),
                b=float(kv["b"]) if kv.get("b") else None,
                level=kv.pop("level", "sender"),
                covariate=kv.pop("covariate", None),
            )
            kv.pop("b", None)
            if kv:
                raise ValidationError(
                    f"line {lineno}: unknown keys {sorted(kv)}")
            specs.append(spec)
    if not specs:
        raise ValidationError("model file declares no terms")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate term names")
    return specs
