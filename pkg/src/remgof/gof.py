"""Goodness-of-fit tests built on cumulative martingale residuals.

For a statistic ``phi`` evaluated on every member of every sampled risk
set, the observed process accumulates, event by event, the gap between
the case's value and its model-implied conditional expectation.  With one
control per event that gap collapses to

    G_k = [1 - logistic(gamma' dh_k)] * dphi_k,

so the whole framework runs on the paired design.  When ``phi`` is a
model column the process is the corresponding score coordinate and ends,
at the fitted parameters, at the penalty gradient (zero for unpenalized
columns).  Normalized by an estimate of the contribution variance the
partial-sum process converges to a Brownian bridge, which yields:

* an exact Kolmogorov p-value for single fixed-effect columns,
* simulated multivariate bridge nulls for smooth and random-effect
  blocks (centered contributions, empirical covariance),
* a Cauchy combination of per-term p-values as the omnibus test,
* a wild-bootstrap style resampling null for statistics outside the
  model formulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import basis
from .errors import (DegenerateError, EvaluationError, SingularError,
                     ValidationError)


# --------------------------------------------------------------------- #
# Residual process
# --------------------------------------------------------------------- #

@dataclass
class ResidualProcess:
    """Per-event contributions and their weighted partial sums."""

    contributions: np.ndarray    # (n, q)
    weights: np.ndarray          # (n,)
    indices: np.ndarray
    centered: bool
    term: str | None = None
    u: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.contributions.shape[0]

    @property
    def q(self) -> int:
        return self.contributions.shape[1]

    @property
    def trajectory(self) -> np.ndarray:
        """Partial sums ``sum_{j<=k} w_j G_j`` on the event grid."""
        return np.cumsum(self.contributions * self.weights[:, None], axis=0)


def _resolve_weights(weights, paired):
    n = paired.n
    if weights is None:
        return np.ones(n)
    if callable(weights):
        weights = weights(paired)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValidationError(f"weights must have shape ({n},)")
    if np.any((w < 0) | (w > 1)):
        raise ValidationError("weights must lie in [0, 1]")
    return w


def residual_process(fit, paired, index_set, centered=True,
                     weights=None) -> ResidualProcess:
    """Observed martingale residual process for a column set.

    Uncentered contributions are the per-event score increments of the
    selected columns; ``centered=True`` subtracts the full-sample score
    over n from each contribution (so the partial sums return exactly to
    zero at the end of the window), which is the form the multivariate
    tests require.
    """
    idx = np.asarray(index_set, dtype=int).ravel()
    if idx.size == 0:
        raise ValidationError("empty index set")
    delta = paired.delta
    p = expit(delta @ fit.gamma_hat)
    contrib = (1.0 - p)[:, None] * delta[:, idx]
    if centered:
        contrib = contrib - contrib.sum(axis=0) / len(contrib)
    w = _resolve_weights(weights, paired)
    return ResidualProcess(contributions=contrib, weights=w, indices=idx,
                           centered=centered, u=paired.u.copy())


# --------------------------------------------------------------------- #
# Null distributions
# --------------------------------------------------------------------- #

def kolmogorov_pvalue(t: float) -> float:
    """Survival function of the Kolmogorov distribution.

    ``2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 t^2)``, truncated once the next
    term drops below 1e-12; returns 1 for t < 0.05 where the series
    needs many terms and the probability is 1 to double precision.
    """
    if t < 0.05:
        return 1.0
    total = 0.0
    sign = 1.0
    for k in range(1, 1001):
        term = math.exp(-2.0 * k * k * t * t)
        total += sign * term
        if term < 1e-12:
            break
        sign = -sign
    return float(min(max(2.0 * total, 0.0), 1.0))


def simulate_bridge_sup(q: int, n_grid: int, B: int, seed: int = 0) -> np.ndarray:
    """Sup of the squared norm of a q-dimensional Brownian bridge, B times.

    Each replicate builds q independent random walks with step variance
    ``1/n_grid``, subtracts ``u * endpoint`` so every path is anchored at
    both ends, and records the largest squared Euclidean norm over the
    grid.  Replicate b uses its own RNG stream keyed by ``(seed, b)``, so
    results do not depend on evaluation order.
    """
    if q < 1 or B < 1:
        raise ValidationError("q and B must be >= 1")
    u = np.arange(1, n_grid + 1) / n_grid
    out = np.empty(B)
    scale = 1.0 / math.sqrt(n_grid)
    for b in range(B):
        rng = np.random.default_rng((seed, b))
        walk = np.cumsum(rng.standard_normal((n_grid, q)) * scale, axis=0)
        bridge = walk - u[:, None] * walk[-1]
        out[b] = float(np.max(np.einsum("ij,ij->i", bridge, bridge)))
    return out


# --------------------------------------------------------------------- #
# Covariance of contributions
# --------------------------------------------------------------------- #

def empirical_variance(proc: ResidualProcess,
                       require_full_rank: bool = True) -> np.ndarray:
    """End-of-window covariance of the centered contributions.

    ``J_hat = n^-1 sum_k G_k G_k'``.  Eigenvalues below ``1e-10`` of the
    largest are treated as zero; by default an effective rank below q
    raises :class:`SingularError` (multivariate tests opt out and run on
    the retained rank instead).
    """
    if not proc.centered:
        raise ValidationError("empirical variance needs centered contributions")
    g = proc.contributions
    j = g.T @ g / proc.n
    j = 0.5 * (j + j.T)
    if require_full_rank:
        rank = _psd_rank(j)
        if rank < proc.q:
            raise SingularError(
                f"contribution covariance has rank {rank} < {proc.q}",
                rank=rank)
    return j


def _psd_rank(j, floor_ratio=1e-10):
    eigvals = np.linalg.eigvalsh(j)
    top = float(eigvals.max(initial=0.0))
    if top <= 0.0:
        return 0
    return int(np.sum(eigvals > floor_ratio * top))


def inv_sqrt_map(j, floor_ratio=1e-10):
    """Reduced inverse square root of a PSD matrix.

    Returns ``(M, rank)`` where ``M`` is (rank x q) and ``M J M' = I`` on
    the retained eigenspace; directions with eigenvalues below the floor
    are dropped.
    """
    vals, vecs = np.linalg.eigh(0.5 * (j + j.T))
    top = float(vals.max(initial=0.0))
    if top <= 0.0:
        return np.zeros((0, j.shape[0])), 0
    keep = vals > floor_ratio * top
    m = (vecs[:, keep] / np.sqrt(vals[keep])).T
    return m, int(keep.sum())


# --------------------------------------------------------------------- #
# Test results
# --------------------------------------------------------------------- #

@dataclass
class GofTestResult:
    """Outcome of one goodness-of-fit test."""

    term: str
    statistic: float
    statistic_name: str
    p_value: float
    kind: str                 # exact-kolmogorov | empirical-bridge |
    #                           empirical-resampled | exact-cauchy
    b_used: int | None = None
    rank: int | None = None
    u: np.ndarray | None = None
    w_path: np.ndarray | None = None   # normalized trajectory for plotting
    process: ResidualProcess | None = None

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise ValidationError(f"p-value {self.p_value} outside [0, 1]")


def test_fle(proc: ResidualProcess, fit) -> GofTestResult:
    """Kolmogorov-Smirnov test for a single fixed-linear-effect column.

    The score process is normalized by the square root of the observed
    information of that coordinate, making it asymptotically a standard
    Brownian bridge; the supremum of its absolute value has an exact
    Kolmogorov p-value.
    """
    if proc.q != 1:
        raise ValidationError("fle test needs a one-dimensional process")
    if proc.centered:
        raise ValidationError("fle test uses the uncentered score process")
    d = int(proc.indices[0])
    info_dd = float(fit.observed_information[d, d])
    if info_dd <= 0.0:
        raise DegenerateError(f"zero information on coordinate {d}")
    w_path = proc.trajectory[:, 0] / math.sqrt(info_dd)
    stat = float(np.max(np.abs(w_path)))
    return GofTestResult(
        term=proc.term or f"col{d}", statistic=stat, statistic_name="T_x",
        p_value=kolmogorov_pvalue(stat), kind="exact-kolmogorov",
        u=proc.u, w_path=w_path[:, None], process=proc)


def test_multivariate(proc: ResidualProcess, j_hat=None, B: int = 1000,
                      seed: int = 0, n_grid: int | None = None,
                      statistic_name: str = "T_psi") -> GofTestResult:
    """Simulated-bridge test for a multi-column (smooth) term.

    Normalizes the centered partial sums by the reduced inverse square
    root of the empirical contribution covariance and compares the sup
    of the squared norm against B simulated Brownian-bridge suprema of
    matching dimension.  Ties count toward the p-value.
    """
    if B < 100:
        raise ValidationError("B must be >= 100")
    if j_hat is None:
        j_hat = empirical_variance(proc, require_full_rank=False)
    m, rank = inv_sqrt_map(j_hat)
    if rank == 0:
        raise DegenerateError("contribution covariance is zero")
    w_path = proc.trajectory @ m.T / math.sqrt(proc.n)
    stat = float(np.max(np.einsum("ij,ij->i", w_path, w_path)))
    # The observed sup runs over n partial sums, so the null should be
    # discretized the same way (capped for very long sequences, where the
    # residual discretization gap is negligible).
    grid = n_grid if n_grid is not None else min(proc.n, 2000)
    sups = simulate_bridge_sup(rank, grid, B, seed=seed)
    p_val = float(np.mean(sups >= stat))
    return GofTestResult(
        term=proc.term or "term", statistic=stat,
        statistic_name=statistic_name, p_value=p_val,
        kind="empirical-bridge", b_used=B, rank=rank,
        u=proc.u, w_path=w_path, process=proc)


def test_random_effect(fit, paired, term_name: str, B: int = 1000,
                       seed: int = 0, weights=None,
                       n_grid: int | None = None) -> GofTestResult:
    """Bridge test for a random-effect block.

    Same machinery as the smooth-term test with one column per level;
    the covariance is rank-reduced automatically (the level indicators
    carry an exact linear dependency, and unobserved levels contribute
    nothing).
    """
    term = paired.layout.term(term_name)
    if term.spec.effect != "re":
        raise ValidationError(f"term {term_name!r} is not a random effect")
    proc = residual_process(fit, paired, term.indices, centered=True,
                            weights=weights)
    proc.term = term_name
    try:
        return test_multivariate(proc, B=B, seed=seed, n_grid=n_grid,
                                 statistic_name="T_z")
    except DegenerateError:
        raise DegenerateError(
            f"random effect {term_name!r} has no usable variation "
            "(single level?)") from None


def test_omnibus(results) -> GofTestResult:
    """Cauchy combination of per-term p-values into one global test.

    ``T_o = L^-1 sum tan(pi (0.5 - P_l))`` with analytic p-value
    ``1/2 - arctan(T_o)/pi``; valid under arbitrary dependence between
    the inputs.  Empirical p-values are clamped to ``[1/(2B), 1-1/(2B)]``
    so resolution limits cannot produce infinities.
    """
    results = list(results)
    if not results:
        raise ValidationError("omnibus test needs at least one result")
    ps = []
    for res in results:
        p = res.p_value
        if res.b_used:
            lo = 1.0 / (2.0 * res.b_used)
            p = min(max(p, lo), 1.0 - lo)
        else:
            p = min(max(p, 1e-12), 1.0 - 1e-12)
        ps.append(p)
    ps = np.asarray(ps)
    t_o = float(np.mean(np.tan(np.pi * (0.5 - ps))))
    p_val = float(min(max(0.5 - math.atan(t_o) / math.pi, 0.0), 1.0))
    return GofTestResult(term="omnibus", statistic=t_o, statistic_name="T_o",
                         p_value=p_val, kind="exact-cauchy")


# --------------------------------------------------------------------- #
# Auxiliary statistics
# --------------------------------------------------------------------- #

def evaluate_statistic(seq, sets, source, exo=None):
    """Evaluate an arbitrary statistic for case and control of each event.

    ``source`` is either a covariate source string (see
    :func:`remgof.basis.eval_source`) or a callable
    ``f(dyad, t, state, u) -> float``.  The statistic must be finite
    everywhere; the history state passed to it reflects exactly the
    events strictly before each event time.
    """
    from .endo import EndoState, endo_advance
    n = len(seq)
    phi_case = np.zeros(n)
    phi_ctrl = np.zeros(n)
    state = EndoState(seq.n_actors)
    for k in range(n):
        srk = sets[k]
        u_k = (k + 1.0) / n
        if callable(source):
            phi_case[k] = source(srk.case, srk.time, state, u_k)
            phi_ctrl[k] = source(srk.controls[0], srk.time, state, u_k)
        else:
            phi_case[k] = basis.eval_source(source, srk.case, srk.time,
                                            state, exo=exo, u=u_k)
            phi_ctrl[k] = basis.eval_source(source, srk.controls[0],
                                            srk.time, state, exo=exo, u=u_k)
        if not (math.isfinite(phi_case[k]) and math.isfinite(phi_ctrl[k])):
            raise EvaluationError(
                f"statistic non-finite at event {k}", event_index=k)
        endo_advance(state, int(seq.senders[k]), int(seq.receivers[k]),
                     float(seq.times[k]))
    return phi_case, phi_ctrl


def _pseudo_solve(a, rhs, floor_ratio=1e-10):
    """Symmetric pseudo-inverse solve with eigenvalue flooring."""
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    top = float(vals.max(initial=0.0))
    keep = vals > floor_ratio * max(top, 1e-300)
    if not np.any(keep):
        raise SingularError("information matrix is zero", rank=0)
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    return vecs @ (inv[:, None] * (vecs.T @ rhs))


def test_auxiliary(fit, paired, phi, B: int = 1000, seed: int = 0,
                   seq=None, exo=None, chunk: int = 128) -> GofTestResult:
    """Resampling test for a statistic outside the model formulation.

    ``phi`` may be a pair of arrays ``(phi_case, phi_ctrl)``, a covariate
    source string, or a callable (the latter two require ``seq``).  The
    observed statistic is the sup of the absolute unnormalized process;
    its null is approximated by B wild replicates that perturb both the
    process increments and the score by the same standard normal draws,
    propagating the estimation effect through the inverse information.
    """
    if isinstance(phi, tuple) and len(phi) == 2:
        phi_case, phi_ctrl = (np.asarray(a, dtype=float) for a in phi)
    else:
        if seq is None:
            raise ValidationError("phi given as source/callable needs seq")
        phi_case, phi_ctrl = evaluate_statistic(seq, paired.sets, phi, exo=exo)
    if not (np.all(np.isfinite(phi_case)) and np.all(np.isfinite(phi_ctrl))):
        bad = int(np.nonzero(~(np.isfinite(phi_case) & np.isfinite(phi_ctrl)))[0][0])
        raise EvaluationError(f"statistic non-finite at event {bad}",
                              event_index=bad)
    n = paired.n
    if phi_case.shape != (n,) or phi_ctrl.shape != (n,):
        raise ValidationError("phi arrays must have one value per event")

    delta = paired.delta
    p = expit(delta @ fit.gamma_hat)
    dphi = phi_case - phi_ctrl
    a_k = (1.0 - p) * dphi                          # process increments
    path = np.cumsum(a_k)
    t_phi = float(np.max(np.abs(path)))

    # Estimation correction: the replicate process subtracts
    # (cumulative Phi*(0)/S(0))' I^-1 (score perturbed by the same draws).
    c_rows = (p * (1.0 - p) * dphi)[:, None] * delta     # (n, P)
    cum_c = np.cumsum(c_rows, axis=0)
    d_rows = (1.0 - p)[:, None] * delta                  # score contributions
    info = fit.observed_information

    sups = np.empty(B)
    done = 0
    while done < B:
        width = min(chunk, B - done)
        draws = np.empty((n, width))
        for j in range(width):
            rng = np.random.default_rng((seed, done + j))
            draws[:, j] = rng.standard_normal(n)
        term1 = np.cumsum(a_k[:, None] * draws, axis=0)
        scores = d_rows.T @ draws                        # (P, width)
        v = _pseudo_solve(info, scores)
        paths = term1 - cum_c @ v
        sups[done:done + width] = np.max(np.abs(paths), axis=0)
        done += width
    p_val = float(np.mean(sups >= t_phi))
    return GofTestResult(term="auxiliary", statistic=t_phi,
                         statistic_name="T_phi", p_value=p_val,
                         kind="empirical-resampled", b_used=B,
                         u=paired.u.copy(), w_path=path[:, None])


# --------------------------------------------------------------------- #
# Per-fit report
# --------------------------------------------------------------------- #

@dataclass
class GofReport:
    """Per-term test results plus (when more than one term) the omnibus."""

    results: list
    omnibus: GofTestResult | None = None

    def by_term(self, name: str) -> GofTestResult:
        for res in self.results:
            if res.term == name:
                return res
        raise ValidationError(f"no result for term {name!r}")


def gof_report(fit, paired, terms="all", B: int = 1000, seed: int = 0,
               weights=None, n_grid: int | None = None,
               with_omnibus: bool | None = None) -> GofReport:
    """Run the appropriate test for each requested term.

    Fixed linear effects get the exact Kolmogorov test; smooth terms and
    random effects get the simulated-bridge test on their centered
    process.  The omnibus combination is included whenever more than one
    term is tested (or ``with_omnibus=True``).
    """
    layout = fit.layout
    if terms == "all":
        selected = [t.name for t in layout.terms]
    else:
        selected = list(terms)
    results = []
    for i, name in enumerate(selected):
        term = layout.term(name)
        if term.spec.effect == "fle":
            proc = residual_process(fit, paired, term.indices,
                                    centered=False, weights=weights)
            proc.term = name
            results.append(test_fle(proc, fit))
        elif term.spec.effect == "re":
            results.append(test_random_effect(
                fit, paired, name, B=B, seed=seed + i, weights=weights,
                n_grid=n_grid))
        else:
            proc = residual_process(fit, paired, term.indices,
                                    centered=True, weights=weights)
            proc.term = name
            results.append(test_multivariate(
                proc, B=B, seed=seed + i, n_grid=n_grid))
    if with_omnibus is None:
        with_omnibus = len(results) > 1
    omnibus = test_omnibus(results) if with_omnibus else None
    return GofReport(results=results, omnibus=omnibus)
