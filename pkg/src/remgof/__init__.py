"""Additive mixed-effect relational event models with martingale-residual
goodness-of-fit testing.

Typical flow::

    seq = remgof.ingest_events("events.csv")
    terms = [remgof.TermSpec("rec", "nle", source="endo:rec:time", q=10)]
    result, paired = remgof.fit_model(seq, terms, seed=1)
    report = remgof.gof_report(result, paired)
"""

__version__ = "0.1.0"

from .basis import (DesignLayout, PenaltyBlock, TermSpec, build_design_row,
                    nle_basis, parse_model_file, penalty_gradient,
                    thin_plate_basis)
from .core import (Actor, ActorRegistry, EventSequence, RelationalEvent,
                   RiskSetPolicy, ingest_events, jitter_ties, risk_set,
                   write_events)
from .dgp import (DgpEffect, DgpSpec, ExperimentGrid, SCENARIOS,
                  build_dgp, get_scenario, run_experiment, run_replicate,
                  simulate_sequence)
from .endo import EndoKind, EndoState, endo_advance, endo_matrix, endo_value
from .errors import (ConvergenceError, DegenerateError, DgpError,
                     EvaluationError, LevelError, OrderError, ParseError,
                     RemgofError, SamplingError, SingularError, TieError,
                     UnsupportedError, ValidationError)
from .fit import (FitResult, fit_model, fit_pmle, loglik_generic,
                  loglik_logistic, observed_information, select_lambda)
from .gof import (GofReport, GofTestResult, ResidualProcess,
                  empirical_variance, evaluate_statistic, gof_report,
                  kolmogorov_pvalue, residual_process, simulate_bridge_sup,
                  test_auxiliary, test_fle, test_multivariate, test_omnibus,
                  test_random_effect)
from .sampling import (PairedDesign, SampledRiskSet, build_generic_design,
                       build_paired_design, sample_risk_sets)
