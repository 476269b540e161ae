"""Cumulative cross-world weighted treatment effects for longitudinal data."""
from .panel import (CSVSchema, PanelDataset, PanelValidationError, Regime, Trajectory,
                    parse_long_format_csv, validate_dataset, write_long_format_csv)
from .dgp import (StructuralModel, simulate_cross_world, simulate_observational,
                  true_density_ratio, true_propensity)
from .models import get_model, list_models
from .weights import (WeightFunction, WeightSpec, effective_sample_size, eval_weight,
                      eval_weight_deriv, hard_trim, linear, one, ratio_terms, smooth_trim)
from .learners import LearnerConfig, make_learner
from .nuisance import (NuisanceSet, fit_density_ratio, fit_nuisances, fit_propensities,
                       fit_sequential_regressions, make_folds)
from .estimator import EstimateReport, dr_contrast, dr_estimate, eval_eif, plug_in_estimate
from .oracle import (OracleResult, estimand_mc, identified_enumeration, identified_mc,
                     oracle_nuisances, support_diagnostic)

__version__ = "0.1.0"
