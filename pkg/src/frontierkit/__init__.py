"""Efficiency benchmarking of panel DMUs with stochastic frontiers and DEA."""

from .dea import DeaResult, DeaTable, dea_all, dea_phi, dea_score
from .errors import ConvergenceError, FrontierError, ValidationError
from .panel import FrontierSpec, PanelDataset, PanelSchema, Variable, describe, load_panel, pearson
from .report import RunConfig, bundled_config_path, rank_report, run_pipeline
from .secondstage import (CovariateMatrix, SimarWilsonFit, SimarWilsonOptions, TobitFit,
                          determinants_report, simar_wilson, tobit_fit, truncreg_fit)
from .sfa import FitOptions, SfaFit, build_design, fit_panel, fit_sfa
from .synth import SynthSpec, gen_aena_like, gen_dea_panel, gen_sfa_panel, gen_truncated_scores

__version__ = "0.1.0"
