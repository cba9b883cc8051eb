"""Detection of temporally isolated events in massive light-curve collections.

Two-stage method: robust wavelet-regression screening (likelihood-ratio test
of the detail block under heavy-tailed noise, batch FDR selection) followed
by feature-based classification of the surviving curves, plus a survey
simulator for calibration and training and a deterministic parallel batch
pipeline.
"""

from .basis import BasisSpec, DesignMatrix, cascade_tabulate, evaluate_basis, rescale_times
from .classifier import (ClassProbability, LogisticModel, combine_probability,
                         cross_validate, fit_logistic_map, load_model,
                         predict_prob, save_model)
from .features import EventFeatures, compute_features, cusum_feature, directed_variation
from .pipeline import PipelineConfig, field_cluster_filter, ingest_curve, run_pipeline, run_screening
from .robust import (LightCurve, PriorConfig, RobustFit, fit_alternative,
                     fit_em, fit_null, t_log_likelihood)
from .screening import (CalibratedReference, ScreeningRecord,
                        calibrate_reference, chi2_pvalue, fdr_select,
                        llr_statistic)
from .simulator import (SimulationConfig, TruthRecord, generate_corpus,
                        paczynski_magnification, simulate_event,
                        simulate_null, simulate_periodic)

__version__ = "0.1.0"

__all__ = [
    "BasisSpec", "DesignMatrix", "cascade_tabulate", "evaluate_basis",
    "rescale_times",
    "LightCurve", "PriorConfig", "RobustFit", "fit_em", "fit_null",
    "fit_alternative", "t_log_likelihood",
    "ScreeningRecord", "CalibratedReference", "llr_statistic", "chi2_pvalue",
    "fdr_select", "calibrate_reference",
    "EventFeatures", "compute_features", "cusum_feature", "directed_variation",
    "LogisticModel", "ClassProbability", "fit_logistic_map", "predict_prob",
    "cross_validate", "combine_probability", "save_model", "load_model",
    "SimulationConfig", "TruthRecord", "simulate_null", "simulate_event",
    "simulate_periodic", "paczynski_magnification", "generate_corpus",
    "PipelineConfig", "ingest_curve", "run_screening", "run_pipeline",
    "field_cluster_filter",
]
