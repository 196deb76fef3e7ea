import logging

from .analysis import Algorithm, LossSummary, TrialMetrics, comm_cost, empirical_metrics, theory_table
from .baselines import RhrParams, cms_he_estimate, he_estimate, olh_params, rhr_estimate
from .cms import (
    EstimatorMode,
    EstimatorParams,
    Report,
    ReportBatch,
    client_encode,
    client_encode_batch,
    hash_range,
    predict_variance,
    server_estimate,
    worst_case_mse,
)
from .config import ExperimentConfig, GaussianConfig, KosarakConfig, XSetKind, ZipfConfig
from .datasets import Dataset, gen_gaussian, gen_zipf, ingest_kosarak, load_dataset, save_dataset
from .exceptions import CodecError, ConfigurationError, DatasetError, DomainError, OcmsError, SingularityError
from .field import FieldKind, FieldSpec, finite_field_size
from .ldp import MechanismKind, MechanismSpec, build_decoder
from .runner import make_oracle, run

# Ensure the package logger is silent by default when used as a library.
logging.getLogger("ocms").addHandler(logging.NullHandler())

__all__ = [
    "Algorithm",
    "CodecError",
    "ConfigurationError",
    "Dataset",
    "DatasetError",
    "DomainError",
    "EstimatorMode",
    "EstimatorParams",
    "ExperimentConfig",
    "FieldKind",
    "FieldSpec",
    "GaussianConfig",
    "KosarakConfig",
    "LossSummary",
    "MechanismKind",
    "MechanismSpec",
    "OcmsError",
    "Report",
    "ReportBatch",
    "RhrParams",
    "SingularityError",
    "TrialMetrics",
    "XSetKind",
    "ZipfConfig",
    "build_decoder",
    "client_encode",
    "client_encode_batch",
    "cms_he_estimate",
    "comm_cost",
    "empirical_metrics",
    "finite_field_size",
    "gen_gaussian",
    "gen_zipf",
    "hash_range",
    "he_estimate",
    "ingest_kosarak",
    "load_dataset",
    "make_oracle",
    "olh_params",
    "predict_variance",
    "rhr_estimate",
    "run",
    "save_dataset",
    "server_estimate",
    "theory_table",
    "worst_case_mse",
]
