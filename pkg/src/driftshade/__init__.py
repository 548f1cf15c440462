"""Evasion attacks on tabular malware classifiers and output-drift scoring.

Pipeline: generate or load labeled feature vectors, standardize, train a
small MLP, craft targeted adversarial examples under a box budget with
optional similarity regularizers, then quantify how far the classifier's
output-probability distribution drifts.
"""

__version__ = "0.1.0"

from .attacks import (
    AttackConfig,
    AttackResult,
    adv_loss,
    attack_success_rate,
    ifgsm,
    pgd,
    run_attack,
)
from .data import (
    CsvFormatError,
    LabeledDataset,
    SplitSpec,
    generate_synthetic,
    load_csv,
    save_csv,
    split_dataset,
)
from .drift import (
    DetectionThresholds,
    DriftReport,
    OutputDriftDetector,
    avg_psi,
    bin_reference,
    compare_prob_samples,
    drift_report,
    hellinger,
    jsd,
    ks_stat,
    mmd_output,
    mmd_permutation_pvalue,
    psi,
    wasserstein1d,
)
from .harness import (
    ExperimentResult,
    SweepSpec,
    emit_report,
    load_config,
    normalize_config,
    run_experiment,
    run_sweep,
)
from .mlp import MlpClassifier, ModelFormatError
from .objectives import LossSpec, reg_kl, reg_l2, reg_mmd
from .repro import run_rq1, run_rq2, run_rq3
from .scaling import FeatureScaler

__all__ = [
    "__version__",
    "AttackConfig",
    "AttackResult",
    "adv_loss",
    "attack_success_rate",
    "ifgsm",
    "pgd",
    "run_attack",
    "CsvFormatError",
    "LabeledDataset",
    "SplitSpec",
    "generate_synthetic",
    "load_csv",
    "save_csv",
    "split_dataset",
    "DetectionThresholds",
    "DriftReport",
    "OutputDriftDetector",
    "avg_psi",
    "bin_reference",
    "compare_prob_samples",
    "drift_report",
    "hellinger",
    "jsd",
    "ks_stat",
    "mmd_output",
    "mmd_permutation_pvalue",
    "psi",
    "wasserstein1d",
    "ExperimentResult",
    "SweepSpec",
    "emit_report",
    "load_config",
    "normalize_config",
    "run_experiment",
    "run_sweep",
    "MlpClassifier",
    "ModelFormatError",
    "LossSpec",
    "reg_kl",
    "reg_l2",
    "reg_mmd",
    "run_rq1",
    "run_rq2",
    "run_rq3",
    "FeatureScaler",
]
