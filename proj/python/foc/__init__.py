"""Fuzzy overclustering: losses, evaluation and the train/eval pipeline."""

from ._foc import (
    ConfigError,
    DataError,
    best_permutation_mapping,
    ce_inverse_pair,
    ce_inverse_triplet,
    consistency,
    cross_entropy,
    evaluate,
    gen_data,
    joint_distribution,
    macro_f1,
    majority_mapping,
    mi_loss,
    mutual_information,
    report,
    train,
    version,
)

__version__ = version()
__all__ = [name for name in dir() if not name.startswith("_")]
