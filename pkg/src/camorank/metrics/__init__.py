"""Evaluation metrics for segmentation, camouflage ranking and fixation maps."""

from camorank.metrics.fixation import (
    auc_borji,
    auc_judd,
    cc,
    emd,
    fixation_metrics,
    kld,
    nss,
    shuffled_auc,
    sim,
)
from camorank.metrics.ranking import r_mae
from camorank.metrics.segmentation import (
    mae,
    mean_e_measure,
    mean_f_measure,
    object_similarity,
    region_similarity,
    s_measure,
)

__all__ = [
    "mae",
    "mean_f_measure",
    "mean_e_measure",
    "s_measure",
    "object_similarity",
    "region_similarity",
    "r_mae",
    "sim",
    "cc",
    "emd",
    "kld",
    "nss",
    "auc_judd",
    "auc_borji",
    "shuffled_auc",
    "fixation_metrics",
]
