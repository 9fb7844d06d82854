"""Sensitivity, rotation-equivariance and trajectory-robustness analyses."""

from geneopocket.stats.equivariance import (
    ProportionEstimate,
    equivariance_proportions,
    format_equivariance_table,
    proportion_estimate,
    proportions_from_overlaps,
    rotation_overlaps,
    wald_interval,
    z_value,
)
from geneopocket.stats.robustness import (
    MeanOverlapTest,
    OverlapSeries,
    format_robustness_table,
    format_series_long,
    frame_overlap_series,
    mean_overlap_test,
    overlap_rmsd_association,
    rmsd,
    significance_code,
)
from geneopocket.stats.sensitivity import (
    SensitivityReport,
    Summary,
    format_samples_long,
    format_summary,
    sensitivity,
)

__all__ = [
    "MeanOverlapTest",
    "OverlapSeries",
    "ProportionEstimate",
    "SensitivityReport",
    "Summary",
    "equivariance_proportions",
    "format_equivariance_table",
    "format_robustness_table",
    "format_samples_long",
    "format_series_long",
    "format_summary",
    "frame_overlap_series",
    "mean_overlap_test",
    "overlap_rmsd_association",
    "proportion_estimate",
    "proportions_from_overlaps",
    "rmsd",
    "rotation_overlaps",
    "sensitivity",
    "significance_code",
    "wald_interval",
    "z_value",
]
