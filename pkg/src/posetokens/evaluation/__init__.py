"""Metrics, occlusion benchmarks, codebook diagnostics, ablations, sweeps."""

from .metrics import (
    MetricsReport,
    bone_length_violation,
    joint_errors,
    mean_per_joint_error,
    occluded_pck,
    pck,
    per_joint_pck,
    pose_report,
)

__all__ = [
    "MetricsReport",
    "bone_length_violation",
    "joint_errors",
    "mean_per_joint_error",
    "occluded_pck",
    "pck",
    "per_joint_pck",
    "pose_report",
]
