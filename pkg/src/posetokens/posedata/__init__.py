"""Synthetic articulated-skeleton datasets: generation, files, rendering."""

from .generate import (
    DatasetSplit,
    DegenerateBoxError,
    Pose,
    bounding_box,
    denormalize,
    forward_kinematics,
    generate_dataset,
    generate_pose,
    mask_joints,
    normalize,
    sample_joint_angles,
    sample_masks,
    stack_poses,
)
from .io import DatasetFormatError, load_jsonl, save_jsonl
from .skeleton import Skeleton, get_skeleton, humanoid16
from .svg import render_line_chart, render_svg

__all__ = [
    "DatasetFormatError",
    "DatasetSplit",
    "DegenerateBoxError",
    "Pose",
    "Skeleton",
    "bounding_box",
    "denormalize",
    "forward_kinematics",
    "generate_dataset",
    "generate_pose",
    "get_skeleton",
    "humanoid16",
    "load_jsonl",
    "mask_joints",
    "normalize",
    "render_line_chart",
    "render_svg",
    "sample_joint_angles",
    "sample_masks",
    "save_jsonl",
    "stack_poses",
]
