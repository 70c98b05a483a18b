"""Kinematic-tree skeleton definitions for the synthetic pose generator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Skeleton:
    """An articulated tree: joint 0 is the root, every other joint has a parent.

    ``angle_range[j]`` bounds joint j's rotation (radians) relative to its
    parent's accumulated orientation; the canonical rest angle is the midpoint.
    """

    name: str
    parent: tuple[int, ...]
    bone_length: tuple[float, ...]
    angle_range: tuple[tuple[float, float], ...]
    joint_names: tuple[str, ...] = ()

    def __post_init__(self):
        k = len(self.parent)
        if self.parent[0] != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        for j in range(1, k):
            if not 0 <= self.parent[j] < j:
                raise ValueError(
                    f"parent[{j}]={self.parent[j]} must point to an earlier joint"
                )
            if self.bone_length[j] <= 0:
                raise ValueError(f"bone_length[{j}] must be positive")
        for j, (lo, hi) in enumerate(self.angle_range):
            if hi < lo:
                raise ValueError(f"angle_range[{j}] is empty")
        if len(self.bone_length) != k or len(self.angle_range) != k:
            raise ValueError("skeleton field lengths disagree")

    @property
    def num_joints(self) -> int:
        return len(self.parent)

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple((self.parent[j], j) for j in range(1, self.num_joints)
                     if self.parent[j] >= 0)

    def canonical_angles(self) -> np.ndarray:
        return np.array([(lo + hi) / 2.0 for lo, hi in self.angle_range])


def _deg(lo: float, hi: float) -> tuple[float, float]:
    return (np.deg2rad(lo), np.deg2rad(hi))


def humanoid16() -> Skeleton:
    """Default 16-joint humanoid: pelvis root, torso chain, two arms, two legs.

    Angles are relative to the parent bone direction; the rest pose stands
    upright (root orientation 90 degrees, i.e. +y) with arms angled outward
    and downward so the rest pose spans both axes. Limb ranges are wide on
    purpose: elbows, wrists and knees sweep large arcs, which makes the
    occluded-joint distribution genuinely multimodal.
    """
    names = ("pelvis", "spine", "neck", "head",
             "l_shoulder", "l_elbow", "l_wrist",
             "r_shoulder", "r_elbow", "r_wrist",
             "l_hip", "l_knee", "l_ankle",
             "r_hip", "r_knee", "r_ankle")
    parent = (-1, 0, 1, 2, 2, 4, 5, 2, 7, 8, 0, 10, 11, 0, 13, 14)
    bone = (1.0,   # root: unused for FK, kept positive for uniformity
           0.60, 0.50, 0.30,
           0.35, 0.55, 0.50,
           0.35, 0.55, 0.50,
           0.30, 0.70, 0.65,
           0.30, 0.70, 0.65)
    angle = (
        _deg(75, 105),     # pelvis: global orientation, roughly upright
        _deg(-15, 15),     # spine
        _deg(-15, 15),     # neck
        _deg(-20, 20),     # head
        _deg(80, 160),     # l_shoulder: off the torso toward +side
        _deg(-120, 5),     # l_elbow
        _deg(-100, 45),    # l_wrist
        _deg(-160, -80),   # r_shoulder
        _deg(-5, 120),     # r_elbow
        _deg(-45, 100),    # r_wrist
        _deg(140, 172),    # l_hip: down and outward from pelvis
        _deg(-10, 100),    # l_knee
        _deg(-80, 10),     # l_ankle
        _deg(-172, -140),  # r_hip
        _deg(-100, 10),    # r_knee
        _deg(-10, 80),     # r_ankle
    )
    return Skeleton("humanoid16", parent, bone, angle, names)


_REGISTRY = {"humanoid16": humanoid16}


def get_skeleton(name: str) -> Skeleton:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown skeleton {name!r}; known: {sorted(_REGISTRY)}")
