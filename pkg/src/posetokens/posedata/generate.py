"""Synthetic pose sampling: forward kinematics, normalization, masking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .skeleton import Skeleton

DEFAULT_ELEVATION = np.pi / 5.0


class DegenerateBoxError(ValueError):
    """Bounding box has zero extent along some axis."""


@dataclass
class Pose:
    """K x D joint coordinates in the unit box plus per-joint visibility."""

    joints: np.ndarray
    vis: np.ndarray

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        self.vis = np.asarray(self.vis, dtype=bool)
        if self.joints.ndim != 2 or self.vis.shape != (self.joints.shape[0],):
            raise ValueError("pose: joints must be (K, D) with vis of length K")

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]

    @property
    def dims(self) -> int:
        return self.joints.shape[1]

    def copy(self) -> "Pose":
        return Pose(self.joints.copy(), self.vis.copy())


def sample_joint_angles(skeleton: Skeleton, rng: np.random.Generator) -> np.ndarray:
    """One uniform draw per joint within its configured angle range."""
    lo = np.array([r[0] for r in skeleton.angle_range])
    hi = np.array([r[1] for r in skeleton.angle_range])
    return lo + (hi - lo) * rng.random(skeleton.num_joints)


def forward_kinematics(skeleton: Skeleton, angles: np.ndarray,
                       elevations: np.ndarray | None = None) -> np.ndarray:
    """Joint positions from per-joint relative angles, root at the origin.

    In-plane orientation accumulates down the tree:
        theta[j] = theta[parent] + angles[j], theta[0] = angles[0].
    2D bone direction is (cos theta, sin theta). When ``elevations`` is given
    the result is 3D with direction
        (cos theta * cos phi, sin theta * cos phi, sin phi),
    which keeps every bone at its configured length.
    """
    k = skeleton.num_joints
    dims = 2 if elevations is None else 3
    pos = np.zeros((k, dims))
    theta = np.zeros(k)
    theta[0] = angles[0]
    for j in range(1, k):
        p = skeleton.parent[j]
        theta[j] = theta[p] + angles[j]
        length = skeleton.bone_length[j]
        if dims == 2:
            direction = np.array([np.cos(theta[j]), np.sin(theta[j])])
        else:
            phi = elevations[j]
            direction = np.array([
                np.cos(theta[j]) * np.cos(phi),
                np.sin(theta[j]) * np.cos(phi),
                np.sin(phi),
            ])
        pos[j] = pos[p] + length * direction
    return pos


def bounding_box(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return coords.min(axis=0), coords.max(axis=0)


def normalize(raw: np.ndarray, vis: np.ndarray | None = None,
              ) -> tuple[Pose, tuple[np.ndarray, np.ndarray]]:
    """Map raw coordinates into the unit box per axis; returns (pose, box).

    Raises DegenerateBoxError when any axis has zero extent.
    """
    raw = np.asarray(raw, dtype=np.float64)
    lo, hi = bounding_box(raw)
    extent = hi - lo
    if np.any(extent <= 0.0):
        raise DegenerateBoxError(f"bounding box extent {extent} has a zero axis")
    if vis is None:
        vis = np.ones(raw.shape[0], dtype=bool)
    return Pose((raw - lo) / extent, vis), (lo, hi)


def denormalize(pose: Pose, box: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """Inverse of normalize for the given box."""
    lo, hi = box
    return pose.joints * (np.asarray(hi) - np.asarray(lo)) + np.asarray(lo)


def generate_pose(skeleton: Skeleton, rng_seed: int, dims: int = 2,
                  elevation_range: float = DEFAULT_ELEVATION,
                  max_attempts: int = 100) -> Pose:
    """Sample one normalized pose; deterministic per (skeleton, seed, dims).

    Degenerate bounding boxes trigger a retry with a perturbed seed; after
    ``max_attempts`` failures a DegenerateBoxError propagates.
    """
    if dims not in (2, 3):
        raise ValueError("dims must be 2 or 3")
    last_err: Exception | None = None
    for attempt in range(max_attempts):
        rng = np.random.default_rng(np.random.SeedSequence([rng_seed, attempt]))
        angles = sample_joint_angles(skeleton, rng)
        elevations = None
        if dims == 3:
            elevations = rng.uniform(-elevation_range, elevation_range,
                                     skeleton.num_joints)
        raw = forward_kinematics(skeleton, angles, elevations)
        try:
            pose, _ = normalize(raw)
            return pose
        except DegenerateBoxError as err:
            last_err = err
    raise DegenerateBoxError(
        f"no valid pose after {max_attempts} attempts: {last_err}"
    )


def mask_joints(pose: Pose, rate: float, rng: np.random.Generator) -> Pose:
    """Independently hide each joint with probability ``rate``.

    At least one joint always stays visible (the mask is redrawn otherwise).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"mask rate must be in [0, 1), got {rate}")
    out = pose.copy()
    if rate == 0.0:
        return out
    k = pose.num_joints
    while True:
        masked = rng.random(k) < rate
        vis = pose.vis & ~masked
        if vis.any():
            out.vis = vis
            return out


def sample_masks(batch: int, num_joints: int, rate_range: tuple[float, float],
                 rng: np.random.Generator) -> np.ndarray:
    """Per-sample mask rate drawn from rate_range; True marks a masked joint.

    Every row keeps at least one unmasked joint.
    """
    lo, hi = rate_range
    rates = rng.uniform(lo, hi, size=batch)
    masked = rng.random((batch, num_joints)) < rates[:, None]
    for i in np.nonzero(masked.all(axis=1))[0]:
        while masked[i].all():
            masked[i] = rng.random(num_joints) < rates[i]
    return masked


@dataclass
class DatasetSplit:
    """Seed-partitioned train/val/test pose lists for one skeleton."""

    skeleton_name: str
    seed: int
    num_joints: int
    dims: int
    train: list[Pose] = field(default_factory=list)
    val: list[Pose] = field(default_factory=list)
    test: list[Pose] = field(default_factory=list)

    def split(self, name: str) -> list[Pose]:
        try:
            return {"train": self.train, "val": self.val, "test": self.test}[name]
        except KeyError:
            raise KeyError(f"unknown split {name!r}")


_SPLIT_IDS = {"train": 0, "val": 1, "test": 2}


def generate_dataset(skeleton: Skeleton, seed: int, train: int, val: int,
                     test: int, dims: int = 2) -> DatasetSplit:
    """Pure function of (skeleton, seed, sizes): per-pose seeds are derived
    from (seed, split id, index), so splits are disjoint by construction."""
    out = DatasetSplit(skeleton.name, seed, skeleton.num_joints, dims)
    for split_name, count in (("train", train), ("val", val), ("test", test)):
        sid = _SPLIT_IDS[split_name]
        poses = out.split(split_name)
        for i in range(count):
            pose_seed = np.random.SeedSequence([seed, sid, i]).generate_state(1)[0]
            poses.append(generate_pose(skeleton, int(pose_seed), dims))
    return out


def stack_poses(poses: list[Pose]) -> tuple[np.ndarray, np.ndarray]:
    """(B, K, D) coordinates and (B, K) visibility from a pose list."""
    if not poses:
        raise ValueError("empty pose list")
    coords = np.stack([p.joints for p in poses])
    vis = np.stack([p.vis for p in poses])
    return coords, vis
