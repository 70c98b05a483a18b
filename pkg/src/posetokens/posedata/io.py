"""JSON Lines dataset files.

Layout: first line is a header object
    {"k": int, "d": int, "skeleton": str, "seed": int, "split_sizes": [t, v, s]}
followed by one record per pose, in train/val/test order:
    {"joints": [[...], ...], "vis": [true, ...]}
UTF-8, LF line endings. Floats are written with repr precision, so coordinates
round-trip exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .generate import DatasetSplit, Pose


class DatasetFormatError(ValueError):
    """Malformed dataset file; the message names the offending line."""


def save_jsonl(split: DatasetSplit, path: str | Path) -> None:
    path = Path(path)
    header = {
        "k": split.num_joints,
        "d": split.dims,
        "skeleton": split.skeleton_name,
        "seed": split.seed,
        "split_sizes": [len(split.train), len(split.val), len(split.test)],
    }
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for pose in (*split.train, *split.val, *split.test):
            rec = {"joints": pose.joints.tolist(), "vis": pose.vis.tolist()}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def _parse_line(line: str, lineno: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as err:
        raise DatasetFormatError(f"line {lineno}: invalid JSON ({err.msg})")
    if not isinstance(obj, dict):
        raise DatasetFormatError(f"line {lineno}: expected an object")
    return obj


def load_jsonl(path: str | Path) -> DatasetSplit:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("line 1: missing header")
    header = _parse_line(lines[0], 1)
    for key in ("k", "d", "skeleton", "seed", "split_sizes"):
        if key not in header:
            raise DatasetFormatError(f"line 1: header missing {key!r}")
    k, d = int(header["k"]), int(header["d"])
    sizes = header["split_sizes"]
    if len(sizes) != 3 or any(int(n) < 0 for n in sizes):
        raise DatasetFormatError("line 1: split_sizes must be three counts")
    expected = sum(int(n) for n in sizes)
    if len(lines) - 1 != expected:
        raise DatasetFormatError(
            f"line {len(lines) + 1}: expected {expected} records, found {len(lines) - 1}"
        )
    poses: list[Pose] = []
    for lineno, line in enumerate(lines[1:], start=2):
        rec = _parse_line(line, lineno)
        if "joints" not in rec or "vis" not in rec:
            raise DatasetFormatError(f"line {lineno}: record missing joints/vis")
        joints = np.asarray(rec["joints"], dtype=np.float64)
        vis = np.asarray(rec["vis"], dtype=bool)
        if joints.shape != (k, d):
            raise DatasetFormatError(
                f"line {lineno}: joints shape {joints.shape} != header ({k}, {d})"
            )
        if vis.shape != (k,):
            raise DatasetFormatError(
                f"line {lineno}: vis length {vis.shape[0]} != header k={k}"
            )
        poses.append(Pose(joints, vis))
    n_train, n_val, n_test = (int(n) for n in sizes)
    return DatasetSplit(
        skeleton_name=str(header["skeleton"]),
        seed=int(header["seed"]),
        num_joints=k,
        dims=d,
        train=poses[:n_train],
        val=poses[n_train:n_train + n_val],
        test=poses[n_train + n_val:],
    )
