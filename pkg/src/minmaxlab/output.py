"""CSV/JSON artifact writers: 17-significant-digit floats, '.' decimal, lossless round-trip."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from .core import Trajectory
from .dynamics import FlowPath


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


def coordinate_names(d1: int, d2: int) -> list:
    if d1 == 1 and d2 == 1:
        return ["x", "y"]
    return [f"x{i + 1}" for i in range(d1)] + [f"y{j + 1}" for j in range(d2)]


def write_trajectory_csv(path: Union[str, Path], traj: Trajectory) -> Path:
    """Header n,tau,<coords>; n is the recorded iteration index."""
    path = Path(path)
    names = coordinate_names(traj.d1, traj.d2)
    lines = ["n,tau," + ",".join(names)]
    for k in range(len(traj.iterates)):
        row = [str(int(traj.indices[k])), fmt17(traj.effective_times[k])]
        row += [fmt17(v) for v in traj.iterates[k]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_flow_csv(path: Union[str, Path], flow: FlowPath, d1: int = 1, d2: int = 1) -> Path:
    """Same layout as trajectories with n replaced by the sample index."""
    path = Path(path)
    names = coordinate_names(d1, d2)
    lines = ["n,tau," + ",".join(names)]
    for k in range(len(flow.times)):
        row = [str(k), fmt17(flow.times[k])]
        row += [fmt17(v) for v in flow.states[k]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_trajectory_csv(path: Union[str, Path]) -> dict:
    """Parse a trajectory/flow CSV back into arrays (lossless for our writer)."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    if header[:2] != ["n", "tau"]:
        raise ValueError(f"unexpected CSV header {header!r}")
    n, tau, coords = [], [], []
    for line in lines[1:]:
        parts = line.split(",")
        n.append(int(parts[0]))
        tau.append(float(parts[1]))
        coords.append([float(v) for v in parts[2:]])
    return {"n": np.array(n), "tau": np.array(tau),
            "coords": np.array(coords), "columns": header[2:]}


def write_json(path: Union[str, Path], payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_pyify(payload), indent=2, sort_keys=True) + "\n")
    return path


def _pyify(obj):
    if isinstance(obj, dict):
        return {str(k): _pyify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pyify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_pyify(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):  # before int: bool is an int subclass
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj
