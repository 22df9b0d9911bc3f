"""
Save and load trajectories, kernels and reports
"""

import json
import logging
import math
import os
from typing import Tuple

import numpy as np

from .dynamics import Trajectory
from .errors import ConfigError
from .graphon import StepGraphon
from .metrics import order_parameter_series
from .model import ModelSpec

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _ensure_parent(path: str):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


class SaveLoadSystem:
    @staticmethod
    def trajectory_header(n: int, include_weights: bool) -> list:
        columns = ["t"] + [f"phi_{i}" for i in range(n)]
        if include_weights:
            columns += [f"w_{i}{j}" if n <= 10 else f"w_{i}_{j}" for i in range(n) for j in range(n)]
        return columns

    @staticmethod
    def save_trajectory(trajectory: Trajectory, path: str, include_weights: bool = True) -> Tuple[bool, str]:
        """Write t, phi_0..phi_{n-1}[, w_00..] with 17 significant digits"""
        try:
            _ensure_parent(path)
            columns = [trajectory.times[:, None], trajectory.phases]
            if include_weights:
                columns.append(trajectory.weights.reshape(len(trajectory), -1))
            data = np.hstack(columns)
            header = ",".join(SaveLoadSystem.trajectory_header(trajectory.n, include_weights))
            np.savetxt(path, data, delimiter=",", fmt=FLOAT_FORMAT, header=header, comments="")
            return True, f"Trajectory saved to {path}"
        except OSError as e:
            return False, f"Failed to save trajectory: {e}"

    @staticmethod
    def load_trajectory(path: str, model: ModelSpec) -> Trajectory:
        with open(path, "r") as f:
            header = f.readline().strip().split(",")
        if not header or header[0] != "t":
            raise ConfigError(f"{path} is not a trajectory CSV", "trajectory")
        n = sum(1 for name in header if name.startswith("phi_"))
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        times = data[:, 0]
        phases = data[:, 1:1 + n]
        if data.shape[1] == 1 + n + n * n:
            weights = data[:, 1 + n:].reshape(-1, n, n)
        elif data.shape[1] == 1 + n:
            # phases-only export; weights are unknown
            weights = np.full((times.size, n, n), np.nan)
        else:
            raise ConfigError(f"{path}: {data.shape[1]} columns do not fit n={n}", "trajectory")
        return Trajectory(model, times, phases, weights)

    @staticmethod
    def save_order_parameter(trajectory: Trajectory, path: str) -> Tuple[bool, str]:
        try:
            _ensure_parent(path)
            r, psi = order_parameter_series(trajectory.phases)
            data = np.column_stack([trajectory.times, r, psi])
            np.savetxt(path, data, delimiter=",", fmt=FLOAT_FORMAT, header="t,r,psi", comments="")
            return True, f"Order parameter saved to {path}"
        except OSError as e:
            return False, f"Failed to save order parameter: {e}"

    @staticmethod
    def save_kernel(graphon: StepGraphon, path: str) -> Tuple[bool, str]:
        """Header line n, then n rows of n values"""
        try:
            _ensure_parent(path)
            np.savetxt(path, graphon.weights, delimiter=",", fmt=FLOAT_FORMAT,
                       header=str(graphon.n), comments="")
            return True, f"Kernel saved to {path}"
        except OSError as e:
            return False, f"Failed to save kernel: {e}"

    @staticmethod
    def load_kernel_table(path: str) -> np.ndarray:
        try:
            with open(path, "r") as f:
                n = int(f.readline().strip())
            table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read kernel CSV {path}: {e}", "kernel.csv") from e
        if table.shape != (n, n):
            raise ConfigError(f"{path}: header says n={n} but found shape {table.shape}", "kernel.csv")
        return table

    @staticmethod
    def save_report(payload: dict, path: str) -> Tuple[bool, str]:
        try:
            _ensure_parent(path)
            with open(path, "w") as f:
                json.dump(_clean(payload), f, indent=2, sort_keys=True)
            return True, f"Report saved to {path}"
        except (OSError, TypeError) as e:
            return False, f"Failed to save report: {e}"

    @staticmethod
    def save_convergence_table(records, path: str) -> Tuple[bool, str]:
        try:
            _ensure_parent(path)
            data = np.array([[record.n, record.error] for record in records], dtype=float)
            np.savetxt(path, data, delimiter=",", fmt=["%d", FLOAT_FORMAT], header="n,error", comments="")
            return True, f"Convergence table saved to {path}"
        except OSError as e:
            return False, f"Failed to save convergence table: {e}"


def load_kernel_csv(path: str) -> StepGraphon:
    return StepGraphon.from_matrix(SaveLoadSystem.load_kernel_table(path))


def load_trajectory_csv(path: str, model: ModelSpec) -> Trajectory:
    return SaveLoadSystem.load_trajectory(path, model)
