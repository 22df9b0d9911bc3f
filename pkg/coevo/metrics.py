"""
Distances between lifted states and trajectories, plus the Kuramoto order parameter
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import PartitionError
from .graphon import PhaseField, StepGraphon, common_size, refine
from .model import torus_distance, wrap

logger = logging.getLogger(__name__)

TIME_SLACK = 1e-9


@dataclass(frozen=True)
class DistanceBreakdown:
    phase_part: float
    weight_part: float

    @property
    def total(self) -> float:
        return self.phase_part + self.weight_part

    def to_dict(self) -> dict:
        return {"phase": self.phase_part, "weight": self.weight_part, "total": self.total}


def phase_sup_array(a: np.ndarray, b: np.ndarray) -> float:
    """Max torus distance between equal-length phase arrays"""
    if a.size == 0:
        return 0.0
    return float(np.max(torus_distance(a, b)))


def tv_rows_array(w1: np.ndarray, w2: np.ndarray) -> float:
    """max_i (1/m)·Σ_j |ΔW_ij| for same-size step densities"""
    diff = np.abs(np.asarray(w1, dtype=float) - np.asarray(w2, dtype=float))
    m = diff.shape[-1]
    # correctly rounded row sums, so block replication by 2^k leaves the value bit-identical
    return max(math.fsum(row) for row in diff.reshape(-1, m)) / m


def phase_sup_distance(f: PhaseField, g: PhaseField) -> float:
    m = common_size(f.n, g.n)
    return phase_sup_array(f.refine(m).phases, g.refine(m).phases)


def tv_step_distance(g1: StepGraphon, g2: StepGraphon) -> float:
    m = common_size(g1.n, g2.n)
    return tv_rows_array(refine(g1, m).weights, refine(g2, m).weights)


def d_infty(a: Tuple[PhaseField, StepGraphon], b: Tuple[PhaseField, StepGraphon]) -> DistanceBreakdown:
    return DistanceBreakdown(phase_sup_distance(a[0], b[0]), tv_step_distance(a[1], b[1]))


def trajectory_distance_series(tr1, tr2) -> List[DistanceBreakdown]:
    """Per-snapshot d∞ between two trajectories on the same snapshot schedule"""
    if len(tr1.times) != len(tr2.times):
        raise PartitionError(f"snapshot counts differ: {len(tr1.times)} vs {len(tr2.times)}")
    scale = max(1.0, float(np.max(np.abs(tr1.times))))
    if not np.allclose(tr1.times, tr2.times, rtol=0.0, atol=TIME_SLACK * scale):
        raise PartitionError("snapshot times differ beyond rounding slack")

    m = common_size(tr1.n, tr2.n)
    series = []
    for k in range(len(tr1.times)):
        phases1 = np.repeat(tr1.phases[k], m // tr1.n)
        phases2 = np.repeat(tr2.phases[k], m // tr2.n)
        w1 = refine(StepGraphon.from_matrix(tr1.weights[k]), m).weights
        w2 = refine(StepGraphon.from_matrix(tr2.weights[k]), m).weights
        series.append(DistanceBreakdown(phase_sup_array(phases1, phases2), tv_rows_array(w1, w2)))
    return series


def d_interval_infty(tr1, tr2) -> float:
    """Time-uniform distance: max over shared snapshots of d∞"""
    return max(d.total for d in trajectory_distance_series(tr1, tr2))


def order_parameter(phases) -> Tuple[float, float]:
    """r·e^{iψ} = mean of e^{iφ_j}"""
    z = np.mean(np.exp(1j * np.asarray(phases, dtype=float)))
    return min(1.0, float(np.abs(z))), float(wrap(np.angle(z)))


def order_parameter_series(phases: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Order parameter for each row of a (snapshots, n) phase array"""
    z = np.mean(np.exp(1j * np.asarray(phases, dtype=float)), axis=1)
    return np.minimum(1.0, np.abs(z)), wrap(np.angle(z))
