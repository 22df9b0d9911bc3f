"""
Model ingredients: torus arithmetic, coupling/plasticity functions and frequencies
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


def wrap(value):
    """Canonical representative in [0, 2π)"""
    return np.mod(value, TWO_PI)


def torus_distance(u, v):
    """Geodesic distance on the circle, works elementwise on arrays"""
    diff = np.mod(np.asarray(u, dtype=float) - np.asarray(v, dtype=float), TWO_PI)
    return np.minimum(diff, TWO_PI - diff)


class CouplingFamily(Enum):
    SINE_LAG = "sine-lag"
    TABULATED = "tabulated"


class FrequencyFamily(Enum):
    CONSTANT = "constant"
    AFFINE = "affine"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class CouplingSpec:
    """A Lipschitz function on the 2-torus, used for both D and H"""
    family: CouplingFamily = CouplingFamily.SINE_LAG
    amplitude: float = 1.0
    lag: float = 0.0
    table: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family == CouplingFamily.TABULATED:
            if self.table is None:
                raise ConfigError("tabulated coupling needs a table", "coupling.table")
            table = np.asarray(self.table, dtype=float)
            if table.ndim != 2 or table.shape[0] != table.shape[1] or table.shape[0] < 2:
                raise ConfigError("coupling table must be square with side >= 2", "coupling.table")
            object.__setattr__(self, "table", table)

    @classmethod
    def sine_lag(cls, amplitude: float = 1.0, lag: float = 0.0) -> "CouplingSpec":
        return cls(CouplingFamily.SINE_LAG, float(amplitude), float(lag))

    @classmethod
    def tabulated(cls, table) -> "CouplingSpec":
        """Values on the uniform grid u_k = 2πk/m, v_l = 2πl/m (periodic)"""
        return cls(CouplingFamily.TABULATED, table=np.asarray(table, dtype=float))

    @property
    def sup_norm(self) -> float:
        if self.family == CouplingFamily.SINE_LAG:
            return abs(self.amplitude)
        # bilinear interpolation never leaves the range of the nodes
        return float(np.max(np.abs(self.table)))

    @property
    def lipschitz(self) -> float:
        if self.family == CouplingFamily.SINE_LAG:
            return math.sqrt(2.0) * abs(self.amplitude)
        h = TWO_PI / self.table.shape[0]
        closed = np.pad(self.table, ((0, 1), (0, 1)), mode="wrap")
        slope_u = np.max(np.abs(np.diff(closed, axis=0))) / h
        slope_v = np.max(np.abs(np.diff(closed, axis=1))) / h
        return float(math.hypot(slope_u, slope_v))

    def _interpolator(self) -> RegularGridInterpolator:
        m = self.table.shape[0]
        nodes = np.linspace(0.0, TWO_PI, m + 1)
        closed = np.pad(self.table, ((0, 1), (0, 1)), mode="wrap")
        return RegularGridInterpolator((nodes, nodes), closed, method="linear")

    def evaluate(self, u, v):
        if self.family == CouplingFamily.SINE_LAG:
            return self.amplitude * np.sin(np.asarray(u) - np.asarray(v) + self.lag)
        u, v = np.broadcast_arrays(wrap(np.asarray(u, dtype=float)), wrap(np.asarray(v, dtype=float)))
        points = np.stack([u, v], axis=-1)
        values = self._interpolator()(points.reshape(-1, 2)).reshape(u.shape)
        return values if values.ndim else float(values)

    def matrix(self, phases: np.ndarray) -> np.ndarray:
        """n×n matrix of values at (φ_i, φ_j)"""
        phases = np.asarray(phases, dtype=float)
        if self.family == CouplingFamily.SINE_LAG:
            shifted = phases + self.lag
            return self.amplitude * (np.outer(np.sin(shifted), np.cos(phases))
                                     - np.outer(np.cos(shifted), np.sin(phases)))
        return self.evaluate(phases[:, None], phases[None, :])

    def coupling_sums(self, weights: np.ndarray, phases: np.ndarray) -> np.ndarray:
        """Row sums Σ_j W_ij·f(φ_i, φ_j) without forming the n×n value matrix for sine-lag"""
        if self.family == CouplingFamily.SINE_LAG:
            shifted = phases + self.lag
            return self.amplitude * (np.sin(shifted) * (weights @ np.cos(phases))
                                     - np.cos(shifted) * (weights @ np.sin(phases)))
        return np.sum(weights * self.matrix(phases), axis=1)


@dataclass(frozen=True)
class FrequencySpec:
    """Intrinsic frequency ω(x); independent of phase and time for every family here"""
    family: FrequencyFamily = FrequencyFamily.CONSTANT
    value: float = 0.0
    slope: float = 0.0
    table: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family == FrequencyFamily.TABULATED:
            if self.table is None or np.asarray(self.table).size < 2:
                raise ConfigError("tabulated frequency needs at least two nodes", "omega.table")
            object.__setattr__(self, "table", np.asarray(self.table, dtype=float).ravel())

    @classmethod
    def constant(cls, value: float) -> "FrequencySpec":
        return cls(FrequencyFamily.CONSTANT, value=float(value))

    @classmethod
    def affine(cls, intercept: float, slope: float) -> "FrequencySpec":
        """ω(x) = intercept + slope·x"""
        return cls(FrequencyFamily.AFFINE, value=float(intercept), slope=float(slope))

    @classmethod
    def tabulated(cls, values) -> "FrequencySpec":
        """Nodal values on a uniform grid of [0, 1], linearly interpolated"""
        return cls(FrequencyFamily.TABULATED, table=np.asarray(values, dtype=float))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == FrequencyFamily.CONSTANT:
            return np.full_like(x, self.value) if x.ndim else self.value
        if self.family == FrequencyFamily.AFFINE:
            return self.value + self.slope * x
        nodes = np.linspace(0.0, 1.0, self.table.size)
        return np.interp(x, nodes, self.table)

    def shifted(self, delta: float) -> "FrequencySpec":
        """Same frequency plus a constant offset"""
        if self.family == FrequencyFamily.TABULATED:
            return FrequencySpec.tabulated(self.table + delta)
        return FrequencySpec(self.family, value=self.value + delta, slope=self.slope)

    @property
    def lipschitz(self) -> float:
        if self.family == FrequencyFamily.CONSTANT:
            return 0.0
        if self.family == FrequencyFamily.AFFINE:
            return abs(self.slope)
        return float(np.max(np.abs(np.diff(self.table))) * (self.table.size - 1))

    @property
    def sup_norm(self) -> float:
        if self.family == FrequencyFamily.CONSTANT:
            return abs(self.value)
        if self.family == FrequencyFamily.AFFINE:
            return max(abs(self.value), abs(self.value + self.slope))
        return float(np.max(np.abs(self.table)))

    def sup_distance(self, other: "FrequencySpec", samples: int = 4097) -> float:
        """‖ω − ω̃‖∞ over [0, 1]; exact for piecewise-linear pairs on the sample grid"""
        grid = np.linspace(0.0, 1.0, samples)
        if self.family == FrequencyFamily.TABULATED:
            grid = np.union1d(grid, np.linspace(0.0, 1.0, self.table.size))
        if other.family == FrequencyFamily.TABULATED:
            grid = np.union1d(grid, np.linspace(0.0, 1.0, other.table.size))
        return float(np.max(np.abs(self.evaluate(grid) - other.evaluate(grid))))


@dataclass(frozen=True)
class ModelSpec:
    D: CouplingSpec
    H: CouplingSpec
    omega: FrequencySpec
    epsilon: float = 0.0
    t0: float = 0.0
    T: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if not self.epsilon >= 0.0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}", "model.epsilon")
        if not self.T > 0.0:
            raise ConfigError(f"T must be > 0, got {self.T}", "model.T")

    @property
    def t_end(self) -> float:
        return self.t0 + self.T

    def with_interval(self, t0: float, T: float) -> "ModelSpec":
        return ModelSpec(self.D, self.H, self.omega, self.epsilon, t0, T, self.name)

    def with_omega(self, omega: FrequencySpec) -> "ModelSpec":
        return ModelSpec(self.D, self.H, omega, self.epsilon, self.t0, self.T, self.name)


PRESET_LAGS = {
    "hebbian": 0.0,
    "stdp": -math.pi / 2,
}


def make_berner(omega0: float, a: float, b: float, epsilon: float,
                t0: float = 0.0, T: float = 1.0) -> ModelSpec:
    """D(u,v) = sin(u−v+a), H(u,v) = sin(u−v+b), constant ω"""
    return ModelSpec(
        D=CouplingSpec.sine_lag(1.0, a),
        H=CouplingSpec.sine_lag(1.0, b),
        omega=FrequencySpec.constant(omega0),
        epsilon=float(epsilon),
        t0=float(t0),
        T=float(T),
        name="berner",
    )


def make_preset(preset: str, omega0: float, a: float, epsilon: float,
                t0: float = 0.0, T: float = 1.0) -> ModelSpec:
    """Plasticity presets: hebbian (b=0), stdp (b=−π/2)"""
    if preset not in PRESET_LAGS:
        raise ConfigError(f"unknown preset {preset!r}, expected one of {sorted(PRESET_LAGS)}", "model.preset")
    spec = make_berner(omega0, a, PRESET_LAGS[preset], epsilon, t0, T)
    logger.debug("preset %s -> lag b=%.6g", preset, spec.H.lag)
    return ModelSpec(spec.D, spec.H, spec.omega, spec.epsilon, spec.t0, spec.T, f"berner-{preset}")


def eval_coupling(spec: CouplingSpec, u, v):
    return spec.evaluate(u, v)
