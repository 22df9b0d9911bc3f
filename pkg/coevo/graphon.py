"""
Graphon kernels on [0,1]², uniform partitions, discretization and lifting
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError, PartitionError
from .model import CouplingSpec, FrequencyFamily, FrequencySpec, ModelSpec, torus_distance

logger = logging.getLogger(__name__)

DEFAULT_SUBSAMPLES = 4
DEFAULT_SAMPLE_DENSITY = 257
# sampled slopes above this are treated as a discontinuity
MAX_SAMPLED_SLOPE = 1e6


@dataclass(frozen=True)
class Partition:
    """Cells [(i−1)/n, i/n), the last one closed"""
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise PartitionError(f"partition size must be a positive integer, got {self.n}")

    @property
    def cell_measure(self) -> float:
        return 1.0 / self.n

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) / self.n

    def subsample_points(self, m: int) -> np.ndarray:
        """Composite midpoint nodes, shape (n, m)"""
        if m < 1:
            raise ConfigError(f"quadrature subsamples must be >= 1, got {m}", "numerics.subsamples")
        offsets = (np.arange(m) + 0.5) / m
        return (np.arange(self.n)[:, None] + offsets[None, :]) / self.n

    def cell_of(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise PartitionError(f"point outside [0, 1]: {x}")
        index = np.minimum(np.floor(x * self.n).astype(int), self.n - 1)
        return int(index) if index.ndim == 0 else index


def common_size(n1: int, n2: int) -> int:
    """Smallest uniform partition refining both"""
    return n1 * n2 // math.gcd(n1, n2)


class KernelFamily(Enum):
    CONSTANT = "constant"
    COSINE_SHIFT = "cosine-shift"
    PRODUCT = "product"
    BILINEAR = "bilinear"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class Kernel:
    """Continuous graphon W(x, y) with certified bounds where the family permits"""
    evaluator: Callable = field(compare=False, repr=False)
    family: KernelFamily
    inf_bound: float
    sup_bound: float
    lipschitz: float
    params: Dict[str, float] = field(default_factory=dict, compare=False)

    def evaluate(self, x, y):
        return self.evaluator(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    @classmethod
    def constant(cls, c: float) -> "Kernel":
        c = float(c)
        return cls(lambda x, y: np.full(np.broadcast(x, y).shape, c),
                   KernelFamily.CONSTANT, c, c, 0.0, {"c": c})

    @classmethod
    def cosine_shift(cls, c: float, amplitude: float) -> "Kernel":
        """W(x, y) = c + amplitude·cos(2π(x − y))"""
        c, amplitude = float(c), float(amplitude)
        return cls(lambda x, y: c + amplitude * np.cos(2.0 * math.pi * (x - y)),
                   KernelFamily.COSINE_SHIFT, c - abs(amplitude), c + abs(amplitude),
                   2.0 * math.pi * math.sqrt(2.0) * abs(amplitude),
                   {"c": c, "amplitude": amplitude})

    @classmethod
    def bilinear(cls, c00: float, c10: float = 0.0, c01: float = 0.0, c11: float = 0.0,
                 family: KernelFamily = KernelFamily.BILINEAR) -> "Kernel":
        """W(x, y) = c00 + c10·x + c01·y + c11·x·y"""
        c00, c10, c01, c11 = float(c00), float(c10), float(c01), float(c11)

        def evaluator(x, y):
            return c00 + c10 * x + c01 * y + c11 * x * y

        # extremes of a bilinear function and of its gradient norm sit on corners
        corners = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
        values = [evaluator(x, y) for x, y in corners]
        slopes = [math.hypot(c10 + c11 * y, c01 + c11 * x) for x, y in corners]
        return cls(evaluator, family, min(values), max(values), max(slopes),
                   {"c00": c00, "c10": c10, "c01": c01, "c11": c11})

    @classmethod
    def product(cls, f0: float, f1: float, g0: float, g1: float) -> "Kernel":
        """W(x, y) = (f0 + f1·x)·(g0 + g1·y)"""
        return cls.bilinear(f0 * g0, f1 * g0, f0 * g1, f1 * g1, family=KernelFamily.PRODUCT)

    @classmethod
    def tabulated(cls, table) -> "Kernel":
        """Nodal values on the uniform grid linspace(0, 1, m)², bilinear in between"""
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[0] != table.shape[1] or table.shape[0] < 2:
            raise ConfigError("kernel table must be square with side >= 2", "kernel.table")
        m = table.shape[0]
        nodes = np.linspace(0.0, 1.0, m)
        interpolator = RegularGridInterpolator((nodes, nodes), table, method="linear")

        def evaluator(x, y):
            x, y = np.broadcast_arrays(x, y)
            points = np.stack([x, y], axis=-1).reshape(-1, 2)
            return interpolator(points).reshape(x.shape)

        h = 1.0 / (m - 1)
        slope_x = np.max(np.abs(np.diff(table, axis=0))) / h
        slope_y = np.max(np.abs(np.diff(table, axis=1))) / h
        logger.warning("tabulated kernel: inf/sup taken from the %dx%d grid; "
                       "the source kernel may dip up to Lip*h/2=%.3g below it",
                       m, m, math.hypot(slope_x, slope_y) * h / 2)
        return cls(evaluator, KernelFamily.TABULATED, float(table.min()), float(table.max()),
                   float(math.hypot(slope_x, slope_y)), {"m": m})


@dataclass(frozen=True)
class StepGraphon:
    """Weight field constant on partition rectangles; row i is the fiber density for x in X_i"""
    partition: Partition
    weights: np.ndarray = field(compare=False)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (self.partition.n, self.partition.n):
            raise PartitionError(f"weights shape {weights.shape} does not match n={self.partition.n}")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_matrix(cls, weights) -> "StepGraphon":
        weights = np.asarray(weights, dtype=float)
        return cls(Partition(weights.shape[0]), weights)

    @property
    def n(self) -> int:
        return self.partition.n

    def fiber_masses(self) -> np.ndarray:
        return self.weights.sum(axis=1) / self.n

    def tv_norm(self) -> float:
        """‖η‖* = sup_x total variation of the fiber"""
        return float(np.max(np.abs(self.weights).sum(axis=1)) / self.n)

    def eval_at(self, x, y):
        return self.weights[self.partition.cell_of(x), self.partition.cell_of(y)]

    def refine(self, m: int) -> "StepGraphon":
        return refine(self, m)


@dataclass(frozen=True)
class PhaseField:
    partition: Partition
    phases: np.ndarray = field(compare=False)

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float).ravel()
        if phases.size != self.partition.n:
            raise PartitionError(f"{phases.size} phases for a partition of size {self.partition.n}")
        object.__setattr__(self, "phases", phases)

    @property
    def n(self) -> int:
        return self.partition.n

    def eval_at(self, x):
        return self.phases[self.partition.cell_of(x)]

    def refine(self, m: int) -> "PhaseField":
        if m % self.n:
            raise PartitionError(f"cannot refine n={self.n} to m={m}")
        return PhaseField(Partition(m), np.repeat(self.phases, m // self.n))


@dataclass
class Discretization:
    frequencies: np.ndarray
    phases: PhaseField
    graphon: StepGraphon


def discretize_frequencies(omega: FrequencySpec, p: Partition,
                           m: int = DEFAULT_SUBSAMPLES) -> np.ndarray:
    """Per-cell means n·∫_{X_i} ω(y) dy"""
    if omega.family == FrequencyFamily.CONSTANT:
        return np.full(p.n, omega.value)
    if omega.family == FrequencyFamily.AFFINE:
        return omega.evaluate(p.midpoints)
    return omega.evaluate(p.subsample_points(m)).mean(axis=1)


def discretize_weights_average(k: Kernel, p: Partition, m: int = DEFAULT_SUBSAMPLES) -> StepGraphon:
    """W_ij = n²·∬_{X_i×X_j} W by m×m midpoint quadrature"""
    points = p.subsample_points(m).ravel()
    values = k.evaluate(points[:, None], points[None, :])
    return StepGraphon(p, values.reshape(p.n, m, p.n, m).mean(axis=(1, 3)))


def discretize_weights_sample(k: Kernel, p: Partition) -> StepGraphon:
    """W_ij = W at the midpoint pair of X_i × X_j"""
    mid = p.midpoints
    return StepGraphon(p, k.evaluate(mid[:, None], mid[None, :]))


def discretize_phases(phi0: Callable, p: Partition, m: int = DEFAULT_SUBSAMPLES) -> PhaseField:
    """φ_i = n·∫_{X_i} φ0 on the real lift"""
    values = np.asarray(phi0(p.subsample_points(m)), dtype=float)
    values = np.broadcast_to(values, (p.n, m))
    return PhaseField(p, values.mean(axis=1))


def lift_phases(values, p: Partition) -> PhaseField:
    return PhaseField(p, values)


def refine(g: StepGraphon, m: int) -> StepGraphon:
    """Block replication onto the uniform partition of size m (a multiple of n)"""
    if m < 1 or m % g.n:
        raise PartitionError(f"cannot refine n={g.n} to m={m}: not a multiple")
    if m == g.n:
        return g
    r = m // g.n
    return StepGraphon(Partition(m), np.repeat(np.repeat(g.weights, r, axis=0), r, axis=1))


def discretize(kernel: Kernel, phi0: Callable, omega: FrequencySpec, n: int,
               rule: str = "average", m: int = DEFAULT_SUBSAMPLES) -> Discretization:
    p = Partition(n)
    if rule == "average":
        graphon = discretize_weights_average(kernel, p, m)
    elif rule == "sample":
        graphon = discretize_weights_sample(kernel, p)
    else:
        raise ConfigError(f"unknown weight rule {rule!r}", "numerics.weight_rule")
    return Discretization(discretize_frequencies(omega, p, m), discretize_phases(phi0, p, m), graphon)


def positivity_threshold(H: CouplingSpec, epsilon: float, T: float) -> float:
    """‖H‖∞·(e^{εT} − 1)"""
    return H.sup_norm * math.expm1(epsilon * T)


def berner_horizon_bound(c_W: float, epsilon: float) -> float:
    """(1/ε)·ln(1 + c_W); inf for ε = 0, 0 when c_W <= 0"""
    if c_W <= 0.0:
        return 0.0
    if epsilon == 0.0:
        return math.inf
    return math.log1p(c_W) / epsilon


def _sample_grid(samples: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, samples)


def kernel_sampled_inf(k: Kernel, samples: int = DEFAULT_SAMPLE_DENSITY) -> float:
    grid = _sample_grid(samples)
    return float(np.min(k.evaluate(grid[:, None], grid[None, :])))


def _modulus_1d(values: np.ndarray, stride: int) -> float:
    return float(np.max(np.abs(values[stride:] - values[:-stride]))) if values.size > stride else 0.0


def _modulus_2d(values: np.ndarray, stride: int) -> float:
    return max(float(np.max(np.abs(values[stride:, :] - values[:-stride, :]))),
               float(np.max(np.abs(values[:, stride:] - values[:, :-stride]))))


def initial_sup_error(k: Kernel, g: StepGraphon, samples: int = 1024) -> float:
    """Sampled ‖W^N − W‖∞ on cell-interior points"""
    grid = (np.arange(samples) + 0.5) / samples
    exact = k.evaluate(grid[:, None], grid[None, :])
    cells = g.partition.cell_of(grid)
    return float(np.max(np.abs(exact - g.weights[np.ix_(cells, cells)])))


def phase_sup_error(phi0: Callable, f: PhaseField, samples: int = 4096) -> float:
    """Sampled torus sup distance between φ0 and its lift"""
    grid = (np.arange(samples) + 0.5) / samples
    exact = np.broadcast_to(np.asarray(phi0(grid), dtype=float), grid.shape)
    return float(np.max(torus_distance(exact, f.phases[f.partition.cell_of(grid)])))


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "margin": self.margin, "detail": self.detail}


@dataclass
class AssumptionReport:
    checks: List[AssumptionCheck]
    sample_density: int

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def get(self, name: str) -> Optional[AssumptionCheck]:
        for check in self.checks:
            if check.name == name:
                return check
        return None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "sample_density": self.sample_density,
            "checks": [check.to_dict() for check in self.checks],
        }


def _coupling_check(name: str, spec: CouplingSpec, samples: int) -> AssumptionCheck:
    grid = np.linspace(0.0, 2.0 * math.pi, samples)
    values = spec.evaluate(grid[:, None], grid[None, :])
    h = grid[1] - grid[0]
    observed = _modulus_2d(values, 1) / h
    bound = spec.lipschitz
    passed = bool(np.isfinite(bound) and observed <= bound * (1 + 1e-9) + 1e-12)
    return AssumptionCheck(name, passed, bound - observed,
                           f"Lip bound {bound:.6g}, sampled axis slope {observed:.6g}")


def _continuity_check(name: str, label: str, values: np.ndarray, h: float,
                      modulus: Callable[[np.ndarray, int], float], max_slope: float) -> AssumptionCheck:
    """Sampled slope at spacing h; fails on non-finite values or a slope above max_slope"""
    if not np.all(np.isfinite(values)):
        return AssumptionCheck(name, False, -math.inf, f"{label} has non-finite samples")
    spread = modulus(values, 1)
    slope = spread / h
    return AssumptionCheck(name, bool(slope <= max_slope), max_slope - slope,
                           f"{label} modulus {spread:.3g} at h={h:.3g}, sampled slope {slope:.3g}")


def check_assumptions(k: Kernel, spec: ModelSpec, phi0: Optional[Callable] = None,
                      ns: Sequence[int] = (), samples: int = DEFAULT_SAMPLE_DENSITY,
                      max_slope: float = MAX_SAMPLED_SLOPE) -> AssumptionReport:
    """Validate the well-posedness/positivity assumptions; failures are reported, not raised"""
    checks = [
        _coupling_check("coupling_lipschitz", spec.D, samples),
        _coupling_check("plasticity_lipschitz", spec.H, samples),
    ]

    xs = _sample_grid(4 * (samples - 1) + 1)
    omega_values = np.broadcast_to(spec.omega.evaluate(xs), xs.shape)
    omega_slope = _modulus_1d(omega_values, 1) / (xs[1] - xs[0])
    checks.append(AssumptionCheck(
        "frequency_lipschitz", bool(omega_slope <= spec.omega.lipschitz * (1 + 1e-9) + 1e-12),
        spec.omega.lipschitz - omega_slope,
        f"Lip(omega) {spec.omega.lipschitz:.6g}, sampled slope {omega_slope:.6g}"))

    if phi0 is not None:
        phases = np.broadcast_to(np.asarray(phi0(xs), dtype=float), xs.shape)
        checks.append(_continuity_check("phase_continuity", "phi0", phases, xs[1] - xs[0], _modulus_1d, max_slope))

    grid = _sample_grid(samples)
    values = k.evaluate(grid[:, None], grid[None, :])
    inf_w = min(k.inf_bound, float(np.min(values)))
    threshold = positivity_threshold(spec.H, spec.epsilon, spec.T)
    checks.append(AssumptionCheck(
        "positivity", bool(inf_w >= threshold), inf_w - threshold,
        f"inf W {inf_w:.6g} (analytic {k.inf_bound:.6g}, {samples}x{samples} samples) "
        f"vs threshold {threshold:.6g}"))

    fine_values = k.evaluate(xs[::2][:, None], xs[::2][None, :])
    checks.append(_continuity_check("kernel_continuity", "W", fine_values, xs[2] - xs[0], _modulus_2d, max_slope))

    widths_ok = True
    for n in ns:
        widths = np.diff(Partition(n).edges)
        widths_ok = widths_ok and bool(np.allclose(widths, 1.0 / n, rtol=0, atol=1e-15))
    max_diam = 1.0 / max(ns) if ns else 0.0
    checks.append(AssumptionCheck("uniform_partition", widths_ok, 0.0,
                                  f"uniform cells for n in {list(ns)}, max diam {max_diam:.3g}"))

    report = AssumptionReport(checks, samples)
    for check in checks:
        if not check.passed:
            logger.warning("assumption %s failed: %s", check.name, check.detail)
    return report
