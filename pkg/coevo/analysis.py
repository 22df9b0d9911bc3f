"""
Verification experiments: self-convergence, positivity and continuous-dependence envelopes
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .dynamics import SystemState, Trajectory, integrate
from .errors import AssumptionError, ConfigError, PartitionError
from .graphon import (DEFAULT_SUBSAMPLES, Kernel, Partition, berner_horizon_bound, check_assumptions,
                      discretize, discretize_weights_average, discretize_weights_sample,
                      initial_sup_error, phase_sup_error, positivity_threshold)
from .metrics import d_interval_infty, trajectory_distance_series
from .model import ModelSpec

logger = logging.getLogger(__name__)

DEGENERATE_ERROR = 1e-10
ENVELOPE_SLACK = 1e-9


@dataclass
class BoundParams:
    lip_omega: float
    lip_D: float
    lip_H: float
    sup_D: float
    eta_star: float
    epsilon: float

    @property
    def C1(self) -> float:
        return (self.lip_omega + 2.0 * self.lip_D * self.eta_star + 2.0 * self.epsilon * self.lip_H
                + self.epsilon + self.sup_D)

    @classmethod
    def from_model(cls, model: ModelSpec, eta0_star: float) -> "BoundParams":
        """eta_star from the a-priori bound ‖η0‖* + ‖H‖∞"""
        return cls(model.omega.lipschitz, model.D.lipschitz, model.H.lipschitz, model.D.sup_norm,
                   eta0_star + model.H.sup_norm, model.epsilon)

    def to_dict(self) -> dict:
        return {"lip_omega": self.lip_omega, "lip_D": self.lip_D, "lip_H": self.lip_H,
                "sup_D": self.sup_D, "eta_star": self.eta_star, "epsilon": self.epsilon, "C1": self.C1}


@dataclass
class ConvergenceRecord:
    n: int
    dt: float
    error: float
    predicted_bound: Optional[float] = None

    def to_dict(self) -> dict:
        return {"n": self.n, "dt": self.dt, "error": self.error, "predicted_bound": self.predicted_bound}


@dataclass
class ConvergenceReport:
    """Errors are measured against the fine n_ref run, never against an exact solution"""
    model_id: str
    n_ref: int
    dt_ref: float
    stride: int
    records: List[ConvergenceRecord]
    assumptions: Optional[dict] = None

    @property
    def errors(self) -> List[float]:
        return [record.error for record in self.records]

    @property
    def monotone(self) -> bool:
        errors = self.errors
        return all(b < a or (a <= DEGENERATE_ERROR and b <= DEGENERATE_ERROR)
                   for a, b in zip(errors, errors[1:]))

    @property
    def rates(self) -> List[Optional[float]]:
        """Observed order between successive N; None where either error is degenerate"""
        rates = []
        for prev, nxt in zip(self.records, self.records[1:]):
            if prev.error > DEGENERATE_ERROR and nxt.error > DEGENERATE_ERROR:
                rates.append(math.log2(prev.error / nxt.error) / math.log2(nxt.n / prev.n))
            else:
                rates.append(None)
        return rates

    @property
    def rate(self) -> Optional[float]:
        usable = [r for r in self.rates if r is not None]
        return float(np.mean(usable)) if usable else None

    def to_dict(self) -> dict:
        payload = {
            "model": self.model_id,
            "reference": {"n_ref": self.n_ref, "dt_ref": self.dt_ref, "stride": self.stride},
            "error_label": f"d_T_inf vs n_ref={self.n_ref} reference",
            "records": [record.to_dict() for record in self.records],
            "monotone": self.monotone,
            "rates": self.rates,
            "degenerate": [record.n for record in self.records if record.error <= DEGENERATE_ERROR],
        }
        if self.rate is not None:
            payload["rate"] = self.rate
        if self.assumptions is not None:
            payload["assumptions"] = self.assumptions
        return payload


def _initial_state(kernel: Kernel, phi0: Callable, model: ModelSpec, n: int, rule: str, m: int):
    disc = discretize(kernel, phi0, model.omega, n, rule, m)
    return SystemState.from_lift(model.t0, disc.phases, disc.graphon), disc.frequencies


def run_discretized(kernel: Kernel, phi0: Callable, model: ModelSpec, n: int, dt: float, stride: int,
                    rule: str = "average", m: int = DEFAULT_SUBSAMPLES) -> Trajectory:
    """Discretize the continuum data at size n and integrate"""
    state, frequencies = _initial_state(kernel, phi0, model, n, rule, m)
    trajectory = integrate(state, model, dt, stride, frequencies)
    logger.info("run n=%d dt=%g done (%d snapshots)", n, dt, len(trajectory))
    return trajectory


def _snapshot_stride(stride: int, dt_ref: float, dt: float) -> int:
    ratio = stride * dt_ref / dt
    coarse = int(round(ratio))
    if coarse < 1 or abs(coarse - ratio) > 1e-9 * max(1.0, ratio):
        raise ConfigError(f"stride {stride} reference steps is not a whole number of dt={dt} steps",
                          "numerics.stride")
    return coarse


def discretization_error_bound(kernel: Kernel, phi0: Callable, model: ModelSpec, n: int,
                               rule: str = "average", m: int = DEFAULT_SUBSAMPLES,
                               samples: int = 1024) -> float:
    """(‖φ0 − φ0^N‖∞ + ‖η0 − η0^N‖* + T‖ω − ω^N‖∞)·e^{C1·T}, with sampled norms"""
    disc = discretize(kernel, phi0, model.omega, n, rule, m)
    grid = (np.arange(samples) + 0.5) / samples
    cells = disc.graphon.partition.cell_of(grid)
    exact = kernel.evaluate(grid[:, None], grid[None, :])
    tv_error = float(np.max(np.mean(np.abs(exact - disc.graphon.weights[np.ix_(cells, cells)]), axis=1)))
    omega_exact = np.broadcast_to(model.omega.evaluate(grid), grid.shape)
    omega_error = float(np.max(np.abs(omega_exact - disc.frequencies[cells])))
    phase_error = phase_sup_error(phi0, disc.phases, samples)
    eta0_star = float(np.max(np.mean(np.abs(exact), axis=1)))
    c1 = BoundParams.from_model(model, eta0_star).C1
    return (phase_error + tv_error + model.T * omega_error) * math.exp(c1 * model.T)


def self_convergence_study(kernel: Kernel, phi0: Callable, model: ModelSpec, ns: Sequence[int], n_ref: int,
                           dt: float, dt_ref: float, stride: int, rule: str = "average",
                           m: int = DEFAULT_SUBSAMPLES, workers: int = 1,
                           with_bounds: bool = False) -> ConvergenceReport:
    """Integrate at each n and at n_ref, compare lifted runs on shared snapshots"""
    ns = sorted(int(n) for n in ns)
    if not ns:
        raise ConfigError("at least one partition size is required", "numerics.ns")
    if len(set(ns)) != len(ns):
        raise ConfigError(f"partition sizes must be distinct: {ns}", "numerics.ns")
    for n in ns:
        if n < 1 or n_ref % n:
            raise PartitionError(f"n={n} does not divide n_ref={n_ref}")
    if not dt_ref <= dt / 4.0 * (1 + 1e-12):
        raise ConfigError(f"dt_ref={dt_ref} must be <= dt/4={dt / 4}", "numerics.dt_ref")
    coarse_stride = _snapshot_stride(stride, dt_ref, dt)

    report = check_assumptions(kernel, model, phi0, list(ns) + [n_ref])
    if not report.passed:
        raise AssumptionError(report)

    logger.info("convergence study: ns=%s n_ref=%d dt=%g dt_ref=%g workers=%d", ns, n_ref, dt, dt_ref, workers)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        reference_future = pool.submit(run_discretized, kernel, phi0, model, n_ref, dt_ref, stride, rule, m)
        futures: Dict[int, object] = {
            n: pool.submit(run_discretized, kernel, phi0, model, n, dt, coarse_stride, rule, m)
            for n in ns if n != n_ref
        }
        reference = reference_future.result()
        runs = {n: future.result() for n, future in futures.items()}

    records = []
    for n in ns:
        if n == n_ref:
            records.append(ConvergenceRecord(n, dt_ref, 0.0))
            continue
        error = d_interval_infty(runs[n], reference)
        bound = discretization_error_bound(kernel, phi0, model, n, rule, m) if with_bounds else None
        records.append(ConvergenceRecord(n, dt, error, bound))
        logger.info("n=%d error=%.6g", n, error)

    return ConvergenceReport(model.name, n_ref, dt_ref, stride, records, report.to_dict())


@dataclass
class ConsistencyReport:
    ns: List[int]
    sup_errors: List[float]

    @property
    def non_increasing(self) -> bool:
        return all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(self.sup_errors, self.sup_errors[1:]))

    def to_dict(self) -> dict:
        return {"ns": self.ns, "sup_errors": self.sup_errors, "non_increasing": self.non_increasing}


def initial_consistency_study(kernel: Kernel, ns: Sequence[int], rule: str = "average",
                              m: int = DEFAULT_SUBSAMPLES, samples: int = 1024) -> ConsistencyReport:
    """Sampled ‖W^N(t0) − W‖∞ for each N; tends to zero for continuous kernels"""
    ns = sorted(int(n) for n in ns)
    errors = []
    for n in ns:
        p = Partition(n)
        g = discretize_weights_average(kernel, p, m) if rule == "average" else discretize_weights_sample(kernel, p)
        errors.append(initial_sup_error(kernel, g, samples))
    return ConsistencyReport(ns, errors)


@dataclass
class PositivityReport:
    inf_initial: float
    threshold: float
    condition_held: bool
    min_weight: float
    horizon_bound: float
    bound_violations: List[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """The positivity claim only binds when its sufficient condition held"""
        return (not self.condition_held or self.min_weight > 0.0) and not self.bound_violations

    def to_dict(self) -> dict:
        return {
            "inf_initial": self.inf_initial,
            "threshold": self.threshold,
            "condition_held": self.condition_held,
            "min_weight": self.min_weight,
            "horizon_bound": self.horizon_bound if math.isfinite(self.horizon_bound) else None,
            "bound_violations": self.bound_violations,
            "passed": self.passed,
        }


def positivity_monitor(tr: Trajectory, model: ModelSpec) -> PositivityReport:
    inf_initial = float(np.min(tr.weights[0]))
    threshold = positivity_threshold(model.H, model.epsilon, model.T)
    h = model.H.sup_norm
    horizon = berner_horizon_bound(inf_initial / h, model.epsilon) if h > 0.0 else math.inf
    report = PositivityReport(inf_initial, threshold, inf_initial >= threshold,
                              float(np.min(tr.weights)), horizon, tr.weight_bound_violations())
    if not report.passed:
        logger.warning("positivity monitor failed: min weight %.6g, violations %s",
                       report.min_weight, report.bound_violations)
    return report


@dataclass
class EnvelopeReport:
    times: List[float]
    distances: List[float]
    envelope: List[float]
    slack: float

    @property
    def passed(self) -> bool:
        return all(d <= e * (1.0 + self.slack) for d, e in zip(self.distances, self.envelope))

    @property
    def tightest_margin(self) -> float:
        """Smallest relative headroom 1 − d/envelope over snapshots with a positive envelope"""
        margins = [1.0 - d / e for d, e in zip(self.distances, self.envelope) if e > 0.0]
        return min(margins) if margins else 0.0

    def to_dict(self) -> dict:
        return {"times": self.times, "distances": self.distances, "envelope": self.envelope,
                "slack": self.slack, "passed": self.passed, "tightest_margin": self.tightest_margin}


def _envelope_report(base: Trajectory, other: Trajectory, scale: float, c1: float, slack: float) -> EnvelopeReport:
    series = trajectory_distance_series(base, other)
    elapsed = base.times - base.times[0]
    envelope = scale * np.exp(c1 * elapsed)
    report = EnvelopeReport([float(t) for t in base.times], [d.total for d in series],
                            [float(e) for e in envelope], slack)
    if not report.passed:
        logger.warning("envelope violated; tightest margin %.3g", report.tightest_margin)
    return report


def gronwall_ic_check(base: Trajectory, perturbed: Trajectory, bounds: BoundParams,
                      slack: float = ENVELOPE_SLACK) -> EnvelopeReport:
    """d∞(t) <= d∞(t0)·e^{C1(t−t0)}"""
    initial = trajectory_distance_series(base, perturbed)[0].total
    return _envelope_report(base, perturbed, initial, bounds.C1, slack)


def gronwall_omega_check(tr1: Trajectory, tr2: Trajectory, bounds: BoundParams, T: float,
                         slack: float = ENVELOPE_SLACK) -> EnvelopeReport:
    """d∞(t) <= T·‖ω − ω̃‖∞·e^{C1(t−t0)}"""
    gap = tr1.model.omega.sup_distance(tr2.model.omega)
    return _envelope_report(tr1, tr2, T * gap, bounds.C1, slack)
