"""
Time integration of the co-evolutionary phase/weight system and its solver oracles
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import BlowUpError, ConfigError, PicardDivergenceError
from .graphon import Partition, PhaseField, StepGraphon
from .metrics import phase_sup_array, tv_rows_array
from .model import CouplingFamily, FrequencyFamily, ModelSpec

logger = logging.getLogger(__name__)


@dataclass
class SystemState:
    t: float
    phases: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=float).ravel()
        self.weights = np.asarray(self.weights, dtype=float)
        n = self.phases.size
        if self.weights.shape != (n, n):
            raise ConfigError(f"weights shape {self.weights.shape} does not match {n} phases", "state.weights")
        if not (np.all(np.isfinite(self.phases)) and np.all(np.isfinite(self.weights))):
            raise ConfigError("state contains non-finite entries", "state")

    @property
    def n(self) -> int:
        return self.phases.size

    @classmethod
    def from_lift(cls, t: float, phases: PhaseField, graphon: StepGraphon) -> "SystemState":
        return cls(t, phases.phases.copy(), graphon.weights.copy())


@dataclass
class Trajectory:
    """Snapshots stacked as arrays: phases (K, n), weights (K, n, n)"""
    model: ModelSpec
    times: np.ndarray
    phases: np.ndarray
    weights: np.ndarray
    frequencies: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ConfigError("snapshot times must be strictly increasing", "trajectory.times")
        if self.times.size and abs(self.times[0] - self.model.t0) > 1e-9 * max(1.0, abs(self.model.t0)):
            raise ConfigError(f"first snapshot at t={self.times[0]:.6g}, model starts at t0={self.model.t0:.6g}",
                              "trajectory.times")

    @property
    def n(self) -> int:
        return self.phases.shape[1]

    def __len__(self) -> int:
        return self.times.size

    def state(self, k: int) -> SystemState:
        return SystemState(float(self.times[k]), self.phases[k], self.weights[k])

    def lifted(self, k: int) -> Tuple[PhaseField, StepGraphon]:
        p = Partition(self.n)
        return PhaseField(p, self.phases[k]), StepGraphon(p, self.weights[k])

    def weight_bound_violations(self, tol: float = 1e-12) -> List[int]:
        """Snapshots breaking max|W(t)| <= max|W(t0)| + ‖H‖∞ or ‖η_t‖* <= ‖η_0‖* + ‖H‖∞"""
        h = self.model.H.sup_norm
        entry_cap = np.max(np.abs(self.weights[0])) + h + tol
        mass_cap = np.max(np.abs(self.weights[0]).sum(axis=1)) / self.n + h + tol
        entries = np.max(np.abs(self.weights), axis=(1, 2))
        masses = np.max(np.abs(self.weights).sum(axis=2), axis=1) / self.n
        return [int(k) for k in np.nonzero((entries > entry_cap) | (masses > mass_cap))[0]]


def rhs(state: SystemState, model: ModelSpec, frequencies: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return _rhs(state.phases, state.weights, model, frequencies)


def _rhs(phases: np.ndarray, weights: np.ndarray, model: ModelSpec,
         frequencies: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    dphases = frequencies + model.D.coupling_sums(weights, phases) / phases.size
    if model.epsilon == 0.0:
        return dphases, np.zeros_like(weights)
    return dphases, -model.epsilon * (weights + model.H.matrix(phases))


def _step_count(model: ModelSpec, dt: float) -> int:
    if not dt > 0.0:
        raise ConfigError(f"dt must be > 0, got {dt}", "numerics.dt")
    steps = int(round(model.T / dt))
    if steps < 1 or abs(steps * dt - model.T) > 1e-9 * max(1.0, model.T):
        raise ConfigError(f"dt={dt} does not divide T={model.T}", "numerics.dt")
    return steps


def _cell_frequencies(model: ModelSpec, n: int, frequencies: Optional[np.ndarray]) -> np.ndarray:
    if frequencies is not None:
        frequencies = np.asarray(frequencies, dtype=float)
        if frequencies.shape != (n,):
            raise ConfigError(f"expected {n} cell frequencies, got shape {frequencies.shape}", "frequencies")
        return frequencies
    if model.omega.family != FrequencyFamily.CONSTANT:
        raise ConfigError("non-constant frequency needs discretized per-cell values", "frequencies")
    return np.full(n, model.omega.value)


def integrate(initial: SystemState, model: ModelSpec, dt: float, sample_stride: int = 1,
              frequencies: Optional[np.ndarray] = None) -> Trajectory:
    """Classical RK4 on phases ⊕ weights with fixed step; snapshots every sample_stride steps and at the end"""
    if sample_stride < 1:
        raise ConfigError(f"sample stride must be >= 1, got {sample_stride}", "numerics.stride")
    steps = _step_count(model, dt)
    frequencies = _cell_frequencies(model, initial.n, frequencies)

    phases = initial.phases.copy()
    weights = initial.weights.copy()
    times, phase_snaps, weight_snaps = [initial.t], [phases.copy()], [weights.copy()]
    half = 0.5 * dt

    logger.debug("integrate: n=%d steps=%d dt=%g stride=%d", initial.n, steps, dt, sample_stride)
    for step in range(1, steps + 1):
        k1p, k1w = _rhs(phases, weights, model, frequencies)
        k2p, k2w = _rhs(phases + half * k1p, weights + half * k1w, model, frequencies)
        k3p, k3w = _rhs(phases + half * k2p, weights + half * k2w, model, frequencies)
        k4p, k4w = _rhs(phases + dt * k3p, weights + dt * k3w, model, frequencies)
        phases = phases + (dt / 6.0) * (k1p + 2.0 * (k2p + k3p) + k4p)
        weights = weights + (dt / 6.0) * (k1w + 2.0 * (k2w + k3w) + k4w)

        t = initial.t + step * dt
        if not (np.all(np.isfinite(phases)) and np.all(np.isfinite(weights))):
            raise BlowUpError(t, step)
        if step % sample_stride == 0 or step == steps:
            times.append(t)
            phase_snaps.append(phases.copy())
            weight_snaps.append(weights.copy())

    return Trajectory(model, np.array(times), np.array(phase_snaps), np.array(weight_snaps), frequencies)


def weights_exact_history(W0: np.ndarray, times: np.ndarray, phase_history: np.ndarray,
                          model: ModelSpec) -> np.ndarray:
    """Integrating-factor weights at every history time, trapezoid in τ"""
    times = np.asarray(times, dtype=float)
    W0 = np.asarray(W0, dtype=float)
    elapsed = times - times[0]
    if model.epsilon == 0.0:
        return np.broadcast_to(W0, (times.size,) + W0.shape).copy()
    forcing = np.array([model.H.matrix(phases) for phases in phase_history])
    growth = np.exp(model.epsilon * elapsed)[:, None, None]
    integral = cumulative_trapezoid(growth * forcing, times, axis=0, initial=0.0)
    return np.exp(-model.epsilon * elapsed)[:, None, None] * (W0[None] - model.epsilon * integral)


def weights_exact_update(W0: np.ndarray, times: np.ndarray, phase_history: np.ndarray,
                         model: ModelSpec) -> np.ndarray:
    """W(t) = e^{−ε(t−t0)}W0 − ε∫ e^{−ε(t−τ)} H(φ_i(τ), φ_j(τ)) dτ at the last history time"""
    return weights_exact_history(W0, times, phase_history, model)[-1]


def sync_manifold_solution(phi0: float, w0: float, model: ModelSpec, t: float) -> Tuple[float, float]:
    """Closed form on the manifold of equal phases and equal weights"""
    if model.D.family != CouplingFamily.SINE_LAG or model.H.family != CouplingFamily.SINE_LAG:
        raise ConfigError("sync-manifold oracle needs sine-lag coupling and plasticity", "model")
    if model.omega.family != FrequencyFamily.CONSTANT:
        raise ConfigError("sync-manifold oracle needs a constant frequency", "model.omega")
    tau = t - model.t0
    s_a = model.D.amplitude * math.sin(model.D.lag)
    s_b = model.H.amplitude * math.sin(model.H.lag)
    eps = model.epsilon
    # (1 − e^{−ετ})/ε with its ε → 0 limit τ
    relax = -math.expm1(-eps * tau) / eps if eps > 0.0 else tau
    w = (w0 + s_b) * math.exp(-eps * tau) - s_b
    phi = phi0 + model.omega.value * tau + s_a * ((w0 + s_b) * relax - s_b * tau)
    return phi, w


def contraction_window(model: ModelSpec, eta0_star: float) -> Tuple[float, float]:
    """(M3, t*) with M3·t* <= 1/2 and ε·t* <= 1/2"""
    sigma = model.H.sup_norm + eta0_star
    m3 = 4.0 * (model.omega.lipschitz + model.D.lipschitz + model.D.sup_norm
                + model.epsilon * (1.0 + model.H.lipschitz)) * (eta0_star + sigma)
    t_star = model.T if m3 == 0.0 else 0.5 / m3
    if model.epsilon > 0.0:
        t_star = min(t_star, 0.5 / model.epsilon)
    return m3, min(t_star, model.T)


def picard_apply(candidate: Trajectory, initial: SystemState, model: ModelSpec,
                 frequencies: Optional[np.ndarray] = None) -> Trajectory:
    """One application of the integral operator on the candidate's time grid"""
    times = candidate.times
    n = candidate.n
    frequencies = _cell_frequencies(model, n, candidate.frequencies if frequencies is None else frequencies)
    phase_rate = np.array([frequencies + model.D.coupling_sums(w, p) / n
                           for p, w in zip(candidate.phases, candidate.weights)])
    phases = initial.phases[None, :] + cumulative_trapezoid(phase_rate, times, axis=0, initial=0.0)
    if model.epsilon == 0.0:
        weights = np.broadcast_to(initial.weights, candidate.weights.shape).copy()
    else:
        weight_rate = np.array([-model.epsilon * (w + model.H.matrix(p))
                                for p, w in zip(candidate.phases, candidate.weights)])
        weights = initial.weights[None] + cumulative_trapezoid(weight_rate, times, axis=0, initial=0.0)
    return Trajectory(model, times.copy(), phases, weights, frequencies)


def _window_distance(a: Trajectory, b: Trajectory) -> float:
    return max(phase_sup_array(a.phases[k], b.phases[k]) + tv_rows_array(a.weights[k], b.weights[k])
               for k in range(len(a)))


@dataclass
class PicardResult:
    trajectory: Trajectory
    m3: float
    window: float
    window_steps: int
    iterations: List[int]

    @property
    def windows(self) -> int:
        return len(self.iterations)


def _iterate_window(state: SystemState, times: np.ndarray, model: ModelSpec, frequencies: np.ndarray,
                    tol: float, max_iter: int) -> Tuple[Optional[Trajectory], int]:
    count = times.size
    model = model.with_interval(float(times[0]), float(times[-1] - times[0]))
    candidate = Trajectory(model, times,
                           np.broadcast_to(state.phases, (count, state.n)).copy(),
                           np.broadcast_to(state.weights, (count,) + state.weights.shape).copy(),
                           frequencies)
    for iteration in range(1, max_iter + 1):
        image = picard_apply(candidate, state, model, frequencies)
        gap = _window_distance(image, candidate)
        candidate = image
        if gap < tol:
            # the last application only confirms the accepted iterate
            return candidate, max(1, iteration - 1)
    return None, max_iter


def picard_solve(initial: SystemState, model: ModelSpec, dt: float, tol: float = 1e-6,
                 max_iter: int = 50, frequencies: Optional[np.ndarray] = None,
                 sample_stride: int = 1) -> PicardResult:
    """Time-marching Picard iteration on windows of length t* chosen from M3"""
    if not tol > 0.0:
        raise ConfigError(f"tol must be > 0, got {tol}", "numerics.tol")
    steps = _step_count(model, dt)
    frequencies = _cell_frequencies(model, initial.n, frequencies)

    eta0_star = float(np.max(np.abs(initial.weights).sum(axis=1)) / initial.n)
    m3, t_star = contraction_window(model, eta0_star)
    window_steps = max(1, int(math.floor(t_star / dt + 1e-9)))
    logger.info("picard: M3=%.4g t*=%.4g -> %d steps per window", m3, t_star, window_steps)

    grid = initial.t + dt * np.arange(steps + 1)
    phases = np.empty((steps + 1, initial.n))
    weights = np.empty((steps + 1, initial.n, initial.n))
    phases[0], weights[0] = initial.phases, initial.weights
    iterations = []
    state = initial
    start = 0
    while start < steps:
        stop = min(start + window_steps, steps)
        window, count = _iterate_window(state, grid[start:stop + 1], model, frequencies, tol, max_iter)
        if window is None:
            shrunk = max(1, window_steps // 2)
            logger.warning("picard: no contraction after %d iterations at t=%.4g, shrinking window to %d steps",
                           max_iter, grid[start], shrunk)
            stop = min(start + shrunk, steps)
            window, count = _iterate_window(state, grid[start:stop + 1], model, frequencies, tol, max_iter)
            if window is None:
                raise PicardDivergenceError(f"no contraction at t={grid[start]:.6g}", m3, shrunk * dt)
        phases[start:stop + 1] = window.phases
        weights[start:stop + 1] = window.weights
        iterations.append(count)
        state = window.state(len(window) - 1)
        start = stop

    keep = [k for k in range(steps + 1) if k % sample_stride == 0 or k == steps]
    trajectory = Trajectory(model, grid[keep], phases[keep], weights[keep], frequencies)
    return PicardResult(trajectory, m3, window_steps * dt, window_steps, iterations)
