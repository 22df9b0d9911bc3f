"""
Run configuration: JSON manifest blocks, validation and command-line overrides
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np

from .errors import ConfigError
from .graphon import DEFAULT_SUBSAMPLES, Kernel
from .model import PRESET_LAGS, CouplingSpec, FrequencySpec, ModelSpec, make_berner
from .save_load import SaveLoadSystem

logger = logging.getLogger(__name__)


def _number(block: dict, key: str, default, prefix: str) -> float:
    value = block.get(key, default)
    if value is None:
        raise ConfigError("missing value", f"{prefix}.{key}")
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", f"{prefix}.{key}")
    if not math.isfinite(value):
        raise ConfigError("must be finite", f"{prefix}.{key}")
    return value


def _integer(block: dict, key: str, default, prefix: str) -> int:
    value = _number(block, key, default, prefix)
    if value != int(value):
        raise ConfigError(f"expected an integer, got {value}", f"{prefix}.{key}")
    return int(value)


def _existing(path: str, where: str, base_dir: str) -> str:
    resolved = path if os.path.isabs(path) else os.path.join(base_dir, path)
    if not os.path.exists(resolved):
        raise ConfigError(f"file not found: {resolved}", where)
    return resolved


@dataclass(frozen=True)
class ModelConfig:
    omega0: float = 1.0
    a: float = 0.0
    b: float = 0.0
    epsilon: float = 0.05
    t0: float = 0.0
    T: float = 1.0
    preset: Optional[str] = None
    omega_slope: float = 0.0
    omega_table: Optional[List[float]] = None
    D_amplitude: float = 1.0
    H_amplitude: float = 1.0
    D_table: Optional[str] = None
    H_table: Optional[str] = None

    def build(self) -> ModelSpec:
        b = PRESET_LAGS[self.preset] if self.preset else self.b
        spec = make_berner(self.omega0, self.a, b, self.epsilon, self.t0, self.T)
        D = CouplingSpec.sine_lag(self.D_amplitude, self.a)
        H = CouplingSpec.sine_lag(self.H_amplitude, b)
        if self.D_table:
            D = CouplingSpec.tabulated(_load_table(self.D_table, "model.D.csv"))
        if self.H_table:
            H = CouplingSpec.tabulated(_load_table(self.H_table, "model.H.csv"))
        omega = spec.omega
        if self.omega_table is not None:
            omega = FrequencySpec.tabulated(self.omega_table)
        elif self.omega_slope:
            omega = FrequencySpec.affine(self.omega0, self.omega_slope)
        name = f"berner-{self.preset}" if self.preset else spec.name
        custom = bool(self.D_table or self.H_table or self.omega_table is not None or self.omega_slope
                      or self.D_amplitude != 1.0 or self.H_amplitude != 1.0)
        return ModelSpec(D, H, omega, self.epsilon, self.t0, self.T, "custom" if custom else name)


def _load_table(path: str, where: str) -> np.ndarray:
    table = SaveLoadSystem.load_kernel_table(path)
    logger.debug("%s: loaded %dx%d table from %s", where, table.shape[0], table.shape[1], path)
    return table


@dataclass(frozen=True)
class KernelConfig:
    family: str = "constant"
    params: Dict[str, float] = field(default_factory=lambda: {"c": 1.0})
    csv: Optional[str] = None

    def build(self) -> Kernel:
        p = self.params
        if self.family == "constant":
            return Kernel.constant(p.get("c", 1.0))
        if self.family == "cosine-shift":
            return Kernel.cosine_shift(p.get("c", 1.0), p.get("amplitude", 0.5))
        if self.family == "product":
            return Kernel.product(p.get("f0", 1.0), p.get("f1", 0.0), p.get("g0", 1.0), p.get("g1", 0.0))
        if self.family == "bilinear":
            return Kernel.bilinear(p.get("c00", 0.0), p.get("c10", 0.0), p.get("c01", 0.0), p.get("c11", 0.0))
        if self.family == "tabulated":
            return Kernel.tabulated(_load_table(self.csv, "kernel.csv"))
        raise ConfigError(f"unknown kernel family {self.family!r}", "kernel.family")


@dataclass(frozen=True)
class PhaseConfig:
    """φ0 families: constant, linear (offset + slope·x), sine (offset + amplitude·sin(2π·k·x))

    A non-zero perturbation δ adds δ·sin(2πx) on top of the family.
    """
    family: str = "constant"
    params: Dict[str, float] = field(default_factory=lambda: {"value": 0.0})
    perturbation: float = 0.0

    def build(self) -> Callable:
        base = self._base()
        if not self.perturbation:
            return base
        delta = self.perturbation
        return lambda x: base(x) + delta * np.sin(2.0 * math.pi * np.asarray(x, dtype=float))

    def _base(self) -> Callable:
        p = dict(self.params)
        if self.family == "constant":
            value = float(p.get("value", 0.0))
            return lambda x: np.full(np.shape(x), value)
        if self.family == "linear":
            offset, slope = float(p.get("offset", 0.0)), float(p.get("slope", 2.0 * math.pi))
            return lambda x: offset + slope * np.asarray(x, dtype=float)
        if self.family == "sine":
            offset, amplitude, k = float(p.get("offset", 0.0)), float(p.get("amplitude", 1.0)), float(p.get("k", 1.0))
            return lambda x: offset + amplitude * np.sin(2.0 * math.pi * k * np.asarray(x, dtype=float))
        raise ConfigError(f"unknown initial-phase family {self.family!r}", "initial_phase.family")


@dataclass(frozen=True)
class NumericsConfig:
    n: int = 16
    ns: List[int] = field(default_factory=list)
    n_ref: int = 64
    dt: float = 1e-3
    dt_ref: float = 2.5e-4
    stride: int = 100
    subsamples: int = DEFAULT_SUBSAMPLES
    weight_rule: str = "average"
    tol: float = 1e-6
    max_iter: int = 50
    workers: int = 1
    oracle_tol: float = 1e-6
    picard_tol: float = 1e-5
    exact_update_tol: float = 1e-6
    picard_max_n: int = 64
    picard_max_T: float = 2.0
    frozen_phases: bool = False


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    trajectory: bool = True
    weights: bool = True
    order_parameter: bool = True
    reports: bool = True


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    initial_phase: PhaseConfig = field(default_factory=PhaseConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self, require_ns: bool = False) -> "RunConfig":
        m, num = self.model, self.numerics
        if m.epsilon < 0.0:
            raise ConfigError(f"must be >= 0, got {m.epsilon}", "model.epsilon")
        if m.T <= 0.0:
            raise ConfigError(f"must be > 0, got {m.T}", "model.T")
        if m.preset is not None and m.preset not in PRESET_LAGS:
            raise ConfigError(f"unknown preset {m.preset!r}", "model.preset")
        for name in ("dt", "dt_ref", "tol"):
            if getattr(num, name) <= 0.0:
                raise ConfigError(f"must be > 0, got {getattr(num, name)}", f"numerics.{name}")
        for name in ("n", "n_ref", "stride", "subsamples", "max_iter", "workers"):
            if getattr(num, name) < 1:
                raise ConfigError(f"must be >= 1, got {getattr(num, name)}", f"numerics.{name}")
        if num.weight_rule not in ("average", "sample"):
            raise ConfigError(f"expected 'average' or 'sample', got {num.weight_rule!r}", "numerics.weight_rule")
        if require_ns:
            if not num.ns:
                raise ConfigError("at least one partition size is required", "numerics.ns")
            for n in num.ns:
                if n < 1 or num.n_ref % n:
                    raise ConfigError(f"{n} does not divide n_ref={num.n_ref}", "numerics.ns")
        return self

    def with_overrides(self, **overrides) -> "RunConfig":
        """Flag values replace file values; None means not given"""
        numerics = {k: v for k, v in overrides.items()
                    if v is not None and k in NumericsConfig.__dataclass_fields__}
        model = {k: v for k, v in overrides.items()
                 if v is not None and k in ("epsilon", "T", "preset")}
        output = {"directory": overrides["out"]} if overrides.get("out") else {}
        return replace(self,
                       model=replace(self.model, **model),
                       numerics=replace(self.numerics, **numerics),
                       output=replace(self.output, **output))


def parse_config(data: dict, base_dir: str = ".") -> RunConfig:
    """Build a RunConfig from the decoded JSON manifest"""
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", "config")
    unknown = set(data) - {"model", "kernel", "initial_phase", "numerics", "output"}
    if unknown:
        raise ConfigError(f"unknown blocks {sorted(unknown)}", "config")

    mb = data.get("model", {})
    defaults = ModelConfig()
    omega = mb.get("omega", {})
    D, H = mb.get("D", {}), mb.get("H", {})
    model = ModelConfig(
        omega0=_number(mb, "omega0", defaults.omega0, "model"),
        a=_number(mb, "a", defaults.a, "model"),
        b=_number(mb, "b", defaults.b, "model"),
        epsilon=_number(mb, "epsilon", defaults.epsilon, "model"),
        t0=_number(mb, "t0", defaults.t0, "model"),
        T=_number(mb, "T", defaults.T, "model"),
        preset=mb.get("preset"),
        omega_slope=_number(omega, "slope", 0.0, "model.omega"),
        omega_table=omega.get("table"),
        D_amplitude=_number(D, "amplitude", 1.0, "model.D"),
        H_amplitude=_number(H, "amplitude", 1.0, "model.H"),
        D_table=_existing(D["csv"], "model.D.csv", base_dir) if "csv" in D else None,
        H_table=_existing(H["csv"], "model.H.csv", base_dir) if "csv" in H else None,
    )

    kb = dict(data.get("kernel", {"family": "constant", "c": 1.0}))
    family = kb.pop("family", "constant")
    csv = kb.pop("csv", None)
    if family == "tabulated":
        if not csv:
            raise ConfigError("tabulated kernel needs a csv path", "kernel.csv")
        csv = _existing(csv, "kernel.csv", base_dir)
    kernel = KernelConfig(family, {k: _number(kb, k, None, "kernel") for k in kb}, csv)

    pb = dict(data.get("initial_phase", {"family": "constant", "value": 0.0}))
    phase_family = pb.pop("family", "constant")
    perturbation = _number(pb, "perturbation", 0.0, "initial_phase")
    pb.pop("perturbation", None)
    initial_phase = PhaseConfig(phase_family, {k: _number(pb, k, None, "initial_phase") for k in pb}, perturbation)

    nb = data.get("numerics", {})
    nd = NumericsConfig()
    numerics = NumericsConfig(
        n=_integer(nb, "n", nd.n, "numerics"),
        ns=[_integer({"ns": v}, "ns", None, "numerics") for v in nb.get("ns", [])],
        n_ref=_integer(nb, "n_ref", nd.n_ref, "numerics"),
        dt=_number(nb, "dt", nd.dt, "numerics"),
        dt_ref=_number(nb, "dt_ref", nd.dt_ref, "numerics"),
        stride=_integer(nb, "stride", nd.stride, "numerics"),
        subsamples=_integer(nb, "subsamples", nd.subsamples, "numerics"),
        weight_rule=nb.get("weight_rule", nd.weight_rule),
        tol=_number(nb, "tol", nd.tol, "numerics"),
        max_iter=_integer(nb, "max_iter", nd.max_iter, "numerics"),
        workers=_integer(nb, "workers", nd.workers, "numerics"),
        oracle_tol=_number(nb, "oracle_tol", nd.oracle_tol, "numerics"),
        picard_tol=_number(nb, "picard_tol", nd.picard_tol, "numerics"),
        exact_update_tol=_number(nb, "exact_update_tol", nd.exact_update_tol, "numerics"),
        picard_max_n=_integer(nb, "picard_max_n", nd.picard_max_n, "numerics"),
        picard_max_T=_number(nb, "picard_max_T", nd.picard_max_T, "numerics"),
        frozen_phases=bool(nb.get("frozen_phases", nd.frozen_phases)),
    )

    ob = data.get("output", {})
    od = OutputConfig()
    output = OutputConfig(
        directory=ob.get("directory", od.directory),
        trajectory=bool(ob.get("trajectory", od.trajectory)),
        weights=bool(ob.get("weights", od.weights)),
        order_parameter=bool(ob.get("order_parameter", od.order_parameter)),
        reports=bool(ob.get("reports", od.reports)),
    )
    return RunConfig(model, kernel, initial_phase, numerics, output)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}", "config") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}", "config") from e
    return parse_config(data, os.path.dirname(os.path.abspath(path)))
