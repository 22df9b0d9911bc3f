#!/usr/bin/env python3
"""
coevo - simulation and verification laboratory for adaptive Kuramoto networks
"""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from coevo.analysis import BoundParams, initial_consistency_study, positivity_monitor, self_convergence_study
from coevo.config import RunConfig, load_config
from coevo.dynamics import (SystemState, contraction_window, integrate, picard_solve,
                            sync_manifold_solution, weights_exact_history)
from coevo.errors import AssumptionError, CoevoError, ConfigError, PartitionError, PicardDivergenceError
from coevo.graphon import (KernelFamily, berner_horizon_bound, check_assumptions, discretize,
                           kernel_sampled_inf, positivity_threshold)
from coevo.metrics import d_interval_infty, order_parameter, tv_rows_array
from coevo.model import CouplingFamily, CouplingSpec, FrequencyFamily, FrequencySpec, ModelSpec
from coevo.save_load import SaveLoadSystem

logger = logging.getLogger("coevo")

EXIT_PASS = 0
EXIT_INVALID = 1
EXIT_CHECK_FAILED = 2


def frozen_phase_model(model: ModelSpec) -> ModelSpec:
    """Zero coupling and zero frequency: phases stay put, weights relax under constant forcing"""
    return ModelSpec(CouplingSpec.sine_lag(0.0, 0.0), model.H, FrequencySpec.constant(0.0),
                     model.epsilon, model.t0, model.T, f"{model.name}-frozen")


class Laboratory:
    def __init__(self, config: RunConfig):
        self.config = config
        self.messages = []
        self.model = config.model.build()
        self.kernel = config.kernel.build()
        self.phi0 = config.initial_phase.build()

    def add_message(self, message: str):
        self.messages.append(message)
        logger.info(message)

    def path(self, name: str) -> str:
        return os.path.join(self.config.output.directory, name)

    def save(self, saved):
        success, message = saved
        if success:
            self.add_message(message)
        else:
            logger.error(message)

    def initial_state(self, model: ModelSpec, n: int):
        num = self.config.numerics
        disc = discretize(self.kernel, self.phi0, model.omega, n, num.weight_rule, num.subsamples)
        return SystemState.from_lift(model.t0, disc.phases, disc.graphon), disc.frequencies

    def _sync_oracle(self, trajectory) -> dict:
        """Only meaningful for constant kernel, constant phases and constant frequency"""
        if (self.kernel.family != KernelFamily.CONSTANT or self.config.initial_phase.family != "constant"
                or self.config.initial_phase.perturbation
                or self.model.omega.family != FrequencyFamily.CONSTANT
                or self.model.D.family != CouplingFamily.SINE_LAG
                or self.model.H.family != CouplingFamily.SINE_LAG):
            return {}
        phi0, w0 = float(trajectory.phases[0, 0]), float(trajectory.weights[0, 0, 0])
        phase_error = weight_error = 0.0
        for k, t in enumerate(trajectory.times):
            phi, w = sync_manifold_solution(phi0, w0, self.model, float(t))
            phase_error = max(phase_error, float(np.max(np.abs(trajectory.phases[k] - phi))))
            weight_error = max(weight_error, float(np.max(np.abs(trajectory.weights[k] - w))))
        tolerance = self.config.numerics.oracle_tol
        return {"phase_error": phase_error, "weight_error": weight_error, "tolerance": tolerance,
                "passed": phase_error <= tolerance and weight_error <= tolerance}

    def simulate(self) -> int:
        num, out = self.config.numerics, self.config.output
        assumptions = check_assumptions(self.kernel, self.model, self.phi0, [num.n])
        state, frequencies = self.initial_state(self.model, num.n)
        trajectory = integrate(state, self.model, num.dt, num.stride, frequencies)
        positivity = positivity_monitor(trajectory, self.model)
        r0, _ = order_parameter(trajectory.phases[0])
        r1, _ = order_parameter(trajectory.phases[-1])
        summary = {
            "model": self.model.name,
            "n": num.n,
            "dt": num.dt,
            "stride": num.stride,
            "min_weight": positivity.min_weight,
            "r_t0": r0,
            "r_final": r1,
            "assumptions": assumptions.to_dict(),
            "positivity_passed": positivity.passed,
        }
        oracle = self._sync_oracle(trajectory)
        if oracle:
            summary["sync_oracle"] = oracle

        if out.trajectory:
            self.save(SaveLoadSystem.save_trajectory(trajectory, self.path("trajectory.csv"), out.weights))
            self.save(SaveLoadSystem.save_kernel(trajectory.lifted(0)[1], self.path("kernel.csv")))
        if out.order_parameter:
            self.save(SaveLoadSystem.save_order_parameter(trajectory, self.path("order_parameter.csv")))
        if out.reports:
            self.save(SaveLoadSystem.save_report(positivity.to_dict(), self.path("positivity.json")))
            self.save(SaveLoadSystem.save_report(summary, self.path("summary.json")))

        passed = positivity.passed and oracle.get("passed", True)
        return EXIT_PASS if passed else EXIT_CHECK_FAILED

    def converge(self) -> int:
        num = self.config.numerics
        try:
            report = self_convergence_study(self.kernel, self.phi0, self.model, num.ns, num.n_ref,
                                            num.dt, num.dt_ref, num.stride, num.weight_rule,
                                            num.subsamples, num.workers, with_bounds=True)
        except AssumptionError as e:
            self.save(SaveLoadSystem.save_report(e.report.to_dict(), self.path("assumptions.json")))
            raise
        payload = report.to_dict()
        payload["initial_consistency"] = initial_consistency_study(self.kernel, num.ns, num.weight_rule,
                                                                   num.subsamples).to_dict()
        self.save(SaveLoadSystem.save_report(payload, self.path("convergence.json")))
        self.save(SaveLoadSystem.save_convergence_table(report.records, self.path("convergence.csv")))
        if not report.monotone:
            logger.warning("errors are not monotonically decreasing: %s", report.errors)
            return EXIT_CHECK_FAILED
        return EXIT_PASS

    def verify(self) -> int:
        num = self.config.numerics
        if num.n > num.picard_max_n:
            raise ConfigError(f"n={num.n} exceeds the Picard guard {num.picard_max_n}", "numerics.n")
        if self.model.T > num.picard_max_T:
            raise ConfigError(f"T={self.model.T} exceeds the Picard guard {num.picard_max_T}", "model.T")
        model = frozen_phase_model(self.model) if num.frozen_phases else self.model
        state, frequencies = self.initial_state(model, num.n)
        rk4 = integrate(state, model, num.dt, 1, frequencies)

        exact = weights_exact_history(state.weights, rk4.times, rk4.phases, model)
        exact_entry = float(np.max(np.abs(exact - rk4.weights)))
        exact_tv = max(tv_rows_array(exact[k], rk4.weights[k]) for k in range(len(rk4)))
        result = {
            "model": model.name,
            "n": num.n,
            "dt": num.dt,
            "exact_update": {"max_entry": exact_entry, "tv": exact_tv, "tolerance": num.exact_update_tol,
                             "passed": exact_entry <= num.exact_update_tol},
        }

        try:
            picard = picard_solve(state, model, num.dt, num.tol, num.max_iter, frequencies)
            discrepancy = d_interval_infty(picard.trajectory, rk4)
            result["picard_vs_rk4"] = {
                "distance": discrepancy, "tolerance": num.picard_tol,
                "passed": discrepancy <= num.picard_tol,
                "m3": picard.m3, "window": picard.window, "windows": picard.windows,
                "max_iterations": max(picard.iterations),
            }
        except PicardDivergenceError as e:
            result["picard_vs_rk4"] = {"error": str(e), "m3": e.m3, "window": e.window, "passed": False}

        self.save(SaveLoadSystem.save_report(result, self.path("verify.json")))
        passed = result["exact_update"]["passed"] and result["picard_vs_rk4"]["passed"]
        return EXIT_PASS if passed else EXIT_CHECK_FAILED

    def bounds(self) -> int:
        model, num = self.model, self.config.numerics
        c_w = min(self.kernel.inf_bound, kernel_sampled_inf(self.kernel))
        state, _ = self.initial_state(model, num.n)
        eta0_star = float(np.max(np.abs(state.weights).sum(axis=1)) / state.n)
        m3, t_star = contraction_window(model, eta0_star)
        horizon = berner_horizon_bound(c_w, model.epsilon)
        result = {
            "positivity_threshold": positivity_threshold(model.H, model.epsilon, model.T),
            "c_W": c_w,
            "horizon": horizon if math.isfinite(horizon) else "unbounded",
            "C1": BoundParams.from_model(model, eta0_star).C1,
            "M3": m3,
            "t_star": t_star,
            "eta0_star": eta0_star,
            "a_priori_weight_bound": eta0_star + model.H.sup_norm,
        }
        print(json.dumps(result, indent=2, sort_keys=True))
        if self.config.output.reports:
            self.save(SaveLoadSystem.save_report(result, self.path("bounds.json")))
        return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="main.py", description=__doc__.strip())
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [("simulate", "integrate one discretization and write the trajectory"),
                            ("converge", "self-convergence study against a fine reference"),
                            ("verify", "RK4 vs Picard and integrating-factor oracles"),
                            ("bounds", "print positivity, horizon and contraction constants")]:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("config", nargs="?", help="JSON run configuration")
        sub.add_argument("--n", type=int)
        sub.add_argument("--ns", type=lambda s: [int(v) for v in s.split(",")], help="comma-separated sizes")
        sub.add_argument("--n-ref", dest="n_ref", type=int)
        sub.add_argument("--dt", type=float)
        sub.add_argument("--dt-ref", dest="dt_ref", type=float)
        sub.add_argument("--stride", type=int)
        sub.add_argument("--epsilon", type=float)
        sub.add_argument("--T", type=float)
        sub.add_argument("--preset", choices=["hebbian", "stdp"])
        sub.add_argument("--workers", type=int)
        sub.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
    )
    try:
        config = load_config(args.config) if args.config else RunConfig()
        config = config.with_overrides(n=args.n, ns=args.ns, n_ref=args.n_ref, dt=args.dt, dt_ref=args.dt_ref,
                                       stride=args.stride, epsilon=args.epsilon, T=args.T,
                                       preset=args.preset, workers=args.workers, out=args.out)
        config.validate(require_ns=args.command == "converge")
        lab = Laboratory(config)
        return getattr(lab, args.command)()
    except (ConfigError, PartitionError, AssumptionError) as e:
        logger.error("%s", e)
        return EXIT_INVALID
    except CoevoError as e:
        logger.error("%s", e)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
