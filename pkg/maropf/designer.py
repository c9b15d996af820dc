import datetime
import os
import time
import warnings

import numpy as np

from maropf.conditions import (
    ConditionCache,
    DroopSlopes,
    check_conditions,
    compute_condition_matrices,
    effective_shunts,
    flow_envelope,
    sweep_epsilon,
    tune_droop_slopes,
)
from maropf.droop import approx_to_exact
from maropf.grid.constants import BUNDLED_PROFILES
from maropf.grid.network import ScenarioHorizon
from maropf.grid.topology import build_topology
from maropf.powerflow.sweep import simulate_horizon, verify_security
from maropf.preprocessing.case_loader import load_case, load_profiles
from maropf.program.builder import build_droop_design, droop_parameters, objective_breakdown
from maropf.program.conic import ObjectiveWeights, check_program, dump_program
from maropf.refine import IterationCap, refine_loop
from maropf.report import (
    RunReport,
    droop_entries,
    load_droop_parameters,
    save_droop_parameters,
    save_report,
    series_frame,
    write_series,
)
from maropf.solver.base import SolverConfig, SolverError
from maropf.solver.branch_bound import solve_misocp
from maropf.studies import comparison_frame, comparison_row

DEFAULTS = {
    "case": {
        "name": "ieee34",
        "profiles": None,
        "window": "scenario1",
        "step_minutes": 15,
        "max_steps": None,
    },
    "design": {
        "mode": "maropf",
        "weights": [0.6, 0.3, 0.1],
        "epsilon": 0.0,
        "slopes": None,
        "refine": False,
        "refine_iters": 10,
        "big_m": None,
        "receiving_end_cones": False,
    },
    "solver": {
        "feas_tol": 1e-8,
        "opt_tol": 1e-7,
        "max_iters": 100,
        "bb_gap": 1e-6,
        "bb_node_limit": 2000,
        "time_limit": None,
        "presolve": None,
        "rounding_heuristic": True,
        "warm_start": True,
    },
    "cmd": {
        "run_dir": "./",
        "identifier": False,
        "debug": False,
        "verbose": False,
        "solver_log": None,
        "save_matrices": False,
        "dump_program": None,
    },
}


def resolve_config(config):
    """Every section filled in with its defaults."""
    resolved = {}
    for section, defaults in DEFAULTS.items():
        given = config.get(section, {}) or {}
        unknown = set(given) - set(defaults)
        if unknown:
            warnings.warn(f"Ignoring unknown {section} keys {sorted(unknown)}", stacklevel=2)
        resolved[section] = {key: given.get(key, default) for key, default in defaults.items()}
    return resolved


def step_verdicts(states, network):
    """One verdict per step, violations labelled with their step."""
    verdicts = []
    for t, state in enumerate(states):
        verdict = verify_security([state], network)
        verdict.violations = [(kind, index, t, amount) for kind, index, _, amount in verdict.violations]
        verdicts.append(verdict)
    return verdicts


class DroopDesigner:
    """
    Config-driven pipeline: case and profiles in, droop references out,
    validated against the exact droop power flow.

    Args:
        config: dict with the sections "case", "design", "solver" and "cmd"
    """

    def __init__(self, config=None):
        self.config = resolve_config(config if config is not None else {})
        self.loaded = False

    def load(self, load_program=True):
        self.load_config()
        self.load_case()
        self.load_horizon()
        self.load_slopes()
        if load_program:
            self.load_program()
        self.loaded = True

    def load_config(self):
        cmd = self.config["cmd"]
        self.timestamp = datetime.datetime.now().strftime("%Y-%m-%d-%H-%M-%S")
        self.identifier = cmd["identifier"]
        if self.identifier:
            self.identifier = self.timestamp + "-{}".format(self.identifier)
        else:
            self.identifier = self.timestamp
        self.debug = cmd["debug"]
        self.verbose = cmd["verbose"]
        self.run_dir = cmd["run_dir"]
        self.out_dir = None
        if not self.debug:
            self.out_dir = os.path.join(self.run_dir, "results", self.identifier)
            os.makedirs(self.out_dir, exist_ok=True)
            print(f"Results saved to {self.out_dir}")
        solver = dict(self.config["solver"])
        solver["solver_log"] = cmd["solver_log"]
        self.solver_config = SolverConfig.from_config(solver)

    def load_case(self):
        case = self.config["case"]
        self.network = load_case(case["name"])
        self.topo = build_topology(self.network)
        self.cache = None
        if self.config["cmd"]["save_matrices"]:
            self.cache = ConditionCache(os.path.join(self.run_dir, "processed", "conditions"))
        if self.verbose:
            print(
                f"Loading case {self.network.name}: {self.network.n_bus} buses, "
                f"{len(self.network.ibdgs)} IBDGs ({len(self.network.droop_ibdgs)} dispatchable)"
            )

    def load_horizon(self):
        case = self.config["case"]
        profiles = case["profiles"]
        if profiles is None and case["name"] in BUNDLED_PROFILES:
            profiles = case["name"]
        if profiles is None:
            self.horizon = ScenarioHorizon.flat(self.network, step_minutes=case["step_minutes"])
        else:
            self.horizon = load_profiles(profiles, self.network, case["window"], case["step_minutes"])
        if case["max_steps"]:
            self.horizon = self.horizon.steps(0, int(case["max_steps"]))
        if self.verbose:
            print(f"Loading horizon: {self.horizon.T} steps of {self.horizon.step_minutes} min")

    def load_slopes(self):
        design = self.config["design"]
        if design["slopes"] is not None:
            self.slopes = DroopSlopes.from_dict(self.network, design["slopes"])
        else:
            self.slopes = tune_droop_slopes(self.network, self.topo, design["epsilon"])
        self.weights = ObjectiveWeights.parse(design["weights"])

    def load_program(self, mode=None):
        design = self.config["design"]
        self.mode = mode if mode is not None else design["mode"]
        self.program = build_droop_design(
            self.network,
            self.topo,
            self.horizon,
            self.slopes,
            self.weights,
            mode=self.mode,
            big_m=design["big_m"],
            receiving_end_cones=design["receiving_end_cones"],
        )
        issues = check_program(self.program)
        if issues:
            raise ValueError(f"Program failed self-check: {issues[:3]}")
        dump_path = self.config["cmd"]["dump_program"]
        if dump_path:
            with open(dump_path, "w") as stream:
                dump_program(self.program, stream)
        if self.verbose:
            print(
                f"Loading {self.mode} program: {self.program.n_var} variables, "
                f"{len(self.program.rows)} rows, {len(self.program.cones)} cones, "
                f"{len(self.program.binaries)} binaries"
            )

    def condition_report(self):
        matrices = compute_condition_matrices(
            self.network,
            self.topo,
            effective_shunts(self.network, self.slopes),
            flow_envelope(self.network, self.topo),
            self.cache,
        )
        return check_conditions(matrices)

    def scenario(self):
        case = self.config["case"]
        return {
            "case": self.network.name,
            "window": case["window"],
            "step_minutes": self.horizon.step_minutes,
            "timesteps": self.horizon.timesteps,
            "mode": getattr(self, "mode", self.config["design"]["mode"]),
            "refine": self.config["design"]["refine"],
        }

    def check(self, sweep_grid=None):
        if not self.loaded:
            self.load(load_program=False)
        conditions = self.condition_report()
        if self.verbose:
            status = "hold" if conditions.overall else f"fail: {conditions.violated}"
            print(f"Conditions {status}")
        if sweep_grid is not None:
            frame = sweep_epsilon(self.network, sweep_grid, self.topo, self.verbose)
            if self.out_dir:
                write_series(os.path.join(self.out_dir, "sweep.csv"), frame)
        report = RunReport(
            "check",
            scenario=self.scenario(),
            config=self.config,
            conditions=conditions.to_dict(),
        )
        self.save(report)
        return report

    def solve(self):
        """Solves the loaded program, with refinement when configured."""
        design = self.config["design"]
        stime = time.time()
        trace = None
        if design["refine"]:
            try:
                solution, trace = refine_loop(
                    self.program,
                    self.network,
                    self.topo,
                    self.slopes,
                    self.solver_config,
                    design["refine_iters"],
                    self.verbose,
                )
            except IterationCap as err:
                warnings.warn(f"{err}; keeping the incumbent", stacklevel=2)
                solution, trace = err.incumbent, err.trace
        else:
            solution = solve_misocp(self.program, self.solver_config, self.verbose)
        if not solution.usable:
            raise SolverError(f"Droop design returned {solution.status}")
        elapsed_time = time.time() - stime
        if self.verbose:
            print(f"Design solved in {elapsed_time:.2f}s: {solution.status}, objective {solution.objective:.6f}")
        return solution, trace

    def optimize(self, mode=None):
        if not self.loaded:
            self.load(load_program=False)
        self.load_program(mode)
        self.solution, trace = self.solve()

        self.params = droop_parameters(self.program, self.network, self.slopes, self.solution.x)
        self.curves = {
            ibdg.id: approx_to_exact(self.params[ibdg.id], self.network.taylor_v0(ibdg))
            for ibdg in self.network.droop_ibdgs
        }
        self.states = simulate_horizon(self.network, self.topo, self.horizon, self.curves, self.verbose)
        verdicts = step_verdicts(self.states, self.network)

        objective = objective_breakdown(self.program, self.solution.x)
        objective["weights"] = self.weights.to_list()
        solver = self.solution.to_dict()
        solver["config"] = self.solver_config.to_dict()
        report = RunReport(
            "optimize",
            scenario=self.scenario(),
            config=self.config,
            objective=objective,
            droop=droop_entries(self.network, self.params, self.curves),
            verdicts=[verdict.to_dict() for verdict in verdicts],
            conditions=self.condition_report().to_dict(),
            solver=solver,
            refinement=None if trace is None else trace.to_dict(),
        )
        self.save(report, series=series_frame(self.horizon.timesteps, self.states, self.solution))
        return report

    def simulate(self, param_path):
        """Replays stored exact droop curves through the power flow."""
        if not self.loaded:
            self.load(load_program=False)
        self.params, self.curves = load_droop_parameters(param_path)
        known = {ibdg.id for ibdg in self.network.droop_ibdgs}
        unknown = set(self.curves) - known
        if unknown:
            warnings.warn(f"Ignoring curves for units {sorted(unknown)} not in the case", stacklevel=2)
        self.curves = {key: curve for key, curve in self.curves.items() if key in known}
        self.states = simulate_horizon(self.network, self.topo, self.horizon, self.curves, self.verbose)
        verdicts = step_verdicts(self.states, self.network)
        report = RunReport(
            "simulate",
            scenario=self.scenario(),
            config=self.config,
            droop=droop_entries(self.network, self.params, self.curves),
            verdicts=[verdict.to_dict() for verdict in verdicts],
        )
        self.save(report, series=series_frame(self.horizon.timesteps, self.states))
        return report

    def compare(self):
        """R-OPF and MAR-OPF designs on the same scenario, each validated."""
        if not self.loaded:
            self.load(load_program=False)
        rows = []
        reports = {}
        out_dir = self.out_dir
        for mode in ("ropf", "maropf"):
            if out_dir:
                self.out_dir = os.path.join(out_dir, mode)
                os.makedirs(self.out_dir, exist_ok=True)
            reports[mode] = self.optimize(mode)
            rows.append(comparison_row(mode, reports[mode]))
        self.out_dir = out_dir
        frame = comparison_frame(rows)
        if self.verbose:
            print(frame.to_string(index=False))
        if out_dir:
            write_series(os.path.join(out_dir, "comparison.csv"), frame)
        report = RunReport(
            "compare",
            scenario=self.scenario(),
            config=self.config,
            objective=reports["maropf"].objective,
            droop=reports["maropf"].droop,
            verdicts=reports["maropf"].verdicts,
            conditions=reports["maropf"].conditions,
            solver=reports["maropf"].solver,
            comparison=rows,
        )
        self.save(report)
        return report

    def save(self, report, series=None):
        if self.debug or self.out_dir is None:
            return
        save_report(report, os.path.join(self.out_dir, "report.json"))
        if series is not None:
            write_series(os.path.join(self.out_dir, "series.csv"), series)
        if report.command == "optimize":
            save_droop_parameters(
                os.path.join(self.out_dir, "droop.json"), self.network, self.params, self.curves
            )


def epsilon_grid(n=20, high=1.0):
    return np.linspace(0.0, high, n)
