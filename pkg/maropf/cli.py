import argparse
import json
import sys

from maropf.conditions import NoBreakFound, SingularSystem, ZeroPathImpedance
from maropf.designer import DroopDesigner, epsilon_grid
from maropf.powerflow.state import PowerFlowError
from maropf.preprocessing.case_loader import CaseIOError
from maropf.refine import IterationCap
from maropf.report import load_report, render_report, save_report
from maropf.solver.base import SolverError
from maropf.utils import MaropfError

EXIT_OK = 0
EXIT_CONDITIONS = 2
EXIT_VIOLATION = 3
EXIT_SOLVER = 4
EXIT_IO = 5

# flag dest -> (config section, key)
FLAG_KEYS = {
    "case": ("case", "name"),
    "profiles": ("case", "profiles"),
    "window": ("case", "window"),
    "step_minutes": ("case", "step_minutes"),
    "max_steps": ("case", "max_steps"),
    "mode": ("design", "mode"),
    "weights": ("design", "weights"),
    "epsilon": ("design", "epsilon"),
    "refine": ("design", "refine"),
    "refine_iters": ("design", "refine_iters"),
    "big_m": ("design", "big_m"),
    "receiving_end_cones": ("design", "receiving_end_cones"),
    "feas_tol": ("solver", "feas_tol"),
    "opt_tol": ("solver", "opt_tol"),
    "max_iters": ("solver", "max_iters"),
    "bb_gap": ("solver", "bb_gap"),
    "node_limit": ("solver", "bb_node_limit"),
    "time_limit": ("solver", "time_limit"),
    "run_dir": ("cmd", "run_dir"),
    "identifier": ("cmd", "identifier"),
    "debug": ("cmd", "debug"),
    "verbose": ("cmd", "verbose"),
    "solver_log": ("cmd", "solver_log"),
    "save_matrices": ("cmd", "save_matrices"),
    "dump_program": ("cmd", "dump_program"),
}


def _scenario_args(parser):
    parser.add_argument("case", help="bundled case name (ieee34, ieee85) or case JSON path")
    parser.add_argument("--profiles", help="profile CSV (defaults to the bundled one)")
    parser.add_argument("--window", help="HH:MM-HH:MM or a preset (scenario1, scenario2, day)")
    parser.add_argument("--step-minutes", dest="step_minutes", type=int)
    parser.add_argument("--max-steps", dest="max_steps", type=int, help="keep the first N steps")
    parser.add_argument("--config", help="JSON config; flags take precedence")
    parser.add_argument("--run-dir", dest="run_dir")
    parser.add_argument("--identifier")
    parser.add_argument("--debug", action="store_true", default=None, help="write no artifacts")
    parser.add_argument("--verbose", "-v", action="store_true", default=None)
    parser.add_argument("--save-matrices", dest="save_matrices", action="store_true", default=None)


def _design_args(parser):
    parser.add_argument("--weights", help="w_pc,w_pl,w_v (default 0.6,0.3,0.1)")
    parser.add_argument("--epsilon", type=float, help="slope tuning margin")
    parser.add_argument("--big-m", dest="big_m", type=float)
    parser.add_argument(
        "--receiving-end-cones", dest="receiving_end_cones", action="store_true", default=None
    )
    parser.add_argument("--refine", action="store_true", default=None)
    parser.add_argument("--refine-iters", dest="refine_iters", type=int)
    parser.add_argument("--feas-tol", dest="feas_tol", type=float)
    parser.add_argument("--opt-tol", dest="opt_tol", type=float)
    parser.add_argument("--max-iters", dest="max_iters", type=int)
    parser.add_argument("--gap", dest="bb_gap", type=float)
    parser.add_argument("--node-limit", dest="node_limit", type=int)
    parser.add_argument("--time-limit", dest="time_limit", type=float)
    parser.add_argument("--solver-log", dest="solver_log", help="append ipm/node records here")
    parser.add_argument("--dump-program", dest="dump_program", help="write the program in text form")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="maropf", description="Droop design with restricted conic OPF"
    )
    sub = parser.add_subparsers(dest="command")
    sub.required = True

    check = sub.add_parser("check", help="evaluate the network conditions")
    _scenario_args(check)
    check.add_argument("--epsilon", type=float, help="slope tuning margin")
    check.add_argument(
        "--sweep", type=int, nargs="?", const=20, help="also sweep N margins in [0, 1]"
    )

    optimize = sub.add_parser("optimize", help="design droop references")
    _scenario_args(optimize)
    _design_args(optimize)
    optimize.add_argument("--mode", choices=("ropf", "maropf"))

    simulate = sub.add_parser("simulate", help="validate a droop parameter file")
    _scenario_args(simulate)
    simulate.add_argument("params", help="droop.json or an optimize report")

    compare = sub.add_parser("compare", help="ropf against maropf on one scenario")
    _scenario_args(compare)
    _design_args(compare)

    report = sub.add_parser("report", help="re-render a stored report")
    report.add_argument("path")
    report.add_argument("--out", help="write the parsed report back out")
    return parser


def build_config(args):
    config = {"case": {}, "design": {}, "solver": {}, "cmd": {}}
    if getattr(args, "config", None):
        with open(args.config) as f:
            loaded = json.load(f)
        for section, values in loaded.items():
            config.setdefault(section, {}).update(values)
    for dest, (section, key) in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            config[section][key] = value
    return config


def run(args):
    if args.command == "report":
        report = load_report(args.path)
        print(render_report(report))
        if args.out:
            save_report(report, args.out)
        return EXIT_OK

    designer = DroopDesigner(build_config(args))
    if args.command == "check":
        grid = epsilon_grid(args.sweep) if args.sweep else None
        report = designer.check(grid)
        print(render_report(report))
        return EXIT_OK if report.conditions["overall"] else EXIT_CONDITIONS

    if args.command == "optimize":
        report = designer.optimize()
    elif args.command == "simulate":
        report = designer.simulate(args.params)
    else:
        report = designer.compare()
    print(render_report(report))
    return EXIT_OK if report.ok else EXIT_VIOLATION


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (SingularSystem, ZeroPathImpedance, NoBreakFound) as err:
        print(f"maropf: conditions: {err}", file=sys.stderr)
        return EXIT_CONDITIONS
    except (SolverError, PowerFlowError, IterationCap) as err:
        print(f"maropf: solver: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (CaseIOError, OSError, json.JSONDecodeError) as err:
        print(f"maropf: io: {err}", file=sys.stderr)
        return EXIT_IO
    except (MaropfError, ValueError) as err:
        print(f"maropf: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
