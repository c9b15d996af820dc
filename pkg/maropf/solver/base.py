import numpy as np

from maropf.utils import MaropfError


class SolverError(MaropfError, RuntimeError):
    pass


class IterLimit(SolverError):
    pass


class NumericalBreakdown(SolverError):
    pass


class Status:
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    GAP_LIMIT = "GapLimit"
    ITER_LIMIT = "IterLimit"
    NODE_LIMIT = "NodeLimit"
    TIME_LIMIT = "TimeLimit"

    # an incumbent is attached
    USABLE = (OPTIMAL, GAP_LIMIT, NODE_LIMIT, TIME_LIMIT)


PRESOLVE_STEPS = ("tighten_binaries", "drop_fixed", "dedupe_rows")


class SolverConfig:
    def __init__(
        self,
        feas_tol=1e-8,
        opt_tol=1e-7,
        max_iters=100,
        bb_gap=1e-6,
        bb_node_limit=2000,
        time_limit=None,
        presolve=None,
        rounding_heuristic=True,
        warm_start=True,
        log_path=None,
    ):
        if feas_tol <= 0 or opt_tol <= 0:
            raise ValueError(f"Tolerances must be positive, got {feas_tol}, {opt_tol}")
        if bb_gap < 0:
            raise ValueError(f"MIP gap must be non-negative, got {bb_gap}")
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.max_iters = int(max_iters)
        self.bb_gap = bb_gap
        self.bb_node_limit = int(bb_node_limit)
        self.time_limit = time_limit
        presolve = presolve if presolve is not None else {}
        unknown = set(presolve) - set(PRESOLVE_STEPS)
        if unknown:
            raise ValueError(f"Unknown presolve steps {sorted(unknown)}")
        self.presolve = {step: bool(presolve.get(step, True)) for step in PRESOLVE_STEPS}
        self.rounding_heuristic = rounding_heuristic
        self.warm_start = warm_start
        self.log = SolverLog(log_path)

    @classmethod
    def from_config(cls, config):
        return cls(
            feas_tol=config.get("feas_tol", 1e-8),
            opt_tol=config.get("opt_tol", 1e-7),
            max_iters=config.get("max_iters", 100),
            bb_gap=config.get("bb_gap", 1e-6),
            bb_node_limit=config.get("bb_node_limit", 2000),
            time_limit=config.get("time_limit", None),
            presolve=config.get("presolve", None),
            rounding_heuristic=config.get("rounding_heuristic", True),
            warm_start=config.get("warm_start", True),
            log_path=config.get("solver_log", None),
        )

    def to_dict(self):
        return {
            "feas_tol": self.feas_tol,
            "opt_tol": self.opt_tol,
            "max_iters": self.max_iters,
            "bb_gap": self.bb_gap,
            "bb_node_limit": self.bb_node_limit,
            "time_limit": self.time_limit,
            "presolve": dict(self.presolve),
            "rounding_heuristic": self.rounding_heuristic,
            "warm_start": self.warm_start,
        }


class SolverLog:
    """Line-oriented records appended to a file; silent without a path."""

    def __init__(self, path=None):
        self.path = path

    def record(self, prefix, **fields):
        if self.path is None:
            return
        body = " ".join(f"{key}={_fmt(value)}" for key, value in fields.items())
        with open(self.path, "a") as log:
            log.write(f"{prefix} {body}\n")


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6e}"
    return str(value)


class Solution:
    """
    Args:
        x: full primal vector, aligned with program.vmap
        stats: solver statistics (iterations, nodes, best_bound, gap, ...)
    """

    def __init__(self, status, x=None, objective=None, stats=None, program=None):
        self.status = status
        self.x = None if x is None else np.asarray(x, dtype=float)
        self.objective = objective
        self.stats = stats if stats is not None else {}
        self.program = program

    @property
    def usable(self):
        return self.status in Status.USABLE and self.x is not None

    def value(self, kind, index, t):
        return float(self.x[self.program.vmap[(kind, index, t)]])

    def vector(self, kind, t):
        return self.program.vmap.vector(self.x, kind, t, self.program.info["n_line"])

    @property
    def values(self):
        return {key: float(self.x[var]) for key, var in self.program.vmap.ids.items()}

    def to_dict(self):
        return {
            "status": self.status,
            "objective": None if self.objective is None else float(self.objective),
            "stats": {key: _plain(value) for key, value in self.stats.items()},
        }


def _plain(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value
