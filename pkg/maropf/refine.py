"""
Iterative tightening of the f_up cones. Where the loss terms provably push
the lossless flow below the lower-bound flow, the lower bound inside the
cones is replaced by the lossless flow and the program is solved again. A
new solution is kept only while the replacement stays justified at it.
"""
import warnings

import numpy as np

from maropf.conditions import compute_condition_matrices
from maropf.program.builder import apply_refinement
from maropf.solver.base import SolverConfig, SolverError
from maropf.solver.branch_bound import solve_misocp
from maropf.utils import MaropfError

SET_TOL = 1e-9
OBJ_TOL = 1e-8


class IterationCap(MaropfError, RuntimeError):
    def __init__(self, message, incumbent, trace):
        super().__init__(message)
        self.incumbent = incumbent
        self.trace = trace


class ActivationSets:
    def __init__(self, Wp=(), Wq=()):
        self.Wp = set(Wp)
        self.Wq = set(Wq)

    @property
    def empty(self):
        return not self.Wp and not self.Wq

    def covers(self, other):
        return other.Wp <= self.Wp and other.Wq <= self.Wq

    def to_dict(self):
        return {"Wp": [list(pair) for pair in sorted(self.Wp)], "Wq": [list(pair) for pair in sorted(self.Wq)]}

    @classmethod
    def from_dict(cls, data):
        return cls([tuple(pair) for pair in data["Wp"]], [tuple(pair) for pair in data["Wq"]])


class RefinementTrace:
    def __init__(self, records=None):
        self.records = list(records or [])

    def add(self, h, objective, sets, consistent, accepted):
        self.records.append(
            {
                "h": int(h),
                "objective": None if objective is None else float(objective),
                "Wp": [list(pair) for pair in sorted(sets.Wp)],
                "Wq": [list(pair) for pair in sorted(sets.Wq)],
                "consistent": bool(consistent),
                "accepted": bool(accepted),
            }
        )

    @property
    def accepted_objectives(self):
        return [r["objective"] for r in self.records if r["accepted"]]

    def to_dict(self):
        return {"records": self.records}

    @classmethod
    def from_dict(cls, data):
        return cls(data["records"])


def step_slopes(solution, network, slopes, t):
    """Per-line (alpha_p * y, alpha_q) for the activation state at step t."""
    ap = np.zeros(network.n_line)
    aq = np.zeros(network.n_line)
    for ibdg, a_p, a_q in zip(network.droop_ibdgs, slopes.alpha_p, slopes.alpha_q):
        y = round(solution.value("y", ibdg.bus, t))
        ap[ibdg.bus - 1] += a_p * y
        aq[ibdg.bus - 1] += a_q
    return ap, aq


def compute_activation_sets(solution, network, topo, slopes):
    T = solution.program.info["T"]
    H = topo.H
    Wp, Wq = set(), set()
    for t in range(T):
        ap, aq = step_slopes(solution, network, slopes, t)
        shunts = (network.shunt_g + ap, network.shunt_b + aq)
        D = compute_condition_matrices(network, topo, shunts).D
        f = solution.vector("f", t)
        lead_p = H @ (topo.r * f - ap * (D @ f))
        lead_q = H @ (topo.x * f - aq * (D @ f))
        P_hat, P_low = solution.vector("P_hat", t), solution.vector("P_low", t)
        Q_hat, Q_low = solution.vector("Q_hat", t), solution.vector("Q_low", t)
        for i in range(network.n_line):
            if lead_p[i] >= -SET_TOL and abs(P_hat[i]) <= P_low[i] + SET_TOL:
                Wp.add((i + 1, t))
            if lead_q[i] >= -SET_TOL and abs(Q_hat[i]) <= Q_low[i] + SET_TOL:
                Wq.add((i + 1, t))
    return ActivationSets(Wp, Wq)


def refine_loop(program, network, topo, slopes, config=None, max_iter=10, verbose=False):
    """
    Returns (incumbent, trace). The first solve uses the program as built;
    later ones replace lower-bound flows with lossless flows on the pairs
    licensed by the previous solution.
    """
    config = config if config is not None else SolverConfig()
    trace = RefinementTrace()

    solution = solve_misocp(program, config)
    if not solution.usable:
        raise SolverError(f"Unrefined design failed with status {solution.status}")
    incumbent = solution
    sets = compute_activation_sets(solution, network, topo, slopes)
    trace.add(1, solution.objective, ActivationSets(), True, True)
    last_accepted = solution.objective
    if verbose:
        print(f"refine h=1 objective={solution.objective:.8f} |Wp|={len(sets.Wp)} |Wq|={len(sets.Wq)}")

    for h in range(2, max_iter + 1):
        used = sets
        candidate = solve_misocp(apply_refinement(program, used.Wp, used.Wq), config)
        if not candidate.usable:
            trace.add(h, None, used, False, False)
            warnings.warn(f"Refinement step {h} returned {candidate.status}; keeping incumbent", stacklevel=2)
            return incumbent, trace
        sets = compute_activation_sets(candidate, network, topo, slopes)
        consistent = sets.covers(used)
        accepted = consistent and candidate.objective <= incumbent.objective + OBJ_TOL
        trace.add(h, candidate.objective, used, consistent, accepted)
        if verbose:
            print(
                f"refine h={h} objective={candidate.objective:.8f} "
                f"consistent={consistent} accepted={accepted}"
            )
        if not accepted:
            warnings.warn(f"Refinement step {h} discarded", stacklevel=2)
            continue
        incumbent = candidate
        if abs(candidate.objective - last_accepted) <= OBJ_TOL:
            return incumbent, trace
        last_accepted = candidate.objective
    raise IterationCap(f"Refinement did not settle in {max_iter} iterations", incumbent, trace)
