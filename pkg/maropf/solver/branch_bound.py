import heapq
import itertools
import time
import warnings

import numpy as np

from maropf.solver.base import Solution, SolverConfig, SolverError, Status
from maropf.solver.socp import solve_socp
from maropf.utils import tqdm

INT_TOL = 1e-6


class Node:
    def __init__(self, id, depth, lb, ub, bound, solution=None):
        self.id = id
        self.depth = depth
        self.lb = lb
        self.ub = ub
        self.bound = bound
        self.solution = solution


def fractional(program, x):
    """Binary ids with fractional values, most fractional first, ties by (t, index)."""
    out = []
    for var in program.binaries:
        frac = abs(x[var] - round(x[var]))
        if frac > INT_TOL:
            _, index, t = program.vmap.keys[var]
            out.append((-min(frac, 1.0 - frac), t if t is not None else -1, index, var))
    out.sort()
    return [item[-1] for item in out]


def round_activations(program, x, lb, ub):
    """Fixes every y to the side of v - v0p seen in a relaxed point."""
    lb, ub = lb.copy(), ub.copy()
    for y, v, v0p, _ in program.activations:
        if lb[y] == ub[y]:
            continue
        lb[y] = ub[y] = 1.0 if x[v] > x[v0p] else 0.0
    for var in program.binaries:
        if lb[var] != ub[var]:
            lb[var] = ub[var] = float(round(x[var]))
    return lb, ub


def _snap(program, x):
    x = x.copy()
    for var in program.binaries:
        x[var] = round(x[var])
    return x


def solve_misocp(program, config=None, verbose=False):
    """Best-first branch and bound over the program's binaries."""
    config = config if config is not None else SolverConfig()
    log = config.log
    start = time.time()
    lb0, ub0 = program.bounds()

    if not program.binaries:
        return solve_socp(program, config)

    counter = itertools.count()
    root_sol = solve_socp(program, config, lb0, ub0, relax=True)
    if root_sol.status == Status.INFEASIBLE:
        log.record("node", id=0, depth=0, bound="inf", incumbent="inf", status="infeasible")
        return Solution(Status.INFEASIBLE, stats={"nodes": 1}, program=program)
    root = Node(next(counter), 0, lb0, ub0, root_sol.objective, root_sol)
    solved = 1

    incumbent = None
    incumbent_obj = np.inf
    bound_history = []

    def offer(sol):
        nonlocal incumbent, incumbent_obj
        if sol.status == Status.OPTIMAL and sol.objective < incumbent_obj:
            incumbent = Solution(Status.OPTIMAL, _snap(program, sol.x), sol.objective, {}, program)
            incumbent_obj = sol.objective

    if not fractional(program, root_sol.x):
        offer(root_sol)
    elif config.rounding_heuristic:
        lb_r, ub_r = round_activations(program, root_sol.x, lb0, ub0)
        try:
            offer(solve_socp(program, config, lb_r, ub_r, start=root_sol.x))
        except SolverError as err:
            warnings.warn(f"Rounding heuristic failed: {err}", stacklevel=2)

    heap = [(root.bound, root.id, root)]
    processed = 0
    status = Status.OPTIMAL
    pbar = tqdm(total=config.bb_node_limit, desc="Branch and bound", disable=not verbose)

    def gap(bound):
        if not np.isfinite(incumbent_obj):
            return np.inf
        return (incumbent_obj - bound) / max(abs(incumbent_obj), 1.0)

    while heap:
        best_bound = heap[0][0]
        bound_history.append(min(best_bound, incumbent_obj))
        if gap(best_bound) <= config.bb_gap:
            break
        if processed >= config.bb_node_limit:
            status = Status.NODE_LIMIT
            break
        if config.time_limit is not None and time.time() - start > config.time_limit:
            status = Status.TIME_LIMIT
            break

        _, _, node = heapq.heappop(heap)
        processed += 1
        pbar.update(1)
        log.record(
            "node",
            id=node.id,
            depth=node.depth,
            bound=float(node.bound),
            incumbent=float(incumbent_obj),
        )
        if gap(node.bound) <= config.bb_gap:
            continue

        candidates = fractional(program, node.solution.x)
        if not candidates:
            offer(node.solution)
            continue
        var = candidates[0]
        for value in (0.0, 1.0):
            lb, ub = node.lb.copy(), node.ub.copy()
            lb[var] = ub[var] = value
            try:
                child_sol = solve_socp(program, config, lb, ub, relax=True, start=node.solution.x)
                solved += 1
            except SolverError as err:
                warnings.warn(f"Dropping node: {err}", stacklevel=2)
                continue
            if child_sol.status != Status.OPTIMAL:
                continue
            # a child relaxation is never below its parent's
            bound = max(child_sol.objective, node.bound)
            child = Node(next(counter), node.depth + 1, lb, ub, bound, child_sol)
            if not fractional(program, child_sol.x):
                offer(child_sol)
            elif gap(bound) > config.bb_gap:
                heapq.heappush(heap, (child.bound, child.id, child))
    pbar.close()

    best_bound = min([heap[0][0]] if heap else [], default=incumbent_obj)
    best_bound = min(best_bound, incumbent_obj)
    stats = {
        "nodes": solved,
        "processed": processed,
        "best_bound": float(best_bound),
        "gap": float(gap(best_bound)) if incumbent is not None else None,
        "bound_history": [float(b) for b in bound_history],
        "seconds": time.time() - start,
    }
    if incumbent is None:
        if status == Status.OPTIMAL:
            return Solution(Status.INFEASIBLE, stats=stats, program=program)
        warnings.warn(f"Branch and bound stopped ({status}) without an incumbent", stacklevel=2)
        return Solution(status, stats=stats, program=program)
    if status != Status.OPTIMAL:
        warnings.warn(
            f"Branch and bound stopped ({status}) at gap {stats['gap']:.3e}", stacklevel=2
        )
    incumbent.status = status
    incumbent.stats = stats
    return incumbent


def solve_by_enumeration(program, config=None, max_binaries=16):
    """Solves every fixing of the binaries and keeps the best."""
    config = config if config is not None else SolverConfig()
    k = len(program.binaries)
    if k > max_binaries:
        raise ValueError(f"Enumeration over {k} binaries exceeds {max_binaries}")
    lb0, ub0 = program.bounds()
    best = None
    for values in itertools.product((0.0, 1.0), repeat=k):
        lb, ub = lb0.copy(), ub0.copy()
        skip = False
        for var, value in zip(program.binaries, values):
            if not lb0[var] <= value <= ub0[var]:
                skip = True
                break
            lb[var] = ub[var] = value
        if skip:
            continue
        try:
            sol = solve_socp(program, config, lb, ub)
        except SolverError as err:
            warnings.warn(f"Skipping fixing {values}: {err}", stacklevel=2)
            continue
        if sol.status == Status.OPTIMAL and (best is None or sol.objective < best.objective):
            best = sol
    if best is None:
        return Solution(Status.INFEASIBLE, program=program)
    return best
