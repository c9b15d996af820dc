import numpy as np
import scipy.sparse

DEFAULT_BOX = 1e4
FIX_TOL = 1e-12


class Reduced:
    """
    Program restricted to its free variables, in the cone-program form
    s = h - G x, with the linear rows first and one SOC block per cone.
    """

    def __init__(self, n_full):
        self.n_full = n_full
        self.keep = np.array([], dtype=int)
        self.x_fixed = np.zeros(n_full)
        self.c = np.zeros(0)
        self.c0 = 0.0
        self.A = None
        self.b = np.zeros(0)
        # index into program.rows of each row of A, extra rows past the end
        self.eq_origin = np.zeros(0, dtype=int)
        self.G = None
        self.h = np.zeros(0)
        self.dims = {"l": 0, "q": [], "s": []}
        self.infeasible = None
        self.stats = {}

    @property
    def n(self):
        return len(self.keep)

    def expand(self, x_reduced):
        x = self.x_fixed.copy()
        x[self.keep] = x_reduced
        return x


def tighten_binaries(program, lb, ub):
    """Fixes y from (v, v0p) bounds that decide the activation on their own."""
    fixed = 0
    for y, v, v0p, _ in program.activations:
        if lb[y] == ub[y]:
            continue
        if lb[v] > ub[v0p] + FIX_TOL:
            lb[y] = ub[y] = 1.0
            fixed += 1
        elif ub[v] < lb[v0p] - FIX_TOL:
            lb[y] = ub[y] = 0.0
            fixed += 1
    return fixed


def presolve(program, lb, ub, steps, relax=False, feas_tol=1e-8):
    """
    Args:
        lb, ub: variable bounds for this solve (branching overrides applied)
        steps: dict of presolve step flags
        relax: treat free binaries as continuous in [lb, ub]
    """
    n_full = program.n_var
    lb = np.array(lb, dtype=float)
    ub = np.array(ub, dtype=float)
    red = Reduced(n_full)

    if steps.get("tighten_binaries", True):
        red.stats["binaries_tightened"] = tighten_binaries(program, lb, ub)
    if np.any(lb > ub + FIX_TOL):
        red.infeasible = "crossed bounds"
        return red
    if not relax:
        free = [y for y in program.binaries if ub[y] - lb[y] > FIX_TOL]
        if free:
            raise ValueError(f"{len(free)} binaries are free; fix them or relax")

    is_fixed = (ub - lb) <= FIX_TOL
    extra_rows = []
    if not steps.get("drop_fixed", True):
        for var in np.flatnonzero(is_fixed):
            extra_rows.append(({int(var): 1.0}, "==", 0.5 * (lb[var] + ub[var])))
        is_fixed = np.zeros(n_full, dtype=bool)
    red.x_fixed = np.where(is_fixed, 0.5 * (lb + ub), 0.0)
    red.stats["fixed"] = int(is_fixed.sum())

    def substitute(terms, constant):
        free = {}
        for var, coef in terms.items():
            if is_fixed[var]:
                constant += coef * red.x_fixed[var]
            else:
                free[var] = coef
        return free, constant

    # linear rows in a.x (sense) rhs form with fixed variables folded in
    eq_rows, le_rows = [], []
    eq_origin = []
    seen = set()
    dupes = 0
    rows = [(row.terms, row.sense, row.rhs) for row in program.rows] + extra_rows
    for origin, (terms, sense, rhs) in enumerate(rows):
        free, shift = substitute(terms, 0.0)
        rhs = rhs - shift
        if sense == ">=":
            free = {var: -coef for var, coef in free.items()}
            rhs = -rhs
            sense = "<="
        if not free:
            if (sense == "==" and abs(rhs) > feas_tol) or (sense == "<=" and rhs < -feas_tol):
                red.infeasible = f"constant row violated by {abs(rhs):.3e}"
                return red
            continue
        if steps.get("dedupe_rows", True):
            key = (tuple(sorted(free.items())), sense, rhs)
            if key in seen:
                dupes += 1
                continue
            seen.add(key)
        if sense == "==":
            eq_rows.append((free, rhs))
            eq_origin.append(origin)
        else:
            le_rows.append((free, rhs))
    red.stats["duplicates"] = dupes

    cones = []
    for cone in program.cones:
        parts = [substitute(affine.terms, affine.constant) for affine in cone.affines()]
        if all(not terms for terms, _ in parts):
            values = [const for _, const in parts]
            a, b = values[-2], values[-1]
            if sum(u ** 2 for u in values[:-2]) > a * b + feas_tol or min(a, b) < -feas_tol:
                red.infeasible = f"constant cone {cone.meta} violated"
                return red
            continue
        cones.append(parts)

    objective, red.c0 = substitute(program.objective.terms, program.objective.constant)

    referenced = np.zeros(n_full, dtype=bool)
    for terms, _ in eq_rows + le_rows:
        referenced[list(terms)] = True
    for parts in cones:
        for terms, _ in parts:
            referenced[list(terms)] = True
    for var, coef in list(objective.items()):
        if referenced[var]:
            continue
        bound = lb[var] if coef > 0 else ub[var]
        if np.isfinite(bound):
            red.x_fixed[var] = bound
            red.c0 += coef * bound
            del objective[var]
        else:
            referenced[var] = True
    for var in np.flatnonzero(~referenced & ~is_fixed):
        red.x_fixed[var] = float(np.clip(0.0, lb[var], ub[var]))
    red.stats["unreferenced"] = int(np.sum(~referenced & ~is_fixed))

    keep = np.flatnonzero(referenced & ~is_fixed)
    red.keep = keep
    col = {int(var): j for j, var in enumerate(keep)}
    n = len(keep)
    red.c = np.zeros(n)
    for var, coef in objective.items():
        red.c[col[var]] += coef

    def sparse(rows_terms, n_rows, scale=1.0):
        data, ri, ci = [], [], []
        for i, terms in enumerate(rows_terms):
            for var, coef in terms.items():
                ri.append(i)
                ci.append(col[var])
                data.append(scale * coef)
        return scipy.sparse.coo_matrix((data, (ri, ci)), shape=(n_rows, n)).tocsc()

    red.A = sparse([terms for terms, _ in eq_rows], len(eq_rows))
    red.b = np.array([rhs for _, rhs in eq_rows])
    red.eq_origin = np.array(eq_origin, dtype=int)

    lo = np.where(np.isfinite(lb[keep]), lb[keep], -DEFAULT_BOX)
    hi = np.where(np.isfinite(ub[keep]), ub[keep], DEFAULT_BOX)
    eye = scipy.sparse.identity(n, format="csc")
    blocks = [sparse([terms for terms, _ in le_rows], len(le_rows)), eye, -eye]
    h = [np.array([rhs for _, rhs in le_rows]), hi, -lo]

    # ||u||^2 <= a b  as  (a + b, a - b, 2u) in the second-order cone
    for parts in cones:
        *u, (a_terms, a0), (b_terms, b0) = parts
        comps = [_combine(a_terms, b_terms, 1.0), _combine(a_terms, b_terms, -1.0)]
        comps += [{var: 2.0 * coef for var, coef in terms.items()} for terms, _ in u]
        consts = [a0 + b0, a0 - b0] + [2.0 * const for _, const in u]
        blocks.append(sparse(comps, len(comps), scale=-1.0))
        h.append(np.array(consts))
        red.dims["q"].append(len(comps))
    red.dims["l"] = len(le_rows) + 2 * n
    red.G = scipy.sparse.vstack(blocks, format="csc") if n else scipy.sparse.csc_matrix((0, 0))
    red.h = np.concatenate(h) if h else np.zeros(0)
    red.stats["vars"] = n
    red.stats["rows"] = len(eq_rows) + len(le_rows)
    red.stats["cones"] = len(cones)
    return red


def _combine(a_terms, b_terms, sign):
    out = dict(a_terms)
    for var, coef in b_terms.items():
        out[var] = out.get(var, 0.0) + sign * coef
    return {var: coef for var, coef in out.items() if coef != 0}
