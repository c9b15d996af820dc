import copy

import numpy as np

from maropf.utils import parse_weights

SENSES = ("<=", "==", ">=")


class Affine:
    """sum(coef * x[id]) + constant"""

    def __init__(self, terms=None, constant=0.0):
        self.terms = {}
        for var, coef in (terms or {}).items():
            if coef != 0:
                self.terms[var] = self.terms.get(var, 0.0) + float(coef)
        self.constant = float(constant)

    def evaluate(self, x):
        return self.constant + sum(coef * x[var] for var, coef in self.terms.items())

    def __repr__(self):
        body = " + ".join(f"{coef:.6g}*x{var}" for var, coef in sorted(self.terms.items()))
        return f"{body or '0'} + {self.constant:.6g}"


class Row:
    def __init__(self, terms, sense, rhs, tag=None):
        if sense not in SENSES:
            raise ValueError(f"Unknown row sense {sense}")
        self.terms = {var: float(coef) for var, coef in terms.items() if coef != 0}
        self.sense = sense
        self.rhs = float(rhs)
        self.tag = tag

    def key(self):
        return (tuple(sorted(self.terms.items())), self.sense, self.rhs)


class Cone:
    """Rotated cone ||u||^2 <= a * b with a, b >= 0."""

    def __init__(self, u, a, b, meta=None):
        self.u = list(u)
        self.a = a
        self.b = b
        self.meta = meta

    def affines(self):
        return self.u + [self.a, self.b]


class VariableMap:
    """(kind, index, t) -> variable id. Shared droop references use t=None."""

    def __init__(self):
        self.ids = {}
        self.keys = []

    def add(self, kind, index, t):
        key = (kind, index, t)
        if key in self.ids:
            raise KeyError(f"Variable {key} declared twice")
        self.ids[key] = len(self.keys)
        self.keys.append(key)
        return self.ids[key]

    def __getitem__(self, key):
        return self.ids[key]

    def __contains__(self, key):
        return key in self.ids

    def __len__(self):
        return len(self.keys)

    def get(self, key, default=None):
        return self.ids.get(key, default)

    def of_kind(self, kind):
        return [key for key in self.keys if key[0] == kind]

    def vector(self, x, kind, t, n):
        """Line vector of `kind` at step t; NaN where the kind is absent."""
        out = np.full(n, np.nan)
        for l in range(1, n + 1):
            var = self.ids.get((kind, l, t))
            if var is not None:
                out[l - 1] = x[var]
        return out


class ObjectiveWeights:
    def __init__(self, w_pc=0.6, w_pl=0.3, w_v=0.1):
        weights = np.array([w_pc, w_pl, w_v], dtype=float)
        if np.any(weights < 0) or not np.any(weights > 0):
            raise ValueError(f"Weights must be non-negative with one positive, got {weights}")
        self.w_pc, self.w_pl, self.w_v = (float(w) for w in weights)

    @classmethod
    def parse(cls, weights):
        return cls(*parse_weights(weights))

    def to_list(self):
        return [self.w_pc, self.w_pl, self.w_v]


class ConicProgram:
    def __init__(self, name=""):
        self.name = name
        self.vmap = VariableMap()
        self.lb = []
        self.ub = []
        self.binaries = []
        self.rows = []
        self.cones = []
        self.objective = Affine()
        # (y, v, v0p, big_m) per activation, read by presolve
        self.activations = []
        self.info = {}
        # equality rows a previous solve found linearly dependent
        self.dependent_rows = set()

    @property
    def n_var(self):
        return len(self.vmap)

    def add_variable(self, kind, index, t, lb=-np.inf, ub=np.inf, binary=False):
        if lb > ub:
            raise ValueError(f"Empty bounds [{lb}, {ub}] for {(kind, index, t)}")
        var = self.vmap.add(kind, index, t)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        if binary:
            self.binaries.append(var)
        return var

    def add_row(self, terms, sense, rhs, tag=None):
        self.rows.append(Row(terms, sense, rhs, tag))

    def add_cone(self, u, a, b, meta=None):
        self.cones.append(Cone(u, a, b, meta))

    def bounds(self):
        return np.array(self.lb), np.array(self.ub)

    def copy(self):
        return copy.deepcopy(self)


def row_residuals(program, x):
    """Positive entries are violations: one per row, then one per cone."""
    x = np.asarray(x, dtype=float)
    out = []
    for row in program.rows:
        lhs = sum(coef * x[var] for var, coef in row.terms.items())
        if row.sense == "<=":
            out.append(lhs - row.rhs)
        elif row.sense == ">=":
            out.append(row.rhs - lhs)
        else:
            out.append(abs(lhs - row.rhs))
    for cone in program.cones:
        a = cone.a.evaluate(x)
        b = cone.b.evaluate(x)
        norm2 = sum(u.evaluate(x) ** 2 for u in cone.u)
        out.append(max(norm2 - a * b, -a, -b))
    return np.array(out)


def _nonnegative(affine, lb):
    if not affine.terms:
        return affine.constant >= 0
    return affine.constant >= 0 and all(coef > 0 and lb[var] >= 0 for var, coef in affine.terms.items())


def check_program(program):
    """List of problems found: unknown variables, duplicate rows, cones without sign bounds."""
    issues = []
    n = program.n_var
    lb = program.lb
    for i, row in enumerate(program.rows):
        bad = [var for var in row.terms if not 0 <= var < n]
        if bad:
            issues.append(f"row {i} ({row.tag}) references undeclared variables {bad}")
    seen = {}
    for i, row in enumerate(program.rows):
        key = row.key()
        if key in seen:
            issues.append(f"row {i} ({row.tag}) duplicates row {seen[key]}")
        else:
            seen[key] = i
    for i, cone in enumerate(program.cones):
        for affine in cone.affines():
            bad = [var for var in affine.terms if not 0 <= var < n]
            if bad:
                issues.append(f"cone {i} {cone.meta} references undeclared variables {bad}")
        if not (_nonnegative(cone.a, lb) and _nonnegative(cone.b, lb)):
            issues.append(f"cone {i} {cone.meta} has a side not forced non-negative")
    return issues


def _terms_text(terms):
    return " ".join(f"{var}:{coef:.17g}" for var, coef in sorted(terms.items()))


def _affine_text(affine):
    return f"[{_terms_text(affine.terms)} | {affine.constant:.17g}]"


def dump_program(program, stream):
    """
    Sparse text form, one record per line:

        var <id> <kind> <index> <t> <lb> <ub> <C|B>
        row <id> <sense> <rhs> <tag> : <var>:<coef> ...
        cone <id> <meta> : u=[...] a=[...] b=[...]   ([terms | constant])
        obj : [terms | constant]
    """
    binaries = set(program.binaries)
    stream.write(f"# maropf program {program.name}\n")
    stream.write(f"# vars={program.n_var} rows={len(program.rows)} cones={len(program.cones)}\n")
    for var, (kind, index, t) in enumerate(program.vmap.keys):
        kind_flag = "B" if var in binaries else "C"
        stream.write(
            f"var {var} {kind} {index} {t} {program.lb[var]:.17g} {program.ub[var]:.17g} {kind_flag}\n"
        )
    for i, row in enumerate(program.rows):
        tag = "-" if row.tag is None else str(row.tag).replace(" ", "")
        stream.write(f"row {i} {row.sense} {row.rhs:.17g} {tag} : {_terms_text(row.terms)}\n")
    for i, cone in enumerate(program.cones):
        meta = "-" if cone.meta is None else ",".join(str(m) for m in cone.meta)
        u = ",".join(_affine_text(a) for a in cone.u)
        stream.write(f"cone {i} {meta} : u={u} a={_affine_text(cone.a)} b={_affine_text(cone.b)}\n")
    stream.write(f"obj : {_affine_text(program.objective)}\n")
