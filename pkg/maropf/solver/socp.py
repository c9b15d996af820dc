import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from cvxopt import blas, matrix, solvers, spmatrix

from maropf.solver.base import IterLimit, NumericalBreakdown, Solution, SolverConfig, Status
from maropf.solver.presolve import presolve


def to_spmatrix(M):
    coo = scipy.sparse.coo_matrix(M)
    return spmatrix(
        coo.data.astype(float).tolist(),
        coo.row.astype(int).tolist(),
        coo.col.astype(int).tolist(),
        size=coo.shape,
    )


def _column(a):
    return np.array(a, dtype=float).ravel()


def _cone_groups(dims):
    """SOC blocks grouped by size: {size: (cone indices, z offsets)}."""
    groups = {}
    offset = dims["l"]
    for k, size in enumerate(dims["q"]):
        ks, offsets = groups.setdefault(size, ([], []))
        ks.append(k)
        offsets.append(offset)
        offset += size
    return {size: (np.array(ks), np.array(offsets)) for size, (ks, offsets) in groups.items()}


def sparse_kkt(G, A, dims):
    """
    kktsolver for conelp: factors

        [ 0  A'  G'   ]
        [ A  0   0    ]
        [ G  0  -W'W  ]

    with a sparse LU and maps the last block back through W. The sparsity
    pattern is fixed at construction; each factorization only refills the
    scaling blocks, batched over cones of equal size.
    """
    n = G.shape[1]
    p = A.shape[0]
    m = G.shape[0]
    N = n + p + m
    n_lin = dims["l"]
    A = scipy.sparse.coo_matrix(A)
    G = scipy.sparse.coo_matrix(G)
    rows = [A.row + n, A.col, G.row + n + p, G.col]
    cols = [A.col, A.row + n, G.col, G.row + n + p]
    static = np.concatenate([A.data, A.data, G.data, G.data]).astype(float)

    lin = n + p + np.arange(n_lin)
    rows.append(lin)
    cols.append(lin)
    groups = _cone_groups(dims)
    index = {}
    for size, (_, offsets) in groups.items():
        block = offsets[:, None] + np.arange(size)[None, :]
        index[size] = block
        z = n + p + block
        rows.append(np.repeat(z, size, axis=1).ravel())
        cols.append(np.tile(z, (1, size)).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    signs = {size: np.diag(np.r_[1.0, -np.ones(size - 1)]) for size in groups}

    def factor(W):
        d = _column(W["d"])
        beta = np.asarray(W["beta"], dtype=float)
        data = [static, -(d ** 2)]
        scalings = {}
        for size, (ks, _) in groups.items():
            V = np.stack([_column(W["v"][k]) for k in ks])
            Wk = beta[ks, None, None] * (2.0 * np.einsum("ki,kj->kij", V, V) - signs[size])
            scalings[size] = Wk
            data.append(-np.matmul(Wk, Wk).ravel())
        K = scipy.sparse.coo_matrix((np.concatenate(data), (rows, cols)), shape=(N, N)).tocsc()
        try:
            lu = scipy.sparse.linalg.splu(K, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as err:
            raise ArithmeticError(str(err))

        def solve(x, y, z):
            rhs = np.concatenate([_column(x), _column(y), _column(z)])
            sol = lu.solve(rhs)
            if not np.all(np.isfinite(sol)):
                raise ArithmeticError("Non-finite KKT solution")
            w = sol[n + p :]
            uz = np.empty(m)
            uz[:n_lin] = d * w[:n_lin]
            for size, Wk in scalings.items():
                block = index[size]
                uz[block] = np.einsum("kij,kj->ki", Wk, w[block])
            blas.copy(matrix(sol[:n]), x)
            if p:
                blas.copy(matrix(sol[n : n + p]), y)
            blas.copy(matrix(uz), z)

        return solve

    return factor


def independent_rows(A, b, tol=1e-10):
    """Keeps a maximal independent set of equality rows by pivoted QR on A'."""
    if A.shape[0] == 0:
        return A, b, np.arange(0)
    _, R, piv = scipy.linalg.qr(A.toarray().T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(diag[0], 1.0))) if len(diag) else 0
    rows = np.sort(piv[:rank])
    return A[rows], b[rows], rows


def interior_start(red, x_full):
    """
    Primal start for conelp from a point of a neighbouring program, with s
    shifted into the interior of the cone as conelp does for its own start.
    """
    x = x_full[red.keep]
    s = red.h - red.G @ x
    n_lin = red.dims["l"]
    heads = n_lin + np.cumsum([0] + list(red.dims["q"]))[:-1].astype(int)
    ts = np.max(-s[:n_lin], initial=-np.inf)
    for head, size in zip(heads, red.dims["q"]):
        ts = max(ts, np.linalg.norm(s[head + 1 : head + size]) - s[head])
    if ts >= -1e-8 * max(np.linalg.norm(s), 1.0):
        s[:n_lin] += 1.0 + ts
        s[heads] += 1.0 + ts
    return {"x": matrix(x), "s": matrix(s)}


def _conelp(red, A, b, config, start=None):
    options = {
        "show_progress": False,
        "maxiters": config.max_iters,
        "abstol": config.opt_tol,
        "reltol": config.opt_tol,
        "feastol": config.feas_tol,
    }
    args = (
        matrix(red.c),
        to_spmatrix(red.G),
        matrix(red.h),
        red.dims,
        to_spmatrix(A),
        matrix(b) if len(b) else matrix(0.0, (0, 1)),
    )
    kkt = sparse_kkt(red.G, A, red.dims)
    if start is not None:
        try:
            return solvers.conelp(*args, kktsolver=kkt, primalstart=interior_start(red, start), options=options)
        except ValueError:
            pass
    return solvers.conelp(*args, kktsolver=kkt, options=options)


def _accept_unknown(sol, config):
    def small(key, tol):
        value = sol.get(key)
        return value is not None and value <= 10.0 * tol

    gap_ok = small("relative gap", config.opt_tol) or small("gap", config.opt_tol)
    return small("primal infeasibility", config.feas_tol) and small("dual infeasibility", config.feas_tol) and gap_ok


def _drift(red, A, x):
    if A.shape[0] == red.A.shape[0]:
        return 0.0
    return np.max(np.abs(red.A @ x[red.keep] - red.b), initial=0.0)


def solve_socp(program, config=None, lb=None, ub=None, relax=False, start=None):
    """
    Interior-point solve of a program whose binaries are fixed through
    lb/ub, or relaxed to [0, 1] when `relax` is set.

    Args:
        start: full primal vector of a neighbouring solve (a parent node),
            used as the primal starting point when config.warm_start is set
    """
    config = config if config is not None else SolverConfig()
    base_lb, base_ub = program.bounds()
    lb = base_lb if lb is None else lb
    ub = base_ub if ub is None else ub
    start = start if config.warm_start else None

    red = presolve(program, lb, ub, config.presolve, relax=relax, feas_tol=config.feas_tol)
    stats = dict(red.stats)
    if red.infeasible is not None:
        config.log.record("ipm", it=0, status=Status.INFEASIBLE, reason=red.infeasible.replace(" ", "_"))
        stats["reason"] = red.infeasible
        return Solution(Status.INFEASIBLE, stats=stats, program=program)
    if red.n == 0:
        x = red.expand(np.zeros(0))
        config.log.record("ipm", it=0, status=Status.OPTIMAL, obj=float(program.objective.evaluate(x)))
        stats["iterations"] = 0
        return Solution(Status.OPTIMAL, x, float(program.objective.evaluate(x)), stats, program)

    A, b = red.A, red.b
    known = np.isin(red.eq_origin, list(program.dependent_rows))
    if known.any():
        A, b = red.A[~known], red.b[~known]
    try:
        sol = _conelp(red, A, b, config, start)
        if known.any() and sol["x"] is not None:
            if _drift(red, A, red.expand(_column(sol["x"]))) > 10.0 * config.feas_tol:
                raise ArithmeticError("Cached dependent rows are independent here")
    except (ValueError, ArithmeticError):
        # rank-deficient equality rows
        A, b, rows = independent_rows(red.A, red.b)
        program.dependent_rows.difference_update(red.eq_origin[rows].tolist())
        program.dependent_rows.update(np.delete(red.eq_origin, rows).tolist())
        try:
            sol = _conelp(red, A, b, config, start)
        except (ValueError, ArithmeticError) as err:
            raise NumericalBreakdown(f"KKT system could not be factored: {err}")
    stats["dependent_rows"] = int(red.A.shape[0] - A.shape[0])
    stats["warm_start"] = start is not None

    status = sol["status"]
    stats.update(
        {
            "iterations": int(sol.get("iterations") or 0),
            "pres": sol.get("primal infeasibility"),
            "dres": sol.get("dual infeasibility"),
            "gap": sol.get("gap"),
            "ipm_status": status,
        }
    )
    config.log.record(
        "ipm",
        it=stats["iterations"],
        pres=float(stats["pres"] or 0.0),
        dres=float(stats["dres"] or 0.0),
        gap=float(stats["gap"] or 0.0),
        status=status.replace(" ", "_"),
    )

    if status == "primal infeasible":
        return Solution(Status.INFEASIBLE, stats=stats, program=program)
    if status == "dual infeasible":
        raise NumericalBreakdown("Dual infeasibility reported on a bounded program")
    if status == "unknown" and not _accept_unknown(sol, config):
        if stats["iterations"] >= config.max_iters:
            raise IterLimit(f"Interior point stopped after {config.max_iters} iterations")
        raise NumericalBreakdown(f"Interior point stalled (pres={stats['pres']}, dres={stats['dres']})")

    x = red.expand(_column(sol["x"]))
    if not np.all(np.isfinite(x)):
        raise NumericalBreakdown("Non-finite primal point")
    if _drift(red, A, x) > 10.0 * config.feas_tol:
        return Solution(Status.INFEASIBLE, stats=stats, program=program)
    return Solution(Status.OPTIMAL, x, float(program.objective.evaluate(x)), stats, program)
