"""Dense bounded-variable simplex with dual extraction, branch and bound,
and a brute-force enumeration oracle.

The solver is sized for desk-scale market models (a few hundred rows and
columns).  Everything is dense numpy; no cutting planes.  Branch-and-bound children are
re-optimised with a bounded dual simplex from the parent basis.

Dual convention: ``duals[i]`` is the sensitivity of the optimal objective
to the right-hand side of row ``i`` (in the objective's own sense).  For a
cost-minimising energy balance ``sum(gen) == demand`` this is the marginal
price.
"""
from __future__ import annotations

import heapq
import itertools
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TOL_FEAS = 1e-7
TOL_DUAL = 1e-6
_TOL_PIVOT = 1e-9
_TOL_RC = 1e-9
_INT_TOL = 1e-6
_REFACTOR_EVERY = 64

SENSES = ("<=", "==", ">=")


class SolverError(RuntimeError):
    """Raised when the simplex cannot finish (cycling guard, singular basis)."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class TooManyBinariesError(ValueError):
    def __init__(self, count, limit):
        super().__init__(f"enumeration refused: {count} binaries exceed the limit of {limit}")
        self.count = count
        self.limit = limit


@dataclass(frozen=True)
class Constraint:
    coeffs: dict
    sense: str
    rhs: float
    name: str = ""


@dataclass(frozen=True)
class LinearProgram:
    """An LP/MILP in row form.  Build one with :class:`ModelBuilder`."""

    lb: np.ndarray
    ub: np.ndarray
    cost: np.ndarray
    rows: tuple
    integer: np.ndarray
    maximize: bool = False
    names: tuple = ()

    def __post_init__(self):
        n = len(self.cost)
        for arr in (self.lb, self.ub, self.integer):
            if len(arr) != n:
                raise ValueError("bound/integrality arrays must match the variable count")
        bad = np.nonzero(self.lb > self.ub)[0]
        if bad.size:
            raise ValueError(f"variable {int(bad[0])} has lower bound above upper bound")
        ints = np.nonzero(self.integer)[0]
        if ints.size and (np.any(self.lb[ints] < 0) or np.any(self.ub[ints] > 1)):
            raise ValueError("binary variables need bounds within [0, 1]")
        for k, row in enumerate(self.rows):
            if row.sense not in SENSES:
                raise ValueError(f"row {k}: unknown sense {row.sense!r}")
            for j in row.coeffs:
                if not 0 <= j < n:
                    raise ValueError(f"row {k} references undeclared variable {j}")
        for arr in (self.lb, self.ub, self.cost, self.integer):
            arr.setflags(write=False)

    @property
    def num_vars(self):
        return len(self.cost)

    @property
    def num_rows(self):
        return len(self.rows)

    def with_bounds(self, lb=None, ub=None, integer=None):
        return LinearProgram(
            lb=np.array(self.lb if lb is None else lb, dtype=float),
            ub=np.array(self.ub if ub is None else ub, dtype=float),
            cost=np.array(self.cost, dtype=float),
            rows=self.rows,
            integer=np.array(self.integer if integer is None else integer, dtype=bool),
            maximize=self.maximize,
            names=self.names,
        )

    def relaxed(self):
        return self.with_bounds(integer=np.zeros(self.num_vars, dtype=bool))

    def dense(self):
        """Return (A, rhs, senses) with A dense (rows x vars)."""
        A = np.zeros((self.num_rows, self.num_vars))
        for i, row in enumerate(self.rows):
            for j, a in row.coeffs.items():
                A[i, j] += a
        rhs = np.array([r.rhs for r in self.rows], dtype=float)
        return A, rhs, [r.sense for r in self.rows]

    def objective_value(self, x):
        return float(np.dot(self.cost, x))


class ModelBuilder:
    """Incremental construction of a :class:`LinearProgram`."""

    def __init__(self, maximize=False):
        self.maximize = maximize
        self._lb, self._ub, self._cost, self._int, self._names = [], [], [], [], []
        self._rows = []

    def add_var(self, name="", lb=0.0, ub=math.inf, cost=0.0, binary=False):
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._cost.append(float(cost))
        self._int.append(bool(binary))
        self._names.append(name)
        return len(self._cost) - 1

    def add_cost(self, j, amount):
        self._cost[j] += float(amount)

    def tighten(self, j, lb, ub):
        self._lb[j] = max(self._lb[j], float(lb))
        self._ub[j] = min(self._ub[j], float(ub))

    def clear_costs(self):
        self._cost = [0.0] * len(self._cost)

    def add_row(self, coeffs, sense, rhs, name=""):
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        merged = {}
        for j, a in coeffs.items() if isinstance(coeffs, dict) else coeffs:
            merged[j] = merged.get(j, 0.0) + float(a)
        self._rows.append(Constraint(merged, sense, float(rhs), name))
        return len(self._rows) - 1

    @property
    def num_vars(self):
        return len(self._cost)

    def build(self):
        return LinearProgram(
            lb=np.array(self._lb, dtype=float),
            ub=np.array(self._ub, dtype=float),
            cost=np.array(self._cost, dtype=float),
            rows=tuple(self._rows),
            integer=np.array(self._int, dtype=bool),
            maximize=self.maximize,
            names=tuple(self._names),
        )


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    bound: float = math.nan
    gap: float = math.nan
    nodes: int = 0
    iterations: int = 0
    node_limit_hit: bool = False
    message: str = ""

    @property
    def optimal(self):
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# LP dump


_dump_counter = itertools.count()


def dump_lp(lp, path):
    """Write ``lp`` in the plain-text debug format (one item per line).

    ::

        sense min|max
        var <j> <name> <lb> <ub> <cost> C|B
        row <i> <name> <= | == | >= <rhs> : <j>:<coef> ...
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sense " + ("max" if lp.maximize else "min") + "\n")
        for j in range(lp.num_vars):
            name = lp.names[j] if lp.names and lp.names[j] else f"x{j}"
            kind = "B" if lp.integer[j] else "C"
            fh.write(f"var {j} {name} {float(lp.lb[j])!r} {float(lp.ub[j])!r} "
                     f"{float(lp.cost[j])!r} {kind}\n")
        for i, row in enumerate(lp.rows):
            terms = " ".join(f"{j}:{float(a)!r}" for j, a in sorted(row.coeffs.items()))
            fh.write(f"row {i} {row.name or f'r{i}'} {row.sense} {float(row.rhs)!r} : {terms}\n")


def _maybe_dump(lp, tag):
    out_dir = os.environ.get("GRIDCLEAR_LP_DUMP_DIR")
    if not out_dir:
        return
    os.makedirs(out_dir, exist_ok=True)
    dump_lp(lp, os.path.join(out_dir, f"{tag}_{next(_dump_counter):06d}.lp.txt"))


# ---------------------------------------------------------------------------
# Simplex core


@dataclass
class _StdForm:
    A: np.ndarray        # rows x cols, sign-normalised so that b >= 0
    b: np.ndarray
    lo: np.ndarray       # column lower bounds (0 unless tightened by branching)
    ub: np.ndarray
    cost: np.ndarray     # minimisation costs in standard columns
    n_struct: int        # columns mapping to user variables
    art_start: int
    row_sign: np.ndarray
    col_var: np.ndarray  # user variable of each structural column
    col_sign: np.ndarray
    shift: np.ndarray    # user x = shift + sum(col_sign * column value)
    basis0: np.ndarray
    col_of_var: np.ndarray  # column of a variable with finite lower bound, else -1

    def user_values(self, vals):
        x = self.shift.copy()
        np.add.at(x, self.col_var, self.col_sign * vals[:self.n_struct])
        return x


def _standard_form(lp, cmin):
    A_user, rhs, senses = lp.dense()
    m, n = A_user.shape
    cols, ubs, costs, col_var, col_sign = [], [], [], [], []
    shift = np.zeros(n)
    col_of_var = np.full(n, -1, dtype=int)
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo == hi:
            shift[j] = lo
            continue
        if math.isfinite(lo):
            shift[j] = lo
            col_of_var[j] = len(cols)
            cols.append(A_user[:, j]); ubs.append(hi - lo); costs.append(cmin[j])
            col_var.append(j); col_sign.append(1.0)
        elif math.isfinite(hi):
            shift[j] = hi
            cols.append(-A_user[:, j]); ubs.append(math.inf); costs.append(-cmin[j])
            col_var.append(j); col_sign.append(-1.0)
        else:
            cols.append(A_user[:, j]); ubs.append(math.inf); costs.append(cmin[j])
            col_var.append(j); col_sign.append(1.0)
            cols.append(-A_user[:, j]); ubs.append(math.inf); costs.append(-cmin[j])
            col_var.append(j); col_sign.append(-1.0)
    n_struct = len(cols)
    b = rhs - A_user @ shift
    slack_of_row = {}
    for i, s in enumerate(senses):
        if s == "==":
            continue
        col = np.zeros(m)
        col[i] = 1.0 if s == "<=" else -1.0
        slack_of_row[i] = len(cols)
        cols.append(col); ubs.append(math.inf); costs.append(0.0)
    row_sign = np.where(b < 0, -1.0, 1.0)
    A = np.column_stack(cols) if cols else np.zeros((m, 0))
    A = A * row_sign[:, None]
    b = b * row_sign
    art_start = A.shape[1]
    basis0 = np.empty(m, dtype=int)
    art_cols = []
    for i in range(m):
        k = slack_of_row.get(i)
        if k is not None and A[i, k] > 0:
            basis0[i] = k
        else:
            basis0[i] = art_start + len(art_cols)
            e = np.zeros(m)
            e[i] = 1.0
            art_cols.append(e)
    if art_cols:
        A = np.hstack([A, np.column_stack(art_cols)])
    ub = np.array(ubs + [math.inf] * len(art_cols))
    cost = np.array(costs + [0.0] * len(art_cols))
    return _StdForm(A, b, np.zeros(A.shape[1]), ub, cost, n_struct, art_start, row_sign,
                    np.array(col_var, dtype=int), np.array(col_sign), shift, basis0,
                    col_of_var)


class _Tableau:
    """Full tableau ``T = B^-1 A`` over columns with bounds ``lo <= x <= ub``.

    Nonbasic columns sit at ``lo`` or, when ``at_upper`` is set, at ``ub``.
    """

    def __init__(self, std, basis, at_upper=None, lo=None, ub=None):
        self.std = std
        self.A = std.A
        m, ncol = self.A.shape
        self.m, self.ncol = m, ncol
        self.basis = basis.copy()
        self.at_upper = np.zeros(ncol, dtype=bool) if at_upper is None else at_upper.copy()
        self.lo = std.lo.copy() if lo is None else lo.copy()
        self.ub = std.ub.copy() if ub is None else ub.copy()
        self.iterations = 0
        self.refactor()

    def nonbasic_values(self):
        vals = np.where(self.at_upper, self.ub, self.lo)
        vals[self.basis] = 0.0
        return vals

    def refactor(self):
        B = self.A[:, self.basis]
        if self.m == 0:
            self.T = np.zeros((0, self.ncol))
            self.beta = np.zeros(0)
            return
        try:
            self.T = np.linalg.solve(B, self.A)
            self.beta = np.linalg.solve(B, self.std.b - self.A @ self.nonbasic_values())
        except np.linalg.LinAlgError:
            self.T = None
        if self.T is None or not np.all(np.isfinite(self.T)) or np.abs(self.T).max() > 1e11:
            _, r = np.linalg.qr(B)
            row = int(np.argmin(np.abs(np.diag(r))))
            raise SolverError(f"numerically singular basis (offending row {row})", row=row)

    def reduced_costs(self, cost):
        if self.m == 0:
            return cost.copy()
        return cost - cost[self.basis] @ self.T

    def _movable(self, can_enter):
        is_basic = np.zeros(self.ncol, dtype=bool)
        is_basic[self.basis] = True
        return can_enter & (self.ub > self.lo), is_basic

    def run(self, cost, can_enter, max_iter, degenerate_limit):
        """Primal simplex from a primal-feasible basis."""
        d = self.reduced_costs(cost)
        movable, is_basic = self._movable(can_enter)
        bland = False
        streak = 0
        since_refactor = 0
        for _ in range(max_iter):
            elig = movable & ~is_basic & np.where(self.at_upper, d > _TOL_RC, d < -_TOL_RC)
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return "optimal"
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = -1.0 if self.at_upper[q] else 1.0
            alpha = direction * self.T[:, q]
            t_best = self.ub[q] - self.lo[q]
            leave, leave_upper = -1, False
            loB = self.lo[self.basis]
            pos = np.flatnonzero(alpha > _TOL_PIVOT)
            if pos.size:
                ratios = np.maximum(self.beta[pos] - loB[pos], 0.0) / alpha[pos]
                k = self._pick(pos, ratios, alpha, bland)
                if ratios[k] < t_best:
                    t_best, leave, leave_upper = ratios[k], int(pos[k]), False
            ubB = self.ub[self.basis]
            neg = np.flatnonzero((alpha < -_TOL_PIVOT) & np.isfinite(ubB))
            if neg.size:
                ratios = np.maximum(ubB[neg] - self.beta[neg], 0.0) / -alpha[neg]
                k = self._pick(neg, ratios, alpha, bland)
                if ratios[k] < t_best or (leave >= 0 and ratios[k] == t_best and bland
                                          and self.basis[neg[k]] < self.basis[leave]):
                    t_best, leave, leave_upper = ratios[k], int(neg[k]), True
            if not math.isfinite(t_best):
                return "unbounded"
            self.iterations += 1
            if t_best <= 1e-12:
                streak += 1
                if streak >= degenerate_limit:
                    bland = True
            else:
                streak = 0
                bland = False
            self.beta -= t_best * alpha
            if leave < 0:
                self.at_upper[q] = not self.at_upper[q]
                continue
            new_val = self.lo[q] + t_best if direction > 0 else self.ub[q] - t_best
            old = self.basis[leave]
            self.at_upper[old] = leave_upper
            self.at_upper[q] = False
            is_basic[old] = False
            is_basic[q] = True
            self._pivot(leave, q)
            self.beta[leave] = new_val
            d -= d[q] * self.T[leave]
            d[q] = 0.0
            since_refactor += 1
            if since_refactor >= _REFACTOR_EVERY:
                self.refactor()
                d = self.reduced_costs(cost)
                since_refactor = 0
        raise SolverError(f"simplex iteration guard exceeded ({max_iter} pivots); "
                          "possible cycling")

    def dual_run(self, cost, can_enter, max_iter, tol=TOL_FEAS):
        """Bounded dual simplex from a dual-feasible basis (after bound changes)."""
        d = self.reduced_costs(cost)
        movable, is_basic = self._movable(can_enter)
        since_refactor = 0
        fresh = False
        for _ in range(max_iter):
            loB = self.lo[self.basis]
            ubB = self.ub[self.basis]
            below = loB - self.beta
            above = self.beta - ubB
            viol = np.maximum(below, above)
            viol = viol / np.maximum(1.0, np.abs(self.beta))
            r = int(np.argmax(viol)) if self.m else 0
            if self.m == 0 or viol[r] <= tol:
                return "optimal"
            row = self.T[r]
            free = movable & ~is_basic
            if below[r] > 0:
                mask = free & np.where(self.at_upper, row > _TOL_PIVOT, row < -_TOL_PIVOT)
                target = loB[r]
            else:
                mask = free & np.where(self.at_upper, row < -_TOL_PIVOT, row > _TOL_PIVOT)
                target = ubB[r]
            cand = np.flatnonzero(mask)
            if cand.size == 0:
                if fresh:
                    return "infeasible"
                # rule out accumulated roundoff before giving up on the node
                self.refactor()
                d = self.reduced_costs(cost)
                since_refactor = 0
                fresh = True
                continue
            fresh = False
            ratios = np.abs(d[cand]) / np.abs(row[cand])
            best = ratios.min()
            ties = cand[ratios <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(row[ties]))])
            self.iterations += 1
            step = (self.beta[r] - target) / row[q]
            xq = self.ub[q] if self.at_upper[q] else self.lo[q]
            self.beta -= step * self.T[:, q]
            old = self.basis[r]
            self.at_upper[old] = below[r] <= 0
            self.at_upper[q] = False
            is_basic[old] = False
            is_basic[q] = True
            self._pivot(r, q)
            self.beta[r] = xq + step
            d -= d[q] * self.T[r]
            d[q] = 0.0
            since_refactor += 1
            if since_refactor >= _REFACTOR_EVERY:
                self.refactor()
                d = self.reduced_costs(cost)
                since_refactor = 0
        raise SolverError(f"dual simplex iteration guard exceeded ({max_iter} pivots)")

    def _pick(self, idx, ratios, alpha, bland):
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12)
        if ties.size == 1:
            return int(ties[0])
        if bland:
            return int(ties[np.argmin(self.basis[idx[ties]])])
        return int(ties[np.argmax(np.abs(alpha[idx[ties]]))])

    def _pivot(self, r, q):
        T = self.T
        row = T[r] / T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        T -= np.outer(col, row)
        T[r] = row
        self.basis[r] = q

    def drive_out_artificials(self):
        art = self.std.art_start
        for r in range(self.m):
            if self.basis[r] < art:
                continue
            row = self.T[r, :art].copy()
            row[self.basis[self.basis < art]] = 0.0
            cand = np.flatnonzero(np.abs(row) > 1e-7)
            if cand.size == 0:
                continue
            q = int(cand[np.argmax(np.abs(row[cand]))])
            val = self.ub[q] if self.at_upper[q] else self.lo[q]
            old = self.basis[r]
            self.at_upper[old] = False
            self.at_upper[q] = False
            self._pivot(r, q)
            self.beta[r] = val

    def values(self):
        vals = self.nonbasic_values()
        vals[self.basis] = self.beta
        return vals


def _check_continuous(lp):
    if np.any(lp.integer):
        raise ValueError("solve_lp needs a pure LP; relax or use solve_milp")


def solve_lp(lp, max_iter=None, degenerate_limit=50):
    """Solve a continuous LP with the two-phase bounded primal simplex."""
    _check_continuous(lp)
    _maybe_dump(lp, "lp")
    return _solve_lp(lp, max_iter, degenerate_limit)


def _iteration_guard(std, max_iter):
    m, ncol = std.A.shape
    return 50 * (m + ncol) + 1000 if max_iter is None else max_iter


def _cold_start(lp, max_iter=None, degenerate_limit=50):
    """Two-phase solve; returns (status, std, tableau)."""
    cmin = -lp.cost if lp.maximize else lp.cost
    std = _standard_form(lp, np.asarray(cmin, dtype=float))
    ncol = std.A.shape[1]
    max_iter = _iteration_guard(std, max_iter)
    tab = _Tableau(std, std.basis0)
    art = std.art_start
    if ncol > art:
        phase1 = np.zeros(ncol)
        phase1[art:] = 1.0
        tab.run(phase1, np.ones(ncol, dtype=bool), max_iter, degenerate_limit)
        infeas = float(np.sum(tab.values()[art:]))
        if infeas > TOL_FEAS * max(1.0, float(np.abs(std.b).max(initial=0.0))):
            return "infeasible", std, tab
        tab.drive_out_artificials()
        tab.ub[art:] = 0.0
        tab.refactor()
    status = tab.run(std.cost, _enterable(std), max_iter, degenerate_limit)
    return status, std, tab


def _enterable(std):
    can_enter = np.ones(std.A.shape[1], dtype=bool)
    can_enter[std.art_start:] = False
    return can_enter


def _solve_lp(lp, max_iter=None, degenerate_limit=50):
    status, std, tab = _cold_start(lp, max_iter, degenerate_limit)
    if status != "optimal":
        return SolveResult(status, iterations=tab.iterations)
    tab.refactor()
    x = std.user_values(tab.values())
    m = std.A.shape[0]
    if m:
        y_std = np.linalg.solve(tab.A[:, tab.basis].T, std.cost[tab.basis])
        y = y_std * std.row_sign
    else:
        y = np.zeros(0)
    A_user, _, _ = lp.dense()
    if lp.maximize:
        y = -y
    rc = lp.cost - A_user.T @ y
    return SolveResult("optimal", x=x, objective=lp.objective_value(x), duals=y,
                       reduced_costs=rc, bound=lp.objective_value(x), gap=0.0,
                       iterations=tab.iterations)


# ---------------------------------------------------------------------------
# Branch and bound


def _integral(x, idx):
    return np.all(np.abs(x[idx] - np.round(x[idx])) <= _INT_TOL)


def _polish(lp, x, idx):
    """Fix integers at their rounded values and re-solve for clean continuous values."""
    lb = np.array(lp.lb)
    ub = np.array(lp.ub)
    lb[idx] = ub[idx] = np.round(x[idx])
    res = _solve_lp(lp.with_bounds(lb=lb, ub=ub, integer=np.zeros(lp.num_vars, bool)))
    return res if res.optimal else None


def milp_gap(incumbent, bound, eps=1e-9):
    return max(0.0, (incumbent - bound) / max(abs(incumbent), eps))


@dataclass
class _Node:
    lo: np.ndarray        # column bounds of the node
    ub: np.ndarray
    basis: np.ndarray     # parent's optimal basis (warm start)
    at_upper: np.ndarray
    x: np.ndarray | None = None


class _NodeSolver:
    """Re-optimises branch-and-bound children from the parent basis.

    Each child differs from its parent in one binary bound, so the parent's
    optimal basis stays dual feasible and a few dual simplex pivots restore
    optimality.  Any numerical trouble falls back to a cold two-phase solve.
    """

    def __init__(self, lp, std, tab):
        self.lp = lp
        self.base = lp.relaxed()
        self.std = std
        self.can_enter = _enterable(std)
        self.max_iter = _iteration_guard(std, None)
        self.sign = -1.0 if lp.maximize else 1.0

    def node_from(self, tab, x):
        return _Node(tab.lo.copy(), tab.ub.copy(), tab.basis.copy(), tab.at_upper.copy(), x)

    def solve(self, node):
        """Return (status, objective in min-sense, x, node for children)."""
        try:
            tab = _Tableau(self.std, node.basis, node.at_upper, node.lo, node.ub)
            status = tab.dual_run(self.std.cost, self.can_enter, self.max_iter)
            if status == "optimal":
                status = tab.run(self.std.cost, self.can_enter, self.max_iter, 50)
                tab.refactor()
        except SolverError:
            return self._cold(node)
        if status != "optimal":
            return status, math.inf, None, None
        x = self.std.user_values(tab.values())
        return status, self.sign * self.lp.objective_value(x), x, self.node_from(tab, x)

    def _cold(self, node):
        lb = np.array(self.base.lb)
        ub = np.array(self.base.ub)
        for j, c in enumerate(self.std.col_of_var):
            if c >= 0:
                lb[j] = self.std.shift[j] + node.lo[c]
                ub[j] = self.std.shift[j] + node.ub[c]
        res = _solve_lp(self.base.with_bounds(lb=lb, ub=ub))
        if not res.optimal:
            return res.status, math.inf, None, None
        x = res.x
        # continue warm-starting from a node that carries no basis of its own
        fresh = _Node(node.lo.copy(), node.ub.copy(), node.basis.copy(), node.at_upper.copy(), x)
        return "optimal", self.sign * res.objective, x, fresh


def solve_milp(lp, gap=0.05, node_limit=20000):
    """Best-bound branch and bound over binary variables.

    Branches on the most fractional binary (ties to the lowest index).  Stops
    once ``(incumbent - bound) / max(|incumbent|, eps) <= gap``.  When the node
    limit is hit the best incumbent is returned with ``node_limit_hit`` set.
    """
    if not 0.0 <= gap <= 1.0:
        raise ValueError("gap must lie in [0, 1]")
    _maybe_dump(lp, "milp")
    idx = np.flatnonzero(lp.integer)
    base = lp.relaxed()
    if idx.size == 0:
        return _solve_lp(base)
    sign = -1.0 if lp.maximize else 1.0   # internal objective is minimised

    status, std, tab = _cold_start(base)
    if status != "optimal":
        return SolveResult(status, nodes=1, message="root relaxation " + status)
    tab.refactor()
    solver = _NodeSolver(lp, std, tab)
    root_x = std.user_values(tab.values())
    root_obj = sign * lp.objective_value(root_x)
    inc_obj, inc = math.inf, None
    counter = itertools.count()
    heap = [(root_obj, next(counter), solver.node_from(tab, root_x))]
    nodes = 1
    best_bound = root_obj
    limit_hit = False

    def consider(x):
        nonlocal inc_obj, inc
        pol = _polish(lp, x, idx)
        if pol is not None and sign * pol.objective < inc_obj:
            inc_obj, inc = sign * pol.objective, pol

    while heap:
        bound, _, node = heap[0]
        best_bound = bound
        if inc is not None and milp_gap(inc_obj, bound) <= gap:
            break
        if inc is not None and bound >= inc_obj - 1e-9 * max(1.0, abs(inc_obj)):
            best_bound = inc_obj
            heap.clear()
            break
        heapq.heappop(heap)
        x = node.x
        if _integral(x, idx):
            consider(x)
            continue
        if nodes >= node_limit:
            limit_hit = True
            heapq.heappush(heap, (bound, next(counter), node))
            break
        frac = np.abs(x[idx] - np.round(x[idx]))
        j = int(idx[np.argmax(frac)])
        c = std.col_of_var[j]
        val = x[j] - std.shift[j]
        for side in ("down", "up"):
            child = _Node(node.lo.copy(), node.ub.copy(), node.basis, node.at_upper)
            if side == "down":
                child.ub[c] = math.floor(val)
            else:
                child.lo[c] = math.ceil(val)
            nodes += 1
            cstatus, cobj, cx, cnode = solver.solve(child)
            if cstatus != "optimal":
                continue
            if cobj >= inc_obj - 1e-9 * max(1.0, abs(inc_obj)):
                continue
            if _integral(cx, idx):
                consider(cx)
            else:
                heapq.heappush(heap, (cobj, next(counter), cnode))
    if inc is None:
        if limit_hit:
            return SolveResult("node_limit", nodes=nodes, node_limit_hit=True,
                               bound=sign * best_bound, message="no incumbent found")
        return SolveResult("infeasible", nodes=nodes)
    best_bound = min(heap[0][0] if heap else inc_obj, inc_obj)
    return SolveResult("optimal", x=inc.x, objective=inc.objective, duals=None,
                       bound=sign * best_bound, gap=milp_gap(inc_obj, best_bound),
                       nodes=nodes, node_limit_hit=limit_hit)


def enumerate_oracle(lp, max_binaries=20, warm_start=False):
    """Exact MILP optimum by trying every binary assignment with :func:`solve_lp`.

    With ``warm_start`` the assignments are visited in Gray-code order and each
    LP is re-optimised from the previous one's basis; the winning assignment is
    then re-solved cold.  Same answer, far fewer pivots.
    """
    idx = np.flatnonzero(lp.integer)
    if idx.size > max_binaries:
        raise TooManyBinariesError(int(idx.size), max_binaries)
    if warm_start and idx.size:
        return _enumerate_warm(lp, idx)
    base = lp.relaxed()
    sign = -1.0 if lp.maximize else 1.0
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=idx.size):
        lb = np.array(base.lb)
        ub = np.array(base.ub)
        ok = True
        for j, v in zip(idx, bits):
            if v < lp.lb[j] or v > lp.ub[j]:
                ok = False
                break
            lb[j] = ub[j] = v
        if not ok:
            continue
        res = solve_lp(base.with_bounds(lb=lb, ub=ub))
        if res.optimal and (best is None or sign * res.objective < sign * best.objective - 1e-12):
            best = res
    if best is None:
        return SolveResult("infeasible", message="no binary assignment is feasible")
    return SolveResult("optimal", x=best.x, objective=best.objective,
                       bound=best.objective, gap=0.0)


def _enumerate_warm(lp, idx):
    base = lp.relaxed()
    sign = -1.0 if lp.maximize else 1.0
    status, std, tab = _cold_start(base)
    if status == "infeasible":
        return SolveResult("infeasible", message="no binary assignment is feasible")
    if status != "optimal":
        # an unbounded relaxation says nothing about single assignments
        return enumerate_oracle(lp, max_binaries=idx.size)
    tab.refactor()
    solver = _NodeSolver(lp, std, tab)
    node = solver.node_from(tab, None)
    fixed = {int(j): lp.lb[j] for j in idx if std.col_of_var[j] < 0}
    free = [int(j) for j in idx if std.col_of_var[j] >= 0]
    bits = np.zeros(len(free))
    best_obj, best_bits = math.inf, None
    for step in range(2 ** len(free)):
        if step:
            flip = (step & -step).bit_length() - 1     # Gray code: one bit per step
            bits[flip] = 1.0 - bits[flip]
        child = _Node(node.lo.copy(), node.ub.copy(), node.basis, node.at_upper)
        for j, v in zip(free, bits):
            c = std.col_of_var[j]
            child.lo[c] = child.ub[c] = v - std.shift[j]
        cstatus, cobj, _, cnode = solver.solve(child)
        if cstatus != "optimal":
            continue
        node = cnode
        if cobj < best_obj - 1e-12:
            best_obj, best_bits = cobj, bits.copy()
    if best_bits is None:
        return SolveResult("infeasible", message="no binary assignment is feasible")
    lb, ub = np.array(base.lb), np.array(base.ub)
    for j, v in list(fixed.items()) + list(zip(free, best_bits)):
        lb[j] = ub[j] = v
    res = solve_lp(base.with_bounds(lb=lb, ub=ub))
    return SolveResult("optimal", x=res.x, objective=res.objective, bound=res.objective,
                       gap=0.0)


def check_lp_optimality(lp, res, tol_feas=TOL_FEAS, tol_dual=TOL_DUAL):
    """Return a list of violated optimality conditions (empty if certified)."""
    problems = []
    A, rhs, senses = lp.dense()
    x, y, rc = res.x, res.duals, res.reduced_costs
    act = A @ x
    scale = max(1.0, float(np.abs(lp.cost).max(initial=0.0)))
    for i, s in enumerate(senses):
        viol = {"<=": act[i] - rhs[i], ">=": rhs[i] - act[i], "==": abs(act[i] - rhs[i])}[s]
        if viol > tol_feas * max(1.0, abs(rhs[i])):
            problems.append(f"row {i} primal violation {viol:.3g}")
        # dual sign (sensitivity convention, minimisation view)
        yi = -y[i] if lp.maximize else y[i]
        if s == "<=" and yi > tol_dual * scale:
            problems.append(f"row {i} dual has wrong sign")
        if s == ">=" and yi < -tol_dual * scale:
            problems.append(f"row {i} dual has wrong sign")
        slack = abs(act[i] - rhs[i])
        if s != "==" and slack > tol_feas * max(1.0, abs(rhs[i])) and abs(yi) > tol_dual * scale:
            problems.append(f"row {i} complementary slackness violated")
    rcm = -rc if lp.maximize else rc
    for j in range(lp.num_vars):
        lo, hi = lp.lb[j], lp.ub[j]
        if x[j] < lo - tol_feas or x[j] > hi + tol_feas:
            problems.append(f"var {j} bound violation")
        at_lo = math.isfinite(lo) and abs(x[j] - lo) <= tol_feas * max(1.0, abs(lo))
        at_hi = math.isfinite(hi) and abs(x[j] - hi) <= tol_feas * max(1.0, abs(hi))
        if rcm[j] > tol_dual * scale and not at_lo:
            problems.append(f"var {j} reduced cost {rcm[j]:.3g} but not at lower bound")
        if rcm[j] < -tol_dual * scale and not at_hi:
            problems.append(f"var {j} reduced cost {rcm[j]:.3g} but not at upper bound")
    # strong duality: c.x == b.y + sum of bound terms
    dual_obj = float(rhs @ y)
    for j in range(lp.num_vars):
        if abs(rc[j]) > 0:
            dual_obj += rc[j] * x[j]
    primal = lp.objective_value(x)
    if abs(primal - dual_obj) > tol_dual * max(1.0, abs(primal)):
        problems.append(f"duality gap {primal - dual_obj:.3g}")
    return problems
