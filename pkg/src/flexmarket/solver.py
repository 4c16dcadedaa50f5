"""Sparse linear/mixed-integer model container with pluggable solve backends.

The default backend wraps HiGHS through scipy. Dual values follow one
convention throughout: ``dual[c]`` is the rate of change of the objective when
constraint ``c``'s bounds are shifted upward by one unit. For an equality row
this is the usual shadow price of the right-hand side.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

INF = float("inf")

BACKEND_ENV_VAR = "FLEXMARKET_SOLVER"


class SolveError(RuntimeError):
    """Solver failed for a reason other than infeasibility."""


class InfeasibleError(SolveError):
    """The model admits no feasible point."""


@dataclass
class Variable:
    name: str
    key: tuple
    lb: float
    ub: float
    integer: bool
    index: int


@dataclass
class Constraint:
    name: str
    key: tuple
    coeffs: dict[int, float]
    lb: float
    ub: float
    index: int


@dataclass
class SolveResult:
    status: str                      # "optimal" | "infeasible" | "limit"
    x: np.ndarray
    objective: float
    mip_gap: float = 0.0
    duals: np.ndarray | None = None  # per constraint index, pricing solves only

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class LinearModel:
    """Registry of variables, linear constraints and a tagged objective.

    Objective terms carry a tag so a solved model can report its cost
    decomposition; ``decompose`` must reproduce the objective exactly.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self._var_lookup: dict[tuple[str, tuple], int] = {}
        self._obj: dict[int, float] = {}
        self._obj_terms: list[tuple[str, int, float]] = []
        self._obj_consts: list[tuple[str, float]] = []

    # -- variables ---------------------------------------------------------

    def add_var(self, name: str, key: tuple = (), lb: float = 0.0,
                ub: float = INF, integer: bool = False) -> int:
        idx = len(self.variables)
        self.variables.append(Variable(name, key, lb, ub, integer, idx))
        self._var_lookup[(name, key)] = idx
        return idx

    def var(self, name: str, key: tuple = ()) -> int:
        return self._var_lookup[(name, key)]

    def has_var(self, name: str, key: tuple = ()) -> bool:
        return (name, key) in self._var_lookup

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    # -- constraints -------------------------------------------------------

    def add_constr(self, coeffs: dict[int, float], lb: float, ub: float,
                   name: str = "", key: tuple = ()) -> int:
        if lb > ub:
            raise ValueError(f"constraint {name}{key}: lb {lb} > ub {ub}")
        idx = len(self.constraints)
        self.constraints.append(Constraint(name, key, dict(coeffs), lb, ub, idx))
        return idx

    def add_eq(self, coeffs: dict[int, float], rhs: float,
               name: str = "", key: tuple = ()) -> int:
        return self.add_constr(coeffs, rhs, rhs, name, key)

    def add_le(self, coeffs: dict[int, float], ub: float,
               name: str = "", key: tuple = ()) -> int:
        return self.add_constr(coeffs, -INF, ub, name, key)

    def add_ge(self, coeffs: dict[int, float], lb: float,
               name: str = "", key: tuple = ()) -> int:
        return self.add_constr(coeffs, lb, INF, name, key)

    # -- objective ---------------------------------------------------------

    def add_obj(self, var: int, coeff: float, tag: str = "other") -> None:
        if coeff == 0.0:
            return
        self._obj[var] = self._obj.get(var, 0.0) + coeff
        self._obj_terms.append((tag, var, coeff))

    def add_obj_const(self, value: float, tag: str = "other") -> None:
        if value != 0.0:
            self._obj_consts.append((tag, value))

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.num_vars)
        for v, coeff in self._obj.items():
            c[v] += coeff
        return c

    @property
    def objective_constant(self) -> float:
        return sum(v for _, v in self._obj_consts)

    def decompose(self, x: np.ndarray) -> dict[str, float]:
        """Objective value by tag at point x; values sum to the objective."""
        out: dict[str, float] = {}
        for tag, var, coeff in self._obj_terms:
            out[tag] = out.get(tag, 0.0) + coeff * x[var]
        for tag, value in self._obj_consts:
            out[tag] = out.get(tag, 0.0) + value
        return out

    def evaluate(self, x: np.ndarray) -> float:
        return float(self.objective_vector() @ x) + self.objective_constant

    # -- export ------------------------------------------------------------

    def write_lp(self, path: str) -> None:
        """Dump the model in CPLEX LP text format for external inspection."""
        def vname(v: Variable) -> str:
            suffix = "_".join(str(k) for k in v.key)
            return f"{v.name}_{suffix}" if suffix else v.name

        names = [vname(v) for v in self.variables]
        lines = ["Minimize", " obj:"]
        terms = [f" {'+' if c >= 0 else '-'} {abs(c):.12g} {names[v]}"
                 for v, c in sorted(self._obj.items())]
        lines.extend(terms or [" 0 x0"])
        lines.append("Subject To")
        for con in self.constraints:
            body = " ".join(f"{'+' if c >= 0 else '-'} {abs(c):.12g} {names[v]}"
                            for v, c in sorted(con.coeffs.items()))
            label = f"{con.name}_{con.index}"
            if con.lb == con.ub:
                lines.append(f" {label}: {body} = {con.lb:.12g}")
            else:
                if con.ub < INF:
                    lines.append(f" {label}_u: {body} <= {con.ub:.12g}")
                if con.lb > -INF:
                    lines.append(f" {label}_l: {body} >= {con.lb:.12g}")
        lines.append("Bounds")
        for v in self.variables:
            lo = "-inf" if v.lb == -INF else f"{v.lb:.12g}"
            hi = "+inf" if v.ub == INF else f"{v.ub:.12g}"
            lines.append(f" {lo} <= {names[v.index]} <= {hi}")
        integers = [names[v.index] for v in self.variables if v.integer]
        if integers:
            lines.append("General")
            lines.append(" " + " ".join(integers))
        lines.append("End")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


class HighsBackend:
    """HiGHS via scipy.optimize. Deterministic for a fixed model."""

    name = "highs"

    def solve(self, model: LinearModel, mip_gap: float = 1e-9,
              fixed: dict[int, float] | None = None,
              want_duals: bool = False,
              time_limit: float | None = None) -> SolveResult:
        """Solve the model, optionally with some variables pinned.

        With ``fixed`` all integrality is dropped (the pricing re-solve) and
        duals can be requested. A MILP solve never returns duals.
        """
        n = model.num_vars
        lb = np.array([v.lb for v in model.variables])
        ub = np.array([v.ub for v in model.variables])
        if fixed:
            for idx, val in fixed.items():
                lb[idx] = val
                ub[idx] = val
        integrality = np.array([1 if v.integer else 0 for v in model.variables])
        relax = fixed is not None or not integrality.any()

        c = model.objective_vector()
        const = model.objective_constant

        if relax:
            return self._solve_lp(model, c, const, lb, ub, want_duals)
        return self._solve_milp(model, c, const, lb, ub, integrality,
                                mip_gap, time_limit)

    def _matrix(self, model: LinearModel) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for con in model.constraints:
            for v, coeff in con.coeffs.items():
                rows.append(con.index)
                cols.append(v)
                vals.append(coeff)
        return sparse.csr_matrix(
            (vals, (rows, cols)), shape=(len(model.constraints), model.num_vars))

    def _solve_milp(self, model, c, const, lb, ub, integrality,
                    mip_gap, time_limit) -> SolveResult:
        options = {"mip_rel_gap": float(mip_gap)}
        if time_limit is not None:
            options["time_limit"] = float(time_limit)
        constraints = []
        if model.constraints:
            clb = np.array([con.lb for con in model.constraints])
            cub = np.array([con.ub for con in model.constraints])
            constraints = [LinearConstraint(self._matrix(model), clb, cub)]
        res = milp(c=c, constraints=constraints, integrality=integrality,
                   bounds=Bounds(lb, ub), options=options)
        if res.status == 2:
            return SolveResult("infeasible", np.zeros(len(c)), np.nan)
        if res.status not in (0, 1) or res.x is None:
            raise SolveError(f"MILP solve failed: {res.message}")
        status = "optimal" if res.status == 0 else "limit"
        gap = float(res.mip_gap) if res.mip_gap is not None else 0.0
        return SolveResult(status, np.asarray(res.x), float(res.fun) + const, gap)

    def _solve_lp(self, model, c, const, lb, ub, want_duals) -> SolveResult:
        # Split two-sided rows so duals can be mapped back per constraint.
        eq_rows, ub_rows, lb_rows = [], [], []
        for con in model.constraints:
            if con.lb == con.ub:
                eq_rows.append(con)
            else:
                if con.ub < INF:
                    ub_rows.append(con)
                if con.lb > -INF:
                    lb_rows.append(con)

        def build(rows, sign=1.0):
            r, co, va = [], [], []
            for i, con in enumerate(rows):
                for v, coeff in con.coeffs.items():
                    r.append(i)
                    co.append(v)
                    va.append(sign * coeff)
            return sparse.csr_matrix((va, (r, co)),
                                     shape=(len(rows), model.num_vars))

        A_eq = build(eq_rows) if eq_rows else None
        b_eq = np.array([con.lb for con in eq_rows]) if eq_rows else None
        n_ub = len(ub_rows)
        ineq = ub_rows + lb_rows
        A_ub = None
        b_ub = None
        if ineq:
            A_ub = sparse.vstack([build(ub_rows), build(lb_rows, -1.0)]) \
                if (ub_rows and lb_rows) else build(ineq, 1.0 if ub_rows else -1.0)
            b_ub = np.array([con.ub for con in ub_rows]
                            + [-con.lb for con in lb_rows])
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=np.column_stack([lb, ub]), method="highs")
        if res.status == 2:
            return SolveResult("infeasible", np.zeros(len(c)), np.nan)
        if res.status != 0:
            raise SolveError(f"LP solve failed: {res.message}")
        duals = None
        if want_duals:
            duals = np.zeros(len(model.constraints))
            if eq_rows:
                for i, con in enumerate(eq_rows):
                    duals[con.index] = res.eqlin.marginals[i]
            if ineq:
                marg = res.ineqlin.marginals
                for i, con in enumerate(ub_rows):
                    duals[con.index] += marg[i]
                for i, con in enumerate(lb_rows):
                    # row was negated, so flip back to d(obj)/d(lb)
                    duals[con.index] += -marg[n_ub + i]
        return SolveResult("optimal", np.asarray(res.x), float(res.fun) + const,
                           0.0, duals)


_BACKENDS = {"highs": HighsBackend}


def register_backend(name: str, factory) -> None:
    """Register a solver backend; selected by name or the env var."""
    _BACKENDS[name] = factory


def get_backend(name: str | None = None):
    chosen = name or os.environ.get(BACKEND_ENV_VAR, "highs")
    try:
        return _BACKENDS[chosen]()
    except KeyError:
        raise SolveError(f"unknown solver backend '{chosen}'; "
                         f"available: {sorted(_BACKENDS)}") from None
