"""Linear-program data model and a HiGHS-backed solver.

Every optimizer in the package assembles a :class:`LinearProgram` through
:class:`LpBuilder` and hands it to :func:`solve`. Programs maximize.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7

LE, GE, EQ = "<=", ">=", "=="
_SENSES = (LE, GE, EQ)


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical-failure"


class SolverError(RuntimeError):
    """An LP that must be solvable came back without an optimum."""


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``max objective @ v`` subject to ``A v (sense) rhs`` and ``lower <= v <= upper``.

    ``A`` is stored as CSR; row ``i`` is the sparse coefficient vector of
    constraint ``i`` with relation ``senses[i]``.
    """

    objective: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        n = self.objective.size
        if self.A.shape[1] != n:
            raise ValueError("constraint rows reference undeclared variables")
        if not (self.senses.size == self.rhs.size == self.A.shape[0]):
            raise ValueError("row metadata does not match the constraint matrix")
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds must cover every variable")
        if not (np.all(np.isfinite(self.objective)) and np.all(np.isfinite(self.A.data))
                and np.all(np.isfinite(self.rhs))):
            raise ValueError("objective and constraint rows must be finite")
        bad = set(np.unique(self.senses)) - set(_SENSES)
        if bad:
            raise ValueError(f"unknown relations {bad}")
        for arr in (self.objective, self.senses, self.rhs, self.lower, self.upper):
            arr.setflags(write=False)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def row_violation(self, v: np.ndarray) -> np.ndarray:
        """Violation of each row after scaling it by its largest coefficient."""
        lhs = self.A @ v
        scale = np.maximum(abs(self.A).max(axis=1).toarray().ravel(), 1.0)
        viol = np.zeros(self.n_rows)
        le, ge, eq = self.senses == LE, self.senses == GE, self.senses == EQ
        viol[le] = np.maximum(lhs[le] - self.rhs[le], 0.0)
        viol[ge] = np.maximum(self.rhs[ge] - lhs[ge], 0.0)
        viol[eq] = np.abs(lhs[eq] - self.rhs[eq])
        return viol / scale

    def is_feasible(self, v: np.ndarray, tol: float = FEAS_TOL) -> bool:
        v = np.asarray(v, dtype=float)
        if np.any(v < self.lower - tol) or np.any(v > self.upper + tol):
            return False
        return bool(np.all(self.row_violation(v) <= tol))


class LpBuilder:
    """Incremental assembly of a :class:`LinearProgram`.

    Variables are declared in named blocks; constraints are appended in
    dense or sparse row blocks sharing one relation.
    """

    def __init__(self):
        self._blocks: dict[str, slice] = {}
        self._lower: list[np.ndarray] = []
        self._upper: list[np.ndarray] = []
        self._names: list[str] = []
        self._n = 0
        self._rows: list[sp.coo_matrix] = []
        self._senses: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self._objective: dict[int, float] = {}

    @property
    def n_vars(self) -> int:
        return self._n

    def add_variables(self, name: str, count: int, lower=0.0, upper=np.inf) -> slice:
        if name in self._blocks:
            raise ValueError(f"variable block {name!r} already declared")
        block = slice(self._n, self._n + count)
        self._blocks[name] = block
        self._lower.append(np.broadcast_to(np.asarray(lower, float), (count,)).copy())
        self._upper.append(np.broadcast_to(np.asarray(upper, float), (count,)).copy())
        if count == 1:
            self._names.append(name)
        else:
            self._names.extend(f"{name}_{i}" for i in range(count))
        self._n += count
        return block

    def block(self, name: str) -> slice:
        return self._blocks[name]

    def set_objective(self, index: int, coef: float) -> None:
        self._objective[index] = float(coef)

    def add_rows(self, coeffs, sense: str, rhs) -> None:
        """Append rows; ``coeffs`` is ``(k, n_vars)`` dense or any scipy sparse."""
        if sense not in _SENSES:
            raise ValueError(f"unknown relation {sense!r}")
        block = sp.coo_matrix(coeffs)
        if block.shape[1] != self._n:
            raise ValueError(f"rows have {block.shape[1]} columns, expected {self._n}")
        rhs = np.broadcast_to(np.asarray(rhs, float), (block.shape[0],)).copy()
        self._rows.append(block)
        self._senses.append(np.full(block.shape[0], sense, dtype=object))
        self._rhs.append(rhs)

    def add_abs_le(self, coeffs, bound_coeffs, rhs=0.0) -> None:
        """``|coeffs @ v| <= bound_coeffs @ v + rhs`` as two linear rows each."""
        coeffs = sp.csr_matrix(coeffs)
        bound_coeffs = sp.csr_matrix(bound_coeffs)
        self.add_rows(bound_coeffs - coeffs, GE, -np.asarray(rhs, float))
        self.add_rows(bound_coeffs + coeffs, GE, -np.asarray(rhs, float))

    def build(self) -> LinearProgram:
        objective = np.zeros(self._n)
        for i, c in self._objective.items():
            objective[i] = c
        if self._rows:
            A = sp.vstack([sp.coo_matrix(r, shape=(r.shape[0], self._n)) for r in self._rows]).tocsr()
            senses = np.concatenate(self._senses)
            rhs = np.concatenate(self._rhs)
        else:
            A = sp.csr_matrix((0, self._n))
            senses = np.array([], dtype=object)
            rhs = np.array([])
        A.eliminate_zeros()
        A.sort_indices()
        return LinearProgram(
            objective=objective,
            A=A,
            senses=senses.astype(str),
            rhs=rhs,
            lower=np.concatenate(self._lower) if self._lower else np.array([]),
            upper=np.concatenate(self._upper) if self._upper else np.array([]),
            names=tuple(self._names),
        )


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    objective: float
    x: np.ndarray = field(repr=False)
    message: str = ""
    max_violation: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL


_STATUS = {0: LpStatus.OPTIMAL, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}


# tried in order until one returns a verified optimum
_ATTEMPTS = (
    ("highs-ds", {"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9}),
    ("highs-ds", {"presolve": False}),
    ("highs-ipm", {"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9}),
)


def solve(lp: LinearProgram) -> LpSolution:
    """Solve with HiGHS; never returns an unchecked optimum.

    Dual simplex runs first. If HiGHS gives up, or its optimum violates
    :data:`FEAS_TOL` after row scaling, the next configuration is tried;
    when all fail the result is ``numerical-failure``. Infeasible and
    unbounded verdicts are returned as soon as they appear.
    """
    le, ge, eq = lp.senses == LE, lp.senses == GE, lp.senses == EQ
    A_ub = sp.vstack([lp.A[le], -lp.A[ge]]).tocsr() if (le.any() or ge.any()) else None
    b_ub = np.concatenate([lp.rhs[le], -lp.rhs[ge]]) if A_ub is not None else None
    A_eq = lp.A[eq] if eq.any() else None
    b_eq = lp.rhs[eq] if eq.any() else None
    bounds = np.column_stack([
        np.where(np.isinf(lp.lower), None, lp.lower),
        np.where(np.isinf(lp.upper), None, lp.upper),
    ])
    failure = None
    for method, options in _ATTEMPTS:
        res = linprog(-lp.objective, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=bounds, method=method, options=options)
        status = _STATUS.get(res.status, LpStatus.NUMERICAL_FAILURE)
        if status in (LpStatus.INFEASIBLE, LpStatus.UNBOUNDED):
            return LpSolution(status, float("nan"), np.full(lp.n_vars, np.nan), res.message)
        if status is not LpStatus.OPTIMAL or res.x is None:
            log.debug("%s gave up: %s", method, res.message)
            failure = failure or LpSolution(LpStatus.NUMERICAL_FAILURE, float("nan"),
                                            np.full(lp.n_vars, np.nan), res.message)
            continue
        x = np.asarray(res.x, dtype=float)
        viol = float(lp.row_violation(x).max(initial=0.0))
        bound_viol = float(max(np.max(lp.lower - x, initial=0.0), np.max(x - lp.upper, initial=0.0)))
        worst = max(viol, bound_viol)
        if worst <= FEAS_TOL:
            return LpSolution(LpStatus.OPTIMAL, float(lp.objective @ x), x, res.message, worst)
        log.debug("%s optimum violates constraints by %.3g", method, worst)
        failure = LpSolution(LpStatus.NUMERICAL_FAILURE, float(lp.objective @ x), x, res.message, worst)
    log.warning("LP failed under every solver configuration: %s", failure.message)
    return failure


def _fmt(c: float) -> str:
    return repr(float(c))


def write_lp_format(lp: LinearProgram, path=None) -> str:
    """Dump ``lp`` in CPLEX LP text format (readable by HiGHS, GLPK, CBC)."""
    names = lp.names or tuple(f"v{i}" for i in range(lp.n_vars))
    names = [n.replace("-", "_") for n in names]

    def linear(idx, coefs):
        parts = []
        for j, c in zip(idx, coefs):
            sign = "-" if c < 0 else "+"
            parts.append(f"{sign} {_fmt(abs(c))} {names[j]}")
        text = " ".join(parts) if parts else "0 " + names[0]
        return text[2:] if text.startswith("+ ") else text

    nz = np.flatnonzero(lp.objective)
    lines = ["\\ generated by batsdro", "Maximize", " obj: " + linear(nz, lp.objective[nz]), "Subject To"]
    for i in range(lp.n_rows):
        row = lp.A.getrow(i)
        lines.append(f" c{i}: {linear(row.indices, row.data)} {lp.senses[i].replace('==', '=')} {_fmt(lp.rhs[i])}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isinf(lo) and np.isinf(hi):
            lines.append(f" {name} free")
        elif np.isinf(hi):
            if lo != 0:
                lines.append(f" {name} >= {_fmt(lo)}")
        else:
            lo_txt = "-inf" if np.isinf(lo) else _fmt(lo)
            lines.append(f" {lo_txt} <= {name} <= {_fmt(hi)}")
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
