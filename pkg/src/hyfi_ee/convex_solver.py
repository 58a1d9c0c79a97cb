"""
Canonical second-order-cone programs and their interior-point solution.

A ConvexProgram maximizes a linear objective over linear inequalities
a.x <= b and second-order cones ||A x + b||_2 <= c.x + d.  Solving is
delegated to the Clarabel interior-point solver behind this interface;
results carry a definitive status plus the duality gap, and callers can
re-check feasibility independently with `residuals`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import sparse

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"
NUMERICAL_ERROR = "numerical_error"


@dataclass(frozen=True)
class SocConstraint:
    """||A x + b||_2 <= c . x + d."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float

    def residual(self, x: np.ndarray) -> float:
        """Violation amount; <= 0 when satisfied."""
        return float(np.linalg.norm(self.A @ x + self.b)
                     - (self.c @ x + self.d))


@dataclass
class ConvexProgram:
    """maximize objective . x  s.t.  A_ub x <= b_ub  and the SOC list."""

    n: int
    objective: np.ndarray
    a_ub: np.ndarray = None
    b_ub: np.ndarray = None
    socs: list = field(default_factory=list)
    lower: np.ndarray = None   # optional variable bounds (nan = unbounded)
    upper: np.ndarray = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (self.n,):
            raise ValueError("objective length must equal n")
        if self.a_ub is None:
            self.a_ub = np.zeros((0, self.n))
            self.b_ub = np.zeros(0)
        self.a_ub = np.atleast_2d(np.asarray(self.a_ub, dtype=float))
        self.b_ub = np.asarray(self.b_ub, dtype=float).ravel()
        if self.a_ub.shape[1] != self.n or self.a_ub.shape[0] != self.b_ub.shape[0]:
            raise ValueError("linear constraint dimensions are inconsistent")
        for soc in self.socs:
            if soc.A.shape[1] != self.n or soc.c.shape != (self.n,):
                raise ValueError("SOC constraint dimensions are inconsistent")
            if soc.A.shape[0] != soc.b.shape[0]:
                raise ValueError("SOC A/b dimensions are inconsistent")
        if self.a_ub.shape[0] == 0 and not self.socs \
                and self.lower is None and self.upper is None:
            raise ValueError("program needs at least one constraint")

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Signed violations of every constraint at x (<= 0 means satisfied)."""
        parts = []
        if self.a_ub.shape[0]:
            parts.append(self.a_ub @ x - self.b_ub)
        for soc in self.socs:
            parts.append([soc.residual(x)])
        if self.lower is not None:
            mask = ~np.isnan(self.lower)
            parts.append(self.lower[mask] - x[mask])
        if self.upper is not None:
            mask = ~np.isnan(self.upper)
            parts.append(x[mask] - self.upper[mask])
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float))
                               for p in parts])


@dataclass(frozen=True)
class SolveResult:
    status: str
    x: np.ndarray | None
    objective: float | None
    gap: float | None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    verbose: bool = False
    # Equilibration range and static KKT regularization; the defaults are
    # widened relative to Clarabel's own because the linearized rate rows mix
    # coefficient scales proportional to the operating SINR.
    equilibrate_max_scaling: float = 1e8
    equilibrate_min_scaling: float = 1e-8
    static_regularization: float = 1e-7


_STATUS_MAP = {
    "Solved": OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "DualInfeasible": UNBOUNDED,
    "MaxIterations": MAX_ITER,
}


def _bound_rows(program: ConvexProgram):
    rows, rhs = [], []
    if program.lower is not None:
        for i, val in enumerate(np.asarray(program.lower, dtype=float)):
            if not np.isnan(val):
                row = np.zeros(program.n)
                row[i] = -1.0
                rows.append(row)
                rhs.append(-val)
    if program.upper is not None:
        for i, val in enumerate(np.asarray(program.upper, dtype=float)):
            if not np.isnan(val):
                row = np.zeros(program.n)
                row[i] = 1.0
                rows.append(row)
                rhs.append(val)
    return rows, rhs


def solve(program: ConvexProgram, options: SolverOptions = SolverOptions()) -> SolveResult:
    """Solve the program to the configured tolerances (deterministic)."""
    n = program.n
    blocks_a, blocks_b, cones = [], [], []

    bound_rows, bound_rhs = _bound_rows(program)
    n_lin = program.a_ub.shape[0] + len(bound_rows)
    if n_lin:
        lin_a = np.vstack([program.a_ub] + ([np.array(bound_rows)] if bound_rows else []))
        lin_b = np.concatenate([program.b_ub, np.array(bound_rhs)])
        blocks_a.append(lin_a)
        blocks_b.append(lin_b)
        cones.append(clarabel.NonnegativeConeT(n_lin))

    for soc in program.socs:
        # s = (c.x + d, A x + b) must land in the second-order cone, and
        # Clarabel wants s = b_row - A_row x.
        blocks_a.append(np.vstack([-soc.c[None, :], soc.A]))
        blocks_b.append(np.concatenate([[soc.d], -soc.b]))
        cones.append(clarabel.SecondOrderConeT(soc.A.shape[0] + 1))

    a_mat = sparse.csc_matrix(np.vstack(blocks_a))
    b_vec = np.concatenate(blocks_b)
    p_mat = sparse.csc_matrix((n, n))
    q_vec = -program.objective  # Clarabel minimizes

    settings = clarabel.DefaultSettings()
    settings.verbose = options.verbose
    settings.max_iter = options.max_iter
    settings.tol_feas = options.feas_tol
    settings.tol_gap_abs = options.gap_tol
    settings.tol_gap_rel = options.gap_tol
    settings.equilibrate_max_scaling = options.equilibrate_max_scaling
    settings.equilibrate_min_scaling = options.equilibrate_min_scaling
    settings.static_regularization_constant = options.static_regularization

    solver = clarabel.DefaultSolver(p_mat, q_vec, a_mat, b_vec, list(cones), settings)
    solution = solver.solve()

    status = _STATUS_MAP.get(str(solution.status), NUMERICAL_ERROR)
    if status in (INFEASIBLE, UNBOUNDED):
        return SolveResult(status=status, x=None, objective=None, gap=None)

    # For max_iter / numerical_error the last iterate is still returned so
    # callers may salvage a near-feasible point after their own residual check.
    x = np.asarray(solution.x, dtype=float)
    objective = float(program.objective @ x)
    gap = abs(float(solution.obj_val) - float(solution.obj_val_dual)) \
        / max(1.0, abs(float(solution.obj_val)))
    return SolveResult(status=status, x=x, objective=objective, gap=gap)


def format_program(program: ConvexProgram) -> str:
    """Debug dump: objective, then one line per linear row / SOC block.

    Format: `maximize c.x` with c listed; `lin: a | b` rows meaning a.x <= b;
    `soc[i] row j: a | b` rows meaning ||A x + b|| <= c.x + d with the last
    line of each block carrying c and d.
    """
    def fmt(values):
        return " ".join(repr(float(v)) for v in values)

    lines = [f"variables: {program.n}",
             "maximize: " + fmt(program.objective)]
    for row, rhs in zip(program.a_ub, program.b_ub):
        lines.append("lin: " + fmt(row) + " | " + repr(float(rhs)))
    for i, soc in enumerate(program.socs):
        for j, (row, offset) in enumerate(zip(soc.A, soc.b)):
            lines.append(f"soc[{i}] row {j}: " + fmt(row)
                         + " | " + repr(float(offset)))
        lines.append(f"soc[{i}] rhs: " + fmt(soc.c) + " | " + repr(float(soc.d)))
    return "\n".join(lines) + "\n"
