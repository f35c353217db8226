"""Semidefinite feasibility backends.

The LMI layer talks to solvers through a narrow interface: a problem
description goes in, a status plus variable values come out.  The
reference backend realizes the problem in cvxpy and hands it to an
interior-point conic solver (CLARABEL by default).  Anything implementing
``solve(problem, x_lower)`` with the same result shape can be swapped in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol

import numpy as np

from .switching import Word, split_word

if TYPE_CHECKING:  # pragma: no cover
    from .lmi import LmiProblem


@dataclass(frozen=True)
class BackendResult:
    status: str  # "optimal" | "infeasible" | "failure:<detail>"
    margin: float | None
    values: dict[tuple[int, Word], np.ndarray] | None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class SdpBackend(Protocol):
    name: str

    def solve(self, problem: "LmiProblem", x_lower: float) -> BackendResult: ...


class CvxpyBackend:
    """Margin-maximization via cvxpy over a conic solver.

    The primary solver is an interior-point conic method; when it reports
    an inaccurate or failed solve (typical for probes near a feasibility
    boundary) the listed fallback solvers are tried in order before the
    failure is surfaced.
    """

    def __init__(self, solver: str = "CLARABEL", fallbacks: tuple[str, ...] = ("SCS",),
                 **solver_options):
        self.solver = solver
        self.fallbacks = fallbacks
        self.solver_options = solver_options

    @property
    def name(self) -> str:
        return f"cvxpy:{self.solver}"

    def solve(self, problem: "LmiProblem", x_lower: float) -> BackendResult:
        result = self._solve_with(self.solver, problem, x_lower)
        for alternate in self.fallbacks:
            if not result.status.startswith("failure"):
                break
            result = self._solve_with(alternate, problem, x_lower)
        return result

    def _solve_with(self, solver: str, problem: "LmiProblem", x_lower: float) -> BackendResult:
        import cvxpy as cp

        system = problem.system
        n, m = system.n, system.m
        t = cp.Variable(name="margin")
        xvars = {
            key: cp.Variable((n, n), symmetric=True) for key in problem.var_index
        }

        constraints = [t <= problem.margin_cap]
        eye_n = np.eye(n)
        for var in xvars.values():
            constraints.append(var >> x_lower * eye_n)

        block_eye = np.eye(problem.block_size)
        for i, w in problem.block_index:
            prefix, suffix, head = split_word(w)
            pi_row = system.transitions.pi(head)[i - 1]
            xtil = sum(
                pi_row[j - 1] * xvars[(j, suffix)] for j in range(1, system.N + 1)
            )
            md = system.mode(i)
            if problem.kind == "stability":
                block = md.A.T @ xtil @ md.A - xvars[(i, prefix)]
            else:
                scale = problem.gamma if problem.gamma is not None else 1.0
                C = md.C / scale
                D = md.D / scale
                b11 = md.A.T @ xtil @ md.A + C.T @ C - xvars[(i, prefix)]
                b12 = md.A.T @ xtil @ md.B + C.T @ D
                b22 = md.B.T @ xtil @ md.B + D.T @ D - np.eye(m)
                block = cp.bmat([[b11, b12], [b12.T, b22]])
            constraints.append(block << -t * block_eye)

        prob = cp.Problem(cp.Maximize(t), constraints)
        try:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                prob.solve(solver=solver, **self.solver_options)
        except cp.error.SolverError as exc:
            return BackendResult(f"failure:{exc}", None, None)

        if prob.status == cp.OPTIMAL:
            values = {
                key: 0.5 * (var.value + var.value.T) for key, var in xvars.items()
            }
            return BackendResult("optimal", float(t.value), values)
        if prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return BackendResult("infeasible", None, None)
        return BackendResult(f"failure:{prob.status}", None, None)


def default_backend() -> CvxpyBackend:
    return CvxpyBackend()
