"""Second-order-cone feasibility problems in complex variables.

Each cone constraint reads ``||A x + b|| <= Re(c^H x) + d`` with ``x``
complex; power groups add ``||x_G|| <= sqrt(P_G)``.  The complex data is
split into real and imaginary parts before it is handed to
:func:`solve_conic`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cones import ConeDims
from .linalg import ContractViolation
from .solver import ConeSolution, Status, Tolerances, solve_conic


@dataclass(frozen=True)
class ComplexSoc:
    A: np.ndarray  # (k, n) complex
    b: np.ndarray  # (k,) complex
    c: np.ndarray  # (n,) complex
    d: float

    def margin(self, x: np.ndarray) -> float:
        """``Re(c^H x) + d - ||A x + b||``; nonnegative iff satisfied."""
        return float(np.real(np.vdot(self.c, x)) + self.d - np.linalg.norm(self.A @ x + self.b))


@dataclass(frozen=True)
class PowerGroup:
    """``||x[indices]||^2 <= budget``."""

    indices: tuple
    budget: float

    def power(self, x: np.ndarray) -> float:
        return float(np.sum(np.abs(x[list(self.indices)]) ** 2))


@dataclass(frozen=True)
class SocpFeasibilityProblem:
    n: int
    cones: tuple = ()
    power_groups: tuple = ()

    def __post_init__(self):
        for cone in self.cones:
            if np.shape(cone.c) != (self.n,) or np.shape(cone.A)[-1] != self.n:
                raise ContractViolation("cone data does not match the variable dimension")
        for g in self.power_groups:
            if g.budget < 0 or any(not 0 <= i < self.n for i in g.indices):
                raise ContractViolation("invalid power group")

    def satisfied(self, x: np.ndarray, atol: float = 0.0) -> bool:
        return (all(c.margin(x) >= -atol for c in self.cones)
                and all(g.power(x) <= g.budget * (1 + atol) for g in self.power_groups))

    def as_cones(self) -> list[ComplexSoc]:
        out = list(self.cones)
        for g in self.power_groups:
            k = len(g.indices)
            A = np.zeros((k, self.n), complex)
            A[np.arange(k), list(g.indices)] = 1.0
            out.append(ComplexSoc(A, np.zeros(k), np.zeros(self.n), float(np.sqrt(g.budget))))
        return out


def _realify(M):
    M = np.atleast_2d(M)
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def compile_socs(cones: list[ComplexSoc], n: int):
    """Real ``(G, h, dims)`` with ``h - G x_r`` in the product of cones.

    ``x_r = [Re x, Im x]``.
    """
    rows_G, rows_h, sizes = [], [], []
    for cone in cones:
        A = np.asarray(cone.A, complex).reshape(-1, n)
        b = np.asarray(cone.b, complex).reshape(-1)
        c = np.asarray(cone.c, complex).reshape(n)
        head = np.concatenate([c.real, c.imag])
        rows_G.append(-head[None, :])
        rows_h.append([cone.d])
        rows_G.append(-_realify(A))
        rows_h.append(np.concatenate([b.real, b.imag]))
        sizes.append(1 + 2 * A.shape[0])
    G = np.vstack(rows_G) if rows_G else np.zeros((0, 2 * n))
    h = np.concatenate([np.asarray(r, float) for r in rows_h]) if rows_h else np.zeros(0)
    return G, h, ConeDims(q=tuple(sizes))


def solve_socp_feasibility(
    problem: SocpFeasibilityProblem,
    tols: Tolerances = Tolerances(),
    accept: Callable[[np.ndarray], bool] | None = None,
) -> tuple[Status, np.ndarray | None, ConeSolution]:
    """Find complex ``x`` satisfying every cone and power group, or certify that none exists.

    ``accept(x)`` is tried on each interior-point iterate; when it returns
    True the run stops early and that iterate is returned with status
    ``OPTIMAL``.  This lets callers stop as soon as an iterate passes their
    own exact check instead of waiting for full convergence.
    """
    n = problem.n
    G, h, dims = compile_socs(problem.as_cones(), n)
    found = {}

    def cb(xr, s, z):
        x = xr[:n] + 1j * xr[n:]
        if accept(x):
            found["x"] = x
            return True
        return False

    sol = solve_conic(np.zeros(2 * n), G, h, dims, tols, callback=cb if accept else None)
    if sol.status == Status.STOPPED:
        return Status.OPTIMAL, found["x"], sol
    if sol.status == Status.OPTIMAL:
        return Status.OPTIMAL, sol.x[:n] + 1j * sol.x[n:], sol
    # conelp calls a dual-infeasible problem 'unbounded'; with a zero
    # objective that can only mean the cones have no common point
    status = Status.INFEASIBLE if sol.status in (Status.INFEASIBLE, Status.UNBOUNDED) else sol.status
    return status, None, sol


@dataclass
class PowerMarginResult:
    """Smallest ``s`` with every group within ``s^2`` times its budget."""

    status: Status
    x: np.ndarray | None
    margin: float  # s at the returned point
    lower_bound: float  # certified lower bound on the optimal s
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == Status.OPTIMAL and self.margin <= 1.0

    @property
    def certified_infeasible(self) -> bool:
        return self.status == Status.INFEASIBLE or (self.status == Status.OPTIMAL and self.lower_bound > 1.0)


def solve_power_margin(problem: SocpFeasibilityProblem, tols: Tolerances = Tolerances()) -> PowerMarginResult:
    """Phase-I form of :func:`solve_socp_feasibility`.

    Minimizes ``s`` subject to the cones and ``||x_G|| <= s sqrt(P_G)``.
    The problem is feasible iff the optimum is at most 1; the optimum also
    says how far off the budgets a threshold is, which bisection can use.
    """
    if not problem.power_groups:
        raise ContractViolation("the power-margin form needs at least one power group")
    n = problem.n
    G1, h1, d1 = compile_socs(list(problem.cones), n)
    rows, hs, sizes = [], [], []
    for g in problem.power_groups:
        k = len(g.indices)
        blk = np.zeros((1 + 2 * k, 2 * n + 1))
        blk[0, -1] = -np.sqrt(g.budget)
        for j, i in enumerate(g.indices):
            blk[1 + j, i] = -1.0
            blk[1 + k + j, n + i] = -1.0
        rows.append(blk)
        hs.append(np.zeros(1 + 2 * k))
        sizes.append(1 + 2 * k)
    G = np.vstack([np.hstack([G1, np.zeros((G1.shape[0], 1))])] + rows)
    h = np.concatenate([h1] + hs)
    dims = ConeDims(q=d1.q + tuple(sizes))
    c = np.zeros(2 * n + 1)
    c[-1] = 1.0
    sol = solve_conic(c, G, h, dims, tols)
    if sol.status == Status.OPTIMAL:
        x = sol.x[:n] + 1j * sol.x[n:2 * n]
        return PowerMarginResult(Status.OPTIMAL, x, float(sol.x[-1]), float(sol.dual_objective), sol.iterations)
    if sol.status == Status.INFEASIBLE:
        return PowerMarginResult(Status.INFEASIBLE, None, np.inf, np.inf, sol.iterations)
    return PowerMarginResult(sol.status, None, np.nan, np.nan, sol.iterations)
