"""Separate-design strategies: fixed sensing beams plus communication beams.

Sensing beams are either conjugate (matched to the target steering vector
at every AP) or that direction projected onto the null space of the UE
channels.  Communication beams are regularized zero-forcing with per-AP
power normalization, or max-min SINR beams found by bisection over SOCP
feasibility problems.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .conic import (
    ComplexSoc,
    PowerGroup,
    SocpFeasibilityProblem,
    Status,
    Tolerances,
    solve_power_margin,
    solve_socp_feasibility,
)
from .conic.linalg import ContractViolation
from .model import ChannelSet, Scenario

log = logging.getLogger(__name__)

NULLSPACE_MIN_NORM = 1e-10


class DegenerateDirection(ValueError):
    """The target steering vector lies (numerically) in the UE channel span."""

    def __init__(self, aps):
        super().__init__(f"null-space projection vanishes at AP(s) {list(aps)}")
        self.aps = list(aps)


class BracketError(ValueError):
    """The upper end of a bisection bracket is already feasible."""


class InfeasibleProblem(ValueError):
    """The lower end of a bisection bracket is infeasible."""


@dataclass(frozen=True)
class PowerSplit:
    """Fraction ``rho`` of every AP's budget goes to communication."""

    rho: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ContractViolation("rho must lie strictly between 0 and 1")

    def comm(self, budget) -> np.ndarray:
        return self.rho * np.asarray(budget, float)

    def sensing(self, budget) -> np.ndarray:
        budget = np.asarray(budget, float)
        return budget - self.comm(budget)


@dataclass(frozen=True)
class BisectionParams:
    """Bisection settings; ``None`` bracket ends are filled in from the instance."""

    gamma_min: float | None = None
    gamma_max: float | None = None
    rel_tol: float = 1e-3
    max_iters: int = 40
    tols: Tolerances = Tolerances()

    def __post_init__(self):
        lo = 0.0 if self.gamma_min is None else self.gamma_min
        if lo < 0 or (self.gamma_max is not None and not lo < self.gamma_max):
            raise ContractViolation("need 0 <= gamma_min < gamma_max")


def _per_ap_sensing(scenario_or_channels, p_sensing, n_streams, directions):
    mt, nt = directions.shape
    p = np.broadcast_to(np.asarray(p_sensing, float), (mt,))
    if np.any(p < 0):
        raise ContractViolation("sensing power must be nonnegative")
    if n_streams < 1:
        return np.zeros((0, mt * nt), complex)
    beam = (np.sqrt(p / n_streams)[:, None] * directions).reshape(-1)
    return np.tile(beam, (n_streams, 1))


def conjugate_sensing(channels: ChannelSet, p_sensing, n_streams: int = 1) -> np.ndarray:
    """Sensing streams ``sqrt(p_m / N_t) a(theta_m)`` at every AP.

    With several streams the per-AP power is shared equally among them.
    Returns a ``(Q, M_t N_t)`` array.
    """
    at = channels.tx_steering
    dirs = at / np.linalg.norm(at, axis=1, keepdims=True)
    return _per_ap_sensing(channels, p_sensing, n_streams, dirs)


def nullspace_directions(channels: ChannelSet) -> tuple[np.ndarray, np.ndarray]:
    """Unit per-AP sensing directions orthogonal to every UE channel.

    Returns ``(directions, degenerate)`` where ``degenerate[m]`` marks APs
    whose projection fell below the norm floor; their direction is zero.
    """
    at = channels.tx_steering
    mt, nt = at.shape
    dirs = np.zeros_like(at)
    bad = np.zeros(mt, bool)
    for m in range(mt):
        a = at[m]
        H = channels.ap_matrix(m)
        if H.shape[1]:
            Uh, sv, _ = np.linalg.svd(H, full_matrices=False)
            basis = Uh[:, sv > 1e-12 * max(sv.max(initial=0.0), 1e-300)]
            v = a - basis @ (basis.conj().T @ a)
            v = v - basis @ (basis.conj().T @ v)  # second pass for exactness
        else:
            v = a.copy()
        nv = np.linalg.norm(v)
        if nv < NULLSPACE_MIN_NORM * np.linalg.norm(a):
            bad[m] = True
            continue
        dirs[m] = v / nv
    return dirs, bad


def nullspace_sensing(channels: ChannelSet, p_sensing, n_streams: int = 1,
                      fallback_zero: bool = False) -> np.ndarray:
    """Sensing streams along the null-space projection of ``a(theta_m)``.

    Raises :class:`DegenerateDirection` when the projection vanishes at some
    AP, unless ``fallback_zero`` is set, in which case that AP stays silent.
    """
    dirs, bad = nullspace_directions(channels)
    if bad.any() and not fallback_zero:
        raise DegenerateDirection(np.flatnonzero(bad))
    return _per_ap_sensing(channels, p_sensing, n_streams, dirs)


def default_rzf_lambda(noise_var, p_comm) -> float:
    """``U * mean(sigma^2) / sum_m P^c_m``."""
    noise = np.atleast_1d(noise_var)
    return float(len(noise) * noise.mean() / np.sum(p_comm))


def rzf_directions(channels: ChannelSet, lam: float) -> np.ndarray:
    """Stacked ``(lam I + sum_u h_u h_u^H)^{-1} h_u`` for every UE, ``(U, M_t N_t)``."""
    H = channels.comm_channels.T  # (n, U)
    G = H.conj().T @ H
    floor = 1e-12 * max(np.real(np.trace(G)), 1e-300)
    reg = max(lam, 0.0)
    if reg == 0.0 and np.linalg.cond(G) > 1e12:
        reg = floor
    # push-through identity: (lam I + H H^H)^{-1} H = H (lam I + H^H H)^{-1}
    W = H @ np.linalg.solve(G + reg * np.eye(G.shape[0]), np.eye(G.shape[0]))
    return W.T


def rzf_comm(channels: ChannelSet, p_comm, lam: float | None = None, noise_var=None) -> np.ndarray:
    """RZF user beams with every per-AP sub-vector scaled to ``P^c_m / U``.

    ``lam`` defaults to :func:`default_rzf_lambda`, which needs ``noise_var``.
    """
    U, mt, nt = channels.n_ues, channels.n_tx, channels.n_tx_antennas
    if U < 1:
        raise ContractViolation("RZF needs at least one UE")
    p = np.broadcast_to(np.asarray(p_comm, float), (mt,))
    if lam is None:
        if noise_var is None:
            raise ContractViolation("either lam or noise_var is required")
        lam = default_rzf_lambda(noise_var, p)
    d = rzf_directions(channels, lam).reshape(U, mt, nt)
    nrm = np.linalg.norm(d, axis=2, keepdims=True)
    scale = np.sqrt(p / U)[None, :, None] / np.where(nrm > 0, nrm, 1.0)
    return (d * np.where(nrm > 0, scale, 0.0)).reshape(U, mt * nt)


@dataclass
class BisectionResult:
    user_beams: np.ndarray
    gamma: float
    upper: float
    iterations: int
    probes: list = field(default_factory=list)  # (gamma, feasible) in probe order
    solver_failures: int = 0
    status: Status = Status.OPTIMAL


class _MaxMinSocp:
    """Max-min SINR feasibility in per-AP channel-span coordinates.

    Energy a per-AP beam spends outside the span of that AP's UE channels
    reaches no UE, so restricting every ``f_mu`` to that span loses nothing
    and shrinks the problem from ``M_t N_t`` to at most ``M_t U`` unknowns
    per user.
    """

    def __init__(self, channels, sensing_beams, p_comm, noise_var):
        U, mt, nt = channels.n_ues, channels.n_tx, channels.n_tx_antennas
        self.U, self.mt, self.nt = U, mt, nt
        self.noise = np.broadcast_to(np.asarray(noise_var, float), (U,))
        self.p = np.broadcast_to(np.asarray(p_comm, float), (mt,))
        hap = channels.per_ap()  # (U, M_t, N_t)
        self.bases = []
        for m in range(mt):
            Uh, sv, _ = np.linalg.svd(hap[:, m, :].T, full_matrices=False)
            keep = sv > 1e-12 * max(sv.max(initial=0.0), 1e-300)
            self.bases.append(Uh[:, keep])
        self.r = [B.shape[1] for B in self.bases]
        self.off = np.concatenate([[0], np.cumsum(self.r)])
        self.k = int(self.off[-1])  # per-user reduced length
        # reduced noise-normalized channels, (U, k)
        self.c = np.zeros((U, self.k), complex)
        for m, B in enumerate(self.bases):
            self.c[:, self.off[m]:self.off[m + 1]] = hap[:, m, :] @ B.conj() / np.sqrt(self.noise)[:, None]
        sb = np.asarray(sensing_beams, complex).reshape(-1, mt * nt)
        hs = np.abs(channels.comm_channels.conj() @ sb.T) ** 2 if sb.size else np.zeros((U, 0))
        self.interf = hs.sum(axis=1) / self.noise  # sensing interference over noise
        self.n = U * self.k

    def lift(self, x: np.ndarray) -> np.ndarray:
        X = x.reshape(self.U, self.k)
        out = np.zeros((self.U, self.mt, self.nt), complex)
        for m, B in enumerate(self.bases):
            out[:, m, :] = X[:, self.off[m]:self.off[m + 1]] @ B.T
        return out.reshape(self.U, -1)

    def sinrs(self, x: np.ndarray) -> np.ndarray:
        X = x.reshape(self.U, self.k)
        g = np.abs(self.c.conj() @ X.T) ** 2  # (U users, U streams)
        d = np.diag(g)
        return d / (g.sum(axis=1) - d + self.interf + 1.0)

    def powers(self, x: np.ndarray) -> np.ndarray:
        X = x.reshape(self.U, self.k)
        return np.array([np.sum(np.abs(X[:, self.off[m]:self.off[m + 1]]) ** 2) for m in range(self.mt)])

    def upper_bound(self) -> float:
        # interference-free per-AP Cauchy-Schwarz bound
        amp = np.array([[np.linalg.norm(self.c[u, self.off[m]:self.off[m + 1]]) for m in range(self.mt)]
                        for u in range(self.U)])
        return float(np.min((amp @ np.sqrt(self.p)) ** 2 / (1.0 + self.interf)))

    def problem(self, gamma: float) -> SocpFeasibilityProblem:
        """SINR cones ``sqrt(1 + 1/gamma) Re(c_u^H x_u) >= ||[c_u^H x_1 .. c_u^H x_U, sqrt(1 + I_u)]||``."""
        U, k, n = self.U, self.k, self.n
        cones = []
        for u in range(U):
            A = np.zeros((U + 1, n), complex)
            for v in range(U):
                A[v, v * k:(v + 1) * k] = self.c[u].conj()
            b = np.zeros(U + 1, complex)
            b[U] = np.sqrt(1.0 + self.interf[u])
            c = np.zeros(n, complex)
            c[u * k:(u + 1) * k] = np.sqrt(1.0 + 1.0 / gamma) * self.c[u]
            cones.append(ComplexSoc(A, b, c, 0.0))
        groups = []
        for m in range(self.mt):
            idx = tuple(v * k + j for v in range(U) for j in range(self.off[m], self.off[m + 1]))
            if idx:
                groups.append(PowerGroup(idx, float(self.p[m])))
        return SocpFeasibilityProblem(n, tuple(cones), tuple(groups))

    def fit_budget(self, x: np.ndarray) -> np.ndarray:
        """Scale ``x`` by the largest common factor that keeps every AP within budget."""
        used = self.powers(x)
        ratio = np.where(used > 0, self.p / np.where(used > 0, used, 1.0), np.inf)
        r = float(ratio.min())
        return x * np.sqrt(r) if np.isfinite(r) else x

    def feasible_point(self, x: np.ndarray, gamma: float) -> bool:
        return bool(np.all(self.powers(x) <= self.p * (1 + 1e-12)) and np.min(self.sinrs(x)) >= gamma)


def maxmin_comm_bisection(
    channels: ChannelSet,
    sensing_beams,
    p_comm,
    noise_var,
    params: BisectionParams = BisectionParams(),
    initial_beams: np.ndarray | None = None,
    probe: str = "margin",
) -> BisectionResult:
    """Maximize the minimum UE SINR under per-AP budgets ``p_comm``.

    ``sensing_beams`` are fixed and their interference is included.  The
    bracket ``[lo, hi]`` starts from the RZF beams (or ``initial_beams``)
    and an interference-free bound, and each step probes
    ``gamma = sqrt(lo * hi)``.

    With ``probe="margin"`` a probe finds the smallest uniform budget
    scaling under which ``gamma`` is reachable: above 1 the threshold is
    infeasible, and in either case the beams rescaled to the true budgets
    give an attained SINR that can only raise ``lo``.  ``probe="feasibility"``
    solves the plain feasibility problem instead.  Every lower end is
    attained by the returned beams; solver failures count as infeasible,
    which can only make the result conservative.
    """
    if channels.n_ues < 1:
        raise ContractViolation("max-min SINR needs at least one UE")
    if probe not in ("margin", "feasibility"):
        raise ContractViolation("probe must be 'margin' or 'feasibility'")
    prob = _MaxMinSocp(channels, sensing_beams, p_comm, noise_var)

    def reduce(beams):
        f = np.asarray(beams, complex).reshape(prob.U, prob.mt, prob.nt)
        x = np.zeros((prob.U, prob.k), complex)
        for m, B in enumerate(prob.bases):
            x[:, prob.off[m]:prob.off[m + 1]] = f[:, m, :] @ B.conj()
        return x.reshape(-1)

    if initial_beams is None:
        initial_beams = rzf_comm(channels, prob.p, noise_var=noise_var)
    best_x = prob.fit_budget(reduce(initial_beams))
    lo = float(np.min(prob.sinrs(best_x)))
    hi = prob.upper_bound() if params.gamma_max is None else float(params.gamma_max)
    probes = []
    failures = 0

    def run(gamma):
        nonlocal best_x, lo, hi, failures
        x, feasible, infeasible = _probe(prob, gamma, params.tols, probe)
        if x is not None:
            got = float(np.min(prob.sinrs(x)))
            if got > lo:
                best_x, lo = x, got
        if infeasible:
            hi = min(hi, gamma)
        elif not feasible:
            failures += 1
            hi = min(hi, gamma)  # conservative
        probes.append((float(gamma), bool(feasible)))
        return feasible

    if params.gamma_min is not None and params.gamma_min > lo:
        if not run(params.gamma_min):
            raise InfeasibleProblem(f"gamma_min={params.gamma_min} is infeasible")
    if params.gamma_max is not None and lo >= hi:
        raise BracketError(f"gamma_max={hi} is feasible")

    it = 0
    while hi > 0 and (hi - lo) > params.rel_tol * hi and it < params.max_iters:
        it += 1
        run(np.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi))
        if params.gamma_max is not None and lo >= params.gamma_max:
            raise BracketError(f"gamma_max={params.gamma_max} is feasible")
    achieved = float(np.min(prob.sinrs(best_x)))
    return BisectionResult(prob.lift(best_x), achieved, max(hi, achieved), it, probes, failures)


def _probe(prob: _MaxMinSocp, gamma: float, tols: Tolerances, kind: str):
    """Returns ``(budget-feasible beams or None, feasible, certified infeasible)``."""
    if gamma <= 0:
        return np.zeros(prob.n, complex), True, False
    sp = prob.problem(gamma)
    if kind == "margin":
        res = solve_power_margin(sp, tols)
        if res.x is None:
            return None, False, res.status == Status.INFEASIBLE
        x = prob.fit_budget(res.x)
        feasible = bool(np.min(prob.sinrs(x)) >= gamma)
        return x, feasible, (not feasible) and res.lower_bound > 1.0
    st, x, _ = solve_socp_feasibility(sp, tols, accept=lambda x: prob.feasible_point(x, gamma))
    if x is None:
        return None, False, st == Status.INFEASIBLE
    x = prob.fit_budget(x)
    return x, bool(np.min(prob.sinrs(x)) >= gamma), False
