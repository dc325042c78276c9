"""Joint sensing-communication beamforming by semidefinite relaxation.

The lifted problem maximizes the sensing numerator ``Tr(A (sum_u F_u + F_Q))``
subject to per-UE SINR thresholds and per-AP power budgets, with one PSD
matrix per user stream and a single aggregate matrix ``F_Q`` for all
sensing streams.  Its optimum always admits rank-one user matrices, which
:func:`recover_rank1` constructs explicitly; the sensing streams are then
the leading eigenvectors of the leftover sensing matrix.

Multiplier conventions follow the textbook dual of the problem written as

    (1 + 1/gamma_u) Tr(Q_u F_u) - Tr(Q_u sum_s F_s) >= sigma_u^2   (lambda_u)
    sum_s Tr(D_m F_s) <= P_m                                       (nu_m)

with ``Q_u = h_u h_u^H``.  Internally each SINR row is scaled by
``gamma_u / sigma_u^2`` for conditioning; the reported multipliers are
converted back.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .conic import (
    SdpConstraint,
    SdpProblem,
    Status,
    Tolerances,
    hermitian_eig,
    rank_eps,
    solve_sdp,
)
from .conic.linalg import ContractViolation
from .model import BeamMatrixSet, BeamSet, ChannelSet, Scenario, build_sensing_matrix_A

log = logging.getLogger(__name__)

RANK_TOL = 1e-6
DUAL_POSITIVE_TOL = 1e-6
SLACK_TOL = 1e-4  # relative SINR excess above which a row counts as slack


class DegenerateUser(ValueError):
    """A user with a positive SINR target received no signal power."""


@dataclass(frozen=True)
class JscProblemSpec:
    scenario: Scenario
    channels: ChannelSet
    gammas: np.ndarray
    n_sensing: int = 1

    def __post_init__(self):
        g = np.broadcast_to(np.asarray(self.gammas, float), (self.channels.n_ues,)).copy()
        if np.any(g < 0) or self.n_sensing < 0:
            raise ContractViolation("SINR thresholds and stream count must be nonnegative")
        if self.channels.dim != self.scenario.dim:
            raise ContractViolation("channels do not match the scenario")
        object.__setattr__(self, "gammas", g)

    @property
    def n_users(self) -> int:
        return self.channels.n_ues

    def selection(self, m: int) -> np.ndarray:
        """Diagonal 0/1 matrix ``D_m`` picking AP ``m``'s antennas."""
        nt = self.scenario.n_tx_antennas
        d = np.zeros(self.scenario.dim)
        d[m * nt:(m + 1) * nt] = 1.0
        return np.diag(d)


@dataclass
class JscSdrSolution:
    status: Status
    user_matrices: np.ndarray | None  # (U, n, n)
    sensing_matrix: np.ndarray | None
    sdr_objective: float  # Tr(A sum F), the SNR numerator
    lambdas: np.ndarray | None  # SINR multipliers in the sigma^2-form
    nus: np.ndarray | None  # power multipliers
    duality_gap: float
    iterations: int
    wall_time: float
    dual_objective: float = float("nan")
    raw_multipliers: np.ndarray | None = None  # multipliers of the scaled SINR rows
    tie_break: str = "none"  # which optimal primal point was selected

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL

    def matrices(self) -> BeamMatrixSet:
        return BeamMatrixSet(self.user_matrices, self.sensing_matrix)


def jsc_subspace(spec: JscProblemSpec) -> np.ndarray:
    """Block-diagonal orthonormal basis of ``span{a(theta_m), h_m1, ..., h_mU}`` per AP.

    Every matrix in the relaxation can be compressed onto this subspace
    without changing the optimum: the objective and SINR terms only see
    it, and compressing can only lower each AP's power.
    """
    sc, ch = spec.scenario, spec.channels
    nt = sc.n_tx_antennas
    h = ch.per_ap()  # (U, M_t, N_t)
    blocks = []
    for m in range(sc.n_tx):
        S = np.vstack([ch.tx_steering[m][None, :], h[:, m, :]]).T
        U_, sv, _ = np.linalg.svd(S, full_matrices=False)
        keep = sv > 1e-12 * max(sv[0], 1e-300)
        blocks.append(U_[:, keep])
    k = sum(b.shape[1] for b in blocks)
    V = np.zeros((sc.dim, k), complex)
    col = 0
    for m, b in enumerate(blocks):
        V[m * nt:(m + 1) * nt, col:col + b.shape[1]] = b
        col += b.shape[1]
    return V


def build_jsc_sdp(spec: JscProblemSpec, basis: np.ndarray | None = None) -> SdpProblem:
    """SDP with blocks ``F_1..F_U, F_Q``; SINR rows for users with ``gamma_u > 0``.

    With ``basis`` (``n x k``, orthonormal columns, block-diagonal over APs)
    the blocks are ``k x k`` matrices ``G`` standing for ``V G V^H``.
    """
    sc, ch = spec.scenario, spec.channels
    U = spec.n_users
    A = build_sensing_matrix_A(sc, ch)
    h = ch.comm_channels
    sel = [spec.selection(m) for m in range(sc.n_tx)]
    if basis is not None:
        A = basis.conj().T @ A @ basis
        h = h @ basis.conj()
        sel = [np.diag(np.real(np.einsum("ik,ik->k", basis.conj(), D @ basis))) for D in sel]
    n = A.shape[0]
    cons = []
    for u in range(U):
        g = spec.gammas[u]
        if g <= 0:
            continue
        Qh = np.outer(h[u], h[u].conj()) / sc.ue_noise_var[u]
        coeffs = {k: -g * Qh for k in range(U + 1)}
        coeffs[u] = Qh
        cons.append(SdpConstraint(coeffs, ">=", float(g)))
    for m in range(sc.n_tx):
        cons.append(SdpConstraint({k: sel[m] for k in range(U + 1)}, "<=", float(sc.ap_power_budget[m])))
    return SdpProblem(tuple([n] * (U + 1)), tuple([A] * (U + 1)), tuple(cons))


TIE_BREAKS = ("none", "sensing-leakage")


def solve_jsc_sdr(spec: JscProblemSpec, tols: Tolerances = Tolerances(), reduce: bool = True,
                  tie_break: str = "sensing-leakage") -> JscSdrSolution:
    """Solve the relaxed joint design; infeasible thresholds give status ``infeasible``.

    ``reduce`` solves on the per-AP channel/steering subspace
    (:func:`jsc_subspace`) and lifts the result back, which gives the same
    optimum and multipliers at a fraction of the cost.

    The optimum is often not unique: when SINR thresholds are slack, any
    split of the optimal total between user and sensing matrices is
    optimal, and an interior-point solver returns a maximal-rank mix.
    ``tie_break="sensing-leakage"`` then re-solves over the optimal set for
    the point whose sensing matrix leaks least power into the UEs (see
    :func:`select_low_leakage`).  If every row is slack it also splits the
    user total so each user matrix carries its own signal (see
    :func:`concentrate_user_signal`).  When every row binds the first
    optimum is kept, since the tie-break SDPs would have no interior.  The
    multipliers are those of the first solve, which stay optimal for every
    point of the optimal set.
    """
    if tie_break not in TIE_BREAKS:
        raise ContractViolation(f"tie_break must be one of {TIE_BREAKS}")
    V = jsc_subspace(spec) if reduce else None
    prob = build_jsc_sdp(spec, V)
    sol = solve_sdp(prob, tols)
    U = spec.n_users
    active = [u for u in range(U) if spec.gammas[u] > 0]
    if not sol.optimal and sol.primal_blocks is None:
        return JscSdrSolution(sol.status, None, None, float("nan"), None, None, float("nan"),
                              sol.iterations, sol.wall_time)
    mult = sol.dual_multipliers
    mu = np.zeros(U)
    mu[active] = mult[:len(active)]
    nus = mult[len(active):].copy()
    lambdas = mu * spec.gammas / spec.scenario.ue_noise_var
    X = np.array(sol.primal_blocks)
    out = JscSdrSolution(sol.status, X[:U], X[U], sol.primal_objective, lambdas, nus,
                         sol.duality_gap, sol.iterations, sol.wall_time, sol.dual_objective, mu)
    if tie_break == "sensing-leakage" and sol.optimal and U > 0:
        # binding rows pin the optimal set down, and leave the tie-break SDPs without an interior
        slack = sinr_slack(spec, out, V) > SLACK_TOL
        if np.any(slack):
            out = select_low_leakage(spec, out, prob, tols, V)
        if np.all(slack) and out.tie_break == "sensing-leakage":
            out = concentrate_user_signal(spec, out, tols, V)
    if V is not None:
        lift = lambda F: V @ F @ V.conj().T
        out.user_matrices = np.array([lift(F) for F in out.user_matrices])
        out.sensing_matrix = lift(out.sensing_matrix)
    return out


def sinr_slack(spec: JscProblemSpec, solution: JscSdrSolution, basis: np.ndarray | None = None) -> np.ndarray:
    """Relative excess ``SINR_u / gamma_u - 1`` of each user; ``inf`` where ``gamma_u = 0``."""
    h = spec.channels.comm_channels
    if basis is not None:
        h = h @ basis.conj()
    total = solution.user_matrices.sum(axis=0) + solution.sensing_matrix
    own = np.real(np.einsum("ui,uij,uj->u", h.conj(), solution.user_matrices, h))
    rest = np.real(np.einsum("ui,ij,uj->u", h.conj(), total, h)) - own
    sinr = own / (rest + spec.scenario.ue_noise_var)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(spec.gammas > 0, sinr / np.where(spec.gammas > 0, spec.gammas, 1.0) - 1, np.inf)


def select_low_leakage(spec: JscProblemSpec, solution: JscSdrSolution, problem: SdpProblem,
                       tols: Tolerances = Tolerances(), basis: np.ndarray | None = None) -> JscSdrSolution:
    """Among optimal points of ``problem``, minimize ``sum_u Tr(Q_u F_Q) / sigma_u^2``.

    The objective is pinned at the value already reached and the leakage
    of the sensing matrix into the UEs becomes the new objective.  This is
    the structure optimal points are forced into whenever every SINR
    constraint binds, and it makes the sensing rank reflect how many
    streams are really needed.  If the second solve does not converge the
    original point is kept.  ``solution`` holds blocks in the coordinates
    of ``problem``, which was built with ``basis``.
    """
    U = spec.n_users
    A = problem.objective[0]
    h = spec.channels.comm_channels
    if basis is not None:
        h = h @ basis.conj()
    hn = h / np.sqrt(spec.scenario.ue_noise_var)[:, None]
    leak = hn.T @ hn.conj()
    scale = np.linalg.norm(leak)
    if scale == 0:
        return solution
    pin = SdpConstraint({k: A for k in range(U + 1)}, ">=", float(solution.sdr_objective))
    second = SdpProblem(problem.block_dims, tuple([None] * U + [-leak / scale]),
                        problem.constraints + (pin,))
    # rank decisions follow this point, so converge well past the rank threshold
    fine = replace(tols, feastol=tols.feastol * 1e-2, abstol=tols.abstol * 1e-2, reltol=tols.reltol * 1e-2)
    sol = solve_sdp(second, fine)
    if not sol.optimal:
        sol = solve_sdp(second, tols)
    if not sol.optimal:
        log.info("leakage tie-break did not converge (%s); keeping the first optimum", sol.status.value)
        return solution
    X = np.array(sol.primal_blocks)
    obj = float(sum(np.real(np.trace(A @ F)) for F in X))
    return JscSdrSolution(solution.status, X[:U], X[U], obj, solution.lambdas, solution.nus,
                          solution.duality_gap, solution.iterations + sol.iterations,
                          solution.wall_time + sol.wall_time, solution.dual_objective,
                          solution.raw_multipliers, "sensing-leakage")


def concentrate_user_signal(spec: JscProblemSpec, solution: JscSdrSolution, tols: Tolerances = Tolerances(),
                            basis: np.ndarray | None = None) -> JscSdrSolution:
    """Redistribute ``S = sum_u F_u`` so each user matrix carries its own signal.

    With ``F_Q`` and ``S`` held fixed the total transmit covariance, and so
    the objective, the power use and every interference term, is unchanged.
    Writing ``S = B B^H`` and ``F_u = B X_u B^H`` with ``sum_u X_u = I``, the
    SDP maximizes ``sum_u Tr(Q_u F_u) / sigma_u^2`` subject to the SINR rows.
    This pushes each ``F_u`` toward rank one, so recovery moves little
    power into the sensing matrix.  Eigen-directions of ``S`` below the rank
    threshold are handed to ``F_Q``.  On failure the input point is kept.
    """
    U = spec.n_users
    S = solution.user_matrices.sum(axis=0)
    w, E = hermitian_eig(S)
    keep = w > RANK_TOL * 1e-2 * max(w[0], 0.0) if len(w) else np.zeros(0, bool)
    r = int(keep.sum())
    if r == 0:
        return solution
    B = E[:, keep] * np.sqrt(w[keep])
    rest = S - B @ B.conj().T
    h = spec.channels.comm_channels
    if basis is not None:
        h = h @ basis.conj()
    s2 = spec.scenario.ue_noise_var
    total = S + solution.sensing_matrix
    g = h.conj() @ B
    G = [np.outer(g[u].conj(), g[u]) / s2[u] for u in range(U)]
    scale = max(np.linalg.norm(Gu) for Gu in G)
    if scale == 0:
        return solution
    cons = []
    for u in range(U):
        if spec.gammas[u] > 0:
            received = float(np.real(np.vdot(h[u], total @ h[u]))) / s2[u]
            gam = spec.gammas[u]
            cons.append(SdpConstraint({u: (1 + gam) / scale * G[u]}, ">=", gam * (received + 1) / scale))
    for i in range(r):
        for j in range(i, r):
            E_re = np.zeros((r, r), complex)
            E_re[i, j] = E_re[j, i] = 1.0
            cons.append(SdpConstraint({u: E_re for u in range(U)}, "==", 1.0 if i == j else 0.0))
            if i != j:
                E_im = np.zeros((r, r), complex)
                E_im[i, j], E_im[j, i] = 1j, -1j
                cons.append(SdpConstraint({u: E_im for u in range(U)}, "==", 0.0))
    third = SdpProblem((r,) * U, tuple(Gu / scale for Gu in G), tuple(cons))
    fine = replace(tols, feastol=tols.feastol * 1e-2, abstol=tols.abstol * 1e-2, reltol=tols.reltol * 1e-2)
    sol = solve_sdp(third, fine)
    if not sol.optimal:
        sol = solve_sdp(third, tols)
    if not sol.optimal:
        log.info("user-signal concentration did not converge (%s); keeping the previous point", sol.status.value)
        return solution
    # the blocks sum to I only to solver accuracy; renormalize so sum_s F_s is exact
    Xs = [0.5 * (X + X.conj().T) for X in sol.primal_blocks]
    tw, tv = hermitian_eig(sum(Xs))
    if tw[-1] <= 0:
        return solution
    T = (tv / np.sqrt(tw)) @ tv.conj().T
    Fu = np.array([B @ T @ X @ T @ B.conj().T for X in Xs])
    return replace(solution, user_matrices=Fu, sensing_matrix=solution.sensing_matrix + rest,
                   iterations=solution.iterations + sol.iterations,
                   wall_time=solution.wall_time + sol.wall_time)


@dataclass
class RecoveryReport:
    status: str  # "optimal" or "truncated"
    sensing_rank: int
    n_sensing: int
    sdr_objective: float
    achieved_objective: float
    gap: float  # sdr_objective - achieved_objective
    sinr_preserved: float  # max relative change of Tr(Q_u F_u)
    sensing_eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {"status": self.status, "sensing_rank": self.sensing_rank, "n_sensing": self.n_sensing,
                "sdr_objective": self.sdr_objective, "achieved_objective": self.achieved_objective,
                "gap": self.gap, "sinr_preserved": self.sinr_preserved}


def recover_rank1(
    solution: JscSdrSolution,
    spec: JscProblemSpec,
    n_sensing: int | None = None,
    rank_tol: float = RANK_TOL,
) -> tuple[BeamSet, RecoveryReport]:
    """Rank-one user beams plus up to ``Q`` sensing beams from an SDR optimum.

    ``f_u = F_u h_u / sqrt(h_u^H F_u h_u)`` keeps every ``Tr(Q_u F_u)``, and
    the sensing matrix absorbs what the user matrices lose, so the total
    ``sum_s F_s`` is unchanged.  If that sensing matrix has rank at most
    ``Q`` its scaled eigenvectors reproduce the relaxation exactly;
    otherwise the top ``Q`` eigenpairs are kept and the loss is reported.
    """
    if solution.user_matrices is None:
        raise ContractViolation("recovery needs a solved relaxation")
    Q = spec.n_sensing if n_sensing is None else n_sensing
    ch, sc = spec.channels, spec.scenario
    U, n = spec.n_users, sc.dim
    h = ch.comm_channels
    Fu = solution.user_matrices
    f = np.zeros((U, n), complex)
    total = Fu.sum(axis=0) + solution.sensing_matrix
    tscale = max(np.real(np.trace(total)), 1e-300)
    preserved = 0.0
    for u in range(U):
        Fh = Fu[u] @ h[u]
        q = float(np.real(np.vdot(h[u], Fh)))
        if q <= 1e-14 * tscale * np.vdot(h[u], h[u]).real:
            if spec.gammas[u] > 0:
                raise DegenerateUser(f"user {u} has h^H F h = {q:.3e}")
            continue
        f[u] = Fh / np.sqrt(q)
        q_new = abs(np.vdot(h[u], f[u])) ** 2
        preserved = max(preserved, abs(q_new - q) / q)
    FQ = total - np.einsum("ui,uj->ij", f, f.conj())
    FQ = 0.5 * (FQ + FQ.conj().T)
    w, V = hermitian_eig(FQ)
    scale = max(hermitian_eig(total)[0][0], 1e-300)
    r = rank_eps(FQ, rank_tol, scale=scale)
    k = min(Q, int(np.sum(w > 0)))
    fq = np.zeros((Q, n), complex)
    fq[:k] = (np.sqrt(w[:k])[:, None] * V[:, :k].T)
    beams = BeamSet.from_parts(f, fq, sc.n_tx_antennas)
    A = build_sensing_matrix_A(sc, ch)
    achieved = float(np.real(np.trace(A @ beams.to_matrices().total)))
    report = RecoveryReport("optimal" if r <= Q else "truncated", r, Q, solution.sdr_objective,
                            achieved, solution.sdr_objective - achieved, preserved, w)
    return beams, report


@dataclass
class DualMatrices:
    user: np.ndarray  # (U, n, n) B_u
    sensing: np.ndarray  # B_Q


@dataclass
class KktReport:
    duals: DualMatrices
    primal_objective: float
    dual_objective: float
    duality_gap: float
    slack_user: np.ndarray  # ||B_u F_u||_F
    slack_sensing: float  # ||B_Q F_Q||_F
    slack_scale_user: np.ndarray  # ||B_u||_F ||sum_s F_s||_F
    slack_scale_sensing: float
    max_eig_user: np.ndarray
    max_eig_sensing: float
    remark_residual: float  # max_u ||B_u - B_Q - lambda_u (1 + 1/gamma_u) Q_u||_F
    nu_minus_gain: np.ndarray  # nu_m - zeta_bar_m

    def slackness_ok(self, rel: float = 1e-5) -> bool:
        return bool(np.all(self.slack_user <= rel * np.maximum(self.slack_scale_user, 1e-300))
                    and self.slack_sensing <= rel * max(self.slack_scale_sensing, 1e-300))

    def to_dict(self) -> dict:
        return {"primal_objective": self.primal_objective, "dual_objective": self.dual_objective,
                "duality_gap": self.duality_gap, "slack_user": self.slack_user.tolist(),
                "slack_sensing": self.slack_sensing, "max_eig_user": self.max_eig_user.tolist(),
                "max_eig_sensing": self.max_eig_sensing, "remark_residual": self.remark_residual,
                "nu_minus_gain": self.nu_minus_gain.tolist()}


def dual_matrices(solution: JscSdrSolution, spec: JscProblemSpec) -> DualMatrices:
    """``B_u`` and ``B_Q`` built from the multipliers.

    ``B_Q = A - sum_u lambda_u Q_u - sum_m nu_m D_m`` and
    ``B_u = A + (lambda_u / gamma_u) Q_u - sum_{u' != u} lambda_u' Q_u' - sum_m nu_m D_m``.
    ``lambda_u / gamma_u`` is taken as the scaled-row multiplier over
    ``sigma_u^2``, which stays finite (zero) for users without a threshold.
    """
    sc, ch = spec.scenario, spec.channels
    A = build_sensing_matrix_A(sc, ch)
    h = ch.comm_channels
    Qs = np.einsum("ui,uj->uij", h, h.conj())
    power = sum(nu * spec.selection(m) for m, nu in enumerate(solution.nus))
    lam = solution.lambdas
    BQ = A - np.einsum("u,uij->ij", lam, Qs) - power
    Bu = np.empty((spec.n_users,) + A.shape, complex)
    for u in range(spec.n_users):
        others = [v for v in range(spec.n_users) if v != u]
        own = solution.raw_multipliers[u] / sc.ue_noise_var[u]
        Bu[u] = A + own * Qs[u] - np.einsum("u,uij->ij", lam[others], Qs[others]) - power
    return DualMatrices(Bu, BQ)


def kkt_dual_report(solution: JscSdrSolution, spec: JscProblemSpec) -> KktReport:
    """Dual matrices, complementary slackness and strong-duality residuals."""
    if not solution.optimal:
        raise ContractViolation("KKT diagnostics need an optimal relaxation")
    sc, ch = spec.scenario, spec.channels
    duals = dual_matrices(solution, spec)
    h = ch.comm_channels
    Fu, FQ = solution.user_matrices, solution.sensing_matrix
    fro = np.linalg.norm
    # residual scale uses the whole solution so a vanishing block is not divided by ~0
    ftot = fro(Fu.sum(axis=0) + FQ)
    slack_u = np.array([fro(duals.user[u] @ Fu[u]) for u in range(spec.n_users)])
    scale_u = np.array([fro(duals.user[u]) * ftot for u in range(spec.n_users)])
    remark = 0.0
    for u in range(spec.n_users):
        g = spec.gammas[u]
        extra = solution.lambdas[u] * (1 + 1 / g) if g > 0 else 0.0
        remark = max(remark, fro(duals.user[u] - duals.sensing - extra * np.outer(h[u], h[u].conj())))
    dual_obj = float(solution.nus @ sc.ap_power_budget - solution.lambdas @ sc.ue_noise_var)
    maxeig = lambda B: float(np.linalg.eigvalsh(B)[-1])
    return KktReport(
        duals=duals,
        primal_objective=solution.sdr_objective,
        dual_objective=dual_obj,
        duality_gap=abs(solution.sdr_objective - dual_obj),
        slack_user=slack_u,
        slack_sensing=float(fro(duals.sensing @ FQ)),
        slack_scale_user=scale_u,
        slack_scale_sensing=float(fro(duals.sensing) * ftot),
        max_eig_user=np.array([maxeig(B) for B in duals.user]),
        max_eig_sensing=maxeig(duals.sensing),
        remark_residual=float(remark),
        nu_minus_gain=solution.nus - sc.combined_sensing_gain(),
    )


@dataclass
class StreamBoundReport:
    sensing_rank: int
    n_tx: int
    n_users: int
    all_nu_positive: bool
    rank_le_aps: bool  # rank(F_Q) <= M_t
    rank_le_aps_minus_users: bool  # rank(F_Q) <= max(M_t - U, 0)
    nullspace_residuals: np.ndarray  # |h_u^H F_Q h_u| / (||h_u||^2 lambda_max(total)) for users with lambda_u > 0
    sensing_residual: float  # ||(A - sum nu D) F_Q||_F / (||A|| lambda_max(total))

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def stream_bound_check(solution: JscSdrSolution, spec: JscProblemSpec,
                       rank_tol: float = RANK_TOL) -> StreamBoundReport:
    """Rank of the relaxed sensing matrix against the stream-count bounds.

    Reports the epsilon-rank of ``F_Q`` (relative to the largest eigenvalue
    of the whole solution, so a vanishing ``F_Q`` has rank 0), whether it is
    at most ``M_t`` and at most ``max(M_t - U, 0)``, and how far ``F_Q`` is
    from the null spaces of active users' channels and of
    ``A - sum_m nu_m D_m``.
    """
    sc, ch = spec.scenario, spec.channels
    FQ = solution.sensing_matrix
    total = solution.user_matrices.sum(axis=0) + FQ
    top = max(hermitian_eig(total)[0][0], 1e-300)
    r = rank_eps(FQ, rank_tol, scale=top)
    lam = solution.lambdas
    active = lam > DUAL_POSITIVE_TOL * max(lam.max(initial=0.0), 1e-300)
    h = ch.comm_channels
    res = np.array([abs(np.vdot(h[u], FQ @ h[u])) / (np.vdot(h[u], h[u]).real * top)
                    for u in range(spec.n_users) if active[u]])
    A = build_sensing_matrix_A(sc, ch)
    M = A - sum(nu * spec.selection(m) for m, nu in enumerate(solution.nus))
    sres = float(np.linalg.norm(M @ FQ) / (np.linalg.norm(A) * top))
    nus = solution.nus
    nu_pos = bool(np.all(nus > DUAL_POSITIVE_TOL * max(nus.max(initial=0.0), 1e-300)))
    return StreamBoundReport(r, sc.n_tx, spec.n_users, nu_pos, r <= sc.n_tx,
                             r <= max(sc.n_tx - spec.n_users, 0), res, sres)
