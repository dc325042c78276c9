"""Power allocation over fixed unit-norm per-AP beam directions.

With ``f_ms = sqrt(p_ms) fbar_ms`` every metric depends on the powers only
through per-AP effective gains, so the design reduces to ``M_t``-dimensional
real vectors ``p_s = [sqrt(p_1s), ..., sqrt(p_Ms)]``.  Lifting
``P_s = p_s p_s^T`` and dropping the rank constraint gives a small real SDP
whose optimum bounds every feasible allocation for these beams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import SdpConstraint, SdpProblem, Status, Tolerances, hermitian_eig, solve_sdp
from .conic.linalg import ContractViolation
from .model import BeamSet, ChannelSet, Scenario

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class EffectiveGains:
    """Per-AP gains of unit beams.

    ``comm_gains[m, u, s] = h_mu^H fbar_ms`` and
    ``sensing_gains[m, s] = |a^H(theta_m) fbar_ms|^2 sum_{m_r} zeta^2_{m m_r}``.
    """

    comm_gains: np.ndarray  # (M_t, U, S) complex
    sensing_gains: np.ndarray  # (M_t, S)
    noise_var: np.ndarray  # (U,)
    n_users: int

    @property
    def n_tx(self) -> int:
        return self.sensing_gains.shape[0]

    @property
    def n_streams(self) -> int:
        return self.sensing_gains.shape[1]

    def gamma_matrix(self, u: int, s: int) -> np.ndarray:
        """``Gamma_us = conj(rho_us) rho_us^T`` so that ``|h_u^H f_s|^2 = p_s^T Gamma_us p_s``."""
        r = self.comm_gains[:, u, s]
        return np.outer(r.conj(), r)

    def sinrs(self, sqrt_powers: np.ndarray) -> np.ndarray:
        """UE SINRs for real sqrt-power vectors ``sqrt_powers[s, m]``."""
        amp = np.einsum("mus,sm->us", self.comm_gains, sqrt_powers)
        g = np.abs(amp) ** 2
        U = self.n_users
        d = np.diag(g[:, :U])
        return d / (g.sum(axis=1) - d + self.noise_var)

    def sensing_numerator(self, sqrt_powers: np.ndarray) -> float:
        return float(np.sum(self.sensing_gains.T * sqrt_powers**2))


def unit_directions(beams: BeamSet) -> BeamSet:
    """Normalize every per-AP sub-beam to unit norm (zero sub-beams stay zero)."""
    f = beams.per_ap()
    nrm = np.linalg.norm(f, axis=2, keepdims=True)
    out = np.where(nrm > 0, f / np.where(nrm > 0, nrm, 1.0), 0.0)
    return BeamSet(out.reshape(len(f), -1), beams.n_users, beams.n_sensing, beams.n_tx_antennas)


def effective_gains(channels: ChannelSet, unit_beams: BeamSet, scenario: Scenario) -> EffectiveGains:
    """Effective gains of per-AP unit beams; all-zero sub-beams are allowed and mean 'AP idle'."""
    fb = unit_beams.per_ap()  # (S, M_t, N_t)
    nrm = np.linalg.norm(fb, axis=2)
    if np.any((np.abs(nrm - 1.0) > UNIT_TOL) & (nrm != 0.0)):
        raise ContractViolation("every per-AP beam must have unit norm")
    h = channels.per_ap()  # (U, M_t, N_t)
    rho = np.einsum("umn,smn->mus", h.conj(), fb)
    a = channels.tx_steering
    proj = np.abs(np.einsum("mn,smn->ms", a.conj(), fb)) ** 2
    vr = proj * scenario.combined_sensing_gain()[:, None]
    return EffectiveGains(rho, vr, np.asarray(scenario.ue_noise_var, float), unit_beams.n_users)


def scaled_beams(unit_beams: BeamSet, sqrt_powers: np.ndarray) -> BeamSet:
    """``f_ms = sqrt(p_ms) fbar_ms``."""
    f = unit_beams.per_ap() * np.asarray(sqrt_powers)[:, :, None]
    return BeamSet(f.reshape(len(f), -1), unit_beams.n_users, unit_beams.n_sensing, unit_beams.n_tx_antennas)


@dataclass
class PowerSolution:
    status: Status
    power_matrices: np.ndarray | None  # (S, M_t, M_t)
    sqrt_powers: np.ndarray | None  # (S, M_t) after extraction
    sdr_objective: float
    achieved_objective: float = float("nan")
    feasibility_after_extraction: bool = False
    sinrs: np.ndarray | None = None
    duality_gap: float = float("nan")
    iterations: int = 0
    wall_time: float = 0.0


def build_power_sdp(gains: EffectiveGains, gammas, budget) -> SdpProblem:
    U, S, M = gains.n_users, gains.n_streams, gains.n_tx
    gammas = np.broadcast_to(np.asarray(gammas, float), (U,))
    budget = np.broadcast_to(np.asarray(budget, float), (M,))
    cons = []
    for u in range(U):
        if gammas[u] <= 0:
            continue
        G = [np.real(gains.gamma_matrix(u, s)) / gains.noise_var[u] for s in range(S)]
        coeffs = {s: -gammas[u] * G[s] for s in range(S)}
        coeffs[u] = G[u]
        cons.append(SdpConstraint(coeffs, ">=", float(gammas[u])))
    for m in range(M):
        D = np.zeros((M, M))
        D[m, m] = 1.0
        cons.append(SdpConstraint({s: D for s in range(S)}, "<=", float(budget[m])))
    obj = tuple(np.diag(gains.sensing_gains[:, s]) for s in range(S))
    return SdpProblem(tuple([M] * S), obj, tuple(cons), complex_blocks=tuple([False] * S))


def solve_power_sdr(gains: EffectiveGains, gammas, budget, tols: Tolerances = Tolerances()) -> PowerSolution:
    """Relaxed power allocation: maximize ``sum_s Tr(P_s diag(varrho_s))``."""
    sol = solve_sdp(build_power_sdp(gains, gammas, budget), tols)
    if sol.primal_blocks is None:
        return PowerSolution(sol.status, None, None, float("nan"), iterations=sol.iterations,
                             wall_time=sol.wall_time)
    P = np.array([np.real(X) for X in sol.primal_blocks])
    return PowerSolution(sol.status, P, None, sol.primal_objective, duality_gap=sol.duality_gap,
                         iterations=sol.iterations, wall_time=sol.wall_time)


def extract_rank1_powers(solution: PowerSolution, gains: EffectiveGains, gammas, budget,
                         per_ap_scaling: bool = False, sinr_rtol: float = 1e-6) -> PowerSolution:
    """Leading-eigenvector powers ``p_s = sqrt(lambda_1) |u_1|``, rescaled to the budgets.

    The default rescaling multiplies every power by one common factor
    ``<= 1``; ``per_ap_scaling`` scales each AP on its own instead.  SINR
    thresholds are re-checked and the outcome is reported, not enforced.
    """
    if solution.power_matrices is None:
        raise ContractViolation("extraction needs solved power matrices")
    U = gains.n_users
    gammas = np.broadcast_to(np.asarray(gammas, float), (U,))
    budget = np.broadcast_to(np.asarray(budget, float), (gains.n_tx,))
    p = np.zeros((gains.n_streams, gains.n_tx))
    for s, P in enumerate(solution.power_matrices):
        w, V = hermitian_eig(P)
        p[s] = np.sqrt(max(w[0], 0.0)) * np.abs(V[:, 0])
    used = np.sum(p**2, axis=0)
    ratio = np.where(used > 0, budget / np.where(used > 0, used, 1.0), np.inf)
    if per_ap_scaling:
        p = p * np.sqrt(np.minimum(1.0, ratio))[None, :]
    else:
        p = p * np.sqrt(min(1.0, float(ratio.min())))
    sinrs = gains.sinrs(p)
    ok = bool(np.all(sinrs >= gammas * (1 - sinr_rtol)))
    return PowerSolution(solution.status, solution.power_matrices, p, solution.sdr_objective,
                         gains.sensing_numerator(p), ok, sinrs, solution.duality_gap,
                         solution.iterations, solution.wall_time)


def lifted_beam_matrices(unit_beams: BeamSet, power_matrices: np.ndarray):
    """``F_s = B_s P_s B_s^H`` with ``B_s = blkdiag(fbar_1s, ..., fbar_Ms)``.

    Evaluates the relaxed power allocation with the beam-domain metric
    functions.
    """
    fb = unit_beams.per_ap()
    S, M, N = fb.shape
    mats = []
    for s in range(S):
        B = np.zeros((M * N, M), complex)
        for m in range(M):
            B[m * N:(m + 1) * N, m] = fb[s, m]
        mats.append(B @ power_matrices[s] @ B.conj().T)
    return np.array(mats)
