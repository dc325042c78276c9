import numpy as np
import pytest

from cfisac.baselines import PowerSplit, conjugate_sensing, maxmin_comm_bisection, nullspace_sensing, rzf_comm
from cfisac.channels import GeneratorConfig, generate
from cfisac.conic import ContractViolation, Status, rank_eps
from cfisac.jsc import (
    SLACK_TOL,
    JscProblemSpec,
    jsc_subspace,
    kkt_dual_report,
    recover_rank1,
    sinr_slack,
    solve_jsc_sdr,
    stream_bound_check,
)
from cfisac.model import BeamSet, build_sensing_matrix_A, comm_sinrs, sensing_snr


def line_spec(seed=0, U=2, nt=6, gamma=1.0, Q=1):
    sc, ch = generate(GeneratorConfig(setup="line", n_ues=U, n_tx_antennas=nt), seed)
    return JscProblemSpec(sc, ch, np.full(U, gamma), Q)


@pytest.fixture(scope="module")
def solved():
    out = []
    for seed in range(3):
        spec = line_spec(seed, U=3, nt=8)
        sc, ch = spec.scenario, spec.channels
        best = maxmin_comm_bisection(ch, np.zeros((0, sc.dim)), sc.ap_power_budget, sc.ue_noise_var).gamma
        spec = JscProblemSpec(sc, ch, np.full(3, 0.5 * best))
        out.append((spec, solve_jsc_sdr(spec)))
    return out


def numerator(spec, beams):
    return sensing_snr(spec.scenario, beams, spec.channels) * spec.scenario.radar_noise_var.sum()


class TestSpec:
    def test_broadcasts_gamma(self):
        spec = line_spec(gamma=2.0)
        np.testing.assert_array_equal(spec.gammas, [2.0, 2.0])

    def test_rejects_negative(self):
        sc, ch = generate(GeneratorConfig(setup="line", n_ues=1), 0)
        with pytest.raises(ContractViolation):
            JscProblemSpec(sc, ch, [-1.0])
        with pytest.raises(ContractViolation):
            JscProblemSpec(sc, ch, [1.0], n_sensing=-1)

    def test_subspace_is_orthonormal(self):
        spec = line_spec(U=2, nt=8)
        V = jsc_subspace(spec)
        np.testing.assert_allclose(V.conj().T @ V, np.eye(V.shape[1]), atol=1e-12)
        assert V.shape == (16, 6)

    def test_slack_detection(self):
        spec = line_spec(gamma=0.0)
        assert np.all(np.isinf(sinr_slack(spec, solve_jsc_sdr(spec, tie_break="none", reduce=False))))
        sc, ch = spec.scenario, spec.channels
        edge = maxmin_comm_bisection(ch, np.zeros((0, sc.dim)), sc.ap_power_budget, sc.ue_noise_var).gamma
        tight = JscProblemSpec(sc, ch, np.full(2, edge * (1 - 2e-3)))
        assert np.all(sinr_slack(tight, solve_jsc_sdr(tight, tie_break="none", reduce=False)) < SLACK_TOL)

    def test_unknown_tie_break(self):
        with pytest.raises(ContractViolation):
            solve_jsc_sdr(line_spec(), tie_break="random")


class TestSolve:
    def test_no_threshold_puts_all_power_on_target(self):
        spec = line_spec(gamma=0.0)
        sol = solve_jsc_sdr(spec)
        sc = spec.scenario
        expect = float(np.sum(sc.ap_power_budget * sc.combined_sensing_gain()) * sc.n_tx_antennas)
        assert sol.optimal
        assert sol.sdr_objective == pytest.approx(expect, rel=1e-6)

    def test_huge_threshold_infeasible(self):
        sol = solve_jsc_sdr(line_spec(gamma=1e9))
        assert sol.status == Status.INFEASIBLE
        assert sol.user_matrices is None

    @pytest.mark.parametrize("tie_break", ["none", "sensing-leakage"])
    def test_reduced_matches_full(self, tie_break):
        spec = line_spec(seed=4, U=2, nt=4, gamma=2.0)
        a = solve_jsc_sdr(spec, reduce=True, tie_break=tie_break)
        b = solve_jsc_sdr(spec, reduce=False, tie_break=tie_break)
        assert a.sdr_objective == pytest.approx(b.sdr_objective, rel=1e-6)
        np.testing.assert_allclose(a.nus, b.nus, rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(a.lambdas, b.lambdas, rtol=1e-4, atol=1e-8)

    def test_tie_break_keeps_objective(self, solved):
        for spec, sol in solved:
            plain = solve_jsc_sdr(spec, tie_break="none", reduce=False)
            slack = np.any(sinr_slack(spec, plain) > SLACK_TOL)
            assert sol.tie_break == ("sensing-leakage" if slack else "none")
            assert sol.sdr_objective == pytest.approx(plain.sdr_objective, rel=1e-6)

    def test_constraints_hold(self, solved):
        for spec, sol in solved:
            sc = spec.scenario
            sinr = comm_sinrs_matrix(spec, sol)
            assert np.all(sinr >= spec.gammas * (1 - 1e-6))
            total = sol.user_matrices.sum(axis=0) + sol.sensing_matrix
            for m in range(sc.n_tx):
                p = np.real(np.trace(spec.selection(m) @ total))
                assert p <= sc.ap_power_budget[m] * (1 + 1e-7)
            for F in list(sol.user_matrices) + [sol.sensing_matrix]:
                assert np.linalg.eigvalsh(F).min() > -1e-7 * np.linalg.eigvalsh(total).max()

    def test_upper_bounds_baselines(self, solved):
        for spec, sol in solved:
            sc, ch = spec.scenario, spec.channels
            split = PowerSplit(0.5)
            pc, ps = split.comm(sc.ap_power_budget), split.sensing(sc.ap_power_budget)
            for fs in (conjugate_sensing(ch, ps), nullspace_sensing(ch, ps)):
                fu = rzf_comm(ch, pc, noise_var=sc.ue_noise_var)
                beams = BeamSet(np.vstack([fu, fs]), spec.n_users, 1, sc.n_tx_antennas)
                if np.all(comm_sinrs(ch, beams, sc.ue_noise_var) >= spec.gammas):
                    assert numerator(spec, beams) <= sol.sdr_objective * (1 + 1e-7)

    def test_feasibility_edge_matches_bisection(self):
        spec = line_spec(seed=2, U=2, nt=4)
        sc, ch = spec.scenario, spec.channels
        res = maxmin_comm_bisection(ch, np.zeros((0, sc.dim)), sc.ap_power_budget, sc.ue_noise_var)
        below = solve_jsc_sdr(JscProblemSpec(sc, ch, res.gamma * (1 - 1e-3)), tie_break="none")
        above = solve_jsc_sdr(JscProblemSpec(sc, ch, res.gamma * (1 + 2e-3)), tie_break="none")
        assert below.optimal
        assert above.status == Status.INFEASIBLE


def comm_sinrs_matrix(spec, sol):
    h = spec.channels.comm_channels
    total = sol.user_matrices.sum(axis=0) + sol.sensing_matrix
    out = []
    for u in range(spec.n_users):
        own = np.real(np.vdot(h[u], sol.user_matrices[u] @ h[u]))
        rest = np.real(np.vdot(h[u], total @ h[u])) - own
        out.append(own / (rest + spec.scenario.ue_noise_var[u]))
    return np.array(out)


class TestRecovery:
    def test_conservation(self, solved):
        for spec, sol in solved:
            beams, rep = recover_rank1(sol, spec, n_sensing=spec.scenario.dim)
            h = spec.channels.comm_channels
            for u in range(spec.n_users):
                F = np.outer(beams.user_beams[u], beams.user_beams[u].conj())
                assert rank_eps(F) == 1
                q_old = np.real(np.vdot(h[u], sol.user_matrices[u] @ h[u]))
                q_new = abs(np.vdot(h[u], beams.user_beams[u])) ** 2
                assert abs(q_new - q_old) <= 1e-9 * q_old
            assert rep.status == "optimal"
            assert rep.achieved_objective == pytest.approx(sol.sdr_objective, rel=1e-9)

    def test_full_recovery_reproduces_objective(self, solved):
        for spec, sol in solved:
            beams, rep = recover_rank1(sol, spec, n_sensing=spec.scenario.n_tx)
            assert rep.status == "optimal"
            snr = sensing_snr(spec.scenario, beams, spec.channels)
            assert snr == pytest.approx(sol.sdr_objective / spec.scenario.radar_noise_var.sum(), rel=1e-6)
            sinr = comm_sinrs(spec.channels, beams, spec.scenario.ue_noise_var)
            assert np.all(sinr >= spec.gammas * (1 - 1e-6))
            beams.check_power(spec.scenario.ap_power_budget * (1 + 1e-7))

    def test_sensing_remainder_is_psd(self, solved):
        for spec, sol in solved:
            _, rep = recover_rank1(sol, spec)
            w = rep.sensing_eigenvalues
            assert w.min() >= -1e-7 * max(w.max(), 1e-300)

    def test_truncation_reports_gap(self, solved):
        spec, sol = solved[0]
        _, rep = recover_rank1(sol, spec, n_sensing=0)
        if rep.sensing_rank > 0:
            assert rep.status == "truncated"
            assert rep.gap > 0
        assert rep.gap == pytest.approx(rep.sdr_objective - rep.achieved_objective)

    def test_requires_solution(self):
        spec = line_spec(gamma=1e9)
        with pytest.raises(ContractViolation):
            recover_rank1(solve_jsc_sdr(spec), spec)


class TestDuals:
    def test_kkt(self, solved):
        for spec, sol in solved:
            rep = kkt_dual_report(sol, spec)
            assert abs(rep.primal_objective - rep.dual_objective) <= 1e-6 * (1 + abs(rep.primal_objective))
            assert rep.slackness_ok(1e-5)
            scale = np.linalg.norm(build_sensing_matrix_A(spec.scenario, spec.channels))
            assert np.all(rep.max_eig_user <= 1e-6 * scale)
            assert rep.max_eig_sensing <= 1e-6 * scale
            assert rep.remark_residual <= 1e-12 * max(scale, 1.0)
            assert np.all(sol.lambdas >= 0) and np.all(sol.nus >= 0)

    def test_kkt_needs_optimal(self):
        spec = line_spec(gamma=1e9)
        with pytest.raises(ContractViolation):
            kkt_dual_report(solve_jsc_sdr(spec), spec)

    def test_stream_bounds(self, solved):
        for spec, sol in solved:
            rep = stream_bound_check(sol, spec)
            assert rep.rank_le_aps
            assert rep.sensing_rank <= spec.scenario.n_tx
            assert rep.to_dict()["n_tx"] == spec.scenario.n_tx

    @pytest.mark.parametrize("U", [3, 5])
    def test_square_rank_law(self, U):
        sc, ch = generate(GeneratorConfig(setup="square", n_ues=U), 7)
        spec = JscProblemSpec(sc, ch, np.full(U, 10.0))
        rep = stream_bound_check(solve_jsc_sdr(spec), spec)
        assert rep.sensing_rank <= max(sc.n_tx - U, 0)
