import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfisac.conic import (
    ComplexSoc,
    ContractViolation,
    PowerGroup,
    SdpConstraint,
    SdpProblem,
    SocpFeasibilityProblem,
    Status,
    constraint_values,
    embed_hermitian,
    hermitian_eig,
    primal_violation,
    rank_eps,
    read_sdpa,
    solve_power_margin,
    solve_sdp,
    solve_socp_feasibility,
    write_sdpa,
)

from conftest import crandn


def random_hermitian(rng, n):
    M = crandn(rng, n, n)
    return 0.5 * (M + M.conj().T)


class TestEmbedding:
    def test_identity(self):
        np.testing.assert_array_equal(embed_hermitian(np.eye(3, dtype=complex)), np.eye(6))

    def test_hand_example(self):
        H = np.array([[0, 1j], [-1j, 0]])
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(embed_hermitian(H))), [-1, -1, 1, 1], atol=1e-15)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ContractViolation):
            embed_hermitian(np.array([[0, 1], [0, 0]], complex))

    @pytest.mark.parametrize("r", [0, 1, 3])
    def test_rank_and_psd_preserved(self, rng, r):
        for _ in range(30):
            B = crandn(rng, 5, r)
            H = B @ B.conj().T
            E = embed_hermitian(H)
            assert np.linalg.eigvalsh(E).min() > -1e-12
            assert np.linalg.matrix_rank(E, tol=1e-9) == 2 * r

    def test_trace_doubles(self, rng):
        A, X = random_hermitian(rng, 4), random_hermitian(rng, 4)
        lhs = np.trace(embed_hermitian(A) @ embed_hermitian(X))
        assert np.isclose(lhs, 2 * np.trace(A @ X).real)


class TestEig:
    def test_diag(self):
        w, _ = hermitian_eig(np.diag([1.0, 3.0]))
        np.testing.assert_allclose(w, [3, 1])

    def test_rank_one(self, rng):
        a = crandn(rng, 4)
        w, V = hermitian_eig(np.outer(a, a.conj()))
        assert np.isclose(w[0], np.vdot(a, a).real)
        np.testing.assert_allclose(w[1:], 0, atol=1e-12)
        assert np.isclose(abs(np.vdot(V[:, 0], a)), np.linalg.norm(a))

    @given(st.integers(0, 10_000), st.integers(1, 12))
    def test_reconstruction(self, seed, n):
        H = random_hermitian(np.random.default_rng(seed), n)
        w, V = hermitian_eig(H)
        assert np.all(np.diff(w) <= 0)
        assert np.linalg.norm(V @ np.diag(w) @ V.conj().T - H) <= 1e-10 * max(np.linalg.norm(H), 1)

    def test_rank_eps_examples(self, rng):
        a = crandn(rng, 6)
        aa = np.outer(a, a.conj())
        assert rank_eps(np.zeros((3, 3))) == 0
        assert rank_eps(aa) == 1
        assert rank_eps(aa + 1e-9 * np.eye(6), 1e-6) == 1
        assert rank_eps(1e-9 * aa, scale=1.0) == 0


class TestSdp:
    def test_max_eigenvalue(self, rng):
        C = random_hermitian(rng, 5)
        prob = SdpProblem((5,), (C,), (SdpConstraint({0: np.eye(5)}, "==", 1.0),))
        sol = solve_sdp(prob)
        w, V = hermitian_eig(C)
        assert sol.optimal
        assert abs(sol.primal_objective - w[0]) <= 1e-7 * (1 + abs(w[0]))
        v = V[:, 0]
        assert np.linalg.norm(sol.primal_blocks[0] - np.outer(v, v.conj())) < 1e-5

    def test_negative_trace_infeasible(self):
        prob = SdpProblem((3,), (np.eye(3),), (SdpConstraint({0: np.eye(3)}, "==", -1.0),))
        sol = solve_sdp(prob)
        assert sol.status == Status.INFEASIBLE
        assert sol.primal_blocks is None

    @pytest.mark.parametrize("seed", range(6))
    def test_random_instance_gap_and_feasibility(self, seed):
        rng = np.random.default_rng(seed)
        dims = (3, 4)
        cons = [SdpConstraint({0: np.eye(3), 1: np.eye(4)}, "<=", 2.0)]
        for _ in range(4):
            B = [crandn(rng, n, n) for n in dims]
            coeffs = {k: b @ b.conj().T for k, b in enumerate(B)}
            cons.append(SdpConstraint(coeffs, rng.choice(["<=", ">="]), float(rng.uniform(0.1, 0.5))))
        prob = SdpProblem(dims, (random_hermitian(rng, 3), random_hermitian(rng, 4)), tuple(cons))
        sol = solve_sdp(prob)
        if not sol.optimal:
            assert sol.status == Status.INFEASIBLE
            return
        assert abs(sol.primal_objective - sol.dual_objective) <= 1e-7 * (1 + abs(sol.primal_objective))
        rhs = np.array([c.rhs for c in cons])
        assert np.max(primal_violation(prob, sol.primal_blocks)) <= 1e-7 * (1 + np.linalg.norm(rhs))
        for X, Z in zip(sol.primal_blocks, sol.dual_slacks):
            assert np.linalg.eigvalsh(X).min() > -1e-8
            assert np.linalg.eigvalsh(Z).min() > -1e-6
        assert np.all(sol.dual_multipliers[[i for i, c in enumerate(cons) if c.sense != "=="]] >= -1e-7)

    def test_real_blocks(self):
        C = np.array([[1.0, 2.0], [2.0, -1.0]])
        prob = SdpProblem((2,), (C,), (SdpConstraint({0: np.eye(2)}, "<=", 1.0),), complex_blocks=(False,))
        sol = solve_sdp(prob)
        assert np.isclose(sol.primal_objective, np.sqrt(5), atol=1e-6)

    def test_deterministic(self, rng):
        C = random_hermitian(rng, 4)
        prob = SdpProblem((4,), (C,), (SdpConstraint({0: np.eye(4)}, "<=", 1.0),))
        a, b = solve_sdp(prob), solve_sdp(prob)
        assert a.status == b.status
        assert abs(a.primal_objective - b.primal_objective) <= 1e-9
        np.testing.assert_array_equal(a.primal_blocks[0], b.primal_blocks[0])

    def test_shape_checked(self):
        with pytest.raises(ContractViolation):
            SdpProblem((2,), (np.eye(3),), ())
        with pytest.raises(ContractViolation):
            SdpConstraint({0: np.eye(2)}, "<", 1.0)

    def test_constraint_values(self, rng):
        A = random_hermitian(rng, 3)
        X = np.eye(3)
        prob = SdpProblem((3,), (None,), (SdpConstraint({0: A}, "<=", 0.0),))
        assert np.isclose(constraint_values(prob, [X])[0], np.trace(A).real)

    def test_sdpa_roundtrip(self, tmp_path, rng):
        C = random_hermitian(rng, 2)
        A = random_hermitian(rng, 2)
        prob = SdpProblem((2,), (C,), (SdpConstraint({0: np.eye(2)}, "==", 1.0),
                                        SdpConstraint({0: A}, ">=", -0.5)))
        path = tmp_path / "p.dat-s"
        write_sdpa(prob, path)
        c, struct, mats = read_sdpa(path)
        np.testing.assert_allclose(c, [1.0, -0.5])
        assert struct == [4, -1]
        np.testing.assert_allclose(mats[(0, 1)], 0.5 * embed_hermitian(C))
        np.testing.assert_allclose(mats[(2, 1)], 0.5 * embed_hermitian(A))
        assert mats[(2, 2)][0, 0] == -1.0


def sinr_cones(H, gamma, sigma2):
    """Cones ``||[H f_1..f_U, sigma]|| <= sqrt(1 + 1/g) Re(h_u^H f_u)`` over stacked beams."""
    U, n = H.shape
    cones = []
    for u in range(U):
        A = np.zeros((U + 1, U * n), complex)
        for s in range(U):
            A[s, s * n:(s + 1) * n] = H[u].conj()
        b = np.zeros(U + 1, complex)
        b[-1] = np.sqrt(sigma2)
        c = np.zeros(U * n, complex)
        c[u * n:(u + 1) * n] = np.sqrt(1 + 1 / gamma) * H[u]
        cones.append(ComplexSoc(A, b, c, 0.0))
    return cones


def sinr_sdp(H, gamma, sigma2, power):
    U, n = H.shape
    Q = [np.outer(h, h.conj()) for h in H]
    cons = []
    for u in range(U):
        coeffs = {s: (Q[u] if s == u else -gamma * Q[u]) for s in range(U)}
        cons.append(SdpConstraint(coeffs, ">=", gamma * sigma2))
    cons.append(SdpConstraint({s: np.eye(n) for s in range(U)}, "<=", power))
    return SdpProblem((n,) * U, (None,) * U, tuple(cons))


class TestSocp:
    def test_gamma_zero_power_feasible(self):
        prob = SocpFeasibilityProblem(3, (), (PowerGroup((0, 1, 2), 1.0),))
        status, x, _ = solve_socp_feasibility(prob)
        assert status == Status.OPTIMAL
        assert prob.satisfied(x, 1e-8)

    @pytest.mark.parametrize("factor, feasible", [(0.99, True), (1.01, False)])
    def test_single_user_mrt_bound(self, rng, factor, feasible):
        h = crandn(rng, 1, 4)
        P, s2 = 2.0, 0.5
        gmax = P * np.vdot(h, h).real / s2
        prob = SocpFeasibilityProblem(4, tuple(sinr_cones(h, factor * gmax, s2)), (PowerGroup(tuple(range(4)), P),))
        status, x, _ = solve_socp_feasibility(prob)
        assert (status == Status.OPTIMAL) == feasible
        if feasible:
            assert prob.satisfied(x, 1e-8)
        else:
            assert status == Status.INFEASIBLE
        res = solve_power_margin(prob)
        assert res.feasible == feasible
        assert res.certified_infeasible == (not feasible)
        if res.status == Status.OPTIMAL:
            assert np.isclose(res.margin, np.sqrt(factor), rtol=1e-5)

    @pytest.mark.parametrize("seed", range(50))
    def test_agrees_with_sdp_transcription(self, seed):
        rng = np.random.default_rng(100 + seed)
        U, n, P, s2 = 2, 3, 1.0, 0.1
        H = crandn(rng, U, n)
        gamma = float(10 ** rng.uniform(0, 2))
        prob = SocpFeasibilityProblem(U * n, tuple(sinr_cones(H, gamma, s2)), (PowerGroup(tuple(range(U * n)), P),))
        status, x, _ = solve_socp_feasibility(prob)
        sdp = solve_sdp(sinr_sdp(H, gamma, s2, P))
        assert status in (Status.OPTIMAL, Status.INFEASIBLE)
        assert sdp.status in (Status.OPTIMAL, Status.INFEASIBLE)
        assert (status == Status.OPTIMAL) == sdp.optimal
        if x is not None:
            assert prob.satisfied(x, 1e-8)

    def test_accept_callback_stops_early(self):
        prob = SocpFeasibilityProblem(2, (), (PowerGroup((0, 1), 1.0),))
        status, x, sol = solve_socp_feasibility(prob, accept=lambda x: True)
        assert status == Status.OPTIMAL
        assert sol.status == Status.STOPPED

    def test_validation(self):
        with pytest.raises(ContractViolation):
            SocpFeasibilityProblem(2, (), (PowerGroup((5,), 1.0),))
        with pytest.raises(ContractViolation):
            solve_power_margin(SocpFeasibilityProblem(2))
