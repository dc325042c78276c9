import numpy as np
import pytest

from cfisac.baselines import (
    BisectionParams,
    BracketError,
    DegenerateDirection,
    InfeasibleProblem,
    PowerSplit,
    conjugate_sensing,
    default_rzf_lambda,
    maxmin_comm_bisection,
    nullspace_directions,
    nullspace_sensing,
    rzf_comm,
    rzf_directions,
)
from cfisac.channels import GeneratorConfig, generate
from cfisac.conic import ContractViolation
from cfisac.model import BeamSet, ChannelSet, comm_sinrs

from conftest import crandn


def random_channels(rng, U=3, mt=2, nt=4):
    at = np.exp(1j * rng.uniform(0, 2 * np.pi, (mt, nt)))
    return ChannelSet(crandn(rng, U, mt * nt), at, at.copy())


def per_ap_power(beams, mt):
    return np.sum(np.abs(beams.reshape(len(beams), mt, -1)) ** 2, axis=(0, 2))


def min_sinr(ch, users, sensing, noise):
    beams = BeamSet(np.vstack([users, sensing]), len(users), len(sensing), ch.n_tx_antennas)
    return float(np.min(comm_sinrs(ch, beams, noise)))


def assert_monotone(probes):
    feas = [g for g, ok in probes if ok]
    infeas = [g for g, ok in probes if not ok]
    if feas and infeas:
        assert max(feas) < min(infeas)


class TestPowerSplit:
    def test_split(self):
        s = PowerSplit(0.3)
        np.testing.assert_allclose(s.comm([1.0, 2.0]), [0.3, 0.6])
        np.testing.assert_allclose(s.sensing([1.0, 2.0]), [0.7, 1.4])

    @pytest.mark.parametrize("rho", [0.0, 1.0, -0.1])
    def test_bounds(self, rho):
        with pytest.raises(ContractViolation):
            PowerSplit(rho)


class TestSensingBeams:
    def test_conjugate_modulus(self):
        _, ch = generate(GeneratorConfig(setup="line", n_ues=2), 0)
        f = conjugate_sensing(ch, 1.0)
        np.testing.assert_allclose(np.abs(f), 0.25)
        np.testing.assert_allclose(per_ap_power(f, 2), 1.0)

    def test_conjugate_maximizes_target_gain(self, rng):
        ch = random_channels(rng, mt=1, nt=6)
        f = conjugate_sensing(ch, 2.0)[0]
        a = ch.tx_steering[0]
        best = abs(np.vdot(a, f)) ** 2
        for _ in range(50):
            g = crandn(rng, 6)
            g *= np.sqrt(2.0) / np.linalg.norm(g)
            assert abs(np.vdot(a, g)) ** 2 <= best + 1e-12

    def test_nullspace_hand_example(self):
        a = np.array([[1.0, 1.0]], complex)
        ch = ChannelSet(np.array([[1.0, 0.0]], complex), a, a.copy())
        f = nullspace_sensing(ch, 1.0)[0]
        np.testing.assert_allclose(np.abs(f), [0.0, 1.0], atol=1e-15)

    def test_nullspace_without_ues_is_conjugate(self, rng):
        ch = random_channels(rng, U=0)
        np.testing.assert_allclose(nullspace_sensing(ch, 1.0), conjugate_sensing(ch, 1.0))

    @pytest.mark.parametrize("seed", range(5))
    def test_nullspace_zero_interference(self, seed):
        ch = random_channels(np.random.default_rng(seed), U=3, mt=2, nt=6)
        f = nullspace_sensing(ch, [1.0, 0.5])[0].reshape(2, 6)
        np.testing.assert_allclose(per_ap_power(f[None].reshape(1, -1), 2), [1.0, 0.5])
        h = ch.comm_channels.reshape(3, 2, 6)
        for m in range(2):
            for u in range(3):
                assert abs(np.vdot(h[u, m], f[m])) <= 1e-10 * np.linalg.norm(h[u, m]) * np.linalg.norm(f[m])

    def test_degenerate_direction(self):
        a = np.array([[1.0, 1.0]], complex)
        ch = ChannelSet(np.array([[1.0, 1.0]], complex), a, a.copy())
        with pytest.raises(DegenerateDirection):
            nullspace_sensing(ch, 1.0)
        assert not np.any(nullspace_sensing(ch, 1.0, fallback_zero=True))
        assert nullspace_directions(ch)[1][0]

    def test_streams_share_power(self, rng):
        ch = random_channels(rng)
        f = conjugate_sensing(ch, 1.0, n_streams=3)
        assert f.shape == (3, 8)
        np.testing.assert_allclose(per_ap_power(f, 2), 1.0)
        assert conjugate_sensing(ch, 1.0, n_streams=0).shape == (0, 8)


class TestRzf:
    def test_zero_forcing_property(self, rng):
        ch = random_channels(rng, U=3, mt=2, nt=4)
        W = rzf_directions(ch, 0.0)
        H = ch.comm_channels
        for u in range(3):
            for v in range(3):
                if u != v:
                    c = abs(np.vdot(H[v], W[u])) / (np.linalg.norm(H[v]) * np.linalg.norm(W[u]))
                    assert c <= 1e-8

    def test_large_lambda_is_mrt(self, rng):
        ch = random_channels(rng)
        W = rzf_directions(ch, 1e12)
        H = ch.comm_channels
        for u in range(3):
            cos = abs(np.vdot(H[u], W[u])) / (np.linalg.norm(H[u]) * np.linalg.norm(W[u]))
            assert cos > 1 - 1e-9

    def test_per_ap_powers(self, rng):
        ch = random_channels(rng, U=3, mt=2, nt=4)
        f = rzf_comm(ch, [0.6, 0.3], noise_var=1.0).reshape(3, 2, 4)
        np.testing.assert_allclose(np.sum(np.abs(f) ** 2, axis=2), [[0.2, 0.1]] * 3)

    def test_rank_deficient_gram(self, rng):
        h = crandn(rng, 1, 4)
        at = np.ones((1, 4), complex)
        ch = ChannelSet(np.vstack([h, h]), at, at)
        assert np.all(np.isfinite(rzf_comm(ch, 1.0, lam=0.0)))

    def test_default_lambda(self):
        assert default_rzf_lambda([1.0, 3.0], [1.0, 1.0]) == pytest.approx(2.0)

    def test_requires_lambda_or_noise(self, rng):
        with pytest.raises(ContractViolation):
            rzf_comm(random_channels(rng), 1.0)


class TestBisection:
    def test_single_user_mrt_oracle(self, rng):
        ch = random_channels(rng, U=1, mt=1, nt=5)
        P, s2 = 2.0, 0.3
        res = maxmin_comm_bisection(ch, np.zeros((0, 5)), P, s2)
        expect = P * np.vdot(ch.comm_channels[0], ch.comm_channels[0]).real / s2
        assert res.gamma == pytest.approx(expect, rel=1e-3)
        assert res.gamma <= expect * (1 + 1e-9)

    def test_identical_channels_symmetric(self, rng):
        h = crandn(rng, 1, 6)
        at = np.exp(1j * rng.uniform(0, 6, (2, 3)))
        ch = ChannelSet(np.vstack([h, h]), at, at)
        res = maxmin_comm_bisection(ch, np.zeros((0, 6)), 1.0, 0.1)
        s = comm_sinrs(ch, BeamSet(res.user_beams, 2, 0, 3), 0.1)
        np.testing.assert_allclose(s, res.gamma, rtol=1e-3)

    @pytest.mark.parametrize("seed", range(3))
    def test_nullspace_beam_leaves_gamma(self, seed):
        rng = np.random.default_rng(seed)
        ch = random_channels(rng, U=2, mt=2, nt=4)
        base = maxmin_comm_bisection(ch, np.zeros((0, 8)), 0.5, 0.1)
        ns = maxmin_comm_bisection(ch, nullspace_sensing(ch, 0.5), 0.5, 0.1)
        assert ns.gamma == pytest.approx(base.gamma, rel=2e-3)

    @pytest.mark.parametrize("probe", ["margin", "feasibility"])
    @pytest.mark.parametrize("seed", range(4))
    def test_beats_rzf_and_respects_budget(self, seed, probe):
        sc, ch = generate(GeneratorConfig(setup="line", n_ues=3, n_tx_antennas=6), seed)
        split = PowerSplit(0.5)
        fs = conjugate_sensing(ch, split.sensing(sc.ap_power_budget))
        pc = split.comm(sc.ap_power_budget)
        res = maxmin_comm_bisection(ch, fs, pc, sc.ue_noise_var, probe=probe)
        rzf = rzf_comm(ch, pc, noise_var=sc.ue_noise_var)
        assert res.gamma >= min_sinr(ch, rzf, fs, sc.ue_noise_var) * (1 - 1e-9)
        assert np.all(per_ap_power(res.user_beams, 2) <= pc * (1 + 1e-9))
        assert min_sinr(ch, res.user_beams, fs, sc.ue_noise_var) == pytest.approx(res.gamma, rel=1e-9)
        assert res.gamma <= res.upper
        assert (res.upper - res.gamma) <= 1e-3 * res.upper or res.iterations == 40
        assert_monotone(res.probes)

    def test_probe_kinds_agree(self, small_line):
        sc, ch = small_line
        fs = conjugate_sensing(ch, 0.5)
        a = maxmin_comm_bisection(ch, fs, 0.5, sc.ue_noise_var, probe="margin")
        b = maxmin_comm_bisection(ch, fs, 0.5, sc.ue_noise_var, probe="feasibility")
        assert a.gamma == pytest.approx(b.gamma, rel=2e-3)

    def test_bracket_errors(self, rng):
        ch = random_channels(rng, U=1, mt=1, nt=3)
        with pytest.raises(BracketError):
            maxmin_comm_bisection(ch, np.zeros((0, 3)), 1.0, 1.0, BisectionParams(gamma_max=1e-6))
        with pytest.raises(InfeasibleProblem):
            maxmin_comm_bisection(ch, np.zeros((0, 3)), 1.0, 1.0, BisectionParams(gamma_min=1e9, gamma_max=1e10))

    def test_bad_arguments(self, rng):
        ch = random_channels(rng)
        with pytest.raises(ContractViolation):
            maxmin_comm_bisection(ch, np.zeros((0, 8)), 1.0, 1.0, probe="guess")
        with pytest.raises(ContractViolation):
            BisectionParams(gamma_min=2.0, gamma_max=1.0)
