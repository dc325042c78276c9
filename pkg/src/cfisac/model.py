"""Domain types and exact metric evaluation.

Antenna arrays are half-wavelength ULAs laid along the local x-axis, so an
AP at ``p`` sees a point ``q`` at angle ``theta = atan2(q_x - p_x, q_y - p_y)``
measured from broadside, and the steering vector has entries
``exp(j pi k sin(theta))``.

Beams for all transmit APs are stacked: stream ``s`` is a vector of length
``M_t * N_t`` whose ``m``-th slice of length ``N_t`` is what AP ``m`` sends.
Streams are ordered users first, then sensing streams.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .conic.linalg import ContractViolation, check_hermitian


def _arr(x, dtype=float, ndim=None, name="value"):
    a = np.array(x, dtype=dtype)
    if ndim is not None and a.ndim != ndim:
        raise ContractViolation(f"{name} must have {ndim} dimensions, got shape {a.shape}")
    a.setflags(write=False)
    return a


def geometry_angle(origin, point) -> float:
    """Angle of ``point`` seen from an array at ``origin``, from broadside."""
    d = np.asarray(point, float) - np.asarray(origin, float)
    return float(np.arctan2(d[0], d[1]))


def array_response(theta: float, n: int) -> np.ndarray:
    """ULA steering vector ``exp(j pi k sin(theta))``, ``k = 0..n-1``."""
    if n < 1:
        raise ContractViolation("antenna count must be at least 1")
    return np.exp(1j * np.pi * np.arange(n) * np.sin(theta))


@dataclass(frozen=True)
class Scenario:
    """One realization of the physical world.

    Powers and variances are linear (watts). ``sensing_gain_var[m_t, m_r]``
    is the reflection variance on the path from transmit AP ``m_t`` via the
    target to receive AP ``m_r``.
    """

    tx_ap_positions: np.ndarray
    rx_ap_positions: np.ndarray
    target_position: np.ndarray
    ue_positions: np.ndarray
    n_tx_antennas: int
    n_rx_antennas: int
    ap_power_budget: np.ndarray
    ue_noise_var: np.ndarray
    radar_noise_var: np.ndarray
    sensing_gain_var: np.ndarray
    carrier_freq: float = 28e9

    def __post_init__(self):
        put = lambda k, v: object.__setattr__(self, k, v)
        put("tx_ap_positions", _arr(self.tx_ap_positions, ndim=2, name="tx_ap_positions"))
        put("rx_ap_positions", _arr(self.rx_ap_positions, ndim=2, name="rx_ap_positions"))
        put("target_position", _arr(self.target_position, ndim=1, name="target_position"))
        ue = np.array(self.ue_positions, float).reshape(-1, 2)
        put("ue_positions", _arr(ue, ndim=2))
        mt, mr, u = len(self.tx_ap_positions), len(self.rx_ap_positions), len(ue)
        put("ap_power_budget", _arr(np.broadcast_to(self.ap_power_budget, (mt,))))
        put("ue_noise_var", _arr(np.broadcast_to(self.ue_noise_var, (u,))))
        put("radar_noise_var", _arr(np.broadcast_to(self.radar_noise_var, (mr,))))
        put("sensing_gain_var", _arr(np.broadcast_to(self.sensing_gain_var, (mt, mr))))
        put("n_tx_antennas", int(self.n_tx_antennas))
        put("n_rx_antennas", int(self.n_rx_antennas))
        put("carrier_freq", float(self.carrier_freq))
        if mt < 1 or mr < 1:
            raise ContractViolation("need at least one transmit and one receive AP")
        if self.n_tx_antennas < 1 or self.n_rx_antennas < 1:
            raise ContractViolation("antenna counts must be positive")
        for name in ("ap_power_budget", "ue_noise_var", "radar_noise_var", "sensing_gain_var"):
            if np.any(getattr(self, name) <= 0):
                raise ContractViolation(f"{name} must be strictly positive")

    @property
    def n_tx(self) -> int:
        return len(self.tx_ap_positions)

    @property
    def n_rx(self) -> int:
        return len(self.rx_ap_positions)

    @property
    def n_ues(self) -> int:
        return len(self.ue_positions)

    @property
    def dim(self) -> int:
        """Length of a stacked beam, ``M_t * N_t``."""
        return self.n_tx * self.n_tx_antennas

    def tx_target_angles(self) -> np.ndarray:
        return np.array([geometry_angle(p, self.target_position) for p in self.tx_ap_positions])

    def rx_target_angles(self) -> np.ndarray:
        return np.array([geometry_angle(p, self.target_position) for p in self.rx_ap_positions])

    def ue_angles(self) -> np.ndarray:
        """``(M_t, U)`` angles of each UE seen from each transmit AP."""
        return np.array([[geometry_angle(p, q) for q in self.ue_positions] for p in self.tx_ap_positions])

    def ue_distances(self) -> np.ndarray:
        """``(M_t, U)`` AP-to-UE distances in meters."""
        d = self.tx_ap_positions[:, None, :] - self.ue_positions[None, :, :]
        return np.linalg.norm(d, axis=-1)

    def combined_sensing_gain(self) -> np.ndarray:
        """``sum_{m_r} zeta^2_{m_t m_r}`` for every transmit AP."""
        return self.sensing_gain_var.sum(axis=1)

    def with_(self, **changes) -> "Scenario":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return Scenario(**d)

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in ((k, getattr(self, k)) for k in self.__dataclass_fields__)}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ChannelSet:
    """Stacked UE channels (rows of ``comm_channels``) and target steering vectors."""

    comm_channels: np.ndarray  # (U, M_t N_t)
    tx_steering: np.ndarray  # (M_t, N_t)
    rx_steering: np.ndarray  # (M_r, N_r)

    def __post_init__(self):
        object.__setattr__(self, "tx_steering", _arr(self.tx_steering, complex, 2, "tx_steering"))
        object.__setattr__(self, "rx_steering", _arr(self.rx_steering, complex, 2, "rx_steering"))
        h = np.array(self.comm_channels, complex).reshape(-1, self.tx_steering.size)
        object.__setattr__(self, "comm_channels", _arr(h, complex, 2))

    @property
    def n_ues(self) -> int:
        return self.comm_channels.shape[0]

    @property
    def n_tx(self) -> int:
        return self.tx_steering.shape[0]

    @property
    def n_tx_antennas(self) -> int:
        return self.tx_steering.shape[1]

    @property
    def dim(self) -> int:
        return self.tx_steering.size

    def per_ap(self) -> np.ndarray:
        """``(U, M_t, N_t)`` view with ``[u, m]`` the channel from AP ``m`` to UE ``u``."""
        return self.comm_channels.reshape(self.n_ues, self.n_tx, self.n_tx_antennas)

    def ap_matrix(self, m: int) -> np.ndarray:
        """``H_m``: ``(N_t, U)`` matrix whose columns are the channels from AP ``m``."""
        return self.per_ap()[:, m, :].T


def steering_set(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Transmit and receive target steering vectors for ``scenario``."""
    at = np.array([array_response(t, scenario.n_tx_antennas) for t in scenario.tx_target_angles()])
    ar = np.array([array_response(t, scenario.n_rx_antennas) for t in scenario.rx_target_angles()])
    return at, ar


@dataclass(frozen=True)
class BeamSet:
    """Stacked beams, one row per stream: ``U`` user streams then ``Q`` sensing streams."""

    streams: np.ndarray  # (S, M_t N_t)
    n_users: int
    n_sensing: int
    n_tx_antennas: int

    def __post_init__(self):
        f = np.array(self.streams, complex)
        if f.size == 0:
            f = f.reshape(0, f.shape[-1] if f.ndim == 2 else 0)
        if f.ndim != 2:
            raise ContractViolation(f"streams must be (S, M_t N_t), got {f.shape}")
        if f.shape[0] != self.n_users + self.n_sensing:
            raise ContractViolation("stream count must equal n_users + n_sensing")
        if self.n_tx_antennas < 1 or f.shape[1] % self.n_tx_antennas:
            raise ContractViolation("stacked beam length is not a multiple of N_t")
        object.__setattr__(self, "streams", _arr(f, complex))

    @classmethod
    def from_parts(cls, user_beams, sensing_beams, n_tx_antennas: int) -> "BeamSet":
        user_beams = np.atleast_2d(np.asarray(user_beams, complex))
        sensing_beams = np.asarray(sensing_beams, complex).reshape(-1, user_beams.shape[1])
        if user_beams.shape[0] == 1 and user_beams.shape[1] == 0:
            user_beams = user_beams.reshape(0, sensing_beams.shape[1])
        return cls(np.vstack([user_beams, sensing_beams]), user_beams.shape[0],
                   sensing_beams.shape[0], n_tx_antennas)

    @property
    def dim(self) -> int:
        return self.streams.shape[1]

    @property
    def n_tx(self) -> int:
        return self.dim // self.n_tx_antennas

    @property
    def user_beams(self) -> np.ndarray:
        return self.streams[:self.n_users]

    @property
    def sensing_beams(self) -> np.ndarray:
        return self.streams[self.n_users:]

    def per_ap(self) -> np.ndarray:
        """``(S, M_t, N_t)`` view of the per-AP beams."""
        return self.streams.reshape(len(self.streams), self.n_tx, self.n_tx_antennas)

    def per_ap_power(self) -> np.ndarray:
        """Transmit power of every AP summed over streams."""
        return np.sum(np.abs(self.per_ap()) ** 2, axis=(0, 2))

    def check_power(self, budget, rtol: float = 1e-9) -> None:
        used = self.per_ap_power()
        budget = np.broadcast_to(budget, used.shape)
        if np.any(used > budget * (1 + rtol)):
            raise ContractViolation(f"per-AP power {used} exceeds budget {budget}")

    def to_matrices(self) -> "BeamMatrixSet":
        fu = self.user_beams
        users = np.einsum("ui,uj->uij", fu, fu.conj())
        fq = self.sensing_beams
        sens = fq.T @ fq.conj()
        return BeamMatrixSet(users, sens)


@dataclass(frozen=True)
class BeamMatrixSet:
    """Lifted beams: one matrix per user stream and the summed sensing matrix."""

    user_matrices: np.ndarray  # (U, n, n)
    sensing_matrix: np.ndarray  # (n, n)

    def __post_init__(self):
        n = np.shape(self.sensing_matrix)[0]
        um = np.array(self.user_matrices, complex).reshape(-1, n, n)
        object.__setattr__(self, "user_matrices", _arr(um, complex))
        object.__setattr__(self, "sensing_matrix", _arr(self.sensing_matrix, complex, 2))
        for F in [*um, self.sensing_matrix]:
            check_hermitian(F, "beam matrix")

    @property
    def total(self) -> np.ndarray:
        return self.user_matrices.sum(axis=0) + self.sensing_matrix

    def check_psd(self, rtol: float = 1e-8) -> None:
        for F in [*self.user_matrices, self.sensing_matrix]:
            lo = np.linalg.eigvalsh(F)[0]
            if lo < -rtol * np.linalg.norm(F):
                raise ContractViolation(f"beam matrix not PSD (min eigenvalue {lo:.3e})")


@dataclass
class MetricsRecord:
    """Metrics of one strategy on one realization; one CSV row."""

    strategy: str
    seed: int
    sensing_snr: float
    ue_sinrs: list
    solver_status: str = "optimal"
    duality_gap: float = float("nan")
    wall_time: float = 0.0
    achieved_ranks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def min_sinr(self) -> float:
        return float(min(self.ue_sinrs)) if len(self.ue_sinrs) else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["min_sinr"] = self.min_sinr
        return d


def _check_dims(channels: ChannelSet, dim: int):
    if channels.dim != dim:
        raise ContractViolation(f"channel length {channels.dim} does not match beam length {dim}")


def comm_sinr(channels: ChannelSet, beams: BeamSet, u: int, noise_var: float) -> float:
    """SINR of UE ``u`` (0-based) with every other stream counted as interference."""
    _check_dims(channels, beams.dim)
    if not 0 <= u < beams.n_users or u >= channels.n_ues:
        raise ContractViolation(f"user index {u} out of range")
    g = np.abs(beams.streams.conj() @ channels.comm_channels[u]) ** 2
    desired = g[u]
    return float(desired / (g.sum() - desired + noise_var))


def comm_sinrs(channels: ChannelSet, beams: BeamSet, noise_var) -> np.ndarray:
    """SINR of every UE; ``noise_var`` may be scalar or per UE."""
    _check_dims(channels, beams.dim)
    if channels.n_ues != beams.n_users:
        raise ContractViolation("number of user streams differs from number of UEs")
    noise = np.broadcast_to(noise_var, (beams.n_users,))
    g = np.abs(channels.comm_channels.conj() @ beams.streams.T) ** 2  # (U, S)
    desired = np.diag(g[:, :beams.n_users]) if beams.n_users else np.zeros(0)
    return desired / (g.sum(axis=1) - desired + noise)


def comm_sinrs_matrix_form(channels: ChannelSet, mats: BeamMatrixSet, noise_var) -> np.ndarray:
    """SINR of every UE from lifted beams, ``Tr(Q_u F_u) / (Tr(Q_u sum_{s!=u} F_s) + sigma^2)``."""
    h = channels.comm_channels
    noise = np.broadcast_to(noise_var, (len(h),))
    tot = np.real(np.einsum("ui,ij,uj->u", h.conj(), mats.total, h))
    own = np.real(np.einsum("ui,uij,uj->u", h.conj(), mats.user_matrices, h))
    return own / (tot - own + noise)


def sensing_snr(scenario: Scenario, beams: BeamSet, channels: ChannelSet | None = None) -> float:
    """Joint sensing SNR over all transmit/receive AP pairs.

    ``sum_{m_r,m_t} zeta^2 ||a^H(theta_mt) F_mt||^2 / sum_{m_r} varsigma^2``,
    where ``F_mt`` collects AP ``m_t``'s beams for all streams.
    """
    at = channels.tx_steering if channels is not None else steering_set(scenario)[0]
    if beams.dim != scenario.dim:
        raise ContractViolation("beams do not match the scenario dimensions")
    proj = np.einsum("mn,smn->ms", at.conj(), beams.per_ap())
    per_ap = np.sum(np.abs(proj) ** 2, axis=1)
    return float(scenario.combined_sensing_gain() @ per_ap / scenario.radar_noise_var.sum())


def build_sensing_matrix_A(scenario: Scenario, channels: ChannelSet | None = None) -> np.ndarray:
    """Block-diagonal ``A`` with blocks ``zeta_bar_m a(theta_m) a(theta_m)^H``."""
    at = channels.tx_steering if channels is not None else steering_set(scenario)[0]
    zb = scenario.combined_sensing_gain()
    n = scenario.n_tx_antennas
    A = np.zeros((scenario.dim, scenario.dim), complex)
    for m in range(scenario.n_tx):
        sl = slice(m * n, (m + 1) * n)
        A[sl, sl] = zb[m] * np.outer(at[m], at[m].conj())
    return A


def sensing_snr_sdp_form(A: np.ndarray, mats: BeamMatrixSet, radar_noise_sum: float) -> float:
    """``Tr(A (sum_u F_u + F_Q)) / sum varsigma^2``."""
    if A.shape != mats.sensing_matrix.shape:
        raise ContractViolation("A and beam matrices differ in size")
    tr = np.trace(A @ mats.total)
    val = float(np.real(tr))
    if abs(np.imag(tr)) > 1e-10 * max(abs(val), 1e-300) and abs(np.imag(tr)) > 1e-14:
        raise ContractViolation("trace of A F has a non-negligible imaginary part")
    return val / radar_noise_sum


@dataclass(frozen=True)
class MonteCarloEstimate:
    snr: float
    std_error: float
    trials: int


def monte_carlo_snr_estimate(
    scenario: Scenario,
    beams: BeamSet,
    symbol_len: int = 64,
    trials: int = 2000,
    seed: int = 0,
    chunk: int = 250,
) -> MonteCarloEstimate:
    """Estimate the sensing SNR by simulating the received echoes.

    Each trial draws reflection coefficients ``alpha ~ CN(0, zeta^2)`` per
    AP pair, unit-energy symbols for every stream and receiver noise, builds
    the echo matrices at every receive AP and records echo and noise
    energies.  The noise energy of each receive AP is drawn directly from
    its Gamma law rather than sample by sample.  The estimate is the ratio of their means; the standard error
    comes from the delta method.
    """
    if symbol_len < 1 or trials < 1:
        raise ContractViolation("symbol_len and trials must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    at, ar = steering_set(scenario)
    fb = beams.per_ap()  # (S, M_t, N_t)
    # a^H(theta_mt) F_mt: (M_t, S)
    proj = np.einsum("mn,smn->ms", at.conj(), fb)
    zeta = np.sqrt(scenario.sensing_gain_var)
    noise_sd = np.sqrt(scenario.radar_noise_var)
    mt, mr, S, L, nr = scenario.n_tx, scenario.n_rx, beams.streams.shape[0], symbol_len, scenario.n_rx_antennas

    def cn(shape, sd=1.0):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * (np.asarray(sd) / np.sqrt(2))

    sig, noi = [], []
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        alpha = cn((k, mt, mr), zeta)
        X = cn((k, S, L))
        # a^H F_mt x[l] for every AP and symbol: (k, M_t, L)
        tx = np.einsum("ms,ksl->kml", proj, X)
        # echo at rx AP m_r: a_r(m_r) * sum_mt alpha * tx -> (k, M_r, N_r, L)
        coeff = np.einsum("kmr,kml->krl", alpha, tx)
        echo = ar[None, :, :, None] * coeff[:, :, None, :]
        sig.append(np.sum(np.abs(echo) ** 2, axis=(1, 2, 3)))
        # energy of N_r * L i.i.d. CN(0, varsigma^2) noise samples, drawn from its exact law
        noi.append(np.sum(rng.gamma(nr * L, noise_sd**2, (k, mr)), axis=1))
        done += k
    sig = np.concatenate(sig)
    noi = np.concatenate(noi)
    ms, mn = sig.mean(), noi.mean()
    snr = ms / mn
    var = (sig.var(ddof=1) / ms**2 if ms > 0 else 0.0) + noi.var(ddof=1) / mn**2 if trials > 1 else np.nan
    return MonteCarloEstimate(float(snr), float(snr * np.sqrt(var / trials)), trials)
