"""Seeded scenario and channel generators for the two evaluation layouts.

``line``: two APs at (25, 0) and (75, 0); target and UEs on the line
y = 50 with x uniform on [0, 100]; unit-amplitude LOS channels.

``square``: five APs at fixed positions in a 100 m x 100 m area (corners
inset by 10 m plus the center); target and UEs uniform over the square;
Rayleigh fading scaled by the UMi street-canyon path loss.

Randomness comes from numpy's counter-based Philox bit generator keyed by
the seed, with positions drawn before channels.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .conic.linalg import ContractViolation
from .model import ChannelSet, Scenario, array_response, steering_set

LINE_APS = ((25.0, 0.0), (75.0, 0.0))
SQUARE_APS = ((10.0, 10.0), (90.0, 10.0), (10.0, 90.0), (90.0, 90.0), (50.0, 50.0))
SETUPS = ("line", "square")
CHANNEL_MODELS = ("los", "rayleigh-umi")


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class GeneratorConfig:
    """Everything needed to draw one realization apart from the seed offset.

    ``None`` radio parameters take the defaults of the chosen layout.
    ``sensing_gain`` is the amplitude ``zeta``; its square is the variance.
    """

    setup: str = "line"
    n_ues: int = 5
    seed: int = 0
    channel_model: str | None = None
    n_tx_antennas: int | None = None
    n_rx_antennas: int | None = None
    ap_power: float = 1.0
    ue_noise_var: float | None = None
    radar_noise_var: float = 1.0
    sensing_gain: float = 0.1
    carrier_freq: float = 28e9
    ap_positions: tuple | None = None
    area: float = 100.0
    min_distance: float = 1.0

    def __post_init__(self):
        if self.setup not in SETUPS:
            raise ContractViolation(f"setup must be one of {SETUPS}")
        if self.n_ues < 0:
            raise ContractViolation("n_ues must be nonnegative")
        if self.channel_model is not None and self.channel_model not in CHANNEL_MODELS:
            raise ContractViolation(f"channel_model must be one of {CHANNEL_MODELS}")
        if self.ap_positions is not None:
            object.__setattr__(self, "ap_positions", tuple(tuple(map(float, p)) for p in self.ap_positions))

    @property
    def model(self) -> str:
        if self.channel_model is not None:
            return self.channel_model
        return "los" if self.setup == "line" else "rayleigh-umi"

    @property
    def tx_antennas(self) -> int:
        return self.n_tx_antennas or (16 if self.setup == "line" else 8)

    @property
    def rx_antennas(self) -> int:
        return self.n_rx_antennas or self.tx_antennas

    @property
    def noise_var(self) -> float:
        if self.ue_noise_var is not None:
            return self.ue_noise_var
        return 1.0 if self.setup == "line" else dbm_to_watt(-135.0)

    @property
    def aps(self) -> tuple:
        if self.ap_positions is not None:
            return self.ap_positions
        return LINE_APS if self.setup == "line" else SQUARE_APS

    def with_(self, **changes) -> "GeneratorConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GeneratorConfig":
        return cls.from_dict(json.loads(text))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def _scenario(config: GeneratorConfig, target, ues) -> Scenario:
    aps = np.array(config.aps)
    return Scenario(
        tx_ap_positions=aps,
        rx_ap_positions=aps,
        target_position=target,
        ue_positions=np.reshape(ues, (-1, 2)),
        n_tx_antennas=config.tx_antennas,
        n_rx_antennas=config.rx_antennas,
        ap_power_budget=config.ap_power,
        ue_noise_var=config.noise_var,
        radar_noise_var=config.radar_noise_var,
        sensing_gain_var=config.sensing_gain**2,
        carrier_freq=config.carrier_freq,
    )


def line_scenario(config: GeneratorConfig, rng: np.random.Generator | None = None) -> Scenario:
    """Target and UEs at y = 50 with x uniform on [0, area]."""
    if config.setup != "line":
        raise ContractViolation("line_scenario needs setup='line'")
    rng = make_rng(config.seed) if rng is None else rng
    xs = rng.uniform(0.0, config.area, size=config.n_ues + 1)
    ys = np.full_like(xs, config.area / 2)
    pts = np.column_stack([xs, ys])
    return _scenario(config, pts[0], pts[1:])


def square_scenario(config: GeneratorConfig, rng: np.random.Generator | None = None) -> Scenario:
    """Target and UEs uniform over the square; APs fixed."""
    if config.setup != "square":
        raise ContractViolation("square_scenario needs setup='square'")
    rng = make_rng(config.seed) if rng is None else rng
    pts = rng.uniform(0.0, config.area, size=(config.n_ues + 1, 2))
    return _scenario(config, pts[0], pts[1:])


def umi_pathloss_db(distance_m, fc_ghz, min_distance: float = 1.0):
    """UMi path-loss gain in dB: ``-32.4 - 21 log10(d) - 20 log10(f_c[GHz])``.

    Distances below ``min_distance`` are clamped to it.
    """
    d = np.maximum(np.asarray(distance_m, float), min_distance)
    out = -32.4 - 21.0 * np.log10(d) - 20.0 * np.log10(fc_ghz)
    return float(out) if np.ndim(out) == 0 else out


def draw_channels(scenario: Scenario, config: GeneratorConfig, rng: np.random.Generator | None = None) -> ChannelSet:
    """Communication channels and target steering vectors for ``scenario``.

    ``los``: ``h_mu = a(theta_mu)``.  ``rayleigh-umi``: ``h_mu ~ CN(0, g I)``
    with ``g`` the linear path-loss gain of the AP-UE distance.
    """
    rng = make_rng(config.seed) if rng is None else rng
    at, ar = steering_set(scenario)
    U, mt, nt = scenario.n_ues, scenario.n_tx, scenario.n_tx_antennas
    if config.model == "los":
        ang = scenario.ue_angles()  # (M_t, U)
        h = np.array([[array_response(ang[m, u], nt) for m in range(mt)] for u in range(U)])
    else:
        g = 10.0 ** (umi_pathloss_db(scenario.ue_distances(), scenario.carrier_freq / 1e9,
                                     config.min_distance) / 10.0)  # (M_t, U)
        w = (rng.standard_normal((U, mt, nt)) + 1j * rng.standard_normal((U, mt, nt))) / np.sqrt(2)
        h = w * np.sqrt(g.T)[:, :, None]
    return ChannelSet(np.reshape(h, (U, mt * nt)), at, ar)


def generate(config: GeneratorConfig, seed: int | None = None) -> tuple[Scenario, ChannelSet]:
    """Draw a scenario and its channels from one seeded stream."""
    if seed is not None:
        config = config.with_(seed=seed)
    rng = make_rng(config.seed)
    scen = line_scenario(config, rng) if config.setup == "line" else square_scenario(config, rng)
    return scen, draw_channels(scen, config, rng)
