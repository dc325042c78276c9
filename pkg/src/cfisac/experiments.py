"""Seeded Monte-Carlo experiments over the beamforming strategies.

Strategies (every metric is recomputed from the produced beams or lifted
matrices with the evaluators in :mod:`cfisac.model`):

========== ===============================================================
ns-rzf     null-space sensing + RZF communication beams
ns-opt     null-space sensing + max-min SINR communication beams
cb-opt     conjugate sensing + max-min SINR communication beams
jsc-beam   joint SDR beamforming with rank-one recovery and Q sensing beams
jsc-power  power allocation over the ns-rzf directions, rank-one extraction
jsc-beam-ub    joint SDR bound (lifted matrices)
jsc-power-ub   power-allocation SDR bound (lifted matrices)
========== ===============================================================
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import (
    BisectionParams,
    PowerSplit,
    conjugate_sensing,
    maxmin_comm_bisection,
    nullspace_directions,
    rzf_comm,
)
from .channels import GeneratorConfig, generate
from .conic import Status, Tolerances
from .jsc import JscProblemSpec, recover_rank1, solve_jsc_sdr, stream_bound_check
from .model import (
    BeamMatrixSet,
    BeamSet,
    MetricsRecord,
    build_sensing_matrix_A,
    comm_sinrs,
    comm_sinrs_matrix_form,
    sensing_snr,
    sensing_snr_sdp_form,
)
from .power import (
    effective_gains,
    extract_rank1_powers,
    lifted_beam_matrices,
    scaled_beams,
    solve_power_sdr,
    unit_directions,
)

log = logging.getLogger(__name__)

STRATEGIES = ("ns-rzf", "ns-opt", "cb-opt", "jsc-beam", "jsc-power", "jsc-beam-ub", "jsc-power-ub")
GAMMA_MODES = ("equal-from-ii", "per-ue-from-i", "fixed")
CSV_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    strategies: tuple = ("ns-rzf", "ns-opt", "cb-opt", "jsc-beam")
    realizations: int = 100
    seed_base: int = 0
    gamma_mode: str = "equal-from-ii"
    gamma_fixed_db: float = 10.0
    n_sensing: int = 1
    rho: float = 0.5
    rho_grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    bin_width: float = 5.0
    ue_grid: tuple = (1, 2, 3, 4, 5)
    stream_grid: tuple = (0, 1, 2, 3, 4)
    bisection_rel_tol: float = 1e-3
    bisection_max_iters: int = 40
    solver_tol: float = 1e-9  # well below the 1e-6 rank threshold
    rank_tol: float = 1e-6
    match_rtol: float = 1e-3
    rzf_lambda: float | None = None
    per_ap_power_scaling: bool = False
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.generator, dict):
            object.__setattr__(self, "generator", GeneratorConfig.from_dict(self.generator))
        for name in ("strategies", "rho_grid", "ue_grid", "stream_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        bad = set(self.strategies) - set(STRATEGIES)
        if bad:
            raise ValueError(f"unknown strategies {sorted(bad)}")
        if self.gamma_mode not in GAMMA_MODES:
            raise ValueError(f"gamma_mode must be one of {GAMMA_MODES}")
        if self.realizations < 1:
            raise ValueError("realizations must be at least 1")
        if not self.rho_grid or not self.ue_grid or not self.stream_grid:
            raise ValueError("sweep grids must be nonempty")

    @property
    def tols(self) -> Tolerances:
        t = self.solver_tol
        return Tolerances(feastol=t, abstol=t, reltol=t)

    def seeds(self) -> list[int]:
        return [self.seed_base + i for i in range(self.realizations)]

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["generator"] = self.generator.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "generator" in d:
            d["generator"] = GeneratorConfig.from_dict(d["generator"])
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def _status_of(exc: Exception) -> str:
    from .baselines import InfeasibleProblem

    return Status.INFEASIBLE.value if isinstance(exc, InfeasibleProblem) else Status.NUMERICAL_FAILURE.value


def _failed(strategy, seed, status, n_users, extra, t0, error=""):
    ex = dict(extra)
    if error:
        ex["error"] = error
    return MetricsRecord(strategy, seed, float("nan"), [float("nan")] * n_users, status,
                         wall_time=time.perf_counter() - t0, extra=ex)


class _Realization:
    """Lazily computed pieces of one realization shared between strategies."""

    def __init__(self, config: ExperimentConfig, seed: int, n_ues: int | None = None):
        self.cfg = config
        self.seed = seed
        gen = config.generator if n_ues is None else config.generator.with_(n_ues=n_ues)
        self.sc, self.ch = generate(gen, seed)
        self.split = PowerSplit(config.rho)
        self.p_comm = self.split.comm(self.sc.ap_power_budget)
        self.p_sens = self.split.sensing(self.sc.ap_power_budget)
        self.noise = self.sc.ue_noise_var
        self.A = build_sensing_matrix_A(self.sc, self.ch)
        self._cache = {}
        U = self.sc.n_ues
        d = np.linalg.norm(self.sc.ue_positions - self.sc.target_position, axis=1)
        self.common = {"n_ues": U, "target_ue_distance": float(d.min()) if U else float("nan")}

    def cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # sensing beams
    def ns_beams(self):
        def make():
            dirs, bad = nullspace_directions(self.ch)
            Q = self.cfg.n_sensing
            beam = (np.sqrt(self.p_sens / max(Q, 1))[:, None] * dirs).reshape(-1)
            return np.tile(beam, (Q, 1)), bool(bad.any())
        return self.cached("ns", make)

    def cb_beams(self):
        return self.cached("cb", lambda: conjugate_sensing(self.ch, self.p_sens, self.cfg.n_sensing))

    def rzf(self):
        return self.cached("rzf", lambda: rzf_comm(self.ch, self.p_comm, self.cfg.rzf_lambda, self.noise))

    def bisection(self, sensing):
        params = BisectionParams(rel_tol=self.cfg.bisection_rel_tol, max_iters=self.cfg.bisection_max_iters,
                                 tols=self.cfg.tols)
        return maxmin_comm_bisection(self.ch, sensing, self.p_comm, self.noise, params)

    def beams_i(self):
        fs, _ = self.ns_beams()
        return BeamSet.from_parts(self.rzf(), fs, self.sc.n_tx_antennas)

    def result_ii(self):
        return self.cached("ii", lambda: self.bisection(self.ns_beams()[0]))

    def beams_ii(self):
        return BeamSet.from_parts(self.result_ii().user_beams, self.ns_beams()[0], self.sc.n_tx_antennas)

    def result_iii(self):
        return self.cached("iii", lambda: self.bisection(self.cb_beams()))

    def beams_iii(self):
        return BeamSet.from_parts(self.result_iii().user_beams, self.cb_beams(), self.sc.n_tx_antennas)

    def gammas(self) -> np.ndarray:
        mode = self.cfg.gamma_mode
        U = self.sc.n_ues
        if mode == "fixed":
            return np.full(U, 10 ** (self.cfg.gamma_fixed_db / 10))
        if mode == "per-ue-from-i":
            return comm_sinrs(self.ch, self.beams_i(), self.noise)
        return np.full(U, float(comm_sinrs(self.ch, self.beams_ii(), self.noise).min()))

    def jsc_spec(self, Q=None):
        return JscProblemSpec(self.sc, self.ch, self.cached("gam", self.gammas),
                              self.cfg.n_sensing if Q is None else Q)

    def jsc(self):
        return self.cached("jsc", lambda: solve_jsc_sdr(self.jsc_spec(), self.cfg.tols))

    def power(self):
        def make():
            ub = unit_directions(self.beams_i())
            gains = effective_gains(self.ch, ub, self.sc)
            gam = self.cached("gam", self.gammas)
            sol = solve_power_sdr(gains, gam, self.sc.ap_power_budget, self.cfg.tols)
            if sol.power_matrices is not None:
                sol = extract_rank1_powers(sol, gains, gam, self.sc.ap_power_budget,
                                           self.cfg.per_ap_power_scaling)
            return ub, gains, sol
        return self.cached("power", make)

    # metrics
    def beam_record(self, name, beams: BeamSet, t0, **extra) -> MetricsRecord:
        return MetricsRecord(name, self.seed, sensing_snr(self.sc, beams, self.ch),
                             comm_sinrs(self.ch, beams, self.noise).tolist(), Status.OPTIMAL.value,
                             wall_time=time.perf_counter() - t0, extra={**self.common, **extra})

    def matrix_record(self, name, mats: BeamMatrixSet, t0, status, gap, **extra) -> MetricsRecord:
        snr = sensing_snr_sdp_form(self.A, mats, float(self.sc.radar_noise_var.sum()))
        sinr = comm_sinrs_matrix_form(self.ch, mats, self.noise)
        return MetricsRecord(name, self.seed, snr, sinr.tolist(), status, gap,
                             time.perf_counter() - t0, extra={**self.common, **extra})


def _strategy(real: _Realization, name: str, Q: int | None = None) -> MetricsRecord:
    t0 = time.perf_counter()
    U = real.sc.n_ues
    try:
        if name == "ns-rzf":
            fs, degenerate = real.ns_beams()
            return real.beam_record(name, real.beams_i(), t0, degenerate_nullspace=degenerate)
        if name == "ns-opt":
            r = real.result_ii()
            return real.beam_record(name, real.beams_ii(), t0, gamma_star=r.gamma,
                                    bisection_iters=r.iterations, solver_failures=r.solver_failures,
                                    degenerate_nullspace=real.ns_beams()[1])
        if name == "cb-opt":
            r = real.result_iii()
            return real.beam_record(name, real.beams_iii(), t0, gamma_star=r.gamma,
                                    bisection_iters=r.iterations, solver_failures=r.solver_failures)
        gam = real.cached("gam", real.gammas)
        gextra = {"gamma_min_target": float(gam.min()) if U else float("nan")}
        if name in ("jsc-beam", "jsc-beam-ub"):
            sol = real.jsc()
            if not sol.optimal:
                return _failed(name, real.seed, sol.status.value, U, {**real.common, **gextra}, t0)
            if name == "jsc-beam-ub":
                bound = stream_bound_check(sol, real.jsc_spec(), real.cfg.rank_tol)
                rec = real.matrix_record(name, sol.matrices(), t0, sol.status.value, sol.duality_gap,
                                         **gextra, n_sensing=real.cfg.n_sensing if Q is None else Q)
                rec.achieved_ranks = [bound.sensing_rank]
                return rec
            spec = real.jsc_spec(Q)
            beams, rep = recover_rank1(sol, spec, rank_tol=real.cfg.rank_tol)
            rec = real.beam_record(name, beams, t0, **gextra, recovery=rep.status,
                                   recovery_gap=rep.gap, n_sensing=spec.n_sensing)
            rec.duality_gap = sol.duality_gap
            rec.achieved_ranks = [rep.sensing_rank]
            return rec
        if name in ("jsc-power", "jsc-power-ub"):
            ub, gains, sol = real.power()
            if sol.power_matrices is None or sol.status != Status.OPTIMAL:
                return _failed(name, real.seed, sol.status.value, U, {**real.common, **gextra}, t0)
            if name == "jsc-power-ub":
                F = lifted_beam_matrices(ub, sol.power_matrices)
                mats = BeamMatrixSet(F[:U], F[U:].sum(axis=0))
                ranks = [int(np.sum(np.linalg.eigvalsh(P) > real.cfg.rank_tol * max(np.linalg.eigvalsh(P)[-1], 1e-300)))
                         for P in sol.power_matrices]
                rec = real.matrix_record(name, mats, t0, sol.status.value, sol.duality_gap, **gextra)
                rec.achieved_ranks = ranks
                return rec
            beams = scaled_beams(ub, sol.sqrt_powers)
            rec = real.beam_record(name, beams, t0, **gextra,
                                   extraction_feasible=sol.feasibility_after_extraction)
            rec.duality_gap = sol.duality_gap
            return rec
        raise ValueError(f"unknown strategy {name}")
    except Exception as exc:  # one failed strategy must not sink the batch
        log.warning("seed %s strategy %s failed: %s", real.seed, name, exc)
        return _failed(name, real.seed, _status_of(exc), U, real.common, t0, error=str(exc))


def run_realization(config: ExperimentConfig, seed: int) -> list[MetricsRecord]:
    """All configured strategies on one seeded realization, in configured order."""
    real = _Realization(config, seed)
    return [_strategy(real, name) for name in config.strategies]


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---- per-task workers (module level so they pickle) ----

def _rho_task(args):
    config, seed = args
    out = []
    for rho in config.rho_grid:
        for rec in run_realization(config.with_(rho=rho), seed):
            rec.extra["sweep_value"] = rho
            out.append(rec)
    return out


def _plain_task(args):
    config, seed = args
    return run_realization(config, seed)


def _streams_task(args):
    config, seed = args
    out = []
    for U in config.ue_grid:
        real = _Realization(config, seed, n_ues=U)
        for name in config.strategies:
            if name == "jsc-beam":
                for Q in config.stream_grid:
                    rec = _strategy(real, name, Q)
                    rec.extra.update(sweep_value=f"U={U},Q={Q}", n_ues=U, n_sensing=Q)
                    out.append(rec)
            else:
                rec = _strategy(real, name)
                rec.extra.update(sweep_value=f"U={U}", n_ues=U)
                out.append(rec)
    return out


def _collect(task, config) -> list[MetricsRecord]:
    chunks = _map(task, [(config, s) for s in config.seeds()], config.workers)
    recs = [r for chunk in chunks for r in chunk]
    return sorted(recs, key=lambda r: r.seed)  # stable: keeps per-seed order


def evaluate(config: ExperimentConfig) -> list[MetricsRecord]:
    """``run_realization`` over every configured seed."""
    return _collect(_plain_task, config)


def db(x):
    x = np.asarray(x, float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


@dataclass
class SweepTable:
    rows: list
    records: list
    meta: dict = field(default_factory=dict)

    COLUMNS = ("sweep_value", "strategy", "n", "mean_sensing_snr_db", "median_sensing_snr_db",
               "p10_sensing_snr_db", "p90_sensing_snr_db", "mean_min_sinr_db", "min_min_sinr_db",
               "feasibility_rate", "mean_rank")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in self.rows:
                w.writerow([_fmt(row[c]) for c in self.COLUMNS])
        with open(str(path) + ".meta.json", "w") as fh:
            json.dump({"csv_version": CSV_VERSION, "columns": list(self.COLUMNS),
                       "mean_wall_time": mean_wall_times(self.records), **self.meta}, fh, indent=2, default=str)

    def select(self, strategy: str) -> list:
        return [r for r in self.rows if r["strategy"] == strategy]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".10g")
    return str(v)


def aggregate(records: list[MetricsRecord], key, strategies) -> list[dict]:
    """One row per (sweep value, strategy); values in first-seen order."""
    groups: dict = {}
    order = []
    for r in records:
        k = (key(r), r.strategy)
        if k[0] is None:
            continue
        if k not in groups:
            groups[k] = []
            order.append(k)
        groups[k].append(r)
    svals = []
    for k in order:
        if k[0] not in svals:
            svals.append(k[0])
    rows = []
    for sv in svals:
        for name in strategies:
            recs = groups.get((sv, name), [])
            if not recs:
                continue
            ok = [r for r in recs if r.solver_status == Status.OPTIMAL.value and np.isfinite(r.sensing_snr)]
            snr = np.array([r.sensing_snr for r in ok])
            mins = np.array([r.min_sinr for r in ok])
            ranks = [np.mean(r.achieved_ranks) for r in ok if r.achieved_ranks]
            feas = [r for r in ok if r.extra.get("extraction_feasible", True)]
            rows.append({
                "sweep_value": sv,
                "strategy": name,
                "n": len(recs),
                "mean_sensing_snr_db": float(db(snr.mean())) if len(snr) else float("nan"),
                "median_sensing_snr_db": float(db(np.median(snr))) if len(snr) else float("nan"),
                "p10_sensing_snr_db": float(db(np.percentile(snr, 10))) if len(snr) else float("nan"),
                "p90_sensing_snr_db": float(db(np.percentile(snr, 90))) if len(snr) else float("nan"),
                "mean_min_sinr_db": float(db(mins.mean())) if len(mins) else float("nan"),
                "min_min_sinr_db": float(db(mins.min())) if len(mins) else float("nan"),
                "feasibility_rate": len(feas) / len(recs),
                "mean_rank": float(np.mean(ranks)) if ranks else float("nan"),
            })
    return rows


def sweep_power_ratio(config: ExperimentConfig) -> SweepTable:
    """Every strategy at every ``rho`` in the grid on the same realizations."""
    recs = _collect(_rho_task, config)
    rows = aggregate(recs, lambda r: r.extra["sweep_value"], config.strategies)
    return SweepTable(rows, recs, {"sweep": "rho", "config": config.to_dict()})


def sweep_target_distance(config: ExperimentConfig) -> SweepTable:
    """Realizations binned by the distance from the target to its closest UE."""
    recs = _collect(_plain_task, config)
    w = config.bin_width

    def key(r):
        d = r.extra.get("target_ue_distance", float("nan"))
        if not np.isfinite(d):
            return None
        lo = math.floor(d / w) * w
        return round(lo + w / 2, 10)

    for r in recs:
        r.extra["sweep_value"] = key(r)
    rows = aggregate(recs, key, config.strategies)
    rows.sort(key=lambda row: (row["sweep_value"], config.strategies.index(row["strategy"])))
    return SweepTable(rows, recs, {"sweep": "target-distance", "bin_width": w, "config": config.to_dict()})


def sweep_streams_ues(config: ExperimentConfig) -> SweepTable:
    """Joint designs over the UE-count grid, with jsc-beam at every stream count."""
    recs = _collect(_streams_task, config)
    rows = aggregate(recs, lambda r: r.extra["sweep_value"], config.strategies)
    return SweepTable(rows, recs, {"sweep": "streams-ues", "config": config.to_dict()})


# wall times stay out of the CSV files so their bytes depend only on (config, seeds)
RECORD_COLUMNS = ("seed", "strategy", "sweep_value", "solver_status", "sensing_snr", "min_sinr",
                  "ue_sinrs", "duality_gap", "achieved_ranks", "extra")


def mean_wall_times(records) -> dict:
    out: dict = {}
    for r in records:
        out.setdefault(r.strategy, []).append(r.wall_time)
    return {k: float(np.mean(v)) for k, v in out.items()}


def write_records(records: list[MetricsRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            extra = {k: v for k, v in r.extra.items() if k != "sweep_value"}
            w.writerow([r.seed, r.strategy, _fmt(r.extra.get("sweep_value", "")), r.solver_status,
                        _fmt(float(r.sensing_snr)), _fmt(float(r.min_sinr)),
                        " ".join(_fmt(float(x)) for x in r.ue_sinrs), _fmt(float(r.duality_gap)),
                        " ".join(str(x) for x in r.achieved_ranks),
                        json.dumps(extra, sort_keys=True, default=str)])


def any_numerical_failure(records) -> bool:
    return any(r.solver_status == Status.NUMERICAL_FAILURE.value for r in records)
