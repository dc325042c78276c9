"""Command-line entry point: ``cfisac <subcommand> [options]``.

Subcommands
-----------
gen-scenario    node positions of seeded realizations (CSV, plus scenario JSON per seed)
eval            every configured strategy on every seed (one CSV row per record)
sweep-rho       power-ratio sweep on the line setup
sweep-distance  target-to-closest-UE distance sweep on the line setup
sweep-streams   UE-count by sensing-stream sweep on the square setup

Sweep CSVs hold aggregated rows; ``--records`` also writes the per-seed
records.  Wall-clock times go to ``<out>.meta.json`` so the CSV bytes
depend only on the configuration and seeds.  The exit status is 3 if any
record ended in a numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .channels import generate
from .experiments import (
    CSV_VERSION,
    RECORD_COLUMNS,
    ExperimentConfig,
    any_numerical_failure,
    evaluate,
    mean_wall_times,
    sweep_power_ratio,
    sweep_streams_ues,
    sweep_target_distance,
    write_records,
)

EXIT_NUMERICAL_FAILURE = 3

STREAMS_PRESET = {
    "generator": {"setup": "square", "channel_model": "rayleigh-umi"},
    "strategies": ["jsc-beam", "jsc-beam-ub", "jsc-power", "jsc-power-ub"],
    "gamma_mode": "fixed",
    "gamma_fixed_db": 10.0,
    "realizations": 50,
}


def _load_config(args, preset: dict | None = None) -> ExperimentConfig:
    d = dict(preset or {})
    if args.config:
        user = json.loads(Path(args.config).read_text())
        gen = {**d.get("generator", {}), **user.get("generator", {})}
        d.update(user)
        d["generator"] = gen
    cfg = ExperimentConfig.from_dict(d)
    gen_changes = {}
    if args.setup:
        gen_changes["setup"] = args.setup
    if args.ues is not None:
        gen_changes["n_ues"] = args.ues
    if gen_changes:
        cfg = cfg.with_(generator=cfg.generator.with_(**gen_changes))
    changes = {}
    if args.seed is not None:
        changes["seed_base"] = args.seed
    if args.realizations is not None:
        changes["realizations"] = args.realizations
    if getattr(args, "strategies", None):
        changes["strategies"] = tuple(args.strategies.split(","))
    if getattr(args, "gamma_mode", None):
        changes["gamma_mode"] = args.gamma_mode
    if args.workers is not None:
        changes["workers"] = args.workers
    return cfg.with_(**changes) if changes else cfg


def _write_scenarios(cfg: ExperimentConfig, out: Path) -> None:
    scen_dir = out.with_suffix("")
    scen_dir.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("seed", "role", "index", "x", "y"))
        for seed in cfg.seeds():
            sc, _ = generate(cfg.generator, seed)
            for role, pts in (("tx-ap", sc.tx_ap_positions), ("rx-ap", sc.rx_ap_positions),
                              ("target", [sc.target_position]), ("ue", sc.ue_positions)):
                for i, (x, y) in enumerate(pts):
                    w.writerow((seed, role, i, format(float(x), ".10g"), format(float(y), ".10g")))
            (scen_dir / f"seed_{seed}.json").write_text(sc.to_json())


def _finish(records, args) -> int:
    if args.records:
        write_records(records, args.records)
    if any_numerical_failure(records):
        logging.getLogger("cfisac").error("at least one record ended in a numerical failure")
        return EXIT_NUMERICAL_FAILURE
    return 0


def _common(p: argparse.ArgumentParser, sweep: bool = True) -> None:
    p.add_argument("--config", help="experiment configuration JSON")
    p.add_argument("--seed", type=int, help="first seed (seed_base)")
    p.add_argument("--realizations", type=int, help="number of seeds")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--setup", choices=("line", "square"))
    p.add_argument("--ues", type=int, help="number of UEs")
    p.add_argument("--workers", type=int, help="worker processes")
    if sweep:
        p.add_argument("--strategies", help="comma-separated strategy names")
        p.add_argument("--gamma-mode", choices=("equal-from-ii", "per-ue-from-i", "fixed"))
        p.add_argument("--records", help="also write per-seed records to this CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfisac", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("gen-scenario", help="write seeded node positions"), sweep=False)
    _common(sub.add_parser("eval", help="evaluate strategies per seed"))
    _common(sub.add_parser("sweep-rho", help="power-ratio sweep"))
    _common(sub.add_parser("sweep-distance", help="target-distance sweep"))
    _common(sub.add_parser("sweep-streams", help="UE-count / sensing-stream sweep"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    if args.command == "gen-scenario":
        _write_scenarios(_load_config(args), out)
        return 0
    if args.command == "eval":
        cfg = _load_config(args)
        records = evaluate(cfg)
        write_records(records, out)
        meta = {"csv_version": CSV_VERSION, "columns": list(RECORD_COLUMNS),
                "mean_wall_time": mean_wall_times(records), "config": cfg.to_dict()}
        Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2, default=str))
        args.records = None
        return _finish(records, args)

    if args.command == "sweep-rho":
        table = sweep_power_ratio(_load_config(args))
    elif args.command == "sweep-distance":
        table = sweep_target_distance(_load_config(args))
    else:
        table = sweep_streams_ues(_load_config(args, STREAMS_PRESET))
    table.to_csv(out)
    return _finish(table.records, args)


if __name__ == "__main__":
    sys.exit(main())
