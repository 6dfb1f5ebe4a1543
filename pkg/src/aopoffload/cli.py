"""Command-line entry point: cluster, plan, solve, simulate, compare.

Every run writes ``manifest.json`` and ``config.ini`` into ``--out`` before
any result file, so a run can be reproduced from its own snapshot.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, aop, clustering, optimizer, sim
from .config import ScenarioConfig, emit_config, parse_config
from .errors import (AdmissionError, AopOffloadError, ConfigError, ConstraintError, InfeasibleError,
                     ParseError)

log = logging.getLogger("aopoffload")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 2, 3, 4


@dataclass
class RunManifest:
    subcommand: str
    config_path: str | None
    seed: int
    input_hash: str
    out_dir: str

    def write(self, path: Path):
        doc = {"subcommand": self.subcommand, "config_path": self.config_path, "seed": self.seed,
               "input_hash": self.input_hash, "out_dir": self.out_dir, "version": __version__}
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def input_hash(subcommand: str, config_text: str, args: dict, files=()) -> str:
    """Content hash of everything that determines a run's output."""
    h = hashlib.sha256()
    h.update(subcommand.encode())
    h.update(b"\0")
    h.update(config_text.encode())
    h.update(b"\0")
    h.update(json.dumps(args, sort_keys=True, default=str).encode())
    for f in files:
        if f is not None:
            h.update(b"\0")
            h.update(Path(f).read_bytes())
    return h.hexdigest()


def _write_csv(path: Path, rows: list[dict], columns=None):
    columns = columns or (list(rows[0].keys()) if rows else [])
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _load_config(args) -> ScenarioConfig:
    cfg = parse_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.replications is not None:
        cfg = cfg.replace(replications=args.replications)
    return cfg


def _start(args, cfg: ScenarioConfig, files=()) -> Path:
    out = Path(args.out or f"runs/{args.command}")
    out.mkdir(parents=True, exist_ok=True)
    text = emit_config(cfg)
    params = {k: v for k, v in vars(args).items() if k not in ("func", "out", "config", "verbose")}
    man = RunManifest(args.command, args.config, cfg.seed, input_hash(args.command, text, params, files), str(out))
    man.write(out / "manifest.json")
    (out / "config.ini").write_text(text)
    return out


def _dataset(args):
    path = getattr(args, "dataset", None) or os.environ.get("AOPOFFLOAD_DATASET")
    return path


# ---------------------------------------------------------------------------
# subcommands

def cmd_cluster(args) -> int:
    cfg = _load_config(args)
    if args.method:
        cfg = cfg.replace(cluster_method=args.method)
    dataset = _dataset(args)
    out = _start(args, cfg, [dataset])
    topo = sim.prepare_topology(cfg, dataset)
    rows = []
    for k, cs in enumerate(topo.collab_spaces):
        for m in cs.members:
            rows.append({"ec_id": topo.edge_clouds[m].id, "cs": k, "centroid_ec": topo.edge_clouds[cs.centroid].id,
                         "x_m": topo.edge_clouds[m].position[0], "y_m": topo.edge_clouds[m].position[1]})
    _write_csv(out / "clusters.csv", rows)
    summary = {"method": cfg.cluster_method, "n_spaces": len(topo.collab_spaces),
               "mean_size": float(np.mean([cs.size for cs in topo.collab_spaces])),
               "dataset": dataset or "synthetic"}
    if cfg.cluster_method == "kmeans":
        k_star, _, wcss = clustering.kmeans_elbow(topo.ec_positions, min(cfg.kmeans_k_max, topo.n_ec), cfg.seed)
        summary["k_star"] = k_star
        _write_csv(out / "elbow.csv", [{"k": k + 1, "wcss": w} for k, w in enumerate(wcss)])
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out / "topology.jsonl").write_text("\n".join(topo.summary_records()) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = _load_config(args)
    if args.vehicles:
        cfg = cfg.replace(vehicle_count=args.vehicles)
    dataset = _dataset(args)
    out = _start(args, cfg, [dataset])
    topo = sim.prepare_topology(cfg, dataset)
    scn = sim.generate_scenario(cfg, topo)
    t = args.slot * cfg.slot_s
    deadlines = np.array([scn.task(v, args.slot).deadline_s for v in range(scn.n_vehicles)])
    adm, dist = sim.admissible_rats(scn, t, deadlines)
    from .commplan import route_geometry

    rows = []
    for v, veh in enumerate(scn.vehicles):
        for s, rat in enumerate(topo.rats):
            e = route_geometry(veh, rat, t)
            if e.preselect_prob <= 0 and not args.all:
                continue
            rows.append({"vehicle": v, "rat": rat.id, "kind": rat.kind, "geo_distance_m": e.geo_distance,
                         "perp_distance_m": e.perp_distance, "remaining_distance_m": e.remaining_distance,
                         "preselect_prob": e.preselect_prob, "dwell_time_s": e.dwell_time,
                         "admissible": int(adm[v, s])})
    _write_csv(out / "plan.csv", rows, ["vehicle", "rat", "kind", "geo_distance_m", "perp_distance_m",
                                        "remaining_distance_m", "preselect_prob", "dwell_time_s", "admissible"])
    print(f"{len(rows)} plan entries, {int(adm.any(axis=1).sum())}/{scn.n_vehicles} vehicles covered")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    if args.vehicles:
        cfg = cfg.replace(vehicle_count=args.vehicles)
    if args.epsilon is not None:
        cfg = cfg.replace(epsilon=args.epsilon)
    if args.max_outer is not None:
        cfg = cfg.replace(max_outer=args.max_outer)
    out = _start(args, cfg)
    if args.scenario == "random":
        stage = optimizer.random_stage(np.random.default_rng(cfg.seed), n_vehicles=args.vehicles or 4,
                                       objective=args.objective)
    else:
        topo = sim.prepare_topology(cfg, _dataset(args))
        scn = sim.generate_scenario(cfg, topo)
        V = scn.n_vehicles
        stage = sim.build_slot(scn, 0, np.zeros(V), np.zeros(V), np.zeros(V), args.objective).stage
    rep = optimizer.solve(stage, cfg.epsilon, cfg.max_outer, cfg.eta0)
    _write_csv(out / "solution.csv", rep.records())
    _write_csv(out / "residuals.csv", [{"iteration": i + 1, "residual": r, "best_residual": b, "dual": g}
                                        for i, (r, b, g) in enumerate(zip(rep.raw_residuals, rep.residual_history,
                                                                          rep.dual_history))])
    summary = {"objective": rep.objective, "dual_value": rep.dual_value, "relative_gap": rep.relative_gap,
               "iterations": rep.iterations, "converged": rep.converged, "certified": rep.certified,
               "kkt_relaxed": rep.kkt.max, "kkt_integer": rep.kkt_integer.max}
    if args.oracle_check:
        n_act = max(len(a) for a in stage.actions)
        if stage.n_vehicles <= optimizer.ENUM_MAX_VEHICLES and n_act <= optimizer.ENUM_MAX_ACTIONS:
            _, opt = optimizer.enumerate_policies(stage)
            summary["oracle_objective"] = opt
            summary["oracle_gap"] = (rep.objective - opt) / max(abs(opt), 1e-300)
        else:
            summary["oracle_objective"] = None
            log.warning("oracle check skipped: stage too large to enumerate")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


FIGURES = ("fig7_compute_hist", "fig8_aop_by_sampling", "fig9_delay_vs_aop", "fig12_vs_asspo")


def _sweep_metrics(cfg, dataset, counts, horizon, kw, decisions, samplings):
    topo = sim.prepare_topology(cfg, dataset)
    rows = []
    per_vehicle = []
    for V in counts:
        c = cfg.replace(vehicle_count=V)
        for rep in range(cfg.replications):
            scn = sim.generate_scenario(c, topo, seed=cfg.seed + rep)
            for dec in decisions:
                for samp in samplings:
                    if dec == "asspo":
                        m = sim.asspo_baseline(scn, horizon, sampling=samp, **kw)
                    else:
                        m = sim.run_scenario(scn, dec, horizon, sampling=samp, **kw)
                    rows.append(m.row(rep))
                    per_vehicle += [{"replication": rep, **r} for r in m.per_vehicle]
    return rows, per_vehicle


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if args.vehicles:
        cfg = cfg.replace(vehicle_count=args.vehicles)
    if args.sampling:
        cfg = cfg.replace(sampling=args.sampling)
    if args.horizon:
        cfg = cfg.replace(horizon=args.horizon)
    if args.max_outer:
        cfg = cfg.replace(max_outer=args.max_outer)
    dataset = _dataset(args)
    out = _start(args, cfg, [dataset])
    horizon = cfg.horizon
    kw = {}
    counts = [int(x) for x in args.sweep.split(",")] if args.sweep else [cfg.vehicle_count]
    decisions = [args.decision]
    samplings = [cfg.sampling]
    if args.figures:
        decisions = ["solver", "total_delay", "asspo"]
        samplings = list(aop.SAMPLING_KINDS)
    rows, per_vehicle = _sweep_metrics(cfg, dataset, counts, horizon, kw, decisions, samplings)
    _write_csv(out / "metrics.csv", rows, sim.METRIC_COLUMNS)
    _write_csv(out / "per_vehicle.csv", per_vehicle)
    if args.figures:
        _figure_files(out, rows)
    summary = {}
    for r in rows:
        key = f"{r['policy']}/{r['sampling_kind']}/V={r['vehicle_count']}"
        summary.setdefault(key, []).append(r["mean_aav"])
    for key, vals in summary.items():
        print(f"{key}: A_av = {np.mean(vals):.6g} +/- {np.std(vals):.3g} over {len(vals)} replications")
    return EXIT_OK


def _figure_files(out: Path, rows: list[dict]):
    base = [r for r in rows if r["policy"] == "solver" and r["sampling_kind"] == "zero_wait"]
    _write_csv(out / "fig7_compute_hist.csv", [
        {"vehicle_count": r["vehicle_count"], "replication": r["replication"],
         **{k: r[f"share_{k}"] for k in sim.LOCATIONS}} for r in base])
    _write_csv(out / "fig8_aop_by_sampling.csv", [
        {"vehicle_count": r["vehicle_count"], "replication": r["replication"], "sampling_kind": r["sampling_kind"],
         "mean_aav": r["mean_aav"]} for r in rows if r["policy"] == "solver"])
    _write_csv(out / "fig9_delay_vs_aop.csv", [
        {"vehicle_count": r["vehicle_count"], "replication": r["replication"], "objective": r["policy"],
         "mean_aav": r["mean_aav"], "mean_delay": r["mean_delay"]}
        for r in rows if r["policy"] in ("solver", "total_delay") and r["sampling_kind"] == "zero_wait"])
    ours = {(r["vehicle_count"], r["replication"]): r["mean_aav"] for r in base}
    _write_csv(out / "fig12_vs_asspo.csv", [
        {"vehicle_count": r["vehicle_count"], "replication": r["replication"],
         "ours_aav": ours[(r["vehicle_count"], r["replication"])], "asspo_aav": r["mean_aav"],
         "improvement_pct": improvement_pct(ours[(r["vehicle_count"], r["replication"])], r["mean_aav"])}
        for r in rows if r["policy"] == "asspo" and r["sampling_kind"] == "zero_wait"])


def improvement_pct(ours: float, baseline: float) -> float:
    """Relative improvement of ``ours`` over ``baseline`` (lower is better)."""
    if baseline == 0:
        return 0.0 if ours == 0 else -np.inf
    return (baseline - ours) / baseline * 100.0


def _metrics_path(path) -> Path:
    """A metrics CSV, or a run directory holding metrics.csv."""
    path = Path(path)
    return path / "metrics.csv" if path.is_dir() else path


def _read_metrics(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"metrics file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        rows = list(reader)
    return cols, rows


def compare_tables(cols_a, rows_a, cols_b, rows_b) -> list[dict]:
    """Per-metric means, deltas (b - a) and the improvement of a over b in percent."""
    if cols_a != cols_b:
        only_a = sorted(set(cols_a) - set(cols_b))
        only_b = sorted(set(cols_b) - set(cols_a))
        raise ConfigError(f"schema mismatch: only in run_a {only_a}, only in run_b {only_b}"
                          if only_a or only_b else "schema mismatch: column order differs")
    out = []
    for c in cols_a:
        try:
            va = np.array([float(r[c]) for r in rows_a])
            vb = np.array([float(r[c]) for r in rows_b])
        except ValueError:
            continue
        if c in ("replication", "seed", "vehicle_count", "horizon") or not len(va) or not len(vb):
            continue
        ma, mb = float(va.mean()), float(vb.mean())
        out.append({"metric": c, "run_a": ma, "run_b": mb, "delta": mb - ma, "improvement_pct": improvement_pct(ma, mb)})
    return out


def cmd_compare(args) -> int:
    args.run_a, args.run_b = str(_metrics_path(args.run_a)), str(_metrics_path(args.run_b))
    cols_a, rows_a = _read_metrics(args.run_a)
    cols_b, rows_b = _read_metrics(args.run_b)
    table = compare_tables(cols_a, rows_a, cols_b, rows_b)
    cfg = _load_config(args)
    out = _start(args, cfg, [args.run_a, args.run_b])
    _write_csv(out / "comparison.csv", table, ["metric", "run_a", "run_b", "delta", "improvement_pct"])
    for r in table:
        print(f"{r['metric']:>24s}  {r['run_a']:.6g}  {r['run_b']:.6g}  delta {r['delta']:+.6g}  "
              f"improvement {r['improvement_pct']:+.4g}%")
    return EXIT_OK


# ---------------------------------------------------------------------------

def _global_flags(parser, default):
    # flags may come before or after the subcommand; the subparser copy must not reset them
    parser.add_argument("--config", default=default, help="key/value config file (missing keys take defaults)")
    parser.add_argument("--seed", type=int, default=default, help="root seed (overrides the config)")
    parser.add_argument("--out", default=default, help="output directory (default runs/<subcommand>)")
    parser.add_argument("--replications", type=int, default=default, help="independent seeded replications")
    parser.add_argument("-v", "--verbose", action="store_true", default=default or False)
    return parser


def build_parser() -> argparse.ArgumentParser:
    top = _global_flags(argparse.ArgumentParser(add_help=False), None)
    common = _global_flags(argparse.ArgumentParser(add_help=False), argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="aopoffload", description=__doc__.splitlines()[0], parents=[top])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cluster", parents=[common], help="form collaboration spaces")
    c.add_argument("--dataset", help="site CSV (SITE_ID, LATITUDE, LONGITUDE[, SITE_TYPE])")
    c.add_argument("--method", choices=("apacs", "kmeans"))
    c.set_defaults(func=cmd_cluster)

    c = sub.add_parser("plan", parents=[common], help="RAT preselection along each route")
    c.add_argument("--dataset")
    c.add_argument("--vehicles", type=int)
    c.add_argument("--slot", type=int, default=0)
    c.add_argument("--all", action="store_true", help="include out-of-coverage RATs")
    c.set_defaults(func=cmd_plan)

    c = sub.add_parser("solve", parents=[common], help="solve one slot's offloading problem")
    c.add_argument("--scenario", choices=("slot0", "random"), default="slot0")
    c.add_argument("--dataset")
    c.add_argument("--vehicles", type=int)
    c.add_argument("--objective", choices=("aop", "delay"), default="aop")
    c.add_argument("--epsilon", type=float)
    c.add_argument("--max-outer", type=int)
    c.add_argument("--oracle-check", action="store_true", help="compare against enumeration when small")
    c.set_defaults(func=cmd_solve)

    c = sub.add_parser("simulate", parents=[common], help="run scenarios and emit metrics CSV")
    c.add_argument("--dataset")
    c.add_argument("--vehicles", type=int)
    c.add_argument("--decision", choices=("solver", "total_delay", "heuristic", "asspo"), default="solver")
    c.add_argument("--sampling", choices=aop.SAMPLING_KINDS)
    c.add_argument("--horizon", type=int)
    c.add_argument("--max-outer", type=int)
    c.add_argument("--sweep", help="comma-separated vehicle counts")
    c.add_argument("--figures", action="store_true", help="run all baselines and emit plot-data files")
    c.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", parents=[common], help="compare two metrics files")
    c.add_argument("run_a", help="metrics.csv or a run directory")
    c.add_argument("run_b", help="metrics.csv or a run directory")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, ConstraintError, AdmissionError) as exc:
        binding = getattr(exc, "binding", ())
        print(f"infeasible: {exc}" + (f" (binding: {', '.join(binding)})" if binding else ""), file=sys.stderr)
        return EXIT_INFEASIBLE
    except AopOffloadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
