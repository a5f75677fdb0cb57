"""nfvpower command line.

    python -m harness.cli [global flags] <group> <command> [options]

Groups: topo validate | radio chain | demands gen | milp emit | milp solve |
heur run | baseline run | experiment run | report summarize
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from optimizer.errors import NfvError
from optimizer.heuristics import eenfv_no_itr, eenfv_with_itr
from optimizer.milp import build_model
from optimizer.power import baseline_power, total_power
from optimizer.radio import DemandSet, generate_demands, rate_chain
from optimizer.solver import solve_model, write_lp
from optimizer.topology import validate

from .experiment import ExperimentConfig, ScenarioRunner, load_experiment_config, run_experiment
from .report import read_csv, summarize, write_csv, write_summary_csv

load_dotenv()

logger = logging.getLogger("nfvpower.cli")

# 1日のうちユーザー数が最大の時間帯
PEAK_SLOT = 14


def _dump(obj, path: Optional[str] = None) -> None:
    text = json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True)
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n", encoding="utf-8")
        logger.info(f"wrote {path}")
    else:
        print(text)


# ----------------------------------------------------------------------
# 設定
# ----------------------------------------------------------------------
def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """設定ファイル → CLI フラグの順に上書きする"""
    cfg = load_experiment_config(args.config) if args.config else ExperimentConfig()
    solver = cfg.solver
    updates = {}
    if args.seed is not None:
        updates["base_seed"] = args.seed
        updates["seeds"] = None
    if args.out_dir:
        updates["out_dir"] = args.out_dir
    if getattr(args, "topology", None):
        updates["topology"] = args.topology
    if args.solver_cmd:
        if "{lp}" in args.solver_cmd:
            solver = solver.model_copy(update={"command": shlex.split(args.solver_cmd)})
        else:
            solver = solver.model_copy(update={"solver_path": args.solver_cmd})
    if args.solver_format:
        solver = solver.model_copy(update={"output_format": args.solver_format})
    if args.time_limit is not None:
        solver = solver.model_copy(update={"time_limit": args.time_limit})
    if args.mip_gap is not None:
        solver = solver.model_copy(update={"mip_gap": args.mip_gap})
    updates["solver"] = solver
    return cfg.model_copy(update=updates)


def scenario_demands(cfg: ExperimentConfig, args: argparse.Namespace) -> DemandSet:
    runner = ScenarioRunner(cfg, cfg.build_topology())
    if args.fraction is not None:
        return generate_demands(
            runner.t, args.fraction, cfg.seed_for(args.slot), cfg.radio, args.tau,
            runner.inter_traffic, cfg.inter_traffic_scope,
        )
    return runner.demands(args.slot, args.tau)


# ----------------------------------------------------------------------
# サブコマンド
# ----------------------------------------------------------------------
def cmd_topo_validate(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    t = cfg.build_topology()
    problems = validate(t)
    _dump({"nodes": len(t.nodes), "hosts": len(t.hosts), "violations": problems}, args.output)
    return 1 if problems else 0


def cmd_radio_chain(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    _dump(rate_chain(cfg.radio), args.output)
    return 0


def cmd_demands_gen(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    d = scenario_demands(cfg, args)
    out = d.to_dict()
    out["digest"] = d.digest()
    _dump(out, args.output)
    return 0


def cmd_milp_emit(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    t = cfg.build_topology()
    m = build_model(t, scenario_demands(cfg, args), cfg.power, cfg.radio, cfg.milp)
    path = Path(args.output or cfg.output_dir() / "model.lp")
    write_lp(m, path)
    for w in m.warnings:
        logger.warning(w)
    logger.info(f"model written to {path}: {len(m.variables)} variables, {len(m.constraints)} rows")
    if args.stats:
        _dump(m.stats())
    return 0


def cmd_milp_solve(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    t = cfg.build_topology()
    m = build_model(t, scenario_demands(cfg, args), cfg.power, cfg.radio, cfg.milp)
    run, sol = solve_model(m, cfg.solver)
    out = {
        "status": run.status,
        "objective": run.objective,
        "wall_time_s": run.wall_time,
    }
    if sol is not None:
        out["breakdown"] = total_power(sol, t, cfg.power).to_dict()
        out["placement"] = sol.placement_summary(t)
    _dump(out, args.output)
    return 0 if sol is not None or run.status in ("infeasible", "timeout") else 1


def cmd_heur_run(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    t = cfg.build_topology()
    fn = eenfv_with_itr if args.variant == "with_itr" else eenfv_no_itr
    sol, trace = fn(
        t, scenario_demands(cfg, args), cfg.power, cfg.radio,
        cfg.heuristic_order, cfg.milp.integer_wdm, cfg.heuristic_cnvm_pool,
    )
    if args.emit_trace:
        _dump(trace.to_dict(), args.emit_trace)
    _dump(
        {
            "variant": args.variant,
            "chosen_i": trace.chosen_i,
            "chosen_pool": trace.chosen_pool,
            "breakdown": total_power(sol, t, cfg.power).to_dict(),
            "placement": sol.placement_summary(t),
        },
        args.output,
    )
    return 0


def cmd_baseline_run(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    t = cfg.build_topology()
    b = baseline_power(scenario_demands(cfg, args), t, cfg.power, cfg.milp.integer_wdm)
    _dump({"load_model": cfg.power.baseline.load_model, "breakdown": b.to_dict()}, args.output)
    return 0


def cmd_experiment_run(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    if args.workers:
        cfg = cfg.model_copy(update={"workers": args.workers})
    rows = run_experiment(cfg)
    out_dir = cfg.output_dir()
    path = write_csv(rows, out_dir / "results.csv", timing=args.with_timing)
    logger.info(f"{len(rows)} rows written to {path}")
    if "baseline" in cfg.methods:
        write_summary_csv(summarize(rows), out_dir / "summary.csv")
    failed = [r for r in rows if r.status == "error"]
    if failed:
        logger.error(f"{len(failed)} scenarios failed")
        return 1
    return 0


def cmd_report_summarize(args: argparse.Namespace) -> int:
    summary = summarize(read_csv(args.results))
    if args.output:
        write_summary_csv(summary, args.output)
        logger.info(f"summary written to {args.output}")
    else:
        _dump(summary.to_dict())
    return 0


# ----------------------------------------------------------------------
# 引数
# ----------------------------------------------------------------------
def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--slot", type=int, default=PEAK_SLOT, help="時間帯 (0-16)")
    p.add_argument("--fraction", type=float, default=None, help="プロファイル比率を直接指定")
    p.add_argument("--tau", type=float, default=0.0, help="CNVM 間トラフィック比率")
    p.add_argument("--topology", default=None, help="トポロジ JSON")
    p.add_argument("--output", "-o", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfvpower", description="Energy-aware NFV placement toolkit")
    parser.add_argument("--config", default=None, help="実験設定 JSON")
    parser.add_argument("--seed", type=int, default=None, help="base seed (slot i uses seed+i)")
    parser.add_argument("--out-dir", default=None)
    parser.add_argument("--solver-cmd", default=None, help="solver path or command template with {lp} and {sol}")
    parser.add_argument("--solver-format", choices=["cbc", "generic"], default=None)
    parser.add_argument("--time-limit", type=float, default=None)
    parser.add_argument("--mip-gap", type=float, default=None)
    parser.add_argument("--log-level", default=os.getenv("NFVPOWER_LOG_LEVEL", "INFO"))
    groups = parser.add_subparsers(dest="group", required=True)

    topo = groups.add_parser("topo").add_subparsers(dest="command", required=True)
    p = topo.add_parser("validate")
    p.add_argument("--topology", default=None)
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_topo_validate)

    radio = groups.add_parser("radio").add_subparsers(dest="command", required=True)
    p = radio.add_parser("chain")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_radio_chain)

    demands = groups.add_parser("demands").add_subparsers(dest="command", required=True)
    p = demands.add_parser("gen")
    _scenario_flags(p)
    p.set_defaults(func=cmd_demands_gen)

    milp = groups.add_parser("milp").add_subparsers(dest="command", required=True)
    p = milp.add_parser("emit")
    _scenario_flags(p)
    p.add_argument("--stats", action="store_true", help="行数・変数数を表示")
    p.set_defaults(func=cmd_milp_emit)
    p = milp.add_parser("solve")
    _scenario_flags(p)
    p.set_defaults(func=cmd_milp_solve)

    heur = groups.add_parser("heur").add_subparsers(dest="command", required=True)
    p = heur.add_parser("run")
    _scenario_flags(p)
    p.add_argument("--variant", choices=["no_itr", "with_itr"], default="with_itr")
    p.add_argument("--emit-trace", default=None, help="判断過程を JSON で書き出す")
    p.set_defaults(func=cmd_heur_run)

    baseline = groups.add_parser("baseline").add_subparsers(dest="command", required=True)
    p = baseline.add_parser("run")
    _scenario_flags(p)
    p.set_defaults(func=cmd_baseline_run)

    experiment = groups.add_parser("experiment").add_subparsers(dest="command", required=True)
    p = experiment.add_parser("run")
    p.add_argument("--with-timing", action="store_true", help="wall_time_s 列を追加")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_experiment_run)

    report = groups.add_parser("report").add_subparsers(dest="command", required=True)
    p = report.add_parser("summarize")
    p.add_argument("results", help="experiment run の CSV")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_report_summarize)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(message)s",
    )
    try:
        return args.func(args)
    except NfvError as e:
        logger.error(f"{args.group} {args.command} failed: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
