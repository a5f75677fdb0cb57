"""Daily-profile scenario sweep over inter-traffic levels and placement methods."""

from __future__ import annotations

import asyncio
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from optimizer.errors import HarnessError, NfvError
from optimizer.heuristics import CnvmPool, eenfv_no_itr, eenfv_with_itr
from optimizer.milp import build_model
from optimizer.params import BuildOptions, PowerParams, RadioParams
from optimizer.power import PowerBreakdown, baseline_power, total_power
from optimizer.radio import (
    DemandSet,
    InterTrafficScope,
    daily_profile,
    generate_demands,
    load_inter_traffic,
    slot_time,
)
from optimizer.solution import Solution
from optimizer.solver import SolverSettings, solve_model
from optimizer.topology import NodeKind, Topology, default_topology, load_topology

logger = logging.getLogger("nfvpower.harness")

Method = Literal["milp", "heuristic_no_itr", "heuristic_with_itr", "baseline"]
METHOD_ORDER: Tuple[str, ...] = ("baseline", "milp", "heuristic_no_itr", "heuristic_with_itr")
PROFILE_SLOTS = 17


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    topology: Optional[str] = Field(None, description="トポロジJSON。未指定は5コアの評価ネットワーク")
    radio: RadioParams = Field(default_factory=RadioParams)
    power: PowerParams = Field(default_factory=PowerParams)
    milp: BuildOptions = Field(default_factory=BuildOptions)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    profile: List[float] = Field(default_factory=daily_profile)
    base_seed: int = 1
    seeds: Optional[List[int]] = None
    tau_levels: List[float] = Field(default_factory=lambda: [0.0, 0.01, 0.05, 0.10, 0.16])
    methods: List[Method] = Field(
        default_factory=lambda: ["milp", "heuristic_no_itr", "heuristic_with_itr", "baseline"]
    )
    heuristic_order: Literal["demand", "index"] = "demand"
    heuristic_cnvm_pool: CnvmPool = "near"
    inter_traffic_scope: InterTrafficScope = "core"
    inter_traffic_file: Optional[str] = None
    out_dir: Optional[str] = None
    workers: int = Field(default_factory=lambda: int(os.getenv("NFVPOWER_WORKERS", "4")), ge=1)

    @field_validator("profile")
    @classmethod
    def _profile(cls, v: List[float]) -> List[float]:
        if len(v) != PROFILE_SLOTS:
            raise ValueError(f"profile must have {PROFILE_SLOTS} entries")
        if any(not 0 <= x <= 1 for x in v):
            raise ValueError("profile fractions must be in [0, 1]")
        return v

    @field_validator("tau_levels")
    @classmethod
    def _taus(cls, v: List[float]) -> List[float]:
        if not v or any(not 0 <= x <= 1 for x in v):
            raise ValueError("tau_levels must be non-empty fractions in [0, 1]")
        return sorted(set(v))

    @field_validator("methods")
    @classmethod
    def _methods(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one method is required")
        return sorted(set(v), key=METHOD_ORDER.index)

    @model_validator(mode="after")
    def _seeds(self) -> "ExperimentConfig":
        if self.seeds is not None and len(self.seeds) != len(self.profile):
            raise ValueError("seeds must give one seed per slot")
        return self

    def seed_for(self, slot: int) -> int:
        return self.seeds[slot] if self.seeds is not None else self.base_seed + slot

    def build_topology(self) -> Topology:
        return load_topology(self.topology) if self.topology else default_topology()

    def output_dir(self) -> Path:
        return Path(self.out_dir or os.getenv("NFVPOWER_OUT_DIR", "results"))


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """設定ファイルを読む。相対パスは設定ファイルの場所から解決する。"""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        cfg = ExperimentConfig.model_validate(raw)
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise HarnessError(f"invalid experiment config {path}: {e}") from e
    updates = {}
    for key in ("topology", "inter_traffic_file"):
        value = getattr(cfg, key)
        if value and not Path(value).is_absolute():
            updates[key] = str((path.parent / value).resolve())
    return cfg.model_copy(update=updates) if updates else cfg


# CSV / DB に出す VM のホスト層
TIERS: Tuple[NodeKind, ...] = (NodeKind.CORE, NodeKind.OLT, NodeKind.ONU)


@dataclass(frozen=True)
class VmTiers:
    """層ごとの BBUVM / CNVM ホスト数"""

    bbu_core: int = 0
    bbu_olt: int = 0
    bbu_onu: int = 0
    cnvm_core: int = 0
    cnvm_olt: int = 0
    cnvm_onu: int = 0

    @classmethod
    def of(cls, sol: Solution, t: Topology) -> "VmTiers":
        counts: Dict[str, int] = {}
        for prefix, hosts in (("bbu", sol.active_bbu_hosts), ("cnvm", sol.active_cnvm_hosts)):
            for h in hosts:
                kind = t.kind_of(h)
                if kind in TIERS:
                    key = f"{prefix}_{kind.value.lower()}"
                    counts[key] = counts.get(key, 0) + 1
        return cls(**counts)


@dataclass(frozen=True)
class ResultRow:
    slot: int
    time: str
    tau: Optional[float]
    method: str
    seed: int
    total: float
    pon: float
    wdm: float
    servers: float
    rrh: float
    saving: float
    status: str
    wall_time: float = 0.0
    demand_digest: str = ""
    tiers: VmTiers = field(default_factory=VmTiers)

    @property
    def sort_key(self) -> Tuple[int, float, int]:
        tau = -1.0 if self.tau is None else self.tau
        return (self.slot, tau, METHOD_ORDER.index(self.method))

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(out.pop("tiers"))
        return out


_NAN_BREAKDOWN = PowerBreakdown(math.nan, math.nan, math.nan, math.nan, math.nan)


# ----------------------------------------------------------------------
# シナリオ
# ----------------------------------------------------------------------
class ScenarioRunner:
    """1つの (slot, τ, method) を評価する"""

    def __init__(self, cfg: ExperimentConfig, t: Topology):
        self.cfg = cfg
        self.t = t
        self.inter_traffic = (
            load_inter_traffic(cfg.inter_traffic_file) if cfg.inter_traffic_file else None
        )

    def demands(self, slot: int, tau: float) -> DemandSet:
        return generate_demands(
            self.t,
            self.cfg.profile[slot],
            self.cfg.seed_for(slot),
            self.cfg.radio,
            tau,
            self.inter_traffic,
            self.cfg.inter_traffic_scope,
        )

    def run(self, slot: int, tau: Optional[float], method: str) -> ResultRow:
        cfg = self.cfg
        d = self.demands(slot, tau or 0.0)
        started = time.perf_counter()
        logger.info(f"scenario start: slot={slot} tau={tau} method={method}")
        try:
            breakdown, status, sol = self._evaluate(d, method)
        except NfvError as e:
            logger.error(f"scenario slot={slot} tau={tau} method={method} failed: {e}", exc_info=True)
            breakdown, status, sol = _NAN_BREAKDOWN, "error", None
        elapsed = time.perf_counter() - started
        tiers = VmTiers.of(sol, self.t) if sol is not None else VmTiers()
        logger.info(
            f"scenario done: slot={slot} tau={tau} method={method} "
            f"total={breakdown.total:.1f} W status={status}"
        )
        return ResultRow(
            slot=slot,
            time=slot_time(slot),
            tau=tau,
            method=method,
            seed=cfg.seed_for(slot),
            total=breakdown.total,
            pon=breakdown.pon,
            wdm=breakdown.wdm,
            servers=breakdown.servers,
            rrh=breakdown.rrh_fixed,
            saving=math.nan,
            status=status,
            wall_time=elapsed,
            demand_digest=d.users_digest(),
            tiers=tiers,
        )

    def _evaluate(self, d: DemandSet, method: str) -> Tuple[PowerBreakdown, str, Optional[Solution]]:
        cfg, t = self.cfg, self.t
        if method == "baseline":
            return baseline_power(d, t, cfg.power, cfg.milp.integer_wdm), "ok", None
        if method in ("heuristic_no_itr", "heuristic_with_itr"):
            fn = eenfv_no_itr if method == "heuristic_no_itr" else eenfv_with_itr
            sol, _ = fn(
                t, d, cfg.power, cfg.radio,
                cfg.heuristic_order, cfg.milp.integer_wdm, cfg.heuristic_cnvm_pool,
            )
            return sol.breakdown or total_power(sol, t, cfg.power), "ok", sol
        if method == "milp":
            model = build_model(t, d, cfg.power, cfg.radio, cfg.milp)
            run, sol = solve_model(model, cfg.solver)
            if sol is None:
                if run.status not in ("infeasible", "timeout"):
                    logger.warning(f"MILP finished with status {run.status}")
                return _NAN_BREAKDOWN, run.status, None
            return total_power(sol, t, cfg.power), run.status, sol
        raise HarnessError(f"unknown method {method}")


def scenario_items(cfg: ExperimentConfig) -> List[Tuple[int, Optional[float], str]]:
    items: List[Tuple[int, Optional[float], str]] = []
    for slot in range(len(cfg.profile)):
        for method in cfg.methods:
            if method == "baseline":
                items.append((slot, None, method))
            else:
                items.extend((slot, tau, method) for tau in cfg.tau_levels)
    return items


def apply_savings(rows: List[ResultRow], baselines: Dict[int, float]) -> List[ResultRow]:
    out = []
    for row in rows:
        base = baselines.get(row.slot, math.nan)
        if row.method == "baseline":
            saving = 0.0
        elif base and not math.isnan(base) and not math.isnan(row.total):
            saving = (base - row.total) / base
        else:
            saving = math.nan
        out.append(replace(row, saving=saving))
    return out


async def run_experiment_async(
    cfg: ExperimentConfig, topology: Optional[Topology] = None
) -> List[ResultRow]:
    """シナリオを有限のワーカー数で並列に評価する。結果は (slot, τ, method) 順。"""
    t = topology or cfg.build_topology()
    runner = ScenarioRunner(cfg, t)
    sem = asyncio.Semaphore(cfg.workers)

    async def one(item: Tuple[int, Optional[float], str]) -> ResultRow:
        async with sem:
            return await asyncio.to_thread(runner.run, *item)

    items = scenario_items(cfg)
    if "baseline" not in cfg.methods:
        # 節減率の基準として内部でだけ計算する
        extra = [(slot, None, "baseline") for slot in range(len(cfg.profile))]
    else:
        extra = []
    results = await asyncio.gather(*(one(item) for item in items + extra))

    baselines = {r.slot: r.total for r in results if r.method == "baseline"}
    rows = list(results[: len(items)])
    rows = apply_savings(rows, baselines)
    rows.sort(key=lambda r: r.sort_key)
    logger.info(f"experiment finished: {len(rows)} rows")
    return rows


def run_experiment(cfg: ExperimentConfig, topology: Optional[Topology] = None) -> List[ResultRow]:
    return asyncio.run(run_experiment_async(cfg, topology))
