"""nfvpower API Server: FastAPI + SQLite (aiosqlite)"""

from __future__ import annotations

import asyncio
import json
import logging
import math
import os
import time
from contextlib import asynccontextmanager
from dataclasses import astuple
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import aiosqlite
from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field
from slowapi import Limiter, _rate_limit_exceeded_handler
from slowapi.errors import RateLimitExceeded
from slowapi.util import get_remote_address

from harness.experiment import ExperimentConfig, Method, ResultRow, VmTiers, run_experiment_async
from harness.report import TIER_COLUMNS, summarize
from optimizer.errors import NfvError
from optimizer.heuristics import CnvmPool, eenfv_no_itr, eenfv_with_itr
from optimizer.params import PowerParams, RadioParams
from optimizer.power import baseline_power, total_power
from optimizer.radio import (
    DemandSet,
    InterTrafficScope,
    demands_from_users,
    generate_demands,
    rate_chain,
)
from optimizer.solver import resolve_solver
from optimizer.topology import Topology, TopologyFile, default_topology, validate

load_dotenv()

logger = logging.getLogger("nfvpower.api")

# ---------------------------------------------------------------------------
# 設定
# ---------------------------------------------------------------------------
DB_PATH = os.getenv("NFVPOWER_DB", str(Path(__file__).resolve().parent.parent / "data" / "nfvpower.db"))
SCHEMA_PATH = Path(__file__).resolve().parent.parent / "db" / "schema.sql"

# レート制限設定
limiter = Limiter(key_func=get_remote_address)
RATE_LIMIT = "60/minute"  # 軽い計算
HEAVY_RATE_LIMIT = "10/minute"  # 実験スイープ

# ---------------------------------------------------------------------------
# DB ヘルパー
# ---------------------------------------------------------------------------
_db: Optional[aiosqlite.Connection] = None


async def get_db() -> aiosqlite.Connection:
    assert _db is not None, "DB not initialized"
    return _db


async def init_db() -> aiosqlite.Connection:
    """DB初期化: schema.sql を実行"""
    os.makedirs(os.path.dirname(DB_PATH) or ".", exist_ok=True)
    db = await aiosqlite.connect(DB_PATH)
    db.row_factory = aiosqlite.Row
    await db.execute("PRAGMA journal_mode=WAL")
    await db.execute("PRAGMA foreign_keys=ON")
    schema = SCHEMA_PATH.read_text(encoding="utf-8")
    await db.executescript(schema)
    await db.commit()
    return db


# ---------------------------------------------------------------------------
# Lifespan
# ---------------------------------------------------------------------------
@asynccontextmanager
async def lifespan(app: FastAPI):
    global _db
    _db = await init_db()
    yield
    if _db:
        await _db.close()
        _db = None


# ---------------------------------------------------------------------------
# App
# ---------------------------------------------------------------------------
app = FastAPI(
    title="nfvpower API",
    description="省電力 NFV 配置の計算エンジン",
    version="1.0.0",
    lifespan=lifespan,
)

# レート制限の設定
app.state.limiter = limiter
app.add_exception_handler(RateLimitExceeded, _rate_limit_exceeded_handler)


async def _nfv_error_handler(request: Request, exc: NfvError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


app.add_exception_handler(NfvError, _nfv_error_handler)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# ---------------------------------------------------------------------------
# Pydantic モデル
# ---------------------------------------------------------------------------
class ScenarioRequest(BaseModel):
    topology: Optional[TopologyFile] = None
    radio: RadioParams = Field(default_factory=RadioParams)
    fraction: float = Field(1.0, ge=0, le=1)
    seed: int = 1
    tau: float = Field(0.0, ge=0, le=1)
    users: Optional[Dict[int, int]] = None  # 指定時は乱数を使わない
    inter_traffic_scope: InterTrafficScope = "core"

    def build_topology(self) -> Topology:
        return self.topology.build() if self.topology else default_topology()

    def demands(self, t: Topology) -> DemandSet:
        if self.users is not None:
            return demands_from_users(t, self.users, self.radio, self.tau, self.inter_traffic_scope)
        return generate_demands(
            t, self.fraction, self.seed, self.radio, self.tau, scope=self.inter_traffic_scope
        )


class PlacementRequest(ScenarioRequest):
    power: PowerParams = Field(default_factory=PowerParams)
    integer_wdm: bool = True
    order: Literal["demand", "index"] = "demand"
    cnvm_pool: CnvmPool = "near"


class BreakdownResponse(BaseModel):
    pon: float
    wdm: float
    servers: float
    rrh_fixed: float
    total: float
    network: float


class HeuristicResponse(BaseModel):
    variant: str
    chosen_i: int
    chosen_pool: str
    breakdown: BreakdownResponse
    placement: Dict[str, Any]
    trace: Dict[str, Any]


class ExperimentRequest(BaseModel):
    topology: Optional[TopologyFile] = None
    radio: RadioParams = Field(default_factory=RadioParams)
    power: PowerParams = Field(default_factory=PowerParams)
    profile: Optional[List[float]] = None
    base_seed: int = 1
    tau_levels: List[float] = Field(default_factory=lambda: [0.0, 0.16])
    methods: List[Method] = Field(
        default_factory=lambda: ["heuristic_no_itr", "heuristic_with_itr", "baseline"]
    )
    integer_wdm: bool = True
    inter_traffic_scope: InterTrafficScope = "core"
    heuristic_cnvm_pool: CnvmPool = "near"


class ResultRowModel(BaseModel):
    slot: int
    time: str
    tau: Optional[float]
    method: str
    seed: int
    total_w: Optional[float]
    pon_w: Optional[float]
    wdm_w: Optional[float]
    servers_w: Optional[float]
    rrh_w: Optional[float]
    saving: Optional[float]
    status: str
    bbu_core: int = 0
    bbu_olt: int = 0
    bbu_onu: int = 0
    cnvm_core: int = 0
    cnvm_olt: int = 0
    cnvm_onu: int = 0


class ExperimentResponse(BaseModel):
    id: int
    created_at: int
    methods: List[str]
    rows: List[ResultRowModel]


class StatsResponse(BaseModel):
    total_experiments: int
    total_rows: int
    rows_by_method: Dict[str, int]
    errors: int


def _num(value: float) -> Optional[float]:
    return None if value is None or math.isnan(value) else value


def _row_model(r: ResultRow) -> ResultRowModel:
    return ResultRowModel(
        slot=r.slot, time=r.time, tau=r.tau, method=r.method, seed=r.seed,
        total_w=_num(r.total), pon_w=_num(r.pon), wdm_w=_num(r.wdm),
        servers_w=_num(r.servers), rrh_w=_num(r.rrh), saving=_num(r.saving),
        status=r.status,
        **{c: getattr(r.tiers, c) for c in TIER_COLUMNS},
    )


def _nan(value: Optional[float]) -> float:
    return math.nan if value is None else value


def _from_db(r) -> ResultRow:
    return ResultRow(
        slot=r["slot"], time=r["time"], tau=r["tau"], method=r["method"], seed=r["seed"],
        total=_nan(r["total_w"]), pon=_nan(r["pon_w"]), wdm=_nan(r["wdm_w"]),
        servers=_nan(r["servers_w"]), rrh=_nan(r["rrh_w"]), saving=_nan(r["saving"]),
        status=r["status"], demand_digest=r["demand_digest"] or "",
        tiers=VmTiers(**{c: r[c] for c in TIER_COLUMNS}),
    )


# ---------------------------------------------------------------------------
# エンドポイント
# ---------------------------------------------------------------------------

@app.get("/health")
async def health():
    """ヘルスチェック"""
    return {"status": "ok", "timestamp": int(time.time()), "solver": resolve_solver() is not None}


@app.post("/radio/chain")
@limiter.limit(RATE_LIMIT)
async def radio_chain(request: Request, params: RadioParams):
    """無線パラメータからレートチェーンを計算"""
    return rate_chain(params)


@app.post("/topology/validate")
@limiter.limit(RATE_LIMIT)
async def topology_validate(request: Request, layout: TopologyFile):
    """トポロジを構築して不変条件を検査"""
    t = layout.build()
    problems = validate(t)
    return {
        "valid": not problems,
        "violations": problems,
        "nodes": len(t.nodes),
        "hosts": len(t.hosts),
        "rrhs": len(t.rrhs),
    }


@app.post("/demands")
@limiter.limit(RATE_LIMIT)
async def demands(request: Request, req: ScenarioRequest):
    """RRH 需要と ∇ を生成"""
    d = req.demands(req.build_topology())
    out = d.to_dict()
    out["digest"] = d.digest()
    out["total_fronthaul_gbps"] = d.total_fronthaul
    out["total_backhaul_gbps"] = d.total_backhaul
    return out


@app.post("/heuristics/{variant}", response_model=HeuristicResponse)
@limiter.limit(RATE_LIMIT)
async def heuristics(request: Request, variant: str, req: PlacementRequest):
    """リアルタイム配置ヒューリスティックを実行"""
    if variant not in ("no_itr", "with_itr"):
        raise HTTPException(status_code=404, detail=f"unknown heuristic variant: {variant}")
    t = req.build_topology()
    d = req.demands(t)
    fn = eenfv_with_itr if variant == "with_itr" else eenfv_no_itr
    sol, trace = await asyncio.to_thread(
        fn, t, d, req.power, req.radio, req.order, req.integer_wdm, req.cnvm_pool
    )
    return HeuristicResponse(
        variant=variant,
        chosen_i=trace.chosen_i,
        chosen_pool=trace.chosen_pool,
        breakdown=BreakdownResponse(**total_power(sol, t, req.power).to_dict()),
        placement=sol.placement_summary(t),
        trace=trace.to_dict(),
    )


@app.post("/baseline", response_model=BreakdownResponse)
@limiter.limit(RATE_LIMIT)
async def baseline(request: Request, req: PlacementRequest):
    """仮想化なし構成の電力"""
    t = req.build_topology()
    b = baseline_power(req.demands(t), t, req.power, req.integer_wdm)
    return BreakdownResponse(**b.to_dict())


@app.post("/experiments", response_model=ExperimentResponse)
@limiter.limit(HEAVY_RATE_LIMIT)
async def create_experiment(request: Request, req: ExperimentRequest):
    """日内スイープを実行して結果を保存"""
    if "milp" in req.methods and resolve_solver() is None:
        raise HTTPException(status_code=400, detail="milp requires a solver executable")

    fields: Dict[str, Any] = {
        "radio": req.radio,
        "power": req.power,
        "base_seed": req.base_seed,
        "tau_levels": req.tau_levels,
        "methods": req.methods,
        "milp": {"integer_wdm": req.integer_wdm},
        "inter_traffic_scope": req.inter_traffic_scope,
        "heuristic_cnvm_pool": req.heuristic_cnvm_pool,
    }
    if req.profile is not None:
        fields["profile"] = req.profile
    try:
        cfg = ExperimentConfig.model_validate(fields)
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    t = req.topology.build() if req.topology else default_topology()

    rows = await run_experiment_async(cfg, t)
    created = int(time.time())

    db = await get_db()
    cur = await db.execute(
        "INSERT INTO experiments (created_at, config_json, methods, row_count) VALUES (?, ?, ?, ?)",
        (created, req.model_dump_json(), json.dumps(cfg.methods), len(rows)),
    )
    run_id = cur.lastrowid
    await db.executemany(
        f"""INSERT INTO result_rows (experiment_id, slot, time, tau, method, seed, total_w,
           pon_w, wdm_w, servers_w, rrh_w, saving, status, demand_digest, {', '.join(TIER_COLUMNS)})
           VALUES ({', '.join('?' * (14 + len(TIER_COLUMNS)))})""",
        [
            (
                run_id, r.slot, r.time, r.tau, r.method, r.seed, _num(r.total),
                _num(r.pon), _num(r.wdm), _num(r.servers), _num(r.rrh), _num(r.saving),
                r.status, r.demand_digest, *astuple(r.tiers),
            )
            for r in rows
        ],
    )
    await db.commit()
    logger.info(f"experiment {run_id} stored: {len(rows)} rows")
    return ExperimentResponse(
        id=run_id, created_at=created, methods=cfg.methods, rows=[_row_model(r) for r in rows]
    )


async def _load_rows(run_id: int) -> tuple:
    db = await get_db()
    exp = await db.execute_fetchall(
        "SELECT id, created_at, methods FROM experiments WHERE id = ?", (run_id,)
    )
    if not exp:
        raise HTTPException(status_code=404, detail="実験が見つかりません")
    rows = await db.execute_fetchall(
        f"""SELECT slot, time, tau, method, seed, total_w, pon_w, wdm_w, servers_w, rrh_w,
                  saving, status, demand_digest, {', '.join(TIER_COLUMNS)}
           FROM result_rows WHERE experiment_id = ? ORDER BY id""",
        (run_id,),
    )
    return exp[0], [_from_db(r) for r in rows]


@app.get("/experiments/{run_id}", response_model=ExperimentResponse)
async def get_experiment(run_id: int):
    """保存済みの実験結果"""
    exp, rows = await _load_rows(run_id)
    return ExperimentResponse(
        id=exp["id"],
        created_at=exp["created_at"],
        methods=json.loads(exp["methods"]),
        rows=[_row_model(r) for r in rows],
    )


@app.get("/experiments/{run_id}/summary")
async def get_experiment_summary(run_id: int):
    """τ・手法ごとの節減率とギャップ"""
    _, rows = await _load_rows(run_id)
    return summarize(rows).to_dict()


@app.get("/stats", response_model=StatsResponse)
async def get_stats():
    """全体統計"""
    db = await get_db()
    experiments = await db.execute_fetchall("SELECT COUNT(*) FROM experiments")
    rows = await db.execute_fetchall("SELECT COUNT(*) FROM result_rows")
    by_method = await db.execute_fetchall(
        "SELECT method, COUNT(*) FROM result_rows GROUP BY method ORDER BY method"
    )
    errors = await db.execute_fetchall("SELECT COUNT(*) FROM result_rows WHERE status = 'error'")
    return StatsResponse(
        total_experiments=experiments[0][0],
        total_rows=rows[0][0],
        rows_by_method={r[0]: r[1] for r in by_method},
        errors=errors[0][0],
    )
