"""CSV output and saving / gap summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from optimizer.errors import HarnessError

from .experiment import METHOD_ORDER, ResultRow, VmTiers

COLUMNS = [
    "slot", "time", "tau", "method", "seed",
    "total_w", "pon_w", "wdm_w", "servers_w", "rrh_w",
    "saving", "status",
]
# 層ごとの VM ホスト数（baseline とエラー行は 0）
TIER_COLUMNS = [f.name for f in fields(VmTiers)]
TIMING_COLUMN = "wall_time_s"
HEURISTICS = ("heuristic_no_itr", "heuristic_with_itr")


def fmt6(value: Optional[float]) -> str:
    """有効数字6桁"""
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return format(value, ".6g")


def _row_cells(row: ResultRow, timing: bool) -> List[str]:
    cells = [
        str(row.slot), row.time, fmt6(row.tau), row.method, str(row.seed),
        fmt6(row.total), fmt6(row.pon), fmt6(row.wdm), fmt6(row.servers), fmt6(row.rrh),
        fmt6(row.saving), row.status,
    ]
    cells += [str(n) for n in astuple(row.tiers)]
    if timing:
        cells.append(fmt6(row.wall_time))
    return cells


def write_csv(rows: List[ResultRow], path: str | Path, timing: bool = False) -> Path:
    if not rows:
        raise HarnessError("no result rows to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = COLUMNS + TIER_COLUMNS + ([TIMING_COLUMN] if timing else [])
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow(_row_cells(row, timing))
    return path


def _float(cell: str) -> Optional[float]:
    if cell == "":
        return None
    return float(cell)


def read_csv(path: str | Path) -> List[ResultRow]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as f:
            records = list(csv.DictReader(f))
    except OSError as e:
        raise HarnessError(f"cannot read results {path}: {e}") from e
    rows = []
    for rec in records:
        try:
            rows.append(ResultRow(
                slot=int(rec["slot"]),
                time=rec["time"],
                tau=_float(rec["tau"]),
                method=rec["method"],
                seed=int(rec["seed"]),
                total=float(rec["total_w"]),
                pon=float(rec["pon_w"]),
                wdm=float(rec["wdm_w"]),
                servers=float(rec["servers_w"]),
                rrh=float(rec["rrh_w"]),
                saving=float(rec["saving"]),
                status=rec["status"],
                wall_time=float(rec.get(TIMING_COLUMN) or 0.0),
                tiers=VmTiers(**{c: int(rec.get(c) or 0) for c in TIER_COLUMNS}),
            ))
        except (KeyError, ValueError) as e:
            raise HarnessError(f"malformed result row {rec}: {e}") from e
    return rows


# ----------------------------------------------------------------------
# 集計
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Stat:
    tau: float
    method: str
    maximum: float
    average: float
    count: int


@dataclass
class Summary:
    savings: List[Stat] = field(default_factory=list)
    gaps: List[Stat] = field(default_factory=list)

    def saving(self, tau: float, method: str) -> Optional[Stat]:
        return next((s for s in self.savings if s.tau == tau and s.method == method), None)

    def gap(self, tau: float, method: str) -> Optional[Stat]:
        return next((s for s in self.gaps if s.tau == tau and s.method == method), None)

    def to_dict(self) -> dict:
        return {
            "savings": [s.__dict__ for s in self.savings],
            "gaps": [s.__dict__ for s in self.gaps],
        }


def _stat(tau: float, method: str, values: List[float]) -> Stat:
    return Stat(tau, method, max(values), sum(values) / len(values), len(values))


def summarize(rows: Iterable[ResultRow]) -> Summary:
    """τ・手法ごとの節減率（最大/平均）と、ヒューリスティックの MILP に対するギャップ"""
    rows = list(rows)
    baselines = {r.slot: r.total for r in rows if r.method == "baseline"}
    if not baselines:
        raise HarnessError("summary requires baseline rows")

    savings: Dict[Tuple[float, str], List[float]] = {}
    milp: Dict[Tuple[int, float], float] = {}
    for r in rows:
        if r.method == "baseline" or r.tau is None or math.isnan(r.total):
            continue
        base = baselines.get(r.slot)
        if base is None:
            raise HarnessError(f"slot {r.slot} has no baseline row")
        savings.setdefault((r.tau, r.method), []).append((base - r.total) / base)
        if r.method == "milp":
            milp[(r.slot, r.tau)] = r.total

    gaps: Dict[Tuple[float, str], List[float]] = {}
    for r in rows:
        if r.method not in HEURISTICS or r.tau is None or math.isnan(r.total):
            continue
        opt = milp.get((r.slot, r.tau))
        if opt:
            gaps.setdefault((r.tau, r.method), []).append((r.total - opt) / opt)

    def order(key: Tuple[float, str]) -> Tuple[float, int]:
        return (key[0], METHOD_ORDER.index(key[1]))

    return Summary(
        savings=[_stat(k[0], k[1], v) for k, v in sorted(savings.items(), key=lambda kv: order(kv[0]))],
        gaps=[_stat(k[0], k[1], v) for k, v in sorted(gaps.items(), key=lambda kv: order(kv[0]))],
    )


def write_summary_csv(summary: Summary, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["kind", "tau", "method", "max", "avg", "count"])
        for kind, stats in (("saving", summary.savings), ("gap", summary.gaps)):
            for s in stats:
                w.writerow([kind, fmt6(s.tau), s.method, fmt6(s.maximum), fmt6(s.average), s.count])
    return path
