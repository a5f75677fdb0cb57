"""Power model: PON, IP over WDM, hosting servers and the no-NFV baseline."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Dict, Mapping, Optional, Tuple

from .errors import CapacityError, InfeasibleSolutionError, ParameterError
from .params import PowerParams
from .topology import NodeKind, Topology, shortest_path
from .utils import EPS, ceil_tol

if TYPE_CHECKING:
    from .radio import DemandSet
    from .solution import Solution

logger = logging.getLogger("nfvpower.power")

Arc = Tuple[int, int]


@dataclass(frozen=True)
class PowerBreakdown:
    pon: float
    wdm: float
    servers: float
    rrh_fixed: float
    total: float

    @property
    def network(self) -> float:
        """ネットワーク電力（PON + WDM、RRH固定分は除く）"""
        return self.pon + self.wdm

    def to_dict(self) -> dict:
        d = asdict(self)
        d["network"] = self.network
        return d

    @classmethod
    def of(cls, pon: float, wdm: float, servers: float, rrh_fixed: float) -> "PowerBreakdown":
        return cls(pon, wdm, servers, rrh_fixed, pon + wdm + servers + rrh_fixed)


# ----------------------------------------------------------------------
# 機器単位の電力
# ----------------------------------------------------------------------
def server_power(psi_i: int, psi_f: float, chi: int, p: PowerParams) -> float:
    """ホスティングノードのサーバー電力 (W)"""
    if psi_f >= 1:
        raise CapacityError(f"fractional server load {psi_f} must be < 1")
    if psi_i < 0 or psi_f < -EPS or chi not in (0, 1):
        raise ParameterError("invalid server load arguments")
    if chi == 0 and (psi_i > 0 or psi_f > EPS):
        raise ParameterError("a host without VMs cannot carry load")
    return p.server_idle * (psi_i + chi) + max(psi_f, 0.0) * (p.server_max - p.server_idle)


def edfa_count(D: float, S: float) -> int:
    """リンク上の EDFA 数: ceil(D/S - 1) + 2"""
    if D <= 0 or S <= 0:
        raise ParameterError("distance and span must be positive")
    return ceil_tol(D / S - 1) + 2


def pon_power(
    onu_flows: Mapping[int, float],
    olt_flows: Mapping[int, float],
    p: PowerParams,
    active_olts: Optional[set] = None,
) -> float:
    """ONU（RRH固定分込み）と OLT の電力 (W)

    onu_flows / olt_flows のキーが対象ノード。active_olts を指定した場合は
    その OLT だけにアイドル電力を課す。
    """
    total = 0.0
    for onu, flow in onu_flows.items():
        if flow < -EPS or flow > p.onu_cap * (1 + EPS):
            raise CapacityError(f"ONU {onu} flow {flow} Gbps exceeds capacity {p.onu_cap}")
        total += p.rrh_power + p.onu_max / p.onu_cap * max(flow, 0.0)
    for olt, flow in olt_flows.items():
        if flow < -EPS or flow > p.olt_cap * (1 + EPS):
            raise CapacityError(f"OLT {olt} flow {flow} Gbps exceeds capacity {p.olt_cap}")
        if active_olts is not None and olt not in active_olts:
            continue
        total += p.olt_idle + (p.olt_max - p.olt_idle) / p.olt_cap * max(flow, 0.0)
    return total


def wdm_power(
    ports: Mapping[int, float],
    wavelengths: Mapping[Arc, float],
    fibers: Mapping[Arc, int],
    t: Topology,
    p: PowerParams,
) -> float:
    """IP over WDM の電力 (W): ルータポート, トランスポンダ, EDFA, 再生中継器"""
    total = p.router_port * sum(ports.values())
    for (m, n), w in wavelengths.items():
        if w <= 0:
            continue
        f = fibers.get((m, n), 0)
        if w > p.wavelengths_per_fiber * f + 1e-6:
            raise CapacityError(f"link ({m}, {n}) carries {w} wavelengths on {f} fibers")
        total += (p.router_port + p.transponder) * w
        total += p.regenerator * t.regenerators(m, n) * w
    for (m, n), f in fibers.items():
        if f > 0:
            total += p.edfa * edfa_count(t.distance(m, n), p.span_km) * f
    return total


def dimension_wdm(
    arc_flows: Mapping[Arc, float],
    aggregation_flows: Mapping[int, float],
    p: PowerParams,
    integer: bool = True,
) -> Tuple[Dict[Arc, float], Dict[Arc, int], Dict[int, float]]:
    """コアアークのトラフィックから (W_mn, f_mn, Λ_m) を求める。光パスは隣接ノード間で直結。"""
    wavelengths: Dict[Arc, float] = {}
    fibers: Dict[Arc, int] = {}
    for arc, flow in sorted(arc_flows.items()):
        if flow <= EPS:
            continue
        w = ceil_tol(flow / p.wavelength_cap) if integer else flow / p.wavelength_cap
        wavelengths[arc] = w
        fibers[arc] = ceil_tol(w / p.wavelengths_per_fiber)
    ports: Dict[int, float] = {}
    for node, flow in sorted(aggregation_flows.items()):
        if flow <= EPS:
            continue
        ports[node] = ceil_tol(flow / p.wavelength_cap) if integer else flow / p.wavelength_cap
    return wavelengths, fibers, ports


# ----------------------------------------------------------------------
# 仮想化なしのベースライン
# ----------------------------------------------------------------------
def baseline_power(
    d: "DemandSet",
    t: Topology,
    p: PowerParams,
    integer_wdm: bool = True,
) -> PowerBreakdown:
    """セル毎の BBU とコアの ASR5000 による構成の電力"""
    b = p.baseline
    processing = 0.0

    for r in t.rrhs:
        demand = d.demand(r)
        if demand <= 0:
            continue
        if b.load_model == "peak":
            processing += b.bbu_max
        else:
            processing += b.bbu_idle + min(1.0, demand / b.bbu_cap) * (b.bbu_max - b.bbu_idle)

    total_backhaul = d.total_backhaul
    units = max(1, math.ceil(total_backhaul / b.core_cap - EPS))
    if b.load_model == "peak":
        processing += units * b.core_max
    else:
        processing += units * b.core_idle + (b.core_max - b.core_idle) * total_backhaul / b.core_cap

    if b.core_node >= len(t.cores):
        raise ParameterError(f"baseline core node {b.core_node} does not exist")
    source = t.cores[b.core_node]

    onu_flow: Dict[int, float] = {x: 0.0 for x in t.onus}
    olt_flow: Dict[int, float] = {x: 0.0 for x in t.olts}
    arc_flow: Dict[Arc, float] = {}
    agg_flow: Dict[int, float] = {}
    for r in t.rrhs:
        backhaul = d.alpha * d.demand(r)
        if backhaul <= 0:
            continue
        path = shortest_path(t, source, r, "hops", t.downlink_graph)
        if path is None:
            raise CapacityError(f"RRH {r} is unreachable from the core unit")
        for x, y in zip(path, path[1:]):
            kx, ky = t.kind_of(x), t.kind_of(y)
            if kx == NodeKind.ONU:
                onu_flow[x] += backhaul
            elif kx == NodeKind.OLT:
                olt_flow[x] += backhaul
            elif kx == NodeKind.CORE and ky == NodeKind.CORE:
                arc_flow[(x, y)] = arc_flow.get((x, y), 0.0) + backhaul
            elif kx == NodeKind.CORE and ky == NodeKind.OLT:
                agg_flow[x] = agg_flow.get(x, 0.0) + backhaul

    wavelengths, fibers, ports = dimension_wdm(arc_flow, agg_flow, p, integer_wdm)
    rrh_fixed = p.rrh_power * len(t.onus)
    pon = pon_power(onu_flow, olt_flow, p) - rrh_fixed
    wdm = wdm_power(ports, wavelengths, fibers, t, p)
    return PowerBreakdown.of(pon, wdm, processing, rrh_fixed)


# ----------------------------------------------------------------------
# 解の総電力
# ----------------------------------------------------------------------
def total_power(sol: "Solution", t: Topology, p: PowerParams) -> PowerBreakdown:
    """解の全電力。目的関数の4項と同じ計算。"""
    from .solution import check_conservation

    violations = check_conservation(sol, t)
    if violations:
        raise InfeasibleSolutionError(
            f"solution violates {len(violations)} flow conservation rows", violations
        )

    onu_flow: Dict[int, float] = {x: 0.0 for x in t.onus}
    olt_flow: Dict[int, float] = {x: 0.0 for x in t.olts}
    for (_h, _r, x, _y), v in sol.fronthaul_flows.items():
        _add_out_flow(t, x, v, onu_flow, olt_flow)
    for (_p, _q, x, _y), v in sol.host_flows.items():
        _add_out_flow(t, x, v, onu_flow, olt_flow)

    rrh_fixed = p.rrh_power * len(t.onus)
    pon = pon_power(onu_flow, olt_flow, p) - rrh_fixed
    wdm = wdm_power(sol.ports, sol.wavelengths, sol.fibers, t, p)
    servers = 0.0
    for h in t.hosts:
        servers += server_power(
            sol.workload_int.get(h, 0),
            sol.workload_frac.get(h, 0.0),
            sol.any_vm.get(h, 0),
            p,
        )
    return PowerBreakdown.of(pon, wdm, servers, rrh_fixed)


def _add_out_flow(t: Topology, x: int, v: float, onu_flow: Dict[int, float], olt_flow: Dict[int, float]) -> None:
    kind = t.kind_of(x)
    if kind == NodeKind.ONU:
        onu_flow[x] += v
    elif kind == NodeKind.OLT:
        olt_flow[x] += v
