"""Solution representation and placement-to-solution assembly."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from .errors import CapacityError, PlacementError
from .params import PowerParams, RadioParams
from .power import PowerBreakdown, dimension_wdm, server_power, total_power
from .radio import DemandSet, max_cell_workload
from .topology import NodeKind, Topology, shortest_path
from .utils import EPS

logger = logging.getLogger("nfvpower.solution")

Key2 = Tuple[int, int]
Key4 = Tuple[int, int, int, int]

# 保存則の判定に使う許容値
CONSERVATION_TOL = 1e-6


@dataclass
class Solution:
    """配置・フロー・ワークロード・WDM 次元の疎な表現。キーが無い値は 0。"""

    bbu_placement: Dict[Key2, int] = field(default_factory=dict)     # σB_{h,r}
    bbu_hosts: Dict[int, int] = field(default_factory=dict)          # σB_h
    cnvm_links: Dict[Key2, int] = field(default_factory=dict)        # σE_{p,h}
    cnvm_hosts: Dict[int, int] = field(default_factory=dict)         # σE_p
    cnvm_pairs: Dict[Key2, int] = field(default_factory=dict)        # ψ_{p,q}
    any_vm: Dict[int, int] = field(default_factory=dict)             # σχ_h
    fronthaul: Dict[Key2, float] = field(default_factory=dict)       # λR_{h,r}
    backhaul: Dict[Key2, float] = field(default_factory=dict)        # λB_{p,h}
    cnvm_traffic: Dict[Key2, float] = field(default_factory=dict)    # λE_{p,q}
    host_traffic: Dict[Key2, float] = field(default_factory=dict)    # λT_{p,q}
    fronthaul_flows: Dict[Key4, float] = field(default_factory=dict) # λR^{h,r}_{x,y}
    host_flows: Dict[Key4, float] = field(default_factory=dict)      # λT^{p,q}_{x,y}
    bbu_workload: Dict[int, float] = field(default_factory=dict)     # ΨB_h
    workload_int: Dict[int, int] = field(default_factory=dict)       # Ψi_h
    workload_frac: Dict[int, float] = field(default_factory=dict)    # Ψf_h
    virtual_wavelengths: Dict[Key2, float] = field(default_factory=dict)  # W_ij
    lightpaths: Dict[Key4, float] = field(default_factory=dict)      # W^{ij}_{mn}
    wavelengths: Dict[Key2, float] = field(default_factory=dict)     # W_mn
    fibers: Dict[Key2, int] = field(default_factory=dict)            # f_mn
    ports: Dict[int, float] = field(default_factory=dict)            # Λ_m
    objective: Optional[float] = None
    breakdown: Optional[PowerBreakdown] = None

    @property
    def bbu_host_of(self) -> Dict[int, int]:
        """RRH → BBUVM ホスト（分割されていれば需要最大のホスト）"""
        best: Dict[int, Tuple[float, int]] = {}
        for (h, r), v in self.fronthaul.items():
            if v > EPS and (r not in best or v > best[r][0]):
                best[r] = (v, h)
        return {r: h for r, (_, h) in sorted(best.items())}

    @property
    def active_cnvm_hosts(self) -> List[int]:
        return sorted(h for h, v in self.cnvm_hosts.items() if v)

    @property
    def active_bbu_hosts(self) -> List[int]:
        return sorted(h for h, v in self.bbu_hosts.items() if v)

    def placement_summary(self, t: Topology) -> dict:
        return {
            "bbu": {str(r): h for r, h in self.bbu_host_of.items()},
            "bbu_hosts_by_tier": _count_tiers(t, self.active_bbu_hosts),
            "cnvm_hosts": self.active_cnvm_hosts,
            "cnvm_hosts_by_tier": _count_tiers(t, self.active_cnvm_hosts),
        }


def _count_tiers(t: Topology, hosts: List[int]) -> Dict[str, int]:
    out: Dict[str, int] = {}
    for h in hosts:
        k = t.kind_of(h).value
        out[k] = out.get(k, 0) + 1
    return out


def check_conservation(sol: Solution, t: Topology, tol: float = CONSERVATION_TOL) -> List[str]:
    """フロー保存則の違反行の名前を返す（fronthaul_flow / host_flow）"""
    violations: List[str] = []
    violations += _conservation_rows(sol.fronthaul, sol.fronthaul_flows, "fronthaul_flow", "h", "r", tol)
    violations += _conservation_rows(sol.host_traffic, sol.host_flows, "host_flow", "p", "q", tol)
    return violations


def _conservation_rows(
    demand: Mapping[Key2, float],
    flows: Mapping[Key4, float],
    family: str,
    a: str,
    b: str,
    tol: float,
) -> List[str]:
    net: Dict[Key2, Dict[int, float]] = {}
    for (s, d, x, y), v in flows.items():
        bucket = net.setdefault((s, d), {})
        bucket[x] = bucket.get(x, 0.0) + v
        bucket[y] = bucket.get(y, 0.0) - v
    for (s, d), v in demand.items():
        bucket = net.setdefault((s, d), {})
        bucket[s] = bucket.get(s, 0.0) - v
        bucket[d] = bucket.get(d, 0.0) + v
    out = []
    for (s, d) in sorted(net):
        for x, residual in sorted(net[(s, d)].items()):
            if abs(residual) > tol:
                out.append(f"{family}_{a}{s}_{b}{d}_x{x}")
    return out


# ----------------------------------------------------------------------
# 配置 → 解
# ----------------------------------------------------------------------
class SolutionAssembler:
    """RRH→BBUVMホスト と BBUVMホスト→CNVMホスト の割り当てから完全な解を作る。

    フローは下りグラフ上のホップ数最短経路に載せ、光パスは隣接コア間で直結する。
    """

    def __init__(
        self,
        t: Topology,
        d: DemandSet,
        p: PowerParams,
        r: RadioParams,
        integer_wdm: bool = True,
    ):
        self.t = t
        self.d = d
        self.p = p
        self.r = r
        self.integer_wdm = integer_wdm
        self.psi_x = max_cell_workload(r.antennas, r.mod_bits, r.line_coding, r.mimo_layers)
        self._paths: Dict[Tuple[str, int, int], Optional[List[int]]] = {}

    def path(self, src: int, dst: int, hosts_only: bool = False) -> Optional[List[int]]:
        key = ("T" if hosts_only else "R", src, dst)
        if key not in self._paths:
            graph = self.t.host_downlink_graph if hosts_only else self.t.downlink_graph
            self._paths[key] = shortest_path(self.t, src, dst, "hops", graph)
        return self._paths[key]

    def host_load(self, fronthaul: float, cnvm: bool) -> float:
        """正規化ワークロード（サーバー台数換算）"""
        bbu = fronthaul / self.r.cpri_rate * self.psi_x
        return (bbu + (self.p.cnvm_gops if cnvm else 0.0)) / self.p.server_gops

    def fits(self, host: int, fronthaul: float, cnvm: bool) -> bool:
        """Ψi + σχ ≤ host_limit かつ ΩH を超えないか"""
        load = self.host_load(fronthaul, cnvm)
        if load <= 0:
            return True
        limit = self.t.host_limit(host)
        psi_i, psi_f = _split_load(load)
        if psi_i + 1 > limit:
            return False
        return server_power(psi_i, psi_f, 1, self.p) <= self.p.host_cap(host, limit) + 1e-6

    def assemble(self, bbu_of: Mapping[int, int], cnvm_of: Mapping[int, int]) -> Solution:
        t, d = self.t, self.d
        sol = Solution()
        hosts = set(t.hosts)

        # --- BBUVM とフロントホール
        for r in d.active_rrhs:
            if r not in bbu_of:
                raise PlacementError(f"RRH {r} has demand but no BBUVM host", rrh=r)
        for r, h in sorted(bbu_of.items()):
            demand = d.demand(r)
            if demand <= 0:
                continue
            if h not in hosts:
                raise PlacementError(f"node {h} cannot host the BBUVM of RRH {r}", rrh=r)
            path = self.path(h, r)
            if path is None:
                raise PlacementError(f"RRH {r} is unreachable from host {h}", rrh=r)
            sol.fronthaul[(h, r)] = demand
            sol.bbu_placement[(h, r)] = 1
            sol.bbu_hosts[h] = 1
            for x, y in zip(path, path[1:]):
                key = (h, r, x, y)
                sol.fronthaul_flows[key] = sol.fronthaul_flows.get(key, 0.0) + demand

        # --- CNVM とバックホール
        bbu_hosts = sorted(sol.bbu_hosts)
        for h in bbu_hosts:
            if h not in cnvm_of:
                raise PlacementError(f"BBUVM host {h} has no CNVM host")
            p = cnvm_of[h]
            if p not in hosts:
                raise PlacementError(f"node {p} cannot host a CNVM")
            backhaul = d.alpha * sum(v for (hh, _), v in sol.fronthaul.items() if hh == h)
            if backhaul <= 0:
                continue
            sol.backhaul[(p, h)] = backhaul
            sol.cnvm_links[(p, h)] = 1
            sol.cnvm_hosts[p] = 1

        cnvm_hosts = sorted(sol.cnvm_hosts)
        for p in cnvm_hosts:
            for q in cnvm_hosts:
                if p == q:
                    continue
                sol.cnvm_pairs[(p, q)] = 1
                nabla = d.nabla(p, q)
                if nabla > 0:
                    sol.cnvm_traffic[(p, q)] = nabla

        pairs = set(sol.cnvm_traffic) | {k for k in sol.backhaul if k[0] != k[1]}
        for (p, q) in sorted(pairs):
            amount = sol.cnvm_traffic.get((p, q), 0.0) + sol.backhaul.get((p, q), 0.0)
            if amount <= 0:
                continue
            path = self.path(p, q, hosts_only=True)
            if path is None:
                raise PlacementError(f"host {q} is unreachable from CNVM host {p}")
            sol.host_traffic[(p, q)] = amount
            for x, y in zip(path, path[1:]):
                key = (p, q, x, y)
                sol.host_flows[key] = sol.host_flows.get(key, 0.0) + amount

        for h in sorted(set(sol.bbu_hosts) | set(sol.cnvm_hosts)):
            sol.any_vm[h] = 1

        # --- ワークロード
        for h in sorted(sol.any_vm):
            fronthaul = sum(v for (hh, _), v in sol.fronthaul.items() if hh == h)
            if fronthaul > 0:
                sol.bbu_workload[h] = fronthaul / self.r.cpri_rate * self.psi_x
            if not self.fits(h, fronthaul, bool(sol.cnvm_hosts.get(h))):
                raise CapacityError(f"host {h} cannot carry its assigned VMs")
            psi_i, psi_f = _split_load(self.host_load(fronthaul, bool(sol.cnvm_hosts.get(h))))
            if psi_i:
                sol.workload_int[h] = psi_i
            if psi_f > 0:
                sol.workload_frac[h] = psi_f

        self._dimension(sol)
        breakdown = total_power(sol, t, self.p)
        sol.breakdown = breakdown
        sol.objective = breakdown.total
        return sol

    def _dimension(self, sol: Solution) -> None:
        t = self.t
        arc_flow: Dict[Key2, float] = {}
        agg_flow: Dict[int, float] = {}
        for flows in (sol.fronthaul_flows, sol.host_flows):
            for (_s, _d, x, y), v in flows.items():
                kx, ky = t.kind_of(x), t.kind_of(y)
                if kx != NodeKind.CORE:
                    continue
                if ky == NodeKind.CORE:
                    arc_flow[(x, y)] = arc_flow.get((x, y), 0.0) + v
                elif ky == NodeKind.OLT:
                    agg_flow[x] = agg_flow.get(x, 0.0) + v
        wavelengths, fibers, ports = dimension_wdm(arc_flow, agg_flow, self.p, self.integer_wdm)
        sol.wavelengths = wavelengths
        sol.fibers = fibers
        sol.ports = ports
        sol.virtual_wavelengths = dict(wavelengths)
        sol.lightpaths = {(i, j, i, j): w for (i, j), w in wavelengths.items()}


def _split_load(load: float) -> Tuple[int, float]:
    """正規化ワークロードを整数部 Ψi と小数部 Ψf に分ける（Ψf ≤ 1 - 1e-9）"""
    psi_i = int(math.floor(load))
    psi_f = load - psi_i
    if psi_f > 1 - 1e-9:
        psi_i += 1
        psi_f = 0.0
    if psi_f < 1e-12:
        psi_f = 0.0
    return psi_i, psi_f
