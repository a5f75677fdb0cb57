"""Real-time placement heuristics with and without CNVM inter-traffic."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Literal, Mapping, Optional, Tuple

from .errors import CapacityError, ParameterError, PlacementError
from .params import PowerParams, RadioParams
from .radio import DemandSet, rrh_workload
from .solution import Solution, SolutionAssembler
from .topology import NodeKind, Topology, hop_distance

logger = logging.getLogger("nfvpower.heuristics")

Order = Literal["demand", "index"]
# near: BBUVM を持つ OLT / ONU に同居させる候補を先に調べ、その後にコアを並べる
# core: バックホール順に並べたコアだけを候補にする
CnvmPool = Literal["near", "core"]


@dataclass
class PlacementDecision:
    rrh: int
    host: int
    workload: float
    rejected: List[Tuple[int, str]] = field(default_factory=list)


@dataclass
class IterationRecord:
    i: int
    cnvm_hosts: List[int]
    tpc: Optional[float]
    skipped: List[Tuple[int, str]] = field(default_factory=list)
    pool: str = "core"
    reason: Optional[str] = None


@dataclass
class HeuristicTrace:
    variant: str
    decisions: List[PlacementDecision] = field(default_factory=list)
    sorted_cores: List[int] = field(default_factory=list)
    near_hosts: List[int] = field(default_factory=list)
    iterations: List[IterationRecord] = field(default_factory=list)
    chosen_i: int = 0
    chosen_pool: str = ""
    solution: Optional[Solution] = None

    @property
    def served(self) -> List[int]:
        return [d.rrh for d in self.decisions]

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "decisions": [asdict(d) for d in self.decisions],
            "sorted_cores": list(self.sorted_cores),
            "near_hosts": list(self.near_hosts),
            "iterations": [asdict(it) for it in self.iterations],
            "chosen_i": self.chosen_i,
            "chosen_pool": self.chosen_pool,
            "total_power": None if self.solution is None else self.solution.objective,
        }


def core_backhaul(t: Topology, placed: Mapping[int, int], d: DemandSet) -> Dict[int, float]:
    """コアノードごとの見込みバックホール（そのコアが根のツリー内の BBUVM 分）"""
    out = {c: 0.0 for c in t.cores}
    for rrh, host in placed.items():
        out[t.parent_core(host)] += d.alpha * d.demand(rrh)
    return out


def sort_core_nodes_by_backhaul(t: Topology, placed: Mapping[int, int], d: DemandSet) -> List[int]:
    """バックホール降順、同値はノード番号昇順"""
    backhaul = core_backhaul(t, placed, d)
    return sorted(t.cores, key=lambda c: (-backhaul[c], c))


def near_cnvm_hosts(t: Topology, placed: Mapping[int, int], d: DemandSet) -> List[int]:
    """CNVM を同居させられるアクセス側の BBUVM ホスト（バックホール降順、同値は番号順）"""
    backhaul: Dict[int, float] = {}
    for rrh, host in placed.items():
        if t.kind_of(host) == NodeKind.CORE:
            continue
        backhaul[host] = backhaul.get(host, 0.0) + d.alpha * d.demand(rrh)
    return sorted(backhaul, key=lambda h: (-backhaul[h], h))


class EenfvHeuristic:
    """BBUVM を最寄りの OLT（無理ならコア）に詰め、CNVM の候補数を 1 つずつ増やして TPC 最小を探す"""

    def __init__(
        self,
        t: Topology,
        d: DemandSet,
        p: PowerParams,
        r: RadioParams,
        order: Order = "demand",
        integer_wdm: bool = True,
        cnvm_pool: CnvmPool = "near",
    ):
        if cnvm_pool not in ("near", "core"):
            raise ParameterError(f"unknown CNVM candidate pool: {cnvm_pool}")
        self.t = t
        self.d = d
        self.p = p
        self.r = r
        self.order = order
        self.cnvm_pool = cnvm_pool
        self.assembler = SolutionAssembler(t, d, p, r, integer_wdm)
        self.plain_assembler = SolutionAssembler(t, d.without_inter_traffic(), p, r, integer_wdm)
        self._hops: Dict[Tuple[int, int], Optional[int]] = {}

    def run(self, with_itr: bool) -> Tuple[Solution, HeuristicTrace]:
        trace = HeuristicTrace(variant="with_itr" if with_itr else "no_itr")
        bbu_of = self._place_bbus(trace)

        if not bbu_of:
            sol = self.assembler.assemble({}, {})
            trace.solution = sol
            return sol, trace

        trace.sorted_cores = sort_core_nodes_by_backhaul(self.t, bbu_of, self.d)
        pools: List[Tuple[str, List[int]]] = [("core", trace.sorted_cores)]
        if self.cnvm_pool == "near":
            trace.near_hosts = near_cnvm_hosts(self.t, bbu_of, self.d)
            if trace.near_hosts:
                pools.insert(0, ("near", trace.near_hosts + trace.sorted_cores))
        load = self._fronthaul_by_host(bbu_of)
        bbu_hosts = sorted(set(bbu_of.values()))

        best: Optional[Tuple[float, str, int, Dict[int, int]]] = None
        for pool, candidates in pools:
            for i in range(1, len(candidates) + 1):
                record = IterationRecord(i=i, cnvm_hosts=[], tpc=None, pool=pool)
                trace.iterations.append(record)
                cnvm_of = self._assign_cnvm(bbu_hosts, candidates[:i], load, record)
                if cnvm_of is None:
                    continue
                record.tpc = self._evaluate(bbu_of, cnvm_of, with_itr, record)
                if record.tpc is None:
                    continue
                if best is None or record.tpc < best[0] - 1e-9:
                    best = (record.tpc, pool, i, cnvm_of)

        if best is None:
            raise PlacementError("no CNVM placement is feasible for the BBUVM hosts")
        _, trace.chosen_pool, trace.chosen_i, cnvm_of = best
        sol = self.assembler.assemble(bbu_of, cnvm_of)
        trace.solution = sol
        logger.info(
            f"heuristic {trace.variant}: chosen {trace.chosen_pool} i={trace.chosen_i}, "
            f"total {sol.objective:.1f} W"
        )
        return sol, trace

    def _evaluate(
        self,
        bbu_of: Mapping[int, int],
        cnvm_of: Mapping[int, int],
        with_itr: bool,
        record: IterationRecord,
    ) -> Optional[float]:
        """TPC を返す。no_itr でも ∇ を経路に載せられない配置は採らない。"""
        try:
            sol = self.assembler.assemble(bbu_of, cnvm_of)
            if not with_itr and self.d.inter_traffic:
                sol = self.plain_assembler.assemble(bbu_of, cnvm_of)
        except (CapacityError, PlacementError) as e:
            record.reason = str(e)
            logger.debug(f"{record.pool} i={record.i} rejected: {e}")
            return None
        return sol.objective

    # ------------------------------------------------------------------
    # BBUVM の配置
    # ------------------------------------------------------------------
    def _place_bbus(self, trace: HeuristicTrace) -> Dict[int, int]:
        t, d = self.t, self.d
        active = d.active_rrhs
        if self.order == "demand":
            active = sorted(active, key=lambda r: (-d.demand(r), r))

        used: Dict[int, float] = {}
        placed: Dict[int, int] = {}
        unserved: List[Tuple[int, List[Tuple[int, str]]]] = []

        for r in active:
            demand = d.demand(r)
            olt = self._nearest(r, t.olts)
            rejected: List[Tuple[int, str]] = []
            if olt is not None and t.host_limit(olt) > 0:
                if self.assembler.fits(olt, used.get(olt, 0.0) + demand, cnvm=False):
                    self._accept(trace, placed, used, r, olt, rejected)
                    continue
                rejected.append((olt, "insufficient capacity"))
            unserved.append((r, rejected))

        for r, rejected in unserved:
            demand = d.demand(r)
            for core in self._by_distance(r, t.cores):
                if self.assembler.fits(core, used.get(core, 0.0) + demand, cnvm=False):
                    self._accept(trace, placed, used, r, core, rejected)
                    break
                rejected.append((core, "insufficient capacity"))
            else:
                raise PlacementError(f"RRH {r} cannot be placed on any host", rrh=r)
        return placed

    def _accept(self, trace, placed, used, r, host, rejected) -> None:
        demand = self.d.demand(r)
        placed[r] = host
        used[host] = used.get(host, 0.0) + demand
        trace.decisions.append(
            PlacementDecision(r, host, rrh_workload(demand, self.r), list(rejected))
        )
        logger.debug(f"RRH {r} -> {self.t.kind_of(host).value}{host}")

    def _fronthaul_by_host(self, bbu_of: Mapping[int, int]) -> Dict[int, float]:
        out: Dict[int, float] = {}
        for r, h in bbu_of.items():
            out[h] = out.get(h, 0.0) + self.d.demand(r)
        return out

    # ------------------------------------------------------------------
    # 距離
    # ------------------------------------------------------------------
    def _hop(self, a: int, b: int) -> Optional[int]:
        if (a, b) not in self._hops:
            self._hops[(a, b)] = hop_distance(self.t, a, b)
        return self._hops[(a, b)]

    def _by_distance(self, src: int, candidates: List[int]) -> List[int]:
        reachable = [c for c in candidates if self.assembler.path(c, src) is not None]
        return sorted(reachable, key=lambda c: (self._hop(src, c), c))

    def _nearest(self, src: int, candidates: List[int]) -> Optional[int]:
        ordered = self._by_distance(src, candidates)
        return ordered[0] if ordered else None

    def _assign_cnvm(
        self,
        bbu_hosts: List[int],
        candidates: List[int],
        load: Mapping[int, float],
        record: IterationRecord,
    ) -> Optional[Dict[int, int]]:
        """各 BBUVM ホストをホップ数の近い候補から順に調べ、ΩH に CNVM が収まる最初のホストに割り当てる。

        ΨC はホストごとの固定値なので、バックホール量で ΩH は減らない。
        収まらない候補は飛ばして次に近い候補へ回す（バックホールは分割しない）。
        """
        saturated = set()
        for c in candidates:
            if not self.assembler.fits(c, load.get(c, 0.0), cnvm=True):
                saturated.add(c)
                record.skipped.append((c, "no capacity for CNVM"))
                logger.debug(f"{self.t.kind_of(c).value}{c} skipped as CNVM host: no capacity")

        out: Dict[int, int] = {}
        for h in bbu_hosts:
            options = []
            for c in candidates:
                path = [c] if c == h else self.assembler.path(c, h, hosts_only=True)
                if path is not None:
                    options.append((len(path) - 1, c))
            chosen = next((c for _, c in sorted(options) if c not in saturated), None)
            if chosen is None:
                record.reason = f"BBUVM host {h} has no reachable CNVM host with capacity"
                return None
            out[h] = chosen
        record.cnvm_hosts = sorted(set(out.values()))
        return out


def eenfv_no_itr(
    t: Topology,
    d: DemandSet,
    p: PowerParams,
    r: RadioParams,
    order: Order = "demand",
    integer_wdm: bool = True,
    cnvm_pool: CnvmPool = "near",
) -> Tuple[Solution, HeuristicTrace]:
    """CNVM 間トラフィックを考慮せずに CNVM の配置を選ぶ"""
    return EenfvHeuristic(t, d, p, r, order, integer_wdm, cnvm_pool).run(with_itr=False)


def eenfv_with_itr(
    t: Topology,
    d: DemandSet,
    p: PowerParams,
    r: RadioParams,
    order: Order = "demand",
    integer_wdm: bool = True,
    cnvm_pool: CnvmPool = "near",
) -> Tuple[Solution, HeuristicTrace]:
    """CNVM 間トラフィック ∇ を経路に載せた上で CNVM の配置を選ぶ"""
    return EenfvHeuristic(t, d, p, r, order, integer_wdm, cnvm_pool).run(with_itr=True)
