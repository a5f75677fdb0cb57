"""Energy-aware NFV placement MILP: model registry, builder, decode and verification."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from .errors import DecodeError, ModelError
from .params import BuildOptions, PowerParams, RadioParams
from .power import edfa_count
from .radio import DemandSet, max_cell_workload
from .solution import Solution
from .topology import NodeKind, Topology

logger = logging.getLogger("nfvpower.milp")

Arc = Tuple[int, int]

# 記号 → 添字の役割（変数名に埋め込む）
SYMBOLS: Dict[str, Tuple[str, ...]] = {
    "lamB": ("p", "h"),
    "lamR": ("h", "r"),
    "sigBr": ("h", "r"),
    "sigB": ("h",),
    "sigEp": ("p", "h"),
    "sigE": ("p",),
    "psi": ("p", "q"),
    "chi": ("h",),
    "lamE": ("p", "q"),
    "lamT": ("p", "q"),
    "fR": ("h", "r", "x", "y"),
    "fT": ("p", "q", "x", "y"),
    "PsiB": ("h",),
    "Psii": ("h",),
    "Psif": ("h",),
    "Wv": ("i", "j"),
    "Wp": ("i", "j", "m", "n"),
    "Wmn": ("m", "n"),
    "fib": ("m", "n"),
    "Lam": ("m",),
}

# 記号 → Solution のフィールド
SOLUTION_FIELDS: Dict[str, str] = {
    "lamB": "backhaul",
    "lamR": "fronthaul",
    "sigBr": "bbu_placement",
    "sigB": "bbu_hosts",
    "sigEp": "cnvm_links",
    "sigE": "cnvm_hosts",
    "psi": "cnvm_pairs",
    "chi": "any_vm",
    "lamE": "cnvm_traffic",
    "lamT": "host_traffic",
    "fR": "fronthaul_flows",
    "fT": "host_flows",
    "PsiB": "bbu_workload",
    "Psii": "workload_int",
    "Psif": "workload_frac",
    "Wv": "virtual_wavelengths",
    "Wp": "lightpaths",
    "Wmn": "wavelengths",
    "fib": "fibers",
    "Lam": "ports",
}

FAMILIES: Tuple[str, ...] = (
    # トラフィック
    "backhaul_split", "fronthaul_demand", "cnvm_traffic", "host_traffic",
    # BBUVM / CNVM の配置（big-M）
    "bbu_link_on", "bbu_link_off", "bbu_host_on", "bbu_host_off",
    "cnvm_link_on", "cnvm_link_off", "cnvm_link_host", "cnvm_host_on", "cnvm_host_off",
    "pair_first", "pair_second", "pair_both",
    "any_vm_upper", "any_vm_bbu", "any_vm_cnvm",
    # フロー保存
    "fronthaul_flow", "host_flow",
    # サーバー
    "bbu_workload", "server_count", "server_power_cap", "server_limit",
    # GPON 上り禁止
    "onu_up_fronthaul", "onu_up_host", "olt_up_fronthaul", "olt_up_host",
    # IP over WDM
    "virtual_capacity", "lightpath_flow", "fiber_capacity", "wavelength_count", "router_ports",
)


class VarKind(str, Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"
    BINARY = "binary"


class Sense(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


@dataclass(frozen=True)
class Variable:
    name: str
    kind: VarKind
    lower: float = 0.0
    upper: Optional[float] = None
    symbol: str = ""
    key: Tuple[int, ...] = ()


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: Tuple[Tuple[str, float], ...]
    sense: Sense
    rhs: float
    family: str


def var_name(symbol: str, key: Sequence[int]) -> str:
    roles = SYMBOLS[symbol]
    if len(roles) != len(key):
        raise ModelError(f"{symbol} takes {len(roles)} indices, got {len(key)}")
    return symbol + "".join(f"_{role}{idx}" for role, idx in zip(roles, key))


def row_name(family: str, **idx: int) -> str:
    return family + "".join(f"_{k}{v}" for k, v in idx.items())


class MilpModel:
    """ソルバー非依存の線形モデル（変数・制約・目的関数）"""

    def __init__(self, options: BuildOptions, beta: float):
        self.options = options
        self.beta = beta
        self.eta = options.eta
        self.variables: Dict[str, Variable] = {}
        self.constraints: List[Constraint] = []
        self.objective: Dict[str, float] = {}
        self.objective_constant = 0.0
        self.families: Dict[str, int] = {f: 0 for f in FAMILIES}
        self.warnings: List[str] = []
        self._row_names: set = set()
        self._index: Dict[str, Dict[Tuple[int, ...], str]] = {s: {} for s in SYMBOLS}

    # ------------------------------------------------------------------
    # 登録
    # ------------------------------------------------------------------
    def add_variable(
        self,
        symbol: str,
        key: Tuple[int, ...],
        kind: VarKind = VarKind.CONTINUOUS,
        lower: float = 0.0,
        upper: Optional[float] = None,
    ) -> str:
        name = var_name(symbol, key)
        if name in self.variables:
            raise ModelError(f"duplicate variable {name}")
        if kind == VarKind.BINARY:
            lower, upper = 0.0, 1.0
        self.variables[name] = Variable(name, kind, lower, upper, symbol, tuple(key))
        self._index[symbol][tuple(key)] = name
        return name

    def var(self, symbol: str, *key: int) -> str:
        try:
            return self._index[symbol][tuple(key)]
        except KeyError:
            raise ModelError(f"unknown variable {symbol}{key}") from None

    def has(self, symbol: str, *key: int) -> bool:
        return tuple(key) in self._index[symbol]

    def keys(self, symbol: str) -> List[Tuple[int, ...]]:
        return list(self._index[symbol])

    def add_constraint(
        self,
        family: str,
        name: str,
        terms: Iterable[Tuple[str, float]],
        sense: Sense,
        rhs: float = 0.0,
    ) -> bool:
        """空の行は追加しない（戻り値 False）"""
        if family not in self.families:
            raise ModelError(f"unknown constraint family {family}")
        merged: Dict[str, float] = {}
        for var, coef in terms:
            if var not in self.variables:
                raise ModelError(f"constraint {name} references unknown variable {var}")
            merged[var] = merged.get(var, 0.0) + coef
        merged = {k: v for k, v in merged.items() if v != 0}
        if not merged:
            return False
        if name in self._row_names:
            raise ModelError(f"duplicate constraint {name}")
        self._row_names.add(name)
        self.constraints.append(Constraint(name, tuple(merged.items()), sense, float(rhs), family))
        self.families[family] += 1
        return True

    def add_objective(self, var: str, coef: float) -> None:
        if var not in self.variables:
            raise ModelError(f"objective references unknown variable {var}")
        if coef:
            self.objective[var] = self.objective.get(var, 0.0) + coef

    # ------------------------------------------------------------------
    # 参照
    # ------------------------------------------------------------------
    def evaluate_objective(self, assignment: Mapping[str, float]) -> float:
        return self.objective_constant + sum(
            coef * assignment.get(var, 0.0) for var, coef in self.objective.items()
        )

    def stats(self) -> dict:
        by_kind = {k.value: 0 for k in VarKind}
        for v in self.variables.values():
            by_kind[v.kind.value] += 1
        by_symbol = {s: len(idx) for s, idx in self._index.items()}
        return {
            "variables": len(self.variables),
            "variables_by_kind": by_kind,
            "variables_by_symbol": by_symbol,
            "constraints": len(self.constraints),
            "families": dict(self.families),
            "objective_terms": len(self.objective),
            "objective_constant": self.objective_constant,
            "warnings": list(self.warnings),
        }


# ----------------------------------------------------------------------
# 構築
# ----------------------------------------------------------------------
class ModelBuilder:
    """トポロジ・需要・電力パラメータから MILP を組み立てる"""

    def __init__(
        self,
        t: Topology,
        d: DemandSet,
        p: PowerParams,
        r: RadioParams,
        options: Optional[BuildOptions] = None,
    ):
        self.t = t
        self.d = d
        self.p = p
        self.r = r
        self.options = options or BuildOptions()
        self.H = t.hosts
        self.R = t.rrhs
        self.N = t.cores
        self.L = t.olts
        self.U = t.onus
        self.host_set = set(self.H)
        self.psi_x = max_cell_workload(r.antennas, r.mod_bits, r.line_coding, r.mimo_layers)
        beta = self.options.beta
        if beta is None:
            beta = 10 * max(1, len(self.R)) * r.cpri_rate
        self.m = MilpModel(self.options, beta)
        self.r_arcs: Dict[Tuple[int, int], List[Arc]] = {}
        self.t_arcs: Dict[Tuple[int, int], List[Arc]] = {}

    def build(self) -> MilpModel:
        self._index_arcs()
        self._add_variables()
        self._add_objective()
        self._traffic_constraints()
        self._placement_constraints()
        self._flow_conservation()
        self._workload_constraints()
        self._gpon_constraints()
        self._wdm_constraints()
        self._check_capacity()
        stats = self.m.stats()
        logger.debug(
            f"model built: {stats['variables']} variables, {stats['constraints']} constraints"
        )
        return self.m

    # ------------------------------------------------------------------
    # アーク集合
    # ------------------------------------------------------------------
    def _index_arcs(self) -> None:
        t = self.t
        if self.options.prune_flows:
            g = t.downlink_graph
            hg = t.host_downlink_graph
            g_edges = sorted(g.edges())
            hg_edges = sorted(hg.edges())
            reach = {h: nx.descendants(g, h) | {h} for h in self.H}
            back = {r: nx.ancestors(g, r) | {r} for r in self.R}
            for h in self.H:
                for r in self.R:
                    if self.d.demand(r) <= 0:
                        self.r_arcs[(h, r)] = []
                        continue
                    self.r_arcs[(h, r)] = [
                        (x, y) for x, y in g_edges if x in reach[h] and y in back[r]
                    ]
            h_reach = {h: nx.descendants(hg, h) | {h} for h in self.H}
            h_back = {h: nx.ancestors(hg, h) | {h} for h in self.H}
            for p in self.H:
                for q in self.H:
                    if p == q:
                        continue
                    self.t_arcs[(p, q)] = [
                        (x, y) for x, y in hg_edges if x in h_reach[p] and y in h_back[q]
                    ]
        else:
            arcs = t.arcs
            host_arcs = [(x, y) for x, y in arcs if x in self.host_set and y in self.host_set]
            for h in self.H:
                for r in self.R:
                    self.r_arcs[(h, r)] = list(arcs)
            for p in self.H:
                for q in self.H:
                    if p != q:
                        self.t_arcs[(p, q)] = list(host_arcs)

    # ------------------------------------------------------------------
    # 変数
    # ------------------------------------------------------------------
    def _add_variables(self) -> None:
        m, H, R, N = self.m, self.H, self.R, self.N
        wdm_kind = VarKind.INTEGER if self.options.integer_wdm else VarKind.CONTINUOUS

        for p in H:
            for h in H:
                m.add_variable("lamB", (p, h))
        for h in H:
            for r in R:
                m.add_variable("lamR", (h, r))
        for h in H:
            for r in R:
                m.add_variable("sigBr", (h, r), VarKind.BINARY)
        for h in H:
            m.add_variable("sigB", (h,), VarKind.BINARY)
        for p in H:
            for h in H:
                m.add_variable("sigEp", (p, h), VarKind.BINARY)
        for p in H:
            m.add_variable("sigE", (p,), VarKind.BINARY)
        for p in H:
            for q in H:
                if p != q:
                    m.add_variable("psi", (p, q), VarKind.BINARY)
        for h in H:
            m.add_variable("chi", (h,), VarKind.BINARY)
        for p in H:
            for q in H:
                if p != q:
                    m.add_variable("lamE", (p, q))
                    m.add_variable("lamT", (p, q))
        for (h, r), arcs in self.r_arcs.items():
            for x, y in arcs:
                m.add_variable("fR", (h, r, x, y))
        for (p, q), arcs in self.t_arcs.items():
            for x, y in arcs:
                m.add_variable("fT", (p, q, x, y))
        for h in H:
            m.add_variable("PsiB", (h,))
            m.add_variable("Psii", (h,), VarKind.INTEGER, 0.0, float(self.t.host_limit(h)))
            m.add_variable("Psif", (h,), VarKind.CONTINUOUS, 0.0, 1.0 - self.options.psi_f_margin)
        for i in N:
            for j in N:
                if i != j:
                    m.add_variable("Wv", (i, j), wdm_kind)
        for i in N:
            for j in N:
                if i == j:
                    continue
                for a, b in self.t.core_arcs:
                    m.add_variable("Wp", (i, j, a, b), wdm_kind)
        for a, b in self.t.core_arcs:
            m.add_variable("Wmn", (a, b), wdm_kind)
            m.add_variable("fib", (a, b), VarKind.INTEGER)
        for i in N:
            m.add_variable("Lam", (i,), wdm_kind)

    # ------------------------------------------------------------------
    # 目的関数
    # ------------------------------------------------------------------
    def _add_objective(self) -> None:
        m, p, t = self.m, self.p, self.t
        onu_coef = p.onu_max / p.onu_cap
        olt_coef = (p.olt_max - p.olt_idle) / p.olt_cap

        # RRH / ONU / OLT のアイドル分は定数項
        m.objective_constant = len(self.U) * p.rrh_power + len(self.L) * p.olt_idle

        for symbol, arcs_of in (("fR", self.r_arcs), ("fT", self.t_arcs)):
            for (s, d), arcs in arcs_of.items():
                for x, y in arcs:
                    kind = t.kind_of(x)
                    if kind == NodeKind.ONU:
                        m.add_objective(m.var(symbol, s, d, x, y), onu_coef)
                    elif kind == NodeKind.OLT:
                        m.add_objective(m.var(symbol, s, d, x, y), olt_coef)

        for i in self.N:
            m.add_objective(m.var("Lam", i), p.router_port)
        for a, b in t.core_arcs:
            per_wavelength = p.router_port + p.transponder + p.regenerator * t.regenerators(a, b)
            m.add_objective(m.var("Wmn", a, b), per_wavelength)
            m.add_objective(m.var("fib", a, b), p.edfa * edfa_count(t.distance(a, b), p.span_km))

        for h in self.H:
            m.add_objective(m.var("Psii", h), p.server_idle)
            m.add_objective(m.var("chi", h), p.server_idle)
            m.add_objective(m.var("Psif", h), p.server_max - p.server_idle)

    # ------------------------------------------------------------------
    # トラフィック
    # ------------------------------------------------------------------
    def _traffic_constraints(self) -> None:
        m, H, R, d = self.m, self.H, self.R, self.d
        for h in H:
            terms = [(m.var("lamB", p, h), 1.0) for p in H]
            terms += [(m.var("lamR", h, r), -d.alpha) for r in R]
            m.add_constraint("backhaul_split", row_name("backhaul_split", h=h), terms, Sense.EQ, 0.0)
        for r in R:
            terms = [(m.var("lamR", h, r), 1.0) for h in H]
            m.add_constraint("fronthaul_demand", row_name("fronthaul_demand", r=r), terms, Sense.EQ, d.demand(r))
        for p in H:
            for q in H:
                if p == q:
                    continue
                m.add_constraint(
                    "cnvm_traffic", row_name("cnvm_traffic", p=p, q=q),
                    [(m.var("lamE", p, q), 1.0), (m.var("psi", p, q), -d.nabla(p, q))],
                    Sense.EQ, 0.0,
                )
                m.add_constraint(
                    "host_traffic", row_name("host_traffic", p=p, q=q),
                    [
                        (m.var("lamT", p, q), 1.0),
                        (m.var("lamE", p, q), -1.0),
                        (m.var("lamB", p, q), -1.0),
                    ],
                    Sense.EQ, 0.0,
                )

    # ------------------------------------------------------------------
    # VM 配置の論理
    # ------------------------------------------------------------------
    def _placement_constraints(self) -> None:
        m, H, R = self.m, self.H, self.R
        beta, eta = m.beta, m.eta

        for h in H:
            for r in R:
                lam, sig = m.var("lamR", h, r), m.var("sigBr", h, r)
                m.add_constraint("bbu_link_on", row_name("bbu_link_on", h=h, r=r), [(lam, beta), (sig, -1.0)], Sense.GE)
                m.add_constraint("bbu_link_off", row_name("bbu_link_off", h=h, r=r), [(lam, 1.0), (sig, -beta)], Sense.LE)
        for h in H:
            lam = [(m.var("lamR", h, r), 1.0) for r in R]
            sig = m.var("sigB", h)
            m.add_constraint(
                "bbu_host_on", row_name("bbu_host_on", h=h),
                [(v, beta * c) for v, c in lam] + [(sig, -1.0)], Sense.GE,
            )
            m.add_constraint("bbu_host_off", row_name("bbu_host_off", h=h), lam + [(sig, -beta)], Sense.LE)

        for p in H:
            for h in H:
                lam, sig = m.var("lamB", p, h), m.var("sigEp", p, h)
                m.add_constraint("cnvm_link_on", row_name("cnvm_link_on", p=p, h=h), [(lam, beta), (sig, -1.0)], Sense.GE)
                m.add_constraint("cnvm_link_off", row_name("cnvm_link_off", p=p, h=h), [(lam, 1.0), (sig, -beta)], Sense.LE)
                m.add_constraint(
                    "cnvm_link_host", row_name("cnvm_link_host", p=p, h=h),
                    [(sig, 1.0), (m.var("sigE", p), -1.0)], Sense.LE,
                )
        for p in H:
            sig = m.var("sigE", p)
            out = [(m.var("lamB", p, h), 1.0) for h in H]
            m.add_constraint(
                "cnvm_host_on", row_name("cnvm_host_on", p=p),
                [(sig, 1.0)] + [(v, -eta * c) for v, c in out], Sense.GE,
            )
            m.add_constraint(
                "cnvm_host_off", row_name("cnvm_host_off", p=p),
                [(sig, 1.0)] + [(v, -c) for v, c in out], Sense.LE, 1.0 - eta,
            )

        for p in H:
            for q in H:
                if p == q:
                    continue
                psi = m.var("psi", p, q)
                sp, sq = m.var("sigE", p), m.var("sigE", q)
                m.add_constraint("pair_first", row_name("pair_first", p=p, q=q), [(psi, 1.0), (sp, -1.0)], Sense.LE)
                m.add_constraint("pair_second", row_name("pair_second", p=p, q=q), [(psi, 1.0), (sq, -1.0)], Sense.LE)
                m.add_constraint(
                    "pair_both", row_name("pair_both", p=p, q=q),
                    [(psi, 1.0), (sp, -1.0), (sq, -1.0)], Sense.GE, -1.0,
                )

        for h in H:
            chi, sb, se = m.var("chi", h), m.var("sigB", h), m.var("sigE", h)
            m.add_constraint("any_vm_upper", row_name("any_vm_upper", h=h), [(chi, 1.0), (sb, -1.0), (se, -1.0)], Sense.LE)
            m.add_constraint("any_vm_bbu", row_name("any_vm_bbu", h=h), [(chi, 1.0), (sb, -1.0)], Sense.GE)
            m.add_constraint("any_vm_cnvm", row_name("any_vm_cnvm", h=h), [(chi, 1.0), (se, -1.0)], Sense.GE)

    # ------------------------------------------------------------------
    # フロー保存
    # ------------------------------------------------------------------
    def _flow_conservation(self) -> None:
        m = self.m
        for (h, r), arcs in self.r_arcs.items():
            self._conservation("fronthaul_flow", "fR", "lamR", h, r, arcs, ("h", "r"))
        for (p, q), arcs in self.t_arcs.items():
            self._conservation("host_flow", "fT", "lamT", p, q, arcs, ("p", "q"))

    def _conservation(
        self,
        family: str,
        flow: str,
        demand: str,
        s: int,
        d: int,
        arcs: List[Arc],
        roles: Tuple[str, str],
    ) -> None:
        m = self.m
        rows: Dict[int, List[Tuple[str, float]]] = {}
        for x, y in arcs:
            v = m.var(flow, s, d, x, y)
            rows.setdefault(x, []).append((v, 1.0))
            rows.setdefault(y, []).append((v, -1.0))
        lam = m.var(demand, s, d)
        rows.setdefault(s, []).append((lam, -1.0))
        rows.setdefault(d, []).append((lam, 1.0))
        for x in sorted(rows):
            name = f"{family}_{roles[0]}{s}_{roles[1]}{d}_x{x}"
            m.add_constraint(family, name, rows[x], Sense.EQ, 0.0)

    # ------------------------------------------------------------------
    # ワークロードとサーバー容量
    # ------------------------------------------------------------------
    def _workload_constraints(self) -> None:
        m, p, r = self.m, self.p, self.r
        for h in self.H:
            m.add_constraint(
                "bbu_workload", row_name("bbu_workload", h=h),
                [(m.var("PsiB", h), 1.0)]
                + [(m.var("lamR", h, rr), -self.psi_x / r.cpri_rate) for rr in self.R],
                Sense.EQ,
            )
            m.add_constraint(
                "server_count", row_name("server_count", h=h),
                [
                    (m.var("Psii", h), 1.0),
                    (m.var("Psif", h), 1.0),
                    (m.var("PsiB", h), -1.0 / p.server_gops),
                    (m.var("sigE", h), -p.cnvm_gops / p.server_gops),
                ],
                Sense.EQ,
            )
            limit = self.t.host_limit(h)
            m.add_constraint(
                "server_power_cap", row_name("server_power_cap", h=h),
                [
                    (m.var("Psii", h), p.server_idle),
                    (m.var("chi", h), p.server_idle),
                    (m.var("Psif", h), p.server_max - p.server_idle),
                ],
                Sense.LE, p.host_cap(h, limit),
            )
            m.add_constraint(
                "server_limit", row_name("server_limit", h=h),
                [(m.var("Psii", h), 1.0), (m.var("chi", h), 1.0)],
                Sense.LE, float(limit),
            )

    # ------------------------------------------------------------------
    # GPON リンク: 上り方向のフローを禁止
    # ------------------------------------------------------------------
    def _gpon_constraints(self) -> None:
        m, t = self.m, self.t
        upward = (
            ("onu_up_fronthaul", "fR", self.r_arcs, NodeKind.ONU, NodeKind.OLT),
            ("onu_up_host", "fT", self.t_arcs, NodeKind.ONU, NodeKind.OLT),
            ("olt_up_fronthaul", "fR", self.r_arcs, NodeKind.OLT, NodeKind.CORE),
            ("olt_up_host", "fT", self.t_arcs, NodeKind.OLT, NodeKind.CORE),
        )
        for family, symbol, arcs_of, tail, head in upward:
            rows: Dict[int, List[Tuple[str, float]]] = {}
            for (s, d), arcs in arcs_of.items():
                for x, y in arcs:
                    if t.kind_of(x) == tail and t.kind_of(y) == head:
                        rows.setdefault(x, []).append((m.var(symbol, s, d, x, y), 1.0))
            for i in sorted(rows):
                m.add_constraint(family, row_name(family, i=i), rows[i], Sense.LE, 0.0)

    # ------------------------------------------------------------------
    # IP over WDM
    # ------------------------------------------------------------------
    def _wdm_constraints(self) -> None:
        m, t, p, N = self.m, self.t, self.p, self.N
        arc_terms: Dict[Arc, List[Tuple[str, float]]] = {}
        agg_terms: Dict[int, List[Tuple[str, float]]] = {i: [] for i in N}
        for symbol, arcs_of in (("fR", self.r_arcs), ("fT", self.t_arcs)):
            for (s, d), arcs in arcs_of.items():
                for x, y in arcs:
                    if t.kind_of(x) != NodeKind.CORE:
                        continue
                    v = m.var(symbol, s, d, x, y)
                    if t.kind_of(y) == NodeKind.CORE:
                        arc_terms.setdefault((x, y), []).append((v, 1.0))
                    elif t.kind_of(y) == NodeKind.OLT:
                        agg_terms[x].append((v, 1.0))

        for i in N:
            for j in N:
                if i == j:
                    continue
                m.add_constraint(
                    "virtual_capacity", row_name("virtual_capacity", i=i, j=j),
                    arc_terms.get((i, j), []) + [(m.var("Wv", i, j), -p.wavelength_cap)],
                    Sense.LE,
                )

        out_arcs: Dict[int, List[Arc]] = {i: [] for i in N}
        in_arcs: Dict[int, List[Arc]] = {i: [] for i in N}
        for a, b in t.core_arcs:
            out_arcs[a].append((a, b))
            in_arcs[b].append((a, b))
        for i in N:
            for j in N:
                if i == j:
                    continue
                for node in N:
                    terms = [(m.var("Wp", i, j, a, b), 1.0) for a, b in out_arcs[node]]
                    terms += [(m.var("Wp", i, j, a, b), -1.0) for a, b in in_arcs[node]]
                    if node == i:
                        terms.append((m.var("Wv", i, j), -1.0))
                    elif node == j:
                        terms.append((m.var("Wv", i, j), 1.0))
                    m.add_constraint("lightpath_flow", row_name("lightpath_flow", i=i, j=j, m=node), terms, Sense.EQ)

        for a, b in t.core_arcs:
            lightpaths = [
                (m.var("Wp", i, j, a, b), 1.0) for i in N for j in N if i != j
            ]
            m.add_constraint(
                "fiber_capacity", row_name("fiber_capacity", m=a, n=b),
                lightpaths + [(m.var("fib", a, b), -float(p.wavelengths_per_fiber))],
                Sense.LE,
            )
            m.add_constraint(
                "wavelength_count", row_name("wavelength_count", m=a, n=b),
                [(m.var("Wmn", a, b), 1.0)] + [(v, -c) for v, c in lightpaths],
                Sense.EQ,
            )

        sense = Sense.GE if self.options.integer_wdm else Sense.EQ
        for i in N:
            m.add_constraint(
                "router_ports", row_name("router_ports", m=i),
                [(m.var("Lam", i), p.wavelength_cap)] + [(v, -c) for v, c in agg_terms[i]],
                sense,
            )

    def _check_capacity(self) -> None:
        need = self.d.total_fronthaul / self.r.cpri_rate * self.psi_x
        if need > 0:
            need += self.p.cnvm_gops
        have = sum(self.t.host_limit(h) for h in self.H) * self.p.server_gops
        if need >= have:
            msg = f"workload {need:.1f} GOPS exceeds total hosting capacity {have:.1f} GOPS"
            self.m.warnings.append(msg)
            logger.warning(msg)


def build_model(
    t: Topology,
    d: DemandSet,
    p: PowerParams,
    r: RadioParams,
    options: Optional[BuildOptions] = None,
) -> MilpModel:
    return ModelBuilder(t, d, p, r, options).build()


# ----------------------------------------------------------------------
# 解の変換と検証
# ----------------------------------------------------------------------
def _field_key(key: Tuple[int, ...]):
    return key[0] if len(key) == 1 else key


def decode_solution(m: MilpModel, assignment: Mapping[str, float], tol: float = 1e-6) -> Solution:
    """ソルバーの割り当てを Solution に変換する。整数変数は丸める。"""
    sol = Solution()
    snapped: Dict[str, float] = {}
    for name, var in m.variables.items():
        if name not in assignment:
            raise DecodeError(f"assignment is missing variable {name}")
        value = float(assignment[name])
        if var.kind in (VarKind.BINARY, VarKind.INTEGER):
            rounded = round(value)
            if abs(value - rounded) > tol:
                raise DecodeError(f"{name} = {value} is not integral")
            if var.kind == VarKind.BINARY and rounded not in (0, 1):
                raise DecodeError(f"{name} = {value} is not binary")
            value = int(rounded)
        else:
            if abs(value) <= 1e-9:
                value = 0.0
            if var.upper is not None and value > var.upper:
                value = var.upper
            value = max(value, var.lower)
        snapped[name] = value
        if value:
            getattr(sol, SOLUTION_FIELDS[var.symbol])[_field_key(var.key)] = value
    sol.objective = m.evaluate_objective(snapped)
    return sol


def solution_to_assignment(m: MilpModel, s: Solution) -> Dict[str, float]:
    """decode_solution の逆変換。モデルに無い値は無視する。"""
    out: Dict[str, float] = {}
    for name, var in m.variables.items():
        values = getattr(s, SOLUTION_FIELDS[var.symbol])
        out[name] = float(values.get(_field_key(var.key), 0))
    return out


def unmodelled_values(m: MilpModel, s: Solution) -> List[str]:
    """モデルに対応する変数が無い非ゼロ値"""
    out = []
    for symbol, field_name in SOLUTION_FIELDS.items():
        for key, value in getattr(s, field_name).items():
            k = key if isinstance(key, tuple) else (key,)
            if value and not m.has(symbol, *k):
                out.append(var_name(symbol, k))
    return sorted(out)


@dataclass
class ResidualReport:
    residuals: Dict[str, float] = field(default_factory=dict)
    tol: float = 1e-6

    @property
    def max_violation(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol

    def violated(self, tol: Optional[float] = None) -> List[str]:
        limit = self.tol if tol is None else tol
        return sorted(name for name, v in self.residuals.items() if v > limit)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_violation": self.max_violation,
            "violated": self.violated(),
        }


def verify_solution(m: MilpModel, s: Solution, tol: float = 1e-6) -> ResidualReport:
    """制約ごとの残差を計算する（変数の範囲と整数性も含む）"""
    values = solution_to_assignment(m, s)
    report = ResidualReport(tol=tol)
    for c in m.constraints:
        lhs = sum(coef * values[var] for var, coef in c.terms)
        if c.sense == Sense.LE:
            residual = max(0.0, lhs - c.rhs)
        elif c.sense == Sense.GE:
            residual = max(0.0, c.rhs - lhs)
        else:
            residual = abs(lhs - c.rhs)
        # 右辺の大きさに応じた相対誤差
        scale = max(1.0, abs(c.rhs))
        report.residuals[c.name] = residual / scale
    for name, var in m.variables.items():
        v = values[name]
        excess = max(0.0, var.lower - v)
        if var.upper is not None:
            excess = max(excess, v - var.upper)
        if var.kind != VarKind.CONTINUOUS:
            excess = max(excess, abs(v - round(v)))
        if excess:
            report.residuals[f"bound_{name}"] = excess
    for name in unmodelled_values(m, s):
        report.residuals[f"unmodelled_{name}"] = 1.0
    return report
