"""Three-tier evaluation network: core mesh, GPON trees and RRH leaves."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import TopologyError

logger = logging.getLogger("nfvpower.topology")

DEFAULT_HOST_LIMITS = {"RRH": 0, "ONU": 1, "OLT": 5, "CORE": 20}

# 番号はコア → OLT → ONU → RRH の順に振る
_KIND_ORDER = ("CORE", "OLT", "ONU", "RRH")


class NodeKind(str, Enum):
    RRH = "RRH"
    ONU = "ONU"
    OLT = "OLT"
    CORE = "CORE"


@dataclass(frozen=True, order=True)
class NodeId:
    index: int
    kind: NodeKind = field(compare=False)

    def __str__(self) -> str:
        return f"{self.kind.value}{self.index}"


@dataclass(frozen=True)
class CoreLink:
    a: int
    b: int
    km: float
    regenerators: int = 0


@dataclass(frozen=True)
class Topology:
    """構築後は不変。インデックスは種別をまたいで一意。"""

    nodes: Tuple[NodeId, ...]
    tree_edges: Tuple[Tuple[int, int], ...]  # (child, parent)
    core_links: Tuple[CoreLink, ...]
    host_limits: Mapping[int, int]

    # ------------------------------------------------------------------
    # 基本参照
    # ------------------------------------------------------------------
    @cached_property
    def _by_index(self) -> Dict[int, NodeId]:
        return {n.index: n for n in self.nodes}

    @cached_property
    def _parent(self) -> Dict[int, int]:
        return {child: parent for child, parent in self.tree_edges}

    @cached_property
    def _children(self) -> Dict[int, List[int]]:
        children: Dict[int, List[int]] = {n.index: [] for n in self.nodes}
        for child, parent in self.tree_edges:
            children.setdefault(parent, []).append(child)
        for lst in children.values():
            lst.sort()
        return children

    def node(self, index: int) -> NodeId:
        try:
            return self._by_index[index]
        except KeyError:
            raise TopologyError(f"unknown node index {index}") from None

    def kind_of(self, index: int) -> NodeKind:
        return self.node(index).kind

    def __contains__(self, index: object) -> bool:
        return index in self._by_index

    def of_kind(self, kind: NodeKind) -> List[int]:
        return sorted(n.index for n in self.nodes if n.kind == kind)

    @cached_property
    def cores(self) -> List[int]:
        return self.of_kind(NodeKind.CORE)

    @cached_property
    def olts(self) -> List[int]:
        return self.of_kind(NodeKind.OLT)

    @cached_property
    def onus(self) -> List[int]:
        return self.of_kind(NodeKind.ONU)

    @cached_property
    def rrhs(self) -> List[int]:
        return self.of_kind(NodeKind.RRH)

    @cached_property
    def hosts(self) -> List[int]:
        """H: サーバーを置けるノード（ONU, OLT, CORE）"""
        return sorted(
            n.index for n in self.nodes
            if n.kind != NodeKind.RRH and self.host_limits.get(n.index, 0) > 0
        )

    def host_limit(self, index: int) -> int:
        return int(self.host_limits.get(index, 0))

    def parent_of(self, index: int) -> Optional[int]:
        return self._parent.get(index)

    def children_of(self, index: int) -> List[int]:
        return list(self._children.get(index, []))

    def onu_of(self, rrh: int) -> int:
        return self._ancestor_of_kind(rrh, NodeKind.ONU)

    def parent_olt(self, index: int) -> int:
        return self._ancestor_of_kind(index, NodeKind.OLT)

    def parent_core(self, index: int) -> int:
        """ツリー上でそのノードを含むコアノード（コア自身はそのまま）"""
        return self._ancestor_of_kind(index, NodeKind.CORE)

    def _ancestor_of_kind(self, index: int, kind: NodeKind) -> int:
        cur: Optional[int] = index
        while cur is not None:
            if self.kind_of(cur) == kind:
                return cur
            cur = self._parent.get(cur)
        raise TopologyError(f"node {index} has no {kind.value} ancestor")

    # ------------------------------------------------------------------
    # 隣接関係
    # ------------------------------------------------------------------
    def neighbors(self, index: int) -> List[int]:
        """TN_x: 物理的な隣接ノード"""
        self.node(index)
        return sorted(self.graph.neighbors(index))

    def core_neighbors(self, m: int) -> List[int]:
        """NN_m: コアメッシュ上の隣接ノード"""
        if self.kind_of(m) != NodeKind.CORE:
            raise TopologyError(f"node {m} is not a core node")
        return sorted(n for n in self.graph.neighbors(m) if self.kind_of(n) == NodeKind.CORE)

    @cached_property
    def _core_link_map(self) -> Dict[Tuple[int, int], CoreLink]:
        out: Dict[Tuple[int, int], CoreLink] = {}
        for link in self.core_links:
            out[(link.a, link.b)] = link
            out[(link.b, link.a)] = link
        return out

    def distance(self, m: int, n: int) -> float:
        """D_mn (km)"""
        try:
            return self._core_link_map[(m, n)].km
        except KeyError:
            raise TopologyError(f"no core link between {m} and {n}") from None

    def regenerators(self, m: int, n: int) -> int:
        """NG_mn"""
        try:
            return self._core_link_map[(m, n)].regenerators
        except KeyError:
            raise TopologyError(f"no core link between {m} and {n}") from None

    @cached_property
    def core_arcs(self) -> List[Tuple[int, int]]:
        """コアリンクの有向アーク（両方向）"""
        arcs = set()
        for link in self.core_links:
            arcs.add((link.a, link.b))
            arcs.add((link.b, link.a))
        return sorted(arcs)

    @cached_property
    def arcs(self) -> List[Tuple[int, int]]:
        """全リンクの有向アーク"""
        return sorted(self.graph.to_directed().edges())

    # ------------------------------------------------------------------
    # グラフ表現
    # ------------------------------------------------------------------
    @cached_property
    def graph(self) -> nx.Graph:
        g = nx.Graph()
        for n in self.nodes:
            g.add_node(n.index, kind=n.kind)
        for child, parent in self.tree_edges:
            g.add_edge(child, parent, km=0.0)
        for link in self.core_links:
            g.add_edge(link.a, link.b, km=link.km)
        return g

    @cached_property
    def downlink_graph(self) -> nx.DiGraph:
        """下りコモディティが使えるアーク: コア間両方向, CORE→OLT, OLT→ONU, ONU→RRH"""
        g = nx.DiGraph()
        for n in self.nodes:
            g.add_node(n.index)
        for child, parent in self.tree_edges:
            g.add_edge(parent, child, km=0.0)
        for link in self.core_links:
            g.add_edge(link.a, link.b, km=link.km)
            g.add_edge(link.b, link.a, km=link.km)
        return g

    @cached_property
    def host_downlink_graph(self) -> nx.DiGraph:
        """ホスト間トラフィック用（RRHを除いた下りグラフ）"""
        return self.downlink_graph.subgraph(self.hosts).copy()

    def to_dict(self) -> dict:
        return {
            "nodes": [{"index": n.index, "kind": n.kind.value} for n in self.nodes],
            "tree_edges": [list(e) for e in self.tree_edges],
            "core_links": [
                {"a": l.a, "b": l.b, "km": l.km, "regenerators": l.regenerators}
                for l in self.core_links
            ],
            "host_limits": {str(k): v for k, v in sorted(self.host_limits.items())},
        }


# ----------------------------------------------------------------------
# 構築
# ----------------------------------------------------------------------
def default_core_links() -> List[CoreLink]:
    """5ノードのコア距離表（実験をすぐ回すための仮の値）"""
    return [
        CoreLink(0, 1, 1050.0),
        CoreLink(1, 2, 1500.0),
        CoreLink(2, 3, 1200.0),
        CoreLink(3, 4, 900.0),
        CoreLink(4, 0, 1300.0),
        CoreLink(1, 3, 2400.0),
    ]


def build_tiered_topology(
    core_nodes: int,
    gpons_per_core: int,
    onus_per_gpon: int,
    core_links: Optional[Iterable[CoreLink]] = None,
    host_limits: Optional[Mapping[str, int]] = None,
) -> Topology:
    """コア × GPON × ONU のツリーを作る。各ONUにRRHを1つ接続する。

    core_links のインデックスはコアノード番号（0..core_nodes-1）。
    """
    if core_nodes < 1 or gpons_per_core < 1 or onus_per_gpon < 1:
        raise TopologyError("core_nodes, gpons_per_core and onus_per_gpon must be >= 1")

    if core_links is None:
        core_links = default_core_links() if core_nodes == 5 else []
    links = list(core_links)

    limits = dict(DEFAULT_HOST_LIMITS)
    if host_limits:
        for kind, value in host_limits.items():
            if kind not in limits:
                raise TopologyError(f"unknown node kind in host_limits: {kind}")
            if kind == "RRH" and value != 0:
                raise TopologyError("RRH nodes cannot host servers")
            if value < 0:
                raise TopologyError(f"negative host limit for {kind}")
            limits[kind] = int(value)

    n_olt = core_nodes * gpons_per_core
    n_onu = n_olt * onus_per_gpon
    core_ids = list(range(core_nodes))
    olt_ids = list(range(core_nodes, core_nodes + n_olt))
    onu_ids = list(range(core_nodes + n_olt, core_nodes + n_olt + n_onu))
    rrh_ids = list(range(core_nodes + n_olt + n_onu, core_nodes + n_olt + 2 * n_onu))

    nodes: List[NodeId] = []
    nodes += [NodeId(i, NodeKind.CORE) for i in core_ids]
    nodes += [NodeId(i, NodeKind.OLT) for i in olt_ids]
    nodes += [NodeId(i, NodeKind.ONU) for i in onu_ids]
    nodes += [NodeId(i, NodeKind.RRH) for i in rrh_ids]

    tree: List[Tuple[int, int]] = []
    for k, olt in enumerate(olt_ids):
        tree.append((olt, core_ids[k // gpons_per_core]))
    for k, onu in enumerate(onu_ids):
        tree.append((onu, olt_ids[k // onus_per_gpon]))
    for onu, rrh in zip(onu_ids, rrh_ids):
        tree.append((rrh, onu))

    mapped: List[CoreLink] = []
    for link in links:
        if link.a not in core_ids or link.b not in core_ids or link.a == link.b:
            raise TopologyError(f"core link ({link.a}, {link.b}) references an invalid core node")
        mapped.append(CoreLink(core_ids[link.a], core_ids[link.b], float(link.km), int(link.regenerators)))

    core_graph = nx.Graph()
    core_graph.add_nodes_from(core_ids)
    core_graph.add_edges_from((l.a, l.b) for l in mapped)
    if not nx.is_connected(core_graph):
        raise TopologyError("core distance table does not connect every core node")

    host_map = {n.index: limits[n.kind.value] for n in nodes}
    topo = Topology(
        nodes=tuple(nodes),
        tree_edges=tuple(tree),
        core_links=tuple(mapped),
        host_limits=host_map,
    )
    logger.debug(
        f"topology built: {core_nodes} cores, {n_olt} OLTs, {n_onu} ONUs, {len(mapped)} core links"
    )
    return topo


class CoreLinkSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: int = Field(ge=0)
    b: int = Field(ge=0)
    km: float
    regenerators: int = 0


class TopologyFile(BaseModel):
    """トポロジJSONファイルの形式"""

    model_config = ConfigDict(extra="forbid")

    core_nodes: int = Field(ge=1)
    gpons_per_core: int = Field(ge=1)
    onus_per_gpon: int = Field(ge=1)
    core_links: List[CoreLinkSpec] = Field(default_factory=list)
    host_limits: Optional[Dict[str, int]] = None

    def build(self) -> Topology:
        for link in self.core_links:
            if link.km <= 0:
                raise TopologyError(f"core link ({link.a}, {link.b}) has non-positive distance")
            if link.regenerators < 0:
                raise TopologyError(f"core link ({link.a}, {link.b}) has negative regenerator count")
        return build_tiered_topology(
            self.core_nodes,
            self.gpons_per_core,
            self.onus_per_gpon,
            [CoreLink(l.a, l.b, l.km, l.regenerators) for l in self.core_links],
            self.host_limits,
        )


def load_topology(path: str | Path) -> Topology:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        layout = TopologyFile.model_validate(raw)
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise TopologyError(f"cannot load topology {path}: {e}") from e
    return layout.build()


def default_topology() -> Topology:
    """5コア / 10 OLT / 20 ONU / 20 RRH の評価ネットワーク"""
    return build_tiered_topology(5, 2, 2, default_core_links())


# ----------------------------------------------------------------------
# 経路
# ----------------------------------------------------------------------
def shortest_path(
    t: Topology,
    src: int,
    dst: int,
    metric: str = "hops",
    graph: Optional[nx.Graph] = None,
) -> Optional[List[int]]:
    """最短経路。同長の場合はノード番号列の辞書順で最小のもの。到達不能なら None。"""
    if src not in t or dst not in t:
        raise TopologyError(f"unknown node in path query: {src} -> {dst}")
    if metric not in ("hops", "km"):
        raise TopologyError(f"unknown metric {metric}")
    g = t.graph if graph is None else graph
    if src == dst:
        return [src]
    if src not in g or dst not in g:
        return None
    weight = None if metric == "hops" else "km"
    try:
        return min(nx.all_shortest_paths(g, src, dst, weight=weight))
    except nx.NetworkXNoPath:
        return None


def hop_distance(t: Topology, src: int, dst: int, graph: Optional[nx.Graph] = None) -> Optional[int]:
    path = shortest_path(t, src, dst, "hops", graph)
    return None if path is None else len(path) - 1


# ----------------------------------------------------------------------
# 検証
# ----------------------------------------------------------------------
def validate(t: Topology) -> List[str]:
    """不変条件の違反を列挙する。空リストなら妥当。"""
    problems: List[str] = []

    seen: Dict[int, int] = {}
    for n in t.nodes:
        seen[n.index] = seen.get(n.index, 0) + 1
    for idx, count in sorted(seen.items()):
        if count > 1:
            problems.append(f"node index {idx} is used {count} times")

    kinds = {n.index: n.kind for n in t.nodes}
    parents: Dict[int, List[int]] = {}
    children: Dict[int, List[int]] = {}
    for child, parent in t.tree_edges:
        if child not in kinds or parent not in kinds:
            problems.append(f"tree edge ({child}, {parent}) references an unknown node")
            continue
        parents.setdefault(child, []).append(parent)
        children.setdefault(parent, []).append(child)

    expected_parent = {
        NodeKind.RRH: NodeKind.ONU,
        NodeKind.ONU: NodeKind.OLT,
        NodeKind.OLT: NodeKind.CORE,
    }
    for idx, kind in sorted(kinds.items()):
        if kind in expected_parent:
            ps = [p for p in parents.get(idx, []) if kinds[p] == expected_parent[kind]]
            if len(parents.get(idx, [])) != 1 or len(ps) != 1:
                problems.append(
                    f"{kind.value}{idx} must have exactly one parent {expected_parent[kind].value}"
                )
        if kind == NodeKind.ONU:
            rrhs = [c for c in children.get(idx, []) if kinds[c] == NodeKind.RRH]
            if len(rrhs) != 1:
                problems.append(f"ONU{idx} must carry exactly one RRH (found {len(rrhs)})")

    link_km: Dict[Tuple[int, int], float] = {}
    for link in t.core_links:
        if kinds.get(link.a) != NodeKind.CORE or kinds.get(link.b) != NodeKind.CORE:
            problems.append(f"core link ({link.a}, {link.b}) must join two core nodes")
            continue
        if link.km <= 0:
            problems.append(f"core link ({link.a}, {link.b}) has non-positive distance {link.km}")
        if link.regenerators < 0:
            problems.append(f"core link ({link.a}, {link.b}) has negative regenerator count")
        back = link_km.get((link.b, link.a))
        if back is not None and back != link.km:
            problems.append(f"core link ({link.a}, {link.b}) distance is not symmetric")
        link_km[(link.a, link.b)] = link.km

    core_ids = [i for i, k in kinds.items() if k == NodeKind.CORE]
    if not core_ids:
        problems.append("topology has no core node")
    else:
        cg = nx.Graph()
        cg.add_nodes_from(core_ids)
        cg.add_edges_from(
            (l.a, l.b) for l in t.core_links if l.a in cg and l.b in cg
        )
        if not nx.is_connected(cg):
            problems.append("core graph is not connected")

    for idx, kind in sorted(kinds.items()):
        limit = t.host_limits.get(idx, 0)
        if limit < 0:
            problems.append(f"{kind.value}{idx} has negative host limit")
        if kind == NodeKind.RRH and limit != 0:
            problems.append(f"RRH{idx} must not host servers")

    return problems


def host_limit_total(t: Topology, hosts: Sequence[int] | None = None) -> int:
    hosts = t.hosts if hosts is None else hosts
    return sum(t.host_limit(h) for h in hosts)
