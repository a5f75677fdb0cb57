"""LTE / CPRI rate chain, baseband workload model and demand generation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Tuple

import numpy as np

from .errors import DemandError, ParameterError
from .params import RadioParams
from .topology import NodeKind, Topology
from .utils import clamp, round_half_up, sha256_digest

logger = logging.getLogger("nfvpower.radio")

# CPRI の制御ワード 1 / 16 ワード分のフレーミング
CPRI_FRAMING = 16 / 15

# 1日の平均ユーザー数プロファイル（0:00 から 1.5 時間刻み、17 点）。
# 近似値で、正確な値ではない（実験設定の profile で上書きできる）。
DEFAULT_DAILY_PROFILE: Tuple[float, ...] = (
    0.55, 0.40, 0.28, 0.20, 0.18, 0.22, 0.40, 0.58, 0.70,
    0.72, 0.75, 0.80, 0.88, 0.97, 1.00, 0.85, 0.60,
)
SLOT_MINUTES = 90

# ∇ を張るホストの範囲: core はコア層同士、all は全ホスト対
InterTrafficScope = Literal["core", "all"]


# ----------------------------------------------------------------------
# レートチェーン
# ----------------------------------------------------------------------
def sampling_frequency(radio_bw: float, subcarrier_bw: float = 15e3) -> float:
    """サンプリング周波数 (Hz): サブキャリア帯域 × (帯域比より大きい最小の2冪)"""
    if radio_bw <= 0 or subcarrier_bw <= 0:
        raise ParameterError("bandwidths must be positive")
    ratio = radio_bw / subcarrier_bw
    fft = 1
    while fft <= ratio:
        fft *= 2
    return subcarrier_bw * fft


def lte_mac_rate(p: RadioParams, with_efficiency: bool = True) -> float:
    """1 アンテナストリームあたりの LTE MAC レート (Gbps)"""
    bits_per_slot = p.prb_total * 12 * p.symbols_per_slot * p.mod_bits
    rate = bits_per_slot / p.slot_duration / 1e9
    if with_efficiency:
        rate *= p.system_efficiency
    return rate


def iq_rate(M: float, fs: float) -> float:
    """IQ サンプルレート (Gbps)"""
    if M < 0:
        raise ParameterError("IQ sample width must be non-negative")
    return 2 * M * fs / 1e9


def cpri_rate(M: float, fs: float, coding: float) -> float:
    """CPRI ラインレート (Gbps): IQ × 16/15 × ライン符号化"""
    if coding < 1:
        raise ParameterError("line coding ratio must be >= 1")
    return iq_rate(M, fs) * CPRI_FRAMING * coding


def backhaul_fronthaul_ratio(backhaul: float, fronthaul: float) -> float:
    if fronthaul <= 0:
        raise DemandError("fronthaul rate must be positive")
    return backhaul / fronthaul


def bbu_workload_per_user(A: float, M: float, C: float, L: float, R: float) -> float:
    """ユーザーあたりのベースバンド処理量 (GOPS)"""
    if min(A, M, C, L, R) < 0:
        raise ParameterError("workload inputs must be non-negative")
    return (30 * A + 10 * A ** 2 + 20 * (M / 6) * C * L) * R / 50


def max_cell_workload(a: float, q: float, l: float, y: float) -> float:
    """Ψ^X: 全負荷 RRH の BBU 処理量 (GOPS)"""
    return 30 * a + 10 * a ** 2 + 20 * q * l * y


def rrh_demand(users: int, pb: int, n: int, cp: float) -> float:
    """RRH の下りフロントホール需要 (Gbps)"""
    if users < 0 or users * pb > n:
        raise DemandError(f"{users} users with {pb} PRBs each overload a {n}-PRB cell")
    if n <= 0:
        return 0.0
    return pb / n * cp * users


def default_alpha(p: RadioParams) -> float:
    fs = sampling_frequency(p.radio_bw, p.subcarrier_bw)
    return backhaul_fronthaul_ratio(lte_mac_rate(p), cpri_rate(p.iq_width, fs, p.line_coding))


def rrh_workload(demand: float, p: RadioParams) -> float:
    """Ψ_r: 需要に比例した BBU 処理量 (GOPS)"""
    psi_x = max_cell_workload(p.antennas, p.mod_bits, p.line_coding, p.mimo_layers)
    return demand / p.cpri_rate * psi_x


def rate_chain(p: RadioParams) -> Dict[str, float]:
    """レートチェーンの中間値をまとめて返す（Gbps / Hz / GOPS）"""
    fs = sampling_frequency(p.radio_bw, p.subcarrier_bw)
    mac = lte_mac_rate(p)
    cpri = cpri_rate(p.iq_width, fs, p.line_coding)
    return {
        "sampling_frequency_hz": fs,
        "mac_rate_raw_gbps": lte_mac_rate(p, with_efficiency=False),
        "mac_rate_gbps": mac,
        "mac_rate_mimo_gbps": mac * p.mimo_layers,
        "iq_rate_gbps": iq_rate(p.iq_width, fs),
        "cpri_rate_gbps": cpri,
        "alpha": backhaul_fronthaul_ratio(mac, cpri),
        "max_cell_workload_gops": max_cell_workload(
            p.antennas, p.mod_bits, p.line_coding, p.mimo_layers
        ),
        "workload_per_full_cell_gops": bbu_workload_per_user(
            p.antennas, p.mod_bits, p.code_rate, p.mimo_layers, p.prb_total
        ),
    }


# ----------------------------------------------------------------------
# 需要
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class DemandSet:
    users: Dict[int, int]
    demands: Dict[int, float]
    alpha: float
    inter_traffic: Dict[Tuple[int, int], float] = field(default_factory=dict)
    tau: float = 0.0
    profile_fraction: float = 1.0
    seed: int = 0
    scope: InterTrafficScope = "core"

    def demand(self, rrh: int) -> float:
        return self.demands.get(rrh, 0.0)

    def nabla(self, p: int, q: int) -> float:
        return self.inter_traffic.get((p, q), 0.0)

    @property
    def total_fronthaul(self) -> float:
        return sum(self.demands.values())

    @property
    def total_backhaul(self) -> float:
        return self.alpha * self.total_fronthaul

    @property
    def active_rrhs(self) -> List[int]:
        return sorted(r for r, v in self.demands.items() if v > 0)

    def to_dict(self) -> dict:
        return {
            "users": {str(k): v for k, v in sorted(self.users.items())},
            "demands": {str(k): v for k, v in sorted(self.demands.items())},
            "alpha": self.alpha,
            "inter_traffic": [
                {"p": p, "q": q, "gbps": v} for (p, q), v in sorted(self.inter_traffic.items())
            ],
            "tau": self.tau,
            "inter_traffic_scope": self.scope,
            "profile_fraction": self.profile_fraction,
            "seed": self.seed,
        }

    def digest(self) -> str:
        return sha256_digest(self.to_dict())

    def users_digest(self) -> str:
        """ユーザー数だけのハッシュ（τ に依存しない）"""
        return sha256_digest({str(k): v for k, v in sorted(self.users.items())})

    def with_tau(self, t: Topology, tau: float) -> "DemandSet":
        return DemandSet(
            users=self.users,
            demands=self.demands,
            alpha=self.alpha,
            inter_traffic=inter_traffic_matrix(t, self.total_backhaul, tau, self.scope),
            tau=tau,
            profile_fraction=self.profile_fraction,
            seed=self.seed,
            scope=self.scope,
        )

    def without_inter_traffic(self) -> "DemandSet":
        return DemandSet(
            users=self.users,
            demands=self.demands,
            alpha=self.alpha,
            inter_traffic={},
            tau=0.0,
            profile_fraction=self.profile_fraction,
            seed=self.seed,
            scope=self.scope,
        )


def inter_traffic_matrix(
    t: Topology,
    total_backhaul: float,
    tau: float,
    scope: InterTrafficScope = "core",
) -> Dict[Tuple[int, int], float]:
    """∇: ホストの順序対ごとに τ × 総バックホール。

    scope="core" はコア層ホスト同士だけ、scope="all" は ONU / OLT を含む全ホスト対。
    GPON 区間は上り禁止なので、"all" では到達できない対に CNVM を同時に置けなくなる。
    """
    if not 0 <= tau <= 1:
        raise ParameterError("tau must be in [0, 1]")
    if scope not in ("core", "all"):
        raise ParameterError(f"unknown inter-traffic scope: {scope}")
    value = tau * total_backhaul
    if value <= 0:
        return {}
    if scope == "all":
        hosts = t.hosts
    else:
        hosts = [h for h in t.hosts if t.kind_of(h) == NodeKind.CORE]
    return {(p, q): value for p in hosts for q in hosts if p != q}


def generate_demands(
    t: Topology,
    profile_fraction: float,
    seed: int,
    p: Optional[RadioParams] = None,
    tau: float = 0.0,
    inter_traffic: Optional[Mapping[Tuple[int, int], float]] = None,
    scope: InterTrafficScope = "core",
) -> DemandSet:
    """RRH ごとのユーザー数を一様乱数 (1..max) で引き、時間帯の比率で縮める"""
    p = p or RadioParams()
    if not 0 <= profile_fraction <= 1:
        raise ParameterError("profile_fraction must be in [0, 1]")

    rng = np.random.default_rng(seed)
    rrhs = t.rrhs
    draws = rng.integers(1, p.max_users + 1, size=len(rrhs))

    users: Dict[int, int] = {}
    demands: Dict[int, float] = {}
    for r, raw in zip(rrhs, draws):
        u = int(clamp(round_half_up(int(raw) * profile_fraction), 0, p.max_users))
        users[r] = u
        demands[r] = rrh_demand(u, p.prb_per_user, p.prb_total, p.cpri_rate)

    alpha = default_alpha(p)
    total_backhaul = alpha * sum(demands.values())
    if inter_traffic is not None:
        nabla = {k: float(v) for k, v in inter_traffic.items() if v > 0}
    else:
        nabla = inter_traffic_matrix(t, total_backhaul, tau, scope)

    logger.debug(
        f"demands generated: seed={seed} fraction={profile_fraction} "
        f"users={sum(users.values())} fronthaul={sum(demands.values()):.3f} Gbps"
    )
    return DemandSet(
        users=users,
        demands=demands,
        alpha=alpha,
        inter_traffic=nabla,
        tau=tau,
        profile_fraction=profile_fraction,
        seed=seed,
        scope=scope,
    )


def demands_from_users(
    t: Topology,
    users: Mapping[int, int],
    p: Optional[RadioParams] = None,
    tau: float = 0.0,
    scope: InterTrafficScope = "core",
) -> DemandSet:
    """ユーザー数を直接指定して DemandSet を作る（テストやAPI用）"""
    p = p or RadioParams()
    unknown = set(users) - set(t.rrhs)
    if unknown:
        raise DemandError(f"users given for non-RRH nodes: {sorted(unknown)}")
    u = {r: int(users.get(r, 0)) for r in t.rrhs}
    d = {r: rrh_demand(n, p.prb_per_user, p.prb_total, p.cpri_rate) for r, n in u.items()}
    alpha = default_alpha(p)
    return DemandSet(
        users=u,
        demands=d,
        alpha=alpha,
        inter_traffic=inter_traffic_matrix(t, alpha * sum(d.values()), tau, scope),
        tau=tau,
        scope=scope,
    )


def load_inter_traffic(path: str | Path) -> Dict[Tuple[int, int], float]:
    """∇ の上書きファイル: [{"p": .., "q": .., "gbps": ..}, ...]"""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DemandError(f"cannot load inter-traffic file {path}: {e}") from e
    out: Dict[Tuple[int, int], float] = {}
    for entry in raw:
        try:
            p, q, gbps = int(entry["p"]), int(entry["q"]), float(entry["gbps"])
        except (KeyError, TypeError, ValueError) as e:
            raise DemandError(f"bad inter-traffic entry {entry!r}") from e
        if p == q:
            raise DemandError("inter-traffic must be zero on the diagonal")
        if gbps < 0 or math.isnan(gbps):
            raise DemandError(f"negative inter-traffic for ({p}, {q})")
        out[(p, q)] = gbps
    return out


def daily_profile() -> List[float]:
    return list(DEFAULT_DAILY_PROFILE)


def slot_time(slot: int) -> str:
    minutes = slot * SLOT_MINUTES
    return f"{minutes // 60:02d}:{minutes % 60:02d}"
