"""Parameter blocks for the radio, power and MILP models.

Defaults follow the published evaluation parameter table; each field
description carries the symbol it stands for.
"""

from __future__ import annotations

from typing import Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class RadioParams(BaseModel):
    """LTE / CPRI の無線パラメータ（下りのみ）"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    subcarrier_bw: float = Field(15e3, gt=0, description="サブキャリア帯域 (Hz)")
    radio_bw: float = Field(10e6, gt=0, description="無線帯域 (Hz)")
    prb_total: int = Field(50, ge=0, description="n: セルあたりPRB数")
    prb_per_user: int = Field(5, ge=0, description="pb: ユーザーあたりPRB数")
    max_users: int = Field(10, ge=0, description="セルあたり最大ユーザー数")
    symbols_per_slot: int = Field(7, ge=1, description="スロットあたりシンボル数 (6 or 7)")
    mod_bits: int = Field(6, ge=0, description="q: シンボルあたりビット数 (64QAM)")
    antennas: int = Field(2, ge=0, description="a: アンテナ数")
    mimo_layers: int = Field(2, ge=0, description="y: MIMOレイヤ数")
    line_coding: float = Field(10 / 8, ge=1, description="l: ライン符号化 (8B/10B)")
    iq_width: int = Field(8, description="M: IQサンプル幅 (bit)")
    system_efficiency: float = Field(0.874, description="システム効率")
    cpri_rate: float = Field(9.8304, gt=0, description="cp: CPRI option 7 (Gbps)")
    code_rate: float = Field(1.0, ge=0, le=1, description="C: 符号化率")
    slot_duration: float = Field(0.5e-3, gt=0, description="スロット長 (s)")

    @model_validator(mode="after")
    def _check(self) -> "RadioParams":
        if not 0 < self.system_efficiency <= 1:
            raise ValueError("system_efficiency must be in (0, 1]")
        if not 8 <= self.iq_width <= 20:
            raise ValueError("downlink iq_width must be in [8, 20]")
        if self.prb_per_user * self.max_users > self.prb_total:
            raise ValueError("prb_per_user * max_users exceeds prb_total")
        return self


class BaselineParams(BaseModel):
    """仮想化なし構成（セル毎BBU + ASR5000）の機器パラメータ"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    bbu_max: float = Field(531.0, ge=0, description="BBU 最大電力 (W)")
    bbu_idle: float = Field(51.0, ge=0, description="BBU アイドル電力 (W)")
    bbu_cap: float = Field(9.8, gt=0, description="BBU 容量 (Gbps)")
    core_max: float = Field(5760.0, ge=0, description="ASR5000 最大電力 (W)")
    core_idle: float = Field(800.0, ge=0, description="ASR5000 アイドル電力 (W)")
    core_cap: float = Field(320.0, gt=0, description="ASR5000 容量 (Gbps)")
    core_node: int = Field(0, ge=0, description="ASR5000 を接続するコアノード（コア内の順番）")
    load_model: Literal["linear", "peak"] = "linear"

    @model_validator(mode="after")
    def _check(self) -> "BaselineParams":
        if self.bbu_idle > self.bbu_max or self.core_idle > self.core_max:
            raise ValueError("idle power must not exceed max power")
        return self


class PowerParams(BaseModel):
    """PON / IP over WDM / サーバーの電力パラメータ"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    onu_max: float = Field(15.0, ge=0, description="ΩU: ONU 電力 (W)")
    olt_max: float = Field(1940.0, ge=0, description="ΩL: OLT 最大電力 (W)")
    olt_idle: float = Field(60.0, ge=0, description="ΩLd: OLT アイドル電力 (W)")
    rrh_power: float = Field(1140.0, ge=0, description="ΩR: RRH 電力 (W)")
    server_max: float = Field(365.0, ge=0, description="ΩS: サーバー最大電力 (W)")
    server_idle: float = Field(112.0, ge=0, description="ΩSd: サーバーアイドル電力 (W)")
    transponder: float = Field(167.0, ge=0, description="ΩT: トランスポンダ (W)")
    router_port: float = Field(825.0, ge=0, description="ΩRP: ルータポート (W)")
    regenerator: float = Field(334.0, ge=0, description="ΩG: 再生中継器 (W)")
    edfa: float = Field(55.0, ge=0, description="ΩE: EDFA (W)")
    onu_cap: float = Field(10.0, gt=0, description="CU: ONU 容量 (Gbps)")
    olt_cap: float = Field(8600.0, gt=0, description="CL: OLT 容量 (Gbps)")
    wavelength_cap: float = Field(40.0, gt=0, description="B: 波長容量 (Gbps)")
    wavelengths_per_fiber: int = Field(32, gt=0, description="w: ファイバあたり波長数")
    span_km: float = Field(80.0, gt=0, description="S: EDFA 間隔 (km)")
    server_gops: float = Field(368.0, gt=0, description="ΨS: サーバー処理能力 (GOPS)")
    cnvm_gops: float = Field(26.17, ge=0, description="ΨC: CNVM ワークロード (GOPS)")
    host_power_cap: Optional[Dict[int, float]] = Field(
        None, description="ΩH_h の上書き（ノード番号 → W）。未指定は host_limit × ΩS"
    )
    baseline: BaselineParams = Field(default_factory=BaselineParams)

    @model_validator(mode="after")
    def _check(self) -> "PowerParams":
        if self.olt_idle > self.olt_max:
            raise ValueError("olt_idle must not exceed olt_max")
        if self.server_idle > self.server_max:
            raise ValueError("server_idle must not exceed server_max")
        return self

    def host_cap(self, node: int, host_limit: int) -> float:
        """ΩH_h: ホスティングノードの電力上限"""
        if self.host_power_cap and node in self.host_power_cap:
            return self.host_power_cap[node]
        return host_limit * self.server_max


class BuildOptions(BaseModel):
    """MILP 構築オプション"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    beta: Optional[float] = Field(None, gt=0, description="β: big-M。未指定は全負荷フロントホール合計の10倍")
    eta: float = Field(1e-5, gt=0, description="η: 小さな正数")
    psi_f_margin: float = Field(1e-9, gt=0, description="Ψf ≤ 1 - margin")
    integer_wdm: bool = True
    prune_flows: bool = True
