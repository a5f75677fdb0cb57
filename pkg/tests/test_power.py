# test_power.py - 電力モデル（PON / WDM / サーバー / ベースライン）のテスト
import copy
import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from optimizer.errors import CapacityError, InfeasibleSolutionError, ParameterError
from optimizer.heuristics import eenfv_with_itr
from optimizer.params import BaselineParams, PowerParams
from optimizer.power import (
    PowerBreakdown,
    baseline_power,
    dimension_wdm,
    edfa_count,
    pon_power,
    server_power,
    total_power,
    wdm_power,
)
from optimizer.radio import demands_from_users

# 最小トポロジ全負荷のときの PON 電力: ONU 15/10 × 9.8304 + OLT 60 + 1880/8600 × 9.8304
MINIMAL_PON = 14.7456 + 60 + 1880 / 8600 * 9.8304


class TestServer:

    def test_fractional_load(self, power):
        assert server_power(0, 0.5, 1, power) == pytest.approx(238.5)
        assert server_power(2, 0.3, 1, power) == pytest.approx(411.9)

    def test_idle_host(self, power):
        assert server_power(0, 0.0, 0, power) == 0
        assert server_power(0, 0.0, 1, power) == pytest.approx(112)

    def test_fraction_must_stay_below_one(self, power):
        with pytest.raises(CapacityError):
            server_power(0, 1.0, 1, power)

    def test_load_without_vm(self, power):
        with pytest.raises(ParameterError):
            server_power(1, 0.0, 0, power)

    def test_host_cap_override(self):
        p = PowerParams(host_power_cap={5: 500.0})
        assert p.host_cap(5, 5) == 500.0
        assert p.host_cap(6, 5) == 5 * 365.0


class TestOptical:

    def test_edfa_count(self):
        assert edfa_count(80, 80) == 2
        assert edfa_count(100, 80) == 3
        assert edfa_count(10, 80) == 2
        assert edfa_count(1050, 80) == 15

    def test_edfa_rejects_zero_distance(self):
        with pytest.raises(ParameterError):
            edfa_count(0, 80)

    def test_idle_pon(self, full_topology, power):
        """全 ONU / OLT がアイドル: 20 × 1140 + 10 × 60"""
        t = full_topology
        total = pon_power({x: 0.0 for x in t.onus}, {x: 0.0 for x in t.olts}, power)
        assert total == pytest.approx(23400)

    def test_onu_overload(self, power):
        with pytest.raises(CapacityError):
            pon_power({15: 10.5}, {}, power)

    def test_single_wavelength_link(self, two_core_topology, power):
        """ポート1 + 80 km リンクに1波長: 825 + (825 + 167) + 2 × 55"""
        total = wdm_power({0: 1}, {(0, 1): 1}, {(0, 1): 1}, two_core_topology, power)
        assert total == pytest.approx(1927)

    def test_wavelengths_need_fibers(self, two_core_topology, power):
        with pytest.raises(CapacityError):
            wdm_power({}, {(0, 1): 33}, {(0, 1): 1}, two_core_topology, power)

    def test_dimension_integer(self, power):
        wavelengths, fibers, ports = dimension_wdm({(0, 1): 41.0}, {0: 1.3}, power)
        assert wavelengths == {(0, 1): 2}
        assert fibers == {(0, 1): 1}
        assert ports == {0: 1}

    def test_dimension_continuous(self, power):
        wavelengths, fibers, ports = dimension_wdm({(0, 1): 20.0}, {0: 10.0}, power, integer=False)
        assert wavelengths[(0, 1)] == pytest.approx(0.5)
        assert fibers == {(0, 1): 1}
        assert ports[0] == pytest.approx(0.25)


class TestBaseline:

    def test_zero_demand_linear(self, full_topology, power, radio):
        d = demands_from_users(full_topology, {}, radio)
        b = baseline_power(d, full_topology, power)
        assert b.servers == pytest.approx(800)
        assert b.pon == pytest.approx(600)
        assert b.wdm == 0
        assert b.rrh_fixed == pytest.approx(22800)
        assert b.total == pytest.approx(24200)

    def test_zero_demand_peak(self, full_topology, radio):
        p = PowerParams(baseline=BaselineParams(load_model="peak"))
        d = demands_from_users(full_topology, {}, radio)
        b = baseline_power(d, full_topology, p)
        assert b.servers == pytest.approx(5760)
        assert b.total == pytest.approx(5760 + 600 + 22800)

    def test_full_load_minimal(self, minimal_topology, full_load_minimal, power):
        """BBU 531 W + ASR5000 800 + 4960 × 1.321488 / 320"""
        b = baseline_power(full_load_minimal, minimal_topology, power)
        backhaul = 30 * 0.0440496
        assert full_load_minimal.total_backhaul == pytest.approx(backhaul)
        assert b.servers == pytest.approx(531 + 800 + 4960 * backhaul / 320)
        assert b.wdm == pytest.approx(825)
        assert b.pon == pytest.approx(60 + 1.5 * backhaul + 1880 / 8600 * backhaul)

    def test_unknown_core_node(self, minimal_topology, zero_load_minimal):
        p = PowerParams(baseline=BaselineParams(core_node=3))
        with pytest.raises(ParameterError):
            baseline_power(zero_load_minimal, minimal_topology, p)


class TestTotalPower:

    def test_heuristic_minimal(self, minimal_topology, full_load_minimal, power, radio):
        """BBU を OLT1、CNVM をコア0 に置いた場合の内訳"""
        sol, _ = eenfv_with_itr(minimal_topology, full_load_minimal, power, radio)
        b = total_power(sol, minimal_topology, power)
        assert b.rrh_fixed == pytest.approx(1140)
        assert b.pon == pytest.approx(MINIMAL_PON)
        assert b.wdm == pytest.approx(825)
        assert b.servers == pytest.approx(246 + 112 + 26.17 / 368 * 253)
        assert b.total == pytest.approx(sol.objective)
        assert b.network == pytest.approx(b.pon + b.wdm)

    def test_breakdown_sums(self):
        b = PowerBreakdown.of(1.0, 2.0, 3.0, 4.0)
        assert b.total == 10.0
        assert b.to_dict()["network"] == 3.0

    def test_broken_conservation(self, minimal_topology, full_load_minimal, power, radio):
        sol, _ = eenfv_with_itr(minimal_topology, full_load_minimal, power, radio)
        broken = copy.deepcopy(sol)
        broken.fronthaul_flows[(1, 3, 1, 2)] += 1.0
        with pytest.raises(InfeasibleSolutionError) as excinfo:
            total_power(broken, minimal_topology, power)
        assert excinfo.value.violations == ["fronthaul_flow_h1_r3_x1", "fronthaul_flow_h1_r3_x2"]
