# test_heuristics.py - BBUVM / CNVM 配置ヒューリスティックのテスト
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from optimizer.errors import ParameterError, PlacementError
from optimizer.heuristics import (
    core_backhaul,
    eenfv_no_itr,
    eenfv_with_itr,
    near_cnvm_hosts,
    sort_core_nodes_by_backhaul,
)
from optimizer.milp import build_model, verify_solution
from optimizer.params import PowerParams
from optimizer.radio import demands_from_users, generate_demands
from optimizer.solver import exhaustive_solve
from optimizer.topology import build_tiered_topology


@pytest.fixture
def two_core_loaded(two_core_topology, radio):
    """両方の RRH が全負荷、τ = 0.16"""
    return demands_from_users(two_core_topology, {6: 10, 7: 10}, radio, tau=0.16)


class TestPlacement:

    def test_minimal_prefers_olt(self, minimal_topology, full_load_minimal, power, radio):
        """CNVM は BBUVM と同じ OLT のサーバーに同居する"""
        sol, trace = eenfv_with_itr(minimal_topology, full_load_minimal, power, radio)
        assert sol.bbu_host_of == {3: 1}
        assert sol.active_cnvm_hosts == [1]
        assert trace.chosen_pool == "near"
        assert trace.near_hosts == [1]
        assert trace.chosen_i == 1
        assert trace.served == [3]
        assert sol.objective == pytest.approx(
            1140 + 14.7456 + 60 + 1880 / 8600 * 9.8304 + 224 + 58.17 / 368 * 253
        )

    def test_minimal_core_pool(self, minimal_topology, full_load_minimal, power, radio):
        sol, trace = eenfv_with_itr(minimal_topology, full_load_minimal, power, radio, cnvm_pool="core")
        assert sol.bbu_host_of == {3: 1}
        assert sol.active_cnvm_hosts == [0]
        assert trace.chosen_pool == "core"
        assert trace.near_hosts == []
        assert trace.chosen_i == 1
        assert trace.served == [3]
        assert sol.objective == pytest.approx(
            1140 + 14.7456 + 60 + 1880 / 8600 * 9.8304 + 825 + 246 + 112 + 26.17 / 368 * 253
        )

    def test_zero_load(self, minimal_topology, zero_load_minimal, power, radio):
        sol, trace = eenfv_no_itr(minimal_topology, zero_load_minimal, power, radio)
        assert sol.objective == pytest.approx(1200)
        assert trace.decisions == []
        assert trace.iterations == []
        assert sol.active_cnvm_hosts == []

    def test_falls_back_to_core(self, power, radio):
        """OLT にサーバーが無ければ最寄りのコアに置く"""
        t = build_tiered_topology(1, 1, 1, host_limits={"OLT": 0, "ONU": 0})
        d = demands_from_users(t, {3: 10}, radio)
        sol, trace = eenfv_with_itr(t, d, power, radio)
        assert sol.bbu_host_of == {3: 0}
        assert sol.active_cnvm_hosts == [0]
        assert trace.decisions[0].host == 0

    def test_olt_capacity_rejection_recorded(self, power, radio):
        """OLT のサーバー1台には BBUVM 1つ分（1.09 台相当）が入らない"""
        t = build_tiered_topology(1, 1, 1, host_limits={"OLT": 1, "ONU": 0})
        d = demands_from_users(t, {3: 10}, radio)
        _, trace = eenfv_with_itr(t, d, power, radio)
        decision = trace.decisions[0]
        assert decision.host == 0
        assert decision.rejected == [(1, "insufficient capacity")]
        assert decision.workload == pytest.approx(400)

    def test_no_host_fits(self, power, radio):
        t = build_tiered_topology(1, 1, 1, host_limits={"CORE": 1, "OLT": 0, "ONU": 0})
        d = demands_from_users(t, {3: 10}, radio)
        with pytest.raises(PlacementError) as excinfo:
            eenfv_with_itr(t, d, power, radio)
        assert excinfo.value.rrh == 3

    def test_index_order(self, full_topology, power, radio):
        d = generate_demands(full_topology, 0.7, seed=3)
        _, trace = eenfv_no_itr(full_topology, d, power, radio, order="index")
        assert trace.served == sorted(trace.served)

    def test_demand_order(self, full_topology, power, radio):
        d = generate_demands(full_topology, 0.7, seed=3)
        _, trace = eenfv_no_itr(full_topology, d, power, radio, order="demand")
        served = [(-d.demand(r), r) for r in trace.served]
        assert served == sorted(served)


class TestCoreSelection:

    def test_sort_ties_by_index(self, full_topology, radio):
        d = demands_from_users(full_topology, {}, radio)
        assert sort_core_nodes_by_backhaul(full_topology, {}, d) == [0, 1, 2, 3, 4]

    def test_sort_by_backhaul(self, full_topology, radio):
        d = demands_from_users(full_topology, {40: 10, 50: 4}, radio)
        # RRH 40 は OLT7 (コア1)、RRH 50 は OLT12 (コア3) の配下
        placed = {40: 7, 50: 12}
        backhaul = core_backhaul(full_topology, placed, d)
        assert backhaul[1] > backhaul[3] > 0
        assert sort_core_nodes_by_backhaul(full_topology, placed, d) == [1, 3, 0, 2, 4]

    def test_without_inter_traffic_both_variants_agree(self, two_core_topology, power, radio):
        d = demands_from_users(two_core_topology, {6: 10, 7: 10}, radio)
        a, _ = eenfv_no_itr(two_core_topology, d, power, radio)
        b, _ = eenfv_with_itr(two_core_topology, d, power, radio)
        assert a.objective == pytest.approx(b.objective)

    def test_no_itr_spreads_cnvms(self, two_core_topology, two_core_loaded, power, radio):
        """∇ を無視すると 80 km リンクの波長より CNVM を増やす方が安く見える"""
        _, trace = eenfv_no_itr(two_core_topology, two_core_loaded, power, radio, cnvm_pool="core")
        assert trace.chosen_i == 2

    def test_with_itr_keeps_one_cnvm(self, two_core_topology, two_core_loaded, power, radio):
        sol, trace = eenfv_with_itr(two_core_topology, two_core_loaded, power, radio, cnvm_pool="core")
        assert trace.chosen_i == 1
        assert sol.active_cnvm_hosts == [0]
        assert [it.tpc is not None for it in trace.iterations] == [True, True]

    def test_with_itr_is_cheaper_under_inter_traffic(self, two_core_topology, two_core_loaded, power, radio):
        no_itr, _ = eenfv_no_itr(two_core_topology, two_core_loaded, power, radio, cnvm_pool="core")
        with_itr, _ = eenfv_with_itr(two_core_topology, two_core_loaded, power, radio, cnvm_pool="core")
        assert with_itr.objective < no_itr.objective
        # 評価は ∇ 込みで行うので no_itr の解にも CNVM 間トラフィックが載る
        assert no_itr.cnvm_traffic

    def test_trace_dict(self, two_core_topology, two_core_loaded, power, radio):
        sol, trace = eenfv_with_itr(two_core_topology, two_core_loaded, power, radio, cnvm_pool="core")
        out = trace.to_dict()
        assert out["variant"] == "with_itr"
        assert out["chosen_i"] == 1
        assert out["chosen_pool"] == "core"
        assert out["sorted_cores"] == [0, 1]
        assert {it["pool"] for it in out["iterations"]} == {"core"}
        assert out["total_power"] == pytest.approx(sol.objective)
        assert [d["rrh"] for d in out["decisions"]] == [6, 7]


class TestCnvmPool:
    """CNVM 候補の作り方と ΩH による候補の読み飛ばし"""

    def test_unknown_pool(self, minimal_topology, full_load_minimal, power, radio):
        with pytest.raises(ParameterError):
            eenfv_with_itr(minimal_topology, full_load_minimal, power, radio, cnvm_pool="edge")

    def test_near_hosts_sorted_by_backhaul(self, full_topology, radio):
        d = demands_from_users(full_topology, {40: 10, 50: 4, 35: 4}, radio)
        # 同じバックホールなら番号順、コアは含めない
        placed = {40: 7, 50: 12, 35: 5, 36: 0}
        assert near_cnvm_hosts(full_topology, placed, d) == [7, 5, 12]

    def test_two_core_keeps_cnvms_at_olts(self, two_core_topology, two_core_loaded, power, radio):
        """コア間の ∇ はコアに CNVM が無ければ流れない"""
        a, ta = eenfv_no_itr(two_core_topology, two_core_loaded, power, radio)
        b, tb = eenfv_with_itr(two_core_topology, two_core_loaded, power, radio)
        assert b.active_cnvm_hosts == [2, 3]
        assert tb.chosen_pool == "near"
        assert tb.chosen_i == 2
        assert not b.cnvm_traffic
        assert a.objective == pytest.approx(b.objective)
        # OLT 同士は上り方向に経路が無いので1つでは足りない
        first = [it for it in tb.iterations if it.pool == "near"][0]
        assert first.tpc is None
        assert "no reachable CNVM host" in first.reason

    def test_near_pool_never_worse_than_core_pool(self, full_topology, power, radio):
        d = generate_demands(full_topology, 0.6, seed=4, tau=0.05)
        near, _ = eenfv_with_itr(full_topology, d, power, radio)
        core, _ = eenfv_with_itr(full_topology, d, power, radio, cnvm_pool="core")
        assert near.objective <= core.objective + 1e-6

    def test_saturated_host_spills_to_core(self, minimal_topology, full_load_minimal, radio):
        """ΩH が BBUVM 分しかない OLT では CNVM を次に近いコアへ回す"""
        power = PowerParams(host_power_cap={1: 250})
        sol, trace = eenfv_with_itr(minimal_topology, full_load_minimal, power, radio)
        assert sol.bbu_host_of == {3: 1}
        assert sol.active_cnvm_hosts == [0]
        assert trace.chosen_pool == "near"
        assert trace.chosen_i == 2
        first, second = [it for it in trace.iterations if it.pool == "near"]
        assert first.tpc is None
        assert first.skipped == [(1, "no capacity for CNVM")]
        assert second.skipped == [(1, "no capacity for CNVM")]
        assert second.cnvm_hosts == [0]
        assert sol.objective == pytest.approx(
            1140 + 14.7456 + 60 + 1880 / 8600 * 9.8304 + 825 + 246 + 112 + 26.17 / 368 * 253
        )
        report = verify_solution(build_model(minimal_topology, full_load_minimal, power, radio), sol)
        assert report.passed, report.violated()

    def test_all_scope_inter_traffic_gathers_cnvms(self, two_core_topology, power, radio):
        """全ホスト対に ∇ を張ると OLT 同士には CNVM を置けず、コア1つにまとまる"""
        t = two_core_topology
        quiet = demands_from_users(t, {6: 10, 7: 10}, radio, tau=0.0, scope="all")
        busy = demands_from_users(t, {6: 10, 7: 10}, radio, tau=0.16, scope="all")
        for fn in (eenfv_no_itr, eenfv_with_itr):
            low, _ = fn(t, quiet, power, radio)
            high, trace = fn(t, busy, power, radio)
            assert low.active_cnvm_hosts == [2, 3]
            assert trace.chosen_pool == "core"
            assert set(high.active_cnvm_hosts) <= {0, 1}
            assert high.objective > low.objective
            report = verify_solution(build_model(t, busy, power, radio), high)
            assert report.passed, report.violated()
        with_itr, _ = eenfv_with_itr(t, busy, power, radio)
        assert with_itr.active_cnvm_hosts == [0]


class TestAgainstOracle:
    """乱数シナリオでヒューリスティックの解を総当たりとモデルで確かめる"""

    @pytest.mark.parametrize("seed", range(8))
    def test_random_two_core(self, seed, two_core_topology, power, radio):
        rng = np.random.default_rng(seed)
        users = {6: int(rng.integers(0, 11)), 7: int(rng.integers(0, 11))}
        tau = float(rng.choice([0.0, 0.05, 0.16]))
        t = two_core_topology
        d = demands_from_users(t, users, radio, tau=tau)
        m = build_model(t, d, power, radio)
        oracle = exhaustive_solve(t, d, power, radio)
        for fn in (eenfv_no_itr, eenfv_with_itr):
            sol, _ = fn(t, d, power, radio)
            assert sol.objective >= oracle.objective - 1e-6
            report = verify_solution(m, sol)
            assert report.passed, report.violated()
