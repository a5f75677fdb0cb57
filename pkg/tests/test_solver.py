# test_solver.py - ソルバー出力の解析・外部ソルバー実行・総当たりオラクルのテスト
import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from conftest import requires_solver
from optimizer.errors import GuardError, SolverConfigError
from optimizer.milp import build_model
from optimizer.power import total_power
from optimizer.radio import demands_from_users
from optimizer.solver import (
    SolverSettings,
    _render_command,
    exhaustive_solve,
    parse_cbc_solution,
    parse_generic_solution,
    solve_model,
)
from optimizer.topology import build_tiered_topology

# 最小トポロジ全負荷で BBU と CNVM を OLT1 に同居させた場合
# 1140 + PON (14.7456 + 60 + 1880/8600 × 9.8304) + サーバー (224 + 58.17/368 × 253)
MINIMAL_OPTIMUM = 1140 + 14.7456 + 60 + 1880 / 8600 * 9.8304 + 224 + 58.17 / 368 * 253

CBC_OPTIMAL = """Optimal - objective value 1480.88640000
      0 sigBr_h1_r3                1                       0
      1 lamR_h1_r3            9.8304                       0
** 2 Psif_h1              0.15807065                       0
      3 fronthaul_demand_r3                9.8304                       0
"""

CBC_INFEASIBLE = """Infeasible - objective value 0.00000000
      0 sigB_h0                 0.5                       0
"""


class TestParseCbc:

    def test_optimal(self):
        status, objective, values = parse_cbc_solution(CBC_OPTIMAL)
        assert status == "optimal"
        assert objective == pytest.approx(1480.8864)
        assert values["sigBr_h1_r3"] == 1
        assert values["Psif_h1"] == pytest.approx(0.15807065)
        # 行の活動値も読み込まれる（変数名での絞り込みは呼び出し側）
        assert "fronthaul_demand_r3" in values

    def test_infeasible_has_no_values(self):
        status, _, values = parse_cbc_solution(CBC_INFEASIBLE)
        assert status == "infeasible"
        assert values == {}

    def test_time_limit(self):
        status, objective, values = parse_cbc_solution(
            "Stopped on time - objective value 1500.5\n      0 chi_h0  1  0\n"
        )
        assert status == "timeout"
        assert objective == pytest.approx(1500.5)
        assert values == {"chi_h0": 1.0}

    def test_time_limit_without_incumbent(self):
        status, _, values = parse_cbc_solution(
            "Stopped on time (no integer solution - continuous used) - objective value 1.0\n"
            "      0 chi_h0  0.3  0\n"
        )
        assert status == "timeout"
        assert values == {}

    def test_empty_output(self):
        assert parse_cbc_solution("") == ("error", None, {})


class TestParseGeneric:

    def test_with_header(self):
        status, objective, values = parse_generic_solution(
            "# status optimal\n# objective 12.5\nx 1\ny 2.5\n"
        )
        assert status == "optimal"
        assert objective == 12.5
        assert values == {"x": 1.0, "y": 2.5}

    def test_without_header(self):
        status, objective, values = parse_generic_solution("x 0\n")
        assert status == "optimal"
        assert objective is None

    def test_unknown_status_word(self):
        status, _, _ = parse_generic_solution("# status unbounded\n")
        assert status == "error"


class TestExternalSolver:

    def test_missing_solver(self, tmp_path):
        with pytest.raises(SolverConfigError):
            _render_command(SolverSettings(), None, tmp_path / "m.lp", tmp_path / "m.sol")

    def test_command_template(self, tmp_path):
        settings = SolverSettings(command=["mysolver", "{lp}", "--out={sol}", "--tl={time_limit}"])
        argv = _render_command(settings, None, tmp_path / "m.lp", tmp_path / "m.sol")
        assert argv == ["mysolver", str(tmp_path / "m.lp"), f"--out={tmp_path / 'm.sol'}", "--tl=600"]

    def test_generic_solver_round_trip(self, minimal_topology, zero_load_minimal, power, radio):
        """汎用形式で全ゼロを返すソルバーなら定数項だけの最適解になる"""
        script = "printf '# status optimal\\n# objective 0\\nchi_h0 0\\n' > \"$1\""
        settings = SolverSettings(
            command=["sh", "-c", script, "sh", "{sol}"],
            output_format="generic",
        )
        m = build_model(minimal_topology, zero_load_minimal, power, radio)
        run, sol = solve_model(m, settings)
        assert run.status == "optimal"
        assert run.objective == pytest.approx(1200)
        assert sol is not None
        assert sol.objective == pytest.approx(1200)

    def test_solver_without_output(self, minimal_topology, zero_load_minimal, power, radio):
        settings = SolverSettings(command=["true"], output_format="generic")
        m = build_model(minimal_topology, zero_load_minimal, power, radio)
        run, sol = solve_model(m, settings)
        assert run.status == "error"
        assert sol is None


class TestExhaustive:

    def test_guard(self, full_topology, power, radio):
        d = demands_from_users(full_topology, {}, radio)
        with pytest.raises(GuardError):
            exhaustive_solve(full_topology, d, power, radio)

    def test_minimal_colocates_on_olt(self, minimal_topology, full_load_minimal, power, radio):
        sol = exhaustive_solve(minimal_topology, full_load_minimal, power, radio)
        assert sol.bbu_host_of == {3: 1}
        assert sol.active_cnvm_hosts == [1]
        assert sol.ports == {}
        assert sol.objective == pytest.approx(MINIMAL_OPTIMUM)

    def test_zero_demand(self, minimal_topology, zero_load_minimal, power, radio):
        sol = exhaustive_solve(minimal_topology, zero_load_minimal, power, radio)
        assert sol.objective == pytest.approx(1200)
        assert sol.any_vm == {}


@requires_solver
class TestMilpSolve:

    def test_not_worse_than_exhaustive(self, minimal_topology, full_load_minimal, power, radio):
        m = build_model(minimal_topology, full_load_minimal, power, radio)
        run, sol = solve_model(m)
        assert run.status == "optimal"
        oracle = exhaustive_solve(minimal_topology, full_load_minimal, power, radio)
        assert sol.objective <= oracle.objective + 1e-3

    def test_objective_matches_power_model(self, two_core_topology, power, radio):
        d = demands_from_users(two_core_topology, {6: 10, 7: 10}, radio, tau=0.16)
        m = build_model(two_core_topology, d, power, radio)
        run, sol = solve_model(m)
        assert run.status == "optimal"
        assert total_power(sol, two_core_topology, power).total == pytest.approx(sol.objective, rel=1e-6)

    def test_zero_demand(self, minimal_topology, zero_load_minimal, power, radio):
        m = build_model(minimal_topology, zero_load_minimal, power, radio)
        run, sol = solve_model(m)
        assert run.status == "optimal"
        assert sol.objective == pytest.approx(1200)

    def test_infeasible(self, power, radio):
        """コアのサーバー1台では全負荷 RRH の BBUVM と CNVM を載せられない"""
        t = build_tiered_topology(1, 1, 1, host_limits={"CORE": 1, "OLT": 0, "ONU": 0})
        d = demands_from_users(t, {3: 10}, radio)
        run, sol = solve_model(build_model(t, d, power, radio))
        assert run.status == "infeasible"
        assert sol is None
