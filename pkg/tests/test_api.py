"""nfvpower API tests"""
from __future__ import annotations

import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

import tempfile

from fastapi.testclient import TestClient
from api import server as _server_mod
from api.server import app, limiter
from conftest import HAS_SOLVER

# テストごとに一時DBを使う
_tmp_db = tempfile.NamedTemporaryFile(suffix=".db", delete=False)
_server_mod.DB_PATH = _tmp_db.name
_tmp_db.close()

# Module-level client with lifespan
_client_ctx = TestClient(app, raise_server_exceptions=True)
client = _client_ctx.__enter__()

MINIMAL = {"core_nodes": 1, "gpons_per_core": 1, "onus_per_gpon": 1}
TWO_CORES = {
    "core_nodes": 2, "gpons_per_core": 1, "onus_per_gpon": 1,
    "core_links": [{"a": 0, "b": 1, "km": 80}],
}


def teardown_module():
    _client_ctx.__exit__(None, None, None)
    try:
        os.unlink(_tmp_db.name)
    except Exception:
        pass


@pytest.fixture(autouse=True)
def _reset_rate_limit():
    limiter.reset()
    yield
    limiter.reset()


def _run_small_experiment(**extra):
    body = {"topology": TWO_CORES, "tau_levels": [0.0, 0.16]}
    body.update(extra)
    r = client.post("/experiments", json=body)
    assert r.status_code == 200, r.text
    return r.json()


# ---------------------------------------------------------------------------
# Health
# ---------------------------------------------------------------------------

class TestHealth:
    def test_health(self):
        r = client.get("/health")
        assert r.status_code == 200
        data = r.json()
        assert data["status"] == "ok"
        assert data["solver"] is HAS_SOLVER


# ---------------------------------------------------------------------------
# 計算系
# ---------------------------------------------------------------------------

class TestRadio:
    def test_default_chain(self):
        r = client.post("/radio/chain", json={})
        assert r.status_code == 200
        data = r.json()
        assert data["cpri_rate_gbps"] == pytest.approx(0.32768)
        assert data["alpha"] == pytest.approx(0.1344, abs=1e-4)

    def test_invalid_params(self):
        r = client.post("/radio/chain", json={"iq_width": 4})
        assert r.status_code == 422


class TestTopology:
    def test_valid(self):
        r = client.post("/topology/validate", json=TWO_CORES)
        assert r.status_code == 200
        data = r.json()
        assert data["valid"] is True
        assert data["nodes"] == 8
        assert data["hosts"] == 6
        assert data["rrhs"] == 2

    def test_disconnected_cores(self):
        r = client.post("/topology/validate", json={**TWO_CORES, "core_links": []})
        assert r.status_code == 400
        assert "connect" in r.json()["detail"]


class TestDemands:
    def test_fixed_users(self):
        r = client.post("/demands", json={"topology": MINIMAL, "users": {"3": 10}})
        assert r.status_code == 200
        data = r.json()
        assert data["demands"]["3"] == pytest.approx(9.8304)
        assert data["total_backhaul_gbps"] == pytest.approx(30 * 0.0440496)

    def test_seeded_is_reproducible(self):
        body = {"fraction": 0.8, "seed": 42, "tau": 0.05}
        a = client.post("/demands", json=body).json()
        b = client.post("/demands", json=body).json()
        assert a["digest"] == b["digest"]
        assert len(a["inter_traffic"]) == 20

    def test_all_host_scope(self):
        body = {"fraction": 0.8, "seed": 42, "tau": 0.05, "inter_traffic_scope": "all"}
        data = client.post("/demands", json=body).json()
        assert data["inter_traffic_scope"] == "all"
        assert len(data["inter_traffic"]) == 35 * 34

    def test_users_on_non_rrh(self):
        r = client.post("/demands", json={"topology": MINIMAL, "users": {"0": 3}})
        assert r.status_code == 400

    def test_fraction_out_of_range(self):
        r = client.post("/demands", json={"fraction": 1.5})
        assert r.status_code == 422


class TestPlacement:
    def test_with_itr_minimal(self):
        r = client.post("/heuristics/with_itr", json={"topology": MINIMAL, "users": {"3": 10}})
        assert r.status_code == 200
        data = r.json()
        assert data["chosen_i"] == 1
        assert data["chosen_pool"] == "near"
        assert data["placement"]["bbu"] == {"3": 1}
        assert data["placement"]["cnvm_hosts"] == [1]
        assert data["breakdown"]["wdm"] == pytest.approx(0)
        assert data["trace"]["variant"] == "with_itr"

    def test_core_pool_minimal(self):
        body = {"topology": MINIMAL, "users": {"3": 10}, "cnvm_pool": "core"}
        data = client.post("/heuristics/with_itr", json=body).json()
        assert data["chosen_pool"] == "core"
        assert data["placement"]["cnvm_hosts"] == [0]
        assert data["breakdown"]["wdm"] == pytest.approx(825)

    def test_unknown_pool(self):
        body = {"topology": MINIMAL, "users": {"3": 10}, "cnvm_pool": "edge"}
        assert client.post("/heuristics/with_itr", json=body).status_code == 422

    def test_variants_under_inter_traffic(self):
        body = {"topology": TWO_CORES, "users": {"6": 10, "7": 10}, "tau": 0.16, "cnvm_pool": "core"}
        no_itr = client.post("/heuristics/no_itr", json=body).json()
        with_itr = client.post("/heuristics/with_itr", json=body).json()
        assert no_itr["chosen_i"] == 2
        assert with_itr["chosen_i"] == 1
        assert with_itr["breakdown"]["total"] < no_itr["breakdown"]["total"]

    def test_unknown_variant(self):
        r = client.post("/heuristics/greedy", json={})
        assert r.status_code == 404

    def test_no_capacity(self):
        topo = {**MINIMAL, "host_limits": {"CORE": 1, "OLT": 0, "ONU": 0}}
        r = client.post("/heuristics/no_itr", json={"topology": topo, "users": {"3": 10}})
        assert r.status_code == 400

    def test_baseline_idle(self):
        r = client.post("/baseline", json={"users": {}})
        assert r.status_code == 200
        assert r.json()["total"] == pytest.approx(24200)


# ---------------------------------------------------------------------------
# 実験
# ---------------------------------------------------------------------------

class TestExperiments:
    def test_create_and_fetch(self):
        created = _run_small_experiment()
        assert len(created["rows"]) == 17 * 5
        assert created["methods"] == ["baseline", "heuristic_no_itr", "heuristic_with_itr"]
        first = created["rows"][0]
        assert first["method"] == "baseline"
        assert first["tau"] is None
        assert first["saving"] == 0.0

        r = client.get(f"/experiments/{created['id']}")
        assert r.status_code == 200
        fetched = r.json()
        assert fetched["rows"] == created["rows"]

    def test_tier_counts_stored(self):
        created = _run_small_experiment(
            methods=["heuristic_with_itr"], tau_levels=[0.0], profile=[1.0] * 17,
        )
        for row in created["rows"]:
            assert (row["bbu_olt"], row["cnvm_olt"], row["cnvm_core"]) == (2, 2, 0)
        fetched = client.get(f"/experiments/{created['id']}").json()
        assert fetched["rows"] == created["rows"]

    def test_summary(self):
        created = _run_small_experiment()
        r = client.get(f"/experiments/{created['id']}/summary")
        assert r.status_code == 200
        data = r.json()
        keys = [(s["tau"], s["method"]) for s in data["savings"]]
        assert keys == [
            (0.0, "heuristic_no_itr"),
            (0.0, "heuristic_with_itr"),
            (0.16, "heuristic_no_itr"),
            (0.16, "heuristic_with_itr"),
        ]
        assert data["gaps"] == []

    def test_not_found(self):
        r = client.get("/experiments/999999")
        assert r.status_code == 404

    def test_bad_profile(self):
        r = client.post("/experiments", json={"topology": MINIMAL, "profile": [0.5] * 3})
        assert r.status_code == 422

    @pytest.mark.skipif(HAS_SOLVER, reason="solver is installed")
    def test_milp_without_solver(self):
        r = client.post("/experiments", json={"topology": MINIMAL, "methods": ["milp"]})
        assert r.status_code == 400


class TestStats:
    def test_counts(self):
        before = client.get("/stats").json()
        _run_small_experiment(methods=["heuristic_with_itr"], tau_levels=[0.0])
        after = client.get("/stats").json()
        assert after["total_experiments"] == before["total_experiments"] + 1
        assert after["total_rows"] == before["total_rows"] + 17
        assert after["rows_by_method"]["heuristic_with_itr"] >= 17
        assert "baseline" not in after["rows_by_method"] or (
            after["rows_by_method"]["baseline"] == before["rows_by_method"]["baseline"]
        )
