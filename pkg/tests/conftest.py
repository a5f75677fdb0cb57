# conftest.py - 共通フィクスチャとテスト設定
import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from optimizer.params import BuildOptions, PowerParams, RadioParams
from optimizer.radio import demands_from_users
from optimizer.solver import resolve_solver
from optimizer.topology import CoreLink, build_tiered_topology, default_topology

# CBC が無い環境ではソルバーを使うテストを飛ばす
HAS_SOLVER = resolve_solver() is not None
requires_solver = pytest.mark.skipif(not HAS_SOLVER, reason="no MILP solver executable available")


@pytest.fixture
def radio():
    """評価用の無線パラメータ（既定値）"""
    return RadioParams()


@pytest.fixture
def power():
    """評価用の電力パラメータ（既定値）"""
    return PowerParams()


@pytest.fixture
def options():
    return BuildOptions()


@pytest.fixture
def minimal_topology():
    """RRH–ONU–OLT–CORE の4ノード"""
    return build_tiered_topology(1, 1, 1)


@pytest.fixture
def two_core_topology():
    """2コア、80 km リンク1本、各コアに OLT 1 / ONU 1 / RRH 1"""
    return build_tiered_topology(2, 1, 1, [CoreLink(0, 1, 80.0)])


@pytest.fixture
def full_topology():
    """5コア × 2 GPON × 2 ONU の55ノード"""
    return default_topology()


@pytest.fixture
def full_load_minimal(minimal_topology, radio):
    """最小トポロジで RRH が全負荷"""
    return demands_from_users(minimal_topology, {3: 10}, radio)


@pytest.fixture
def zero_load_minimal(minimal_topology, radio):
    return demands_from_users(minimal_topology, {}, radio)

