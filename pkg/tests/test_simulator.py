"""
Basic tests for the sparse-JT simulator.
"""

import os
from dataclasses import replace

import numpy as np
import pytest

from sparse_jt import SparseJTSimulator
from sparse_jt.config import Config, NetworkConfig, SolverSettings, preset
from sparse_jt.errors import ConfigError
from sparse_jt.fronthaul import plan_quantization
from sparse_jt.net_model import CsitView
from sparse_jt.simulator import SCHEMES

slow = pytest.mark.skipif(
    os.getenv('SPARSEJT_SLOW') != '1',
    reason="Monte Carlo check; set SPARSEJT_SLOW=1 to run"
)


@pytest.fixture
def simulator(small_cfg):
    return SparseJTSimulator(small_cfg, SolverSettings(check_second_order=False), Config())


def test_simulator_rejects_invalid_config():
    """Test that the simulator refuses an invalid scenario."""
    with pytest.raises(ConfigError, match="S must lie in"):
        SparseJTSimulator(NetworkConfig(L=4, S=5))


def test_simulator_initialization(simulator, small_cfg):
    """Test that the simulator plans the fronthaul on construction."""
    assert simulator.cfg == small_cfg
    assert simulator.plan.U.shape == (small_cfg.L,)


def test_simulator_methods_exist(simulator):
    """Test that all expected methods exist on the simulator."""
    assert hasattr(simulator, 'realize')
    assert hasattr(simulator, 'evaluate')
    assert hasattr(simulator, 'run')
    assert hasattr(simulator, 'sweep')
    assert hasattr(simulator, 'overhead')


def test_realize_is_deterministic(simulator):
    """Test that a (drop, fade) pair always gives the same channels."""
    a = simulator.realize(1, 2)
    b = simulator.realize(1, 2)
    assert np.array_equal(a.channels.h_true, b.channels.h_true)
    assert np.array_equal(a.topology.rrh_xy, b.topology.rrh_xy)
    c = simulator.realize(1, 3)
    assert np.array_equal(a.topology.rrh_xy, c.topology.rrh_xy)
    assert not np.array_equal(a.channels.h_true, c.channels.h_true)


def test_evaluate_all_schemes(simulator):
    """Test that every scheme is scored on one realization."""
    outcomes = simulator.evaluate(simulator.realize(0, 0))
    assert [o.scheme for o in outcomes] == list(SCHEMES)
    for outcome in outcomes:
        if outcome.ok:
            assert outcome.sum_se_true >= 0
            assert np.max(outcome.f.per_rrh_power()) <= np.min(simulator.plan.budgets) + 1e-9
        else:
            assert outcome.f is None


def test_evaluate_shares_the_sparse_solve(simulator):
    """Test that SC-ZF reuses the sparse-JT solver result."""
    sparse, sc = simulator.evaluate(simulator.realize(0, 0), ("sparse_jt", "sc_zf"))
    if sparse.ok and sc.ok:
        assert sc.solver is sparse.solver


def test_evaluate_hides_true_channels(simulator, monkeypatch):
    """Test that schemes only receive the CSIT view."""
    import sparse_jt.simulator as module

    seen = []
    original = module.network_zf

    def spy(csit, plan, cfg):
        seen.append(type(csit))
        return original(csit, plan, cfg)

    monkeypatch.setattr(module, "network_zf", spy)
    simulator.evaluate(simulator.realize(0, 0), ("zf",))
    assert seen == [CsitView]


def test_evaluate_unknown_scheme(simulator):
    """Test that an unknown scheme is a configuration error."""
    with pytest.raises(ConfigError):
        simulator.evaluate(simulator.realize(0, 0), ("mrt",))


def test_run_outcome_grid(simulator):
    """Test 2 drops x 2 fades x 3 schemes."""
    schemes = ("sparse_jt", "rcc_zf", "zf")
    outcomes = simulator.run(2, 2, schemes, threads=2)
    assert len(outcomes) == 12
    assert [(o.drop, o.fade) for o in outcomes[::3]] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    with pytest.raises(ConfigError):
        simulator.run(0, 1)


def test_run_is_thread_independent(simulator):
    """Test identical outcomes with one and several threads."""
    one = simulator.run(1, 2, ("rcc_zf", "zf"), threads=1)
    two = simulator.run(1, 2, ("rcc_zf", "zf"), threads=2)
    assert [o.sum_se_true for o in one] == [o.sum_se_true for o in two]


def test_sweep_rows(simulator):
    """Test one row per sweep value and scheme."""
    rows = simulator.sweep("S", [1, 4], 1, 1, ("rcc_zf", "zf"))
    assert [(r.value, r.scheme) for r in rows] == [(1, "rcc_zf"), (1, "zf"), (4, "rcc_zf"), (4, "zf")]
    assert all(r.n_ok + r.n_failed == 1 for r in rows)
    with pytest.raises(ConfigError):
        simulator.sweep("K", [1], 1, 1)


def test_overhead(simulator):
    """Test the sharing overhead of a scored outcome."""
    outcome = simulator.evaluate(simulator.realize(0, 0), ("rcc_zf",))[0]
    overhead = simulator.overhead(outcome)
    assert overhead["data_load"] == len(outcome.active) * simulator.cfg.C_bits_per_use


def test_evaluate_records_numerical_failures(simulator, monkeypatch):
    """Test that an overflow inside the solver becomes a recorded outcome."""
    import sparse_jt.simulator as module

    def overflow(*args, **kwargs):
        raise OverflowError("math range error")

    monkeypatch.setattr(module, "solve", overflow)
    sparse, sc, rcc = simulator.evaluate(simulator.realize(0, 0), ("sparse_jt", "sc_zf", "rcc_zf"))
    assert sparse.error == "OverflowError: math range error"
    assert sc.error == sparse.error
    assert sparse.f is None
    assert rcc.ok


def test_point_config_rederives_bits_for_capacity():
    """Test that a capacity sweep point drops the bit overrides and keeps U."""
    simulator = SparseJTSimulator(preset("fig3"), SolverSettings(check_second_order=False))
    low, high = simulator.point_config("C", 300.0), simulator.point_config("C", 500.0)
    assert low.B_override is None and low.B_bar_override is None
    assert high.U_override == simulator.cfg.U_override
    low_plan, high_plan = plan_quantization(low), plan_quantization(high)
    assert high_plan.B[0] > low_plan.B[0]
    assert high_plan.B_bar[0] > low_plan.B_bar[0]
    for cfg, plan in ((low, low_plan), (high, high_plan)):
        assert np.all(plan.rate_csi <= cfg.C_bits_per_use)
        assert np.all(plan.rate_data <= cfg.C_bits_per_use)
    assert simulator.point_config("S", 4).S == 4
    with pytest.raises(ConfigError):
        simulator.point_config("K", 1)


def test_sparse_bound_dominates_zf_without_budget(small_cfg):
    """Test that with S = L the sparse-JT bound is at least the ZF bound."""
    simulator = SparseJTSimulator(replace(small_cfg, S=small_cfg.L), SolverSettings(check_second_order=False))
    outcomes = simulator.run(3, 1, ("sparse_jt", "zf"), threads=1)
    for sparse, zf in zip(outcomes[::2], outcomes[1::2]):
        assert sparse.ok and zf.ok
        assert sparse.objective_bits >= zf.objective_bits - 1e-6


def test_tighter_budget_lowers_bound(small_cfg):
    """Test that the mean sparse-JT bound at S = 2 is below the one at S = L."""
    settings = SolverSettings(check_second_order=False)
    means = []
    for S in (small_cfg.L, 2):
        outcomes = SparseJTSimulator(replace(small_cfg, S=S), settings).run(3, 1, ("sparse_jt",), threads=1)
        assert all(o.ok for o in outcomes)
        means.append(np.mean([o.objective_bits for o in outcomes]))
    assert means[0] >= means[1]


@slow
def test_ergodic_se_trend_over_budget():
    """Test the mean true SE ordering over S on the scaled scenario."""
    cfg = preset("fig3-scaled")
    simulator = SparseJTSimulator(cfg, SolverSettings(check_second_order=False))
    rows = simulator.sweep("S", [10, 6, 2], 50, 4, ("sparse_jt", "rcc_zf"))
    sparse = [r.mean_se for r in rows if r.scheme == "sparse_jt"]
    assert sparse[0] >= sparse[1] >= sparse[2]
    for value in (10, 6, 2):
        pair = {r.scheme: r.mean_se for r in rows if r.value == value}
        assert pair["sparse_jt"] >= pair["rcc_zf"] - 0.05 * abs(pair["rcc_zf"])
