"""
Tests for effective noise, the SE lower bound, true SINR and ergodic SE.
"""

import math
import os
from dataclasses import replace

import numpy as np
import pytest

from sparse_jt.config import NetworkConfig
from sparse_jt.errors import DimensionMismatch, RankDeficient, SimulationError
from sparse_jt.fronthaul import QuantizationPlan, plan_quantization
from sparse_jt.net_model import ChannelSet, CsitView
from sparse_jt.se_metrics import (
    draw_realization,
    effective_noise_var,
    ergodic_se,
    se_lower_bound,
    sinr_true,
    summarize,
)
from sparse_jt.spca_core import StackedPrecoder, build_lifted, log2_gamma
from sparse_jt.solver import zf_init

slow = pytest.mark.skipif(
    os.getenv('SPARSEJT_SLOW') != '1',
    reason="Monte Carlo check; set SPARSEJT_SLOW=1 to run"
)

UNIT_CFG = NetworkConfig(L=1, N=1, K=1, S=1, tau=1, P_dbm=30.0, noise_dbm=30.0)


def _scalar_channels(h=1.0, phi=0.0, q=0.0, h_true=None) -> ChannelSet:
    one = np.ones((1, 1, 1, 1), dtype=complex)
    return ChannelSet(
        R=one, beta=np.ones((1, 1)), h_bar=np.full((1, 1, 1), h, dtype=complex),
        Phi=phi * one, Q=q * one, selected=((0,),),
        h_true=None if h_true is None else np.full((1, 1, 1), h_true, dtype=complex),
    )


def _noiseless_plan(L: int) -> QuantizationPlan:
    zeros = np.zeros(L)
    return QuantizationPlan(
        U=np.ones(L, dtype=int), B=np.ones(L, dtype=int), B_bar=np.ones(L, dtype=int),
        eta=zeros, rate_csi=zeros, rate_data=zeros,
    )


def _random_precoder(csit, rng):
    size = csit.L * csit.N * csit.K
    return StackedPrecoder(rng.standard_normal(size) + 1j * rng.standard_normal(size), csit.L, csit.N, csit.K)


def test_effective_noise_thermal_only(small_cfg):
    """Test sigma~^2 = sigma^2 without estimation or quantization errors."""
    cfg = replace(small_cfg, csit_mode="perfect")
    plan = _noiseless_plan(cfg.L)
    _, channels = draw_realization(cfg, plan_quantization(cfg), 0, 0, 0)
    f = _random_precoder(channels, np.random.default_rng(0))
    budget = effective_noise_var(f, channels.csit(), plan, cfg, 0)
    assert budget.sigma_tilde_sq == pytest.approx(cfg.sigma2)


def test_effective_noise_scalar_example():
    """Test Phi=0.1, Q=0.05, |f|^2=1, P=1, V=0, sigma^2=1."""
    budget = effective_noise_var(StackedPrecoder(np.ones(1), 1, 1, 1), _scalar_channels(phi=0.1, q=0.05),
                                 _noiseless_plan(1), UNIT_CFG, 0)
    assert budget.estimation == pytest.approx(0.1)
    assert budget.csi_quantization == pytest.approx(0.05)
    assert budget.sigma_tilde_sq == pytest.approx(1.15)


def test_effective_noise_scales_quadratically(small_csit, small_plan, small_cfg, rng):
    """Test that the error terms scale with |alpha|^2."""
    f = _random_precoder(small_csit, rng)
    a = effective_noise_var(f, small_csit, small_plan, small_cfg, 1)
    b = effective_noise_var(f.scaled(3.0), small_csit, small_plan, small_cfg, 1)
    assert b.estimation == pytest.approx(9 * a.estimation)
    assert b.csi_quantization == pytest.approx(9 * a.csi_quantization)
    assert b.data_quantization == pytest.approx(9 * a.data_quantization)


def test_effective_noise_dimension_mismatch(small_csit, small_plan, small_cfg):
    """Test that a wrongly sized precoder is rejected."""
    with pytest.raises(DimensionMismatch):
        effective_noise_var(StackedPrecoder(np.ones(4), 2, 2, 1), small_csit, small_plan, small_cfg, 0)


def test_se_lower_bound_unit_example():
    """Test R = 1 for h=f=1 and sigma~^2/P = 1."""
    report = se_lower_bound(StackedPrecoder(np.ones(1), 1, 1, 1), _scalar_channels(), _noiseless_plan(1), UNIT_CFG)
    assert report.total == pytest.approx(1.0)


def test_se_lower_bound_two_paths(small_csit, small_plan, small_cfg, rng):
    """Test stacked and per-RRH evaluations agree."""
    for _ in range(10):
        f = _random_precoder(small_csit, rng)
        stacked = se_lower_bound(f, small_csit, small_plan, small_cfg)
        per_rrh = se_lower_bound(f, small_csit, small_plan, small_cfg, method="per_rrh")
        assert np.all(stacked.per_user >= 0)
        assert per_rrh.total == pytest.approx(stacked.total, rel=1e-10)


def test_gamma_equals_lower_bound(small_csit, small_plan, small_cfg, rng):
    """Test log2 gamma(f, 0) against the SE lower bound at the in-loop power."""
    f = _random_precoder(small_csit, rng).normalized(float(small_plan.budgets.sum()))
    lifted = build_lifted(small_csit, small_plan, small_cfg, f_prev=f)
    bound = se_lower_bound(f, small_csit, small_plan, small_cfg).total
    assert log2_gamma(f, 0.0, lifted) == pytest.approx(bound, rel=1e-9)


def test_sinr_true_single_user():
    """Test SINR = P |h^H f|^2 / sigma^2 without interference."""
    cfg = NetworkConfig(L=1, N=1, K=1, S=1, tau=1)
    channels = _scalar_channels(h=2.0, h_true=2.0)
    result = sinr_true(channels, StackedPrecoder(np.ones(1), 1, 1, 1), _noiseless_plan(1), cfg)
    assert result.sinr[0] == pytest.approx(cfg.P * 4.0 / cfg.sigma2)


def test_sinr_true_matches_bound_with_perfect_csit(small_cfg, rng):
    """Test that both models coincide under perfect CSIT and no data quantization."""
    cfg = replace(small_cfg, csit_mode="perfect")
    plan = _noiseless_plan(cfg.L)
    _, channels = draw_realization(cfg, plan_quantization(cfg), 2, 0, 0)
    f = _random_precoder(channels, rng)
    true = sinr_true(channels, f, plan, cfg)
    bound = se_lower_bound(f, channels.csit(), plan, cfg)
    assert np.allclose(true.per_user, bound.per_user, rtol=1e-10)


def test_sinr_true_needs_true_channels(small_csit, small_plan, small_cfg):
    """Test that the BBU view cannot be scored."""
    f = StackedPrecoder(np.ones(small_cfg.L * small_cfg.N * small_cfg.K), small_cfg.L, small_cfg.N, small_cfg.K)
    with pytest.raises(SimulationError):
        sinr_true(small_csit, f, small_plan, small_cfg)


def test_ergodic_zero_precoder(small_cfg):
    """Test that a silent strategy has zero SE."""
    def silent(csit, plan, cfg):
        return StackedPrecoder(np.zeros(cfg.L * cfg.N * cfg.K), cfg.L, cfg.N, cfg.K)

    report = ergodic_se(small_cfg, silent, n_drops=2, n_fades=2)
    assert report.mean == 0.0
    assert report.prefactor == 1.0
    assert report.n_ok == 4


def test_ergodic_strategy_sees_only_csit(small_cfg):
    """Test that strategies never receive the true channels."""
    seen = []

    def strategy(csit, plan, cfg):
        seen.append(type(csit))
        return zf_init(csit, cfg, plan)

    ergodic_se(small_cfg, strategy, n_drops=1, n_fades=2)
    assert seen == [CsitView, CsitView]


def test_ergodic_counts_failures(small_cfg):
    """Test that failing realizations are skipped and counted."""
    def failing(csit, plan, cfg):
        raise RankDeficient("no channel")

    report = ergodic_se(small_cfg, failing, n_drops=1, n_fades=3)
    assert report.n_failed == 3
    assert report.n_ok == 0
    assert math.isnan(report.mean)


def test_ergodic_is_thread_independent(small_cfg):
    """Test that the thread count does not change the samples."""
    def zf(csit, plan, cfg):
        return zf_init(csit, cfg, plan)

    one = ergodic_se(small_cfg, zf, n_drops=2, n_fades=2, threads=1)
    four = ergodic_se(small_cfg, zf, n_drops=2, n_fades=2, threads=4)
    assert np.array_equal(one.samples, four.samples)


def test_ergodic_prefactor(small_cfg):
    """Test that training overhead scales the SE."""
    def zf(csit, plan, cfg):
        return zf_init(csit, cfg, plan)

    base = ergodic_se(small_cfg, zf, n_drops=1, n_fades=2)
    trained = ergodic_se(replace(small_cfg, tau_u=50, tau_d=50), zf, n_drops=1, n_fades=2)
    assert trained.prefactor == pytest.approx(0.5)
    assert trained.mean == pytest.approx(0.5 * base.mean)


def test_summarize():
    """Test mean and standard error."""
    mean, stderr = summarize([1.0, 3.0])
    assert mean == 2.0
    assert stderr == pytest.approx(1.0)
    assert summarize([5.0]) == (5.0, 0.0)


@slow
def test_ergodic_standard_error_halves():
    """Test that quadrupling the sample size halves the standard error."""
    cfg = NetworkConfig(L=4, N=2, K=3, S=4, tau=3, area_m=500.0, C_bits_per_use=100.0, U_override=2)

    def zf(csit, plan, cfg):
        return zf_init(csit, cfg, plan)

    small = ergodic_se(cfg, zf, n_drops=100, n_fades=10, threads=4)
    large = ergodic_se(cfg, zf, n_drops=400, n_fades=10, threads=4)
    assert large.stderr == pytest.approx(small.stderr / 2, rel=0.2)
