"""
Tests for topology, path loss and channel estimation.
"""

import numpy as np
import pytest

from sparse_jt.config import NetworkConfig
from sparse_jt.errors import ConfigError
from sparse_jt.net_model import (
    D_MIN_M,
    estimate_covariance,
    generate_topology,
    pathloss_db,
    sample_channel_and_estimate,
    spatial_covariance,
)


def test_pathloss_reference_distance():
    """Test COST-231 Hata at 1 km."""
    assert float(pathloss_db(1000.0, NetworkConfig())) == pytest.approx(137.0, abs=0.5)


def test_pathloss_monotone_and_clamped():
    """Test that loss grows with distance and is clamped below d_min."""
    cfg = NetworkConfig()
    d = np.array([1.0, D_MIN_M, 100.0, 1000.0])
    pl = pathloss_db(d, cfg)
    assert pl[0] == pl[1]
    assert np.all(np.diff(pl[1:]) > 0)


def test_topology_is_reproducible():
    """Test that the same seed yields the same topology."""
    cfg = NetworkConfig(L=5, K=3, S=3, tau=3)
    a = generate_topology(cfg, np.random.default_rng(4))
    b = generate_topology(cfg, np.random.default_rng(4))
    assert np.array_equal(a.beta, b.beta)
    assert a.beta.shape == (5, 3)
    assert np.all((a.rrh_xy >= 0) & (a.rrh_xy <= cfg.area_m))


def test_topology_zero_area_uses_d_min():
    """Test that co-located nodes keep a finite gain."""
    cfg = NetworkConfig(L=2, K=2, S=1, tau=2, area_m=0.0)
    topo = generate_topology(cfg, np.random.default_rng(0))
    expected = 10 ** (-pathloss_db(D_MIN_M, cfg) / 10)
    assert np.allclose(topo.beta, expected)


def test_spatial_covariance():
    """Test the exponential correlation model."""
    R = spatial_covariance(3, 0.5)
    assert np.allclose(R, [[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])
    assert np.allclose(spatial_covariance(4, 0.0), np.eye(4))
    with pytest.raises(ConfigError):
        spatial_covariance(2, 1.0)


def test_estimate_covariance_split():
    """Test that estimate and error covariances add up to beta R."""
    R = spatial_covariance(4, 0.7)
    gamma, phi = estimate_covariance(2.0, R, 0.3)
    assert np.allclose(gamma + phi, 2.0 * R)
    assert np.linalg.eigvalsh(phi)[0] > -1e-12
    assert np.linalg.eigvalsh(gamma)[0] > -1e-12
    with pytest.raises(ValueError):
        estimate_covariance(1.0, R, 0.0)


def test_sample_channel_statistics():
    """Test that the sampled error has covariance Phi."""
    cfg = NetworkConfig()
    n = 40_000
    R = np.ones((n, 1, 1), dtype=complex)
    h, h_est, phi = sample_channel_and_estimate(np.ones(n), R, cfg, np.random.default_rng(3), pilot_ratio=1.0)
    assert phi[0, 0, 0].real == pytest.approx(0.5)
    assert np.mean(np.abs(h - h_est) ** 2) == pytest.approx(0.5, rel=0.05)
    assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, rel=0.05)


def test_channel_set_view_hides_true_channels(small_channels):
    """Test that the BBU view carries no true channels."""
    view = small_channels.csit()
    assert small_channels.h_true is not None
    assert not hasattr(view, "h_true")
    assert np.array_equal(view.h_bar, small_channels.h_bar)
