"""
Tests for the zero-forcing comparison schemes.
"""

from types import SimpleNamespace

import numpy as np
import pytest

from sparse_jt.baselines import network_zf, rcc_zf, regularized_zf, sc_zf
from sparse_jt.errors import EmptySupport, RankDeficient
from sparse_jt.spca_core import StackedPrecoder, stack


def _as_result(F: np.ndarray) -> SimpleNamespace:
    return SimpleNamespace(f=stack(F))


def test_regularized_zf_inverts_square_channel(rng):
    """Test H^H F ~ I for a well-conditioned square channel."""
    H = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)) + 3 * np.eye(3)
    F = regularized_zf(H)
    assert np.allclose(H.conj().T @ F, np.eye(3), atol=1e-4)
    with pytest.raises(RankDeficient):
        regularized_zf(np.zeros((3, 2)))


@pytest.mark.parametrize("S", [1, 2, 3, 4])
def test_rcc_zf_active_size(small_csit, small_plan, small_cfg, S):
    """Test that exactly S RRHs transmit."""
    result = rcc_zf(small_csit, small_plan, small_cfg, S=S)
    assert len(result.active) == S
    idle = sorted(set(range(small_cfg.L)) - result.active)
    assert np.all(result.f.per_rrh_power()[idle] == 0)
    assert np.max(result.f.per_rrh_power()) <= np.min(small_plan.budgets) + 1e-9


def test_rcc_zf_full_set_is_network_zf(small_csit, small_plan, small_cfg):
    """Test that S = L reduces to full-cooperation ZF."""
    rcc = rcc_zf(small_csit, small_plan, small_cfg, S=small_cfg.L)
    full = network_zf(small_csit, small_plan, small_cfg)
    assert full.scheme == "zf"
    assert rcc.active == full.active == set(range(small_cfg.L))
    assert np.allclose(rcc.f.vector, full.f.vector)


def test_rcc_zf_drops_users_beyond_dimensions(small_csit, small_plan, small_cfg):
    """Test that one RRH with N=2 antennas serves two of three users."""
    result = rcc_zf(small_csit, small_plan, small_cfg, S=1)
    user_power = np.sum(np.abs(result.f.matrix()) ** 2, axis=1)
    assert np.count_nonzero(user_power) == small_cfg.N
    with pytest.raises(ValueError):
        rcc_zf(small_csit, small_plan, small_cfg, S=0)


def test_sc_zf_full_support_is_network_zf(small_csit, small_plan, small_cfg):
    """Test that a dense sparse-JT support gives plain ZF."""
    F = np.ones((small_cfg.L, small_cfg.K, small_cfg.N), dtype=complex)
    result = sc_zf(_as_result(F), small_csit, small_cfg, small_plan)
    full = network_zf(small_csit, small_plan, small_cfg)
    assert result.scheme == "sc_zf"
    assert np.allclose(result.f.vector, full.f.vector)


def test_sc_zf_respects_support(small_csit, small_plan, small_cfg):
    """Test that blocks outside the support stay zero."""
    F = np.zeros((small_cfg.L, small_cfg.K, small_cfg.N), dtype=complex)
    F[:2] = 1.0
    result = sc_zf(_as_result(F), small_csit, small_cfg, small_plan)
    blocks = result.f.unstack()
    assert np.all(blocks[2:] == 0)
    assert result.active <= {0, 1}


def test_sc_zf_empty_support(small_csit, small_plan, small_cfg):
    """Test that a silent sparse-JT precoder has no support."""
    size = small_cfg.L * small_cfg.N * small_cfg.K
    zero = SimpleNamespace(f=StackedPrecoder(np.zeros(size), small_cfg.L, small_cfg.N, small_cfg.K))
    with pytest.raises(EmptySupport):
        sc_zf(zero, small_csit, small_cfg, small_plan)
