"""
Tests for sparse_jt configuration.
"""

import os

import pytest

from sparse_jt.config import (
    Config,
    NetworkConfig,
    SolverSettings,
    dump_config,
    load_config,
    parse_config,
    preset,
)
from sparse_jt.errors import ConfigError


def test_config_initialization():
    """Test that Config can be initialized."""
    config = Config()
    assert config is not None
    assert isinstance(config.threads, int)
    assert config.threads >= 1


def test_config_threads_from_environment():
    """Test that SPARSEJT_THREADS is read."""
    old = os.environ.pop('SPARSEJT_THREADS', None)
    os.environ['SPARSEJT_THREADS'] = '3'
    try:
        assert Config().threads == 3
    finally:
        os.environ.pop('SPARSEJT_THREADS', None)
        if old:
            os.environ['SPARSEJT_THREADS'] = old


def test_config_rejects_bad_threads():
    """Test that a non-positive thread count is a config error."""
    old = os.environ.pop('SPARSEJT_THREADS', None)
    os.environ['SPARSEJT_THREADS'] = '0'
    try:
        with pytest.raises(ConfigError, match="SPARSEJT_THREADS"):
            Config()
    finally:
        os.environ.pop('SPARSEJT_THREADS', None)
        if old:
            os.environ['SPARSEJT_THREADS'] = old


def test_config_display():
    """Test that display lists the runtime settings."""
    text = Config().display()
    assert "Threads" in text
    assert "Log Level" in text


def test_network_defaults_are_valid():
    """Test the default scenario and derived powers."""
    cfg = NetworkConfig()
    assert cfg.validate()
    assert cfg.P == pytest.approx(10.0)
    assert cfg.sigma2 == pytest.approx(10 ** (-14.3))
    assert cfg.mu_eps == pytest.approx(0.1502, abs=1e-4)
    assert cfg.training_prefactor == 1.0


def test_network_validation_lists_every_error():
    """Test that validate collects all violations."""
    cfg = NetworkConfig(L=4, S=5, corr_r=1.0)
    with pytest.raises(ConfigError) as excinfo:
        cfg.validate()
    message = str(excinfo.value)
    assert message.startswith("Configuration errors:")
    assert "S must lie in [1, L]" in message
    assert "corr_r" in message


def test_solver_settings_validation():
    """Test that a bad a_mode is rejected."""
    assert SolverSettings().validate()
    with pytest.raises(ConfigError, match="a_mode"):
        SolverSettings(a_mode="eager").validate()


def test_presets():
    """Test the named presets."""
    fig3 = preset("fig3")
    assert (fig3.L, fig3.N, fig3.K) == (30, 4, 12)
    assert (fig3.U_override, fig3.B_override, fig3.B_bar_override) == (6, 6, 12)
    assert preset("small").validate()
    with pytest.raises(ConfigError, match="Unknown preset"):
        preset("fig9")


def test_parse_config_unknown_key():
    """Test that unknown keys fail fast."""
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_config({"L": "4", "antennas": "2"})


def test_parse_config_values():
    """Test typed parsing of network and solver keys."""
    cfg, settings = parse_config({"L": "8", "corr_r": "0.3", "U_override": "", "warm_start": "false"})
    assert cfg.L == 8
    assert cfg.corr_r == 0.3
    assert cfg.U_override is None
    assert settings.warm_start is False
    with pytest.raises(ConfigError, match="not a valid int"):
        parse_config({"K": "three"})


def test_dump_then_parse_is_identity(tmp_path):
    """Test that serialized configs load back unchanged."""
    cfg = NetworkConfig(L=7, S=3, corr_r=0.25, U_override=2, csit_mode="noisy")
    settings = SolverSettings(inner_tol=1e-9, dense=True)
    path = tmp_path / "scenario.cfg"
    path.write_text(dump_config(cfg, settings))
    loaded_cfg, loaded_settings = load_config(path)
    assert loaded_cfg == cfg
    assert loaded_settings == settings


def test_load_config_missing_file(tmp_path):
    """Test that a missing file is a config error."""
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.cfg")
