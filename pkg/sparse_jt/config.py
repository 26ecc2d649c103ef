"""
Configuration module for the sparse-JT simulator.

Scenario parameters live in two dataclasses (``NetworkConfig`` for the
network and fronthaul, ``SolverSettings`` for the optimizer knobs). They are
read from flat ``key=value`` files with ``#`` comments; runtime settings such
as the worker count and log level come from environment variables, with an
optional ``.env`` file.
"""

import math
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional

from dotenv import dotenv_values, load_dotenv

from .errors import ConfigError

# Load environment variables from .env file
load_dotenv()

CSIT_MODES = ("perfect", "noisy", "noisy_incomplete")
QUANT_MODES = ("statistical", "uniform", "companded")
A_MODES = ("lagged", "exact")


def dbm_to_watt(dbm: float) -> float:
    """Convert a power level in dBm to linear watts."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class NetworkConfig:
    """
    Scenario parameters of a downlink C-RAN with L RRHs serving K users.

    Defaults describe a 2 km square,
    10 MHz at 2 GHz, 40 dBm per RRH, -113 dBm noise over the band and
    32 m / 1.5 m antenna heights.

    Attributes:
        L: Number of RRHs.
        N: Antennas per RRH.
        K: Single-antenna users.
        area_m: Side length of the square deployment area in meters.
        P_dbm: Per-RRH transmit power.
        noise_dbm: Thermal noise power over the full bandwidth.
        bandwidth_hz: System bandwidth.
        carrier_mhz: Carrier frequency.
        h_rrh_m: RRH antenna height.
        h_user_m: User antenna height.
        tau: Uplink pilot length in symbols (orthogonal pilots need tau >= K).
        p_ul_dbm: Uplink pilot power.
        tau_u: Uplink training length in symbols.
        tau_d: Downlink training length in symbols.
        tau_c: Coherence length in symbols.
        C_bits_per_use: Fronthaul capacity per RRH in bits per channel use.
        S: Maximum number of active RRHs.
        epsilon_sparse: Sparsity-relaxation parameter epsilon.
        corr_r: Exponential spatial correlation coefficient.
        seed: Master seed of every random stream.
        U_override: Selected users per RRH, bypassing the capacity plan.
        B_override: CSI quantization bits, bypassing the capacity plan.
        B_bar_override: Data quantization bits, bypassing the capacity plan.
        csit_mode: One of ``perfect``, ``noisy`` or ``noisy_incomplete``.
        quant_mode: ``statistical`` Gaussian model, ``uniform`` scalar
            quantizer or ``companded`` Gaussian-CDF quantizer.
    """

    L: int = 30
    N: int = 4
    K: int = 12
    area_m: float = 2000.0
    P_dbm: float = 40.0
    noise_dbm: float = -113.0
    bandwidth_hz: float = 10e6
    carrier_mhz: float = 2000.0
    h_rrh_m: float = 32.0
    h_user_m: float = 1.5
    tau: int = 12
    p_ul_dbm: float = 23.0
    tau_u: int = 0
    tau_d: int = 0
    tau_c: int = 200
    C_bits_per_use: float = 300.0
    S: int = 12
    epsilon_sparse: float = 1e-2
    corr_r: float = 0.5
    seed: int = 0
    U_override: Optional[int] = None
    B_override: Optional[int] = None
    B_bar_override: Optional[int] = None
    csit_mode: str = "noisy_incomplete"
    quant_mode: str = "statistical"

    @property
    def P(self) -> float:
        """Per-RRH transmit power in watts."""
        return dbm_to_watt(self.P_dbm)

    @property
    def sigma2(self) -> float:
        """Thermal noise power in watts."""
        return dbm_to_watt(self.noise_dbm)

    @property
    def p_ul(self) -> float:
        """Uplink pilot power in watts."""
        return dbm_to_watt(self.p_ul_dbm)

    @property
    def mu_eps(self) -> float:
        """Exponent mu_eps = 1 / log2(1 + 1/epsilon) of the sparsity measure."""
        return 1.0 / math.log2(1.0 + 1.0 / self.epsilon_sparse)

    @property
    def training_prefactor(self) -> float:
        """Fraction of the coherence block left for data, 1 - (tau_u + tau_d) / tau_c."""
        return 1.0 - (self.tau_u + self.tau_d) / self.tau_c

    def validate(self) -> bool:
        """
        Validate the scenario.

        Returns:
            bool: True when every invariant holds.

        Raises:
            ConfigError: Listing every violated invariant.
        """
        errors = []

        if self.L < 1:
            errors.append("L must be >= 1")
        if self.N < 1:
            errors.append("N must be >= 1")
        if self.K < 1:
            errors.append("K must be >= 1")
        if not 1 <= self.S <= self.L:
            errors.append("S must lie in [1, L]")
        if not 0.0 <= self.corr_r < 1.0:
            errors.append("corr_r must lie in [0, 1)")
        if self.tau < self.K:
            errors.append("tau must be >= K for orthogonal pilots")
        if self.epsilon_sparse <= 0:
            errors.append("epsilon_sparse must be > 0")
        if self.area_m < 0:
            errors.append("area_m must be >= 0")
        if self.C_bits_per_use <= 0:
            errors.append("C_bits_per_use must be > 0")
        if self.tau_c <= 0 or self.tau_u + self.tau_d >= self.tau_c:
            errors.append("training lengths must leave room in tau_c")
        if self.U_override is not None and not 1 <= self.U_override <= self.K:
            errors.append("U_override must lie in [1, K]")
        if self.B_override is not None and self.B_override < 1:
            errors.append("B_override must be >= 1")
        if self.B_bar_override is not None and self.B_bar_override < 1:
            errors.append("B_bar_override must be >= 1")
        if self.csit_mode not in CSIT_MODES:
            errors.append(f"csit_mode must be one of {', '.join(CSIT_MODES)}")
        if self.quant_mode not in QUANT_MODES:
            errors.append(f"quant_mode must be one of {', '.join(QUANT_MODES)}")

        if errors:
            raise ConfigError(f"Configuration errors: {', '.join(errors)}")

        return True


@dataclass(frozen=True)
class SolverSettings:
    """
    Knobs of the sparse joint transmission solver.

    Attributes:
        sparsity_tol: Accepted |sparsity - S| at the end of the bisection.
        inner_tol: Relative change of gamma that stops the power iteration.
        kkt_tol: KKT residual the power iteration must also reach.
        max_inner_iters: Cap on power-iteration steps per multiplier.
        refine_iters: Cap on quasi-Newton steps that finish a stalled power
            iteration (0 leaves the power iteration on its own).
        max_doublings: Cap on bracket expansions of the multiplier.
        bracket_width: Bisection stops once the bracket is this narrow.
        warm_start: Start each multiplier from the previous iterate.
        dense: Solve with dense LNK x LNK matrices (reference mode).
        a_mode: ``lagged`` rebuilds the data-quantization term from the
            previous iterate; ``exact`` folds it into the quadratic form.
        check_second_order: Run the curvature test on the final iterate.
        active_threshold: Relative per-RRH power below which an RRH is idle.
        strict: Raise instead of flagging non-fatal solver conditions.
    """

    sparsity_tol: float = 0.05
    inner_tol: float = 1e-8
    kkt_tol: float = 1e-6
    max_inner_iters: int = 500
    refine_iters: int = 500
    max_doublings: int = 60
    bracket_width: float = 1e-8
    warm_start: bool = True
    dense: bool = False
    a_mode: str = "lagged"
    check_second_order: bool = True
    active_threshold: float = 1e-3
    strict: bool = False

    def validate(self) -> bool:
        """Validate the solver knobs, raising ConfigError on violations."""
        errors = []

        if self.sparsity_tol <= 0:
            errors.append("sparsity_tol must be > 0")
        if self.inner_tol <= 0:
            errors.append("inner_tol must be > 0")
        if self.kkt_tol <= 0:
            errors.append("kkt_tol must be > 0")
        if self.max_inner_iters < 1:
            errors.append("max_inner_iters must be >= 1")
        if self.refine_iters < 0:
            errors.append("refine_iters must be >= 0")
        if self.max_doublings < 1:
            errors.append("max_doublings must be >= 1")
        if self.a_mode not in A_MODES:
            errors.append(f"a_mode must be one of {', '.join(A_MODES)}")
        if not 0.0 <= self.active_threshold < 1.0:
            errors.append("active_threshold must lie in [0, 1)")

        if errors:
            raise ConfigError(f"Configuration errors: {', '.join(errors)}")

        return True


PRESETS: dict[str, dict[str, Any]] = {
    "fig3": dict(
        L=30, N=4, K=12, S=12, C_bits_per_use=300.0,
        U_override=6, B_override=6, B_bar_override=12,
    ),
    "fig3-scaled": dict(L=10, N=2, K=6, S=6, tau=6, C_bits_per_use=100.0),
    "small": dict(L=4, N=2, K=3, S=2, tau=3, area_m=500.0, C_bits_per_use=100.0, U_override=2),
}


def preset(name: str) -> NetworkConfig:
    """
    Build a NetworkConfig from a named preset.

    Raises:
        ConfigError: If the preset name is unknown.
    """
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset '{name}' (known: {', '.join(PRESETS)})")
    return NetworkConfig(**PRESETS[name])


def _field_types(cls) -> dict[str, type]:
    defaults = cls()
    types = {}
    for f in fields(cls):
        value = getattr(defaults, f.name)
        # Optional[int] overrides default to None
        types[f.name] = int if value is None else type(value)
    return types


_NETWORK_TYPES = _field_types(NetworkConfig)
_SOLVER_TYPES = _field_types(SolverSettings)


def _parse_value(key: str, raw: Optional[str], kind: type) -> Any:
    if raw is None or raw.strip() == "":
        if key in ("U_override", "B_override", "B_bar_override"):
            return None
        raise ConfigError(f"Configuration errors: {key} has no value")
    text = raw.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered not in ("true", "false"):
                raise ValueError(text)
            return lowered == "true"
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError as e:
        raise ConfigError(f"Configuration errors: {key}={text!r} is not a valid {kind.__name__}") from e


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(
    values: dict[str, Optional[str]],
    base: Optional[NetworkConfig] = None,
    base_settings: Optional[SolverSettings] = None,
) -> tuple[NetworkConfig, SolverSettings]:
    """
    Apply raw ``key -> text`` pairs on top of base configurations.

    Args:
        values: Mapping as returned by ``dotenv_values``.
        base: NetworkConfig to start from (defaults when None).
        base_settings: SolverSettings to start from (defaults when None).

    Returns:
        Tuple of the resulting NetworkConfig and SolverSettings.

    Raises:
        ConfigError: On unknown keys or unparsable values.
    """
    cfg = base or NetworkConfig()
    settings = base_settings or SolverSettings()

    unknown = [k for k in values if k not in _NETWORK_TYPES and k not in _SOLVER_TYPES]
    if unknown:
        raise ConfigError(f"Configuration errors: unknown keys {', '.join(sorted(unknown))}")

    net_updates = {
        k: _parse_value(k, v, _NETWORK_TYPES[k]) for k, v in values.items() if k in _NETWORK_TYPES
    }
    solver_updates = {
        k: _parse_value(k, v, _SOLVER_TYPES[k]) for k, v in values.items() if k in _SOLVER_TYPES
    }
    return replace(cfg, **net_updates), replace(settings, **solver_updates)


def load_config(
    path: str | os.PathLike,
    base: Optional[NetworkConfig] = None,
    base_settings: Optional[SolverSettings] = None,
) -> tuple[NetworkConfig, SolverSettings]:
    """
    Load a flat ``key=value`` configuration file.

    Args:
        path: File with one ``key=value`` per line and ``#`` comments.
        base: Starting NetworkConfig (e.g. a preset).
        base_settings: Starting SolverSettings.

    Returns:
        Tuple of NetworkConfig and SolverSettings.

    Raises:
        ConfigError: If the file is missing or holds unknown keys.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Configuration errors: file {path} not found")
    return parse_config(dict(dotenv_values(path)), base, base_settings)


def dump_config(cfg: NetworkConfig, settings: Optional[SolverSettings] = None) -> str:
    """Serialize every recognized key as ``key=value`` lines."""
    lines = ["# network"]
    lines += [f"{k}={_format_value(v)}" for k, v in asdict(cfg).items()]
    if settings is not None:
        lines.append("# solver")
        lines += [f"{k}={_format_value(v)}" for k, v in asdict(settings).items()]
    return "\n".join(lines) + "\n"


class Config:
    """Runtime settings read from environment variables."""

    def __init__(self):
        """Initialize runtime settings from the environment."""
        self.threads: int = self._read_threads(os.getenv('SPARSEJT_THREADS', '1'))
        self.log_level: str = os.getenv('SPARSEJT_LOG_LEVEL', 'INFO').upper()
        self.output_dir: Path = Path(os.getenv('SPARSEJT_OUTPUT_DIR', 'results'))

    @staticmethod
    def _read_threads(raw: str) -> int:
        try:
            threads = int(raw)
        except ValueError as e:
            raise ConfigError(f"Configuration errors: SPARSEJT_THREADS={raw!r} is not an integer") from e
        if threads < 1:
            raise ConfigError("Configuration errors: SPARSEJT_THREADS must be >= 1")
        return threads

    def display(self) -> str:
        """Render the runtime settings as a small table."""
        return "\n".join([
            "=" * 50,
            "Runtime Configuration",
            "=" * 50,
            f"Threads: {self.threads}",
            f"Log Level: {self.log_level}",
            f"Output Dir: {self.output_dir}",
            "=" * 50,
        ])
