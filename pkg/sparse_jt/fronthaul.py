"""
Fronthaul models: CSI selection and quantization on the RRH-to-BBU link,
precoded-signal quantization on the BBU-to-RRH link, and the bit
allocations that keep both within a finite capacity.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .config import NetworkConfig
from .errors import CapacityTooSmall
from .net_model import (
    ChannelSet,
    Topology,
    complex_gaussian,
    estimate_covariance,
    link_covariances,
    sample_channel_and_estimate,
)

logger = logging.getLogger(__name__)

# High-resolution distortion constant of a Gaussian source
KAPPA = math.pi * math.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class QuantizationPlan:
    """
    Per-RRH fronthaul plan.

    Attributes:
        U: (L,) selected users per RRH.
        B: (L,) CSI quantization bits per real component.
        B_bar: (L,) data quantization bits per real component.
        eta: (L,) data quantization noise scale.
        rate_csi: (L,) CSI feedback rate in bits per channel use.
        rate_data: (L,) precoded data rate in bits per channel use.
    """

    U: np.ndarray
    B: np.ndarray
    B_bar: np.ndarray
    eta: np.ndarray
    rate_csi: np.ndarray
    rate_data: np.ndarray

    @property
    def budgets(self) -> np.ndarray:
        """Per-RRH precoder power caps (1 + eta)^-1."""
        return 1.0 / (1.0 + self.eta)


def capacity_bits_per_use(capacity_bps: float, bandwidth_hz: float) -> float:
    """Normalize a fronthaul capacity in bit/s to bits per channel use."""
    if bandwidth_hz <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth_hz}")
    return capacity_bps / bandwidth_hz


@dataclass(frozen=True)
class GainProfile:
    """
    Empirical distribution of per-antenna channel-estimate gains |h_est^n|^2.

    The CSI quantization noise level at B bits is KAPPA * 2^(-2B) times the
    mean gain. How many gains clear that level tells how many users per RRH
    are worth reporting at B bits.

    Attributes:
        gains: Sorted gain samples.
        reference: Mean gain.
    """

    gains: np.ndarray
    reference: float

    @classmethod
    def from_samples(cls, samples) -> "GainProfile":
        gains = np.sort(np.asarray(samples, dtype=float).reshape(-1))
        if gains.size == 0:
            raise ValueError("gain profile needs at least one sample")
        return cls(gains=gains, reference=float(np.mean(gains)))

    def noise_level(self, bits: float) -> float:
        return KAPPA * 2.0 ** (-2.0 * bits) * self.reference

    def exceedance(self, level: float) -> float:
        """Fraction of gains strictly above ``level``."""
        return float(1.0 - np.searchsorted(self.gains, level, side="right") / self.gains.size)

    def supported_users(self, bits: float, K: int) -> int:
        """Users per RRH whose gains clear the noise level at ``bits``, floor(K * P(gain > level))."""
        return math.floor(K * self.exceedance(self.noise_level(bits)))


def _log2_pow2_minus_one(x: float) -> float:
    # log2(2**x - 1) without overflow for large x
    return x + math.log2(-math.expm1(-x * math.log(2.0)))


def _bits_for_rate(rate_per_coefficient: float) -> int:
    if rate_per_coefficient <= 0:
        return 0
    return math.floor(0.5 * (math.log2(KAPPA) + _log2_pow2_minus_one(rate_per_coefficient)))


def _rate_per_coefficient(bits: float) -> float:
    # log2(1 + 2**(2B) / KAPPA), stable for large B
    return float(np.logaddexp2(0.0, 2.0 * bits - math.log2(KAPPA)))


def quantization_noise_scale(B_bar) -> np.ndarray:
    """eta(B_bar) = KAPPA * 2^(-2 B_bar)."""
    return KAPPA * np.power(2.0, -2.0 * np.asarray(B_bar, dtype=float))


def plan_csi_bits(C: float, U: int, N: int) -> int:
    """
    Largest CSI bit depth that fits U users of N antennas into capacity C.

    Raises:
        CapacityTooSmall: If not even one bit fits.
    """
    if C <= 0 or U * N < 1:
        raise CapacityTooSmall(f"invalid capacity {C} for U={U}, N={N}")
    bits = _bits_for_rate(C / (U * N))
    if bits < 1:
        raise CapacityTooSmall(f"C={C} bits/use cannot carry CSI of U={U} users with N={N} antennas")
    return bits


def plan_csi_users(C: float, B: int, N: int, K: int) -> int:
    """
    Number of users whose CSI fits into capacity C at B bits.

    Raises:
        CapacityTooSmall: If not a single user fits.
    """
    if C <= 0:
        raise CapacityTooSmall(f"invalid capacity {C}")
    users = min(K, math.floor(C / (N * _rate_per_coefficient(B))))
    if users < 1:
        raise CapacityTooSmall(f"C={C} bits/use cannot carry one user's CSI at B={B}")
    return users


def plan_data_bits(C: float, N: int) -> int:
    """
    Data quantization bits that fit N precoded streams into capacity C.

    Raises:
        CapacityTooSmall: If not even one bit fits.
    """
    if C <= 0:
        raise CapacityTooSmall(f"invalid capacity {C}")
    bits = _bits_for_rate(C / N)
    if bits < 1:
        raise CapacityTooSmall(f"C={C} bits/use cannot carry N={N} quantized streams")
    return bits


def fronthaul_rates(U, N: int, B, B_bar) -> tuple[np.ndarray, np.ndarray]:
    """
    Fronthaul load of a plan.

    Returns:
        Tuple (rate_csi, rate_data) in bits per channel use.
    """
    rate_csi = np.asarray(U, dtype=float) * N * np.vectorize(_rate_per_coefficient)(B)
    rate_data = N * np.vectorize(_rate_per_coefficient)(B_bar)
    return rate_csi, rate_data


def plan_quantization(cfg: NetworkConfig) -> QuantizationPlan:
    """
    Derive the per-RRH plan from capacity, honouring any overrides.

    U defaults to half the users, which is where roughly half of the channel
    gains clear the quantization noise at six bits.

    Raises:
        CapacityTooSmall: If the capacity cannot support the plan.
    """
    C, N, K = cfg.C_bits_per_use, cfg.N, cfg.K

    if cfg.csit_mode != "noisy_incomplete":
        # every channel is reported unquantized; B only feeds the rate report
        users = K
        bits = cfg.B_override or max(1, _bits_for_rate(C / (users * N)))
    elif cfg.U_override is not None:
        users = cfg.U_override
        bits = cfg.B_override or plan_csi_bits(C, users, N)
    elif cfg.B_override is not None:
        bits = cfg.B_override
        users = plan_csi_users(C, bits, N, K)
    else:
        users = max(1, K // 2)
        bits = plan_csi_bits(C, users, N)

    data_bits = cfg.B_bar_override or plan_data_bits(C, N)

    U = np.full(cfg.L, users, dtype=int)
    B = np.full(cfg.L, bits, dtype=int)
    B_bar = np.full(cfg.L, data_bits, dtype=int)
    rate_csi, rate_data = fronthaul_rates(U, N, B, B_bar)

    if np.any(rate_csi > C) or np.any(rate_data > C):
        logger.info(
            "Plan (U, B, B_bar)=(%s, %s, %s) exceeds C=%s bits/use (csi %.1f, data %.1f)",
            users, bits, data_bits, C, rate_csi.max(), rate_data.max(),
        )

    return QuantizationPlan(
        U=U, B=B, B_bar=B_bar, eta=quantization_noise_scale(B_bar),
        rate_csi=rate_csi, rate_data=rate_data,
    )


def select_channels(estimates: np.ndarray, U: int) -> tuple[int, ...]:
    """
    Pick the U strongest estimated channels of one RRH.

    Args:
        estimates: (K, N) estimated channels of the RRH.
        U: Number of users to report.

    Returns:
        User indices by descending gain; ties go to the lower index.
    """
    gains = np.sum(np.abs(estimates) ** 2, axis=-1)
    order = np.lexsort((np.arange(gains.size), -gains))
    return tuple(int(k) for k in order[:U])


def csi_quant_noise_cov(beta, R: np.ndarray, tau: int, p_ul: float, sigma2: float, B) -> np.ndarray:
    """
    Diagonal covariance of the CSI quantization noise.

    Q[n, n] = KAPPA * 2^(-2B) * Gamma[n, n] where Gamma is the covariance of
    the MMSE estimate; spatial correlation of the error is ignored.
    """
    gamma, _ = estimate_covariance(beta, R, sigma2 / (tau * p_ul))
    scale = KAPPA * np.power(2.0, -2.0 * np.asarray(B, dtype=float))
    variances = np.real(np.diagonal(gamma, axis1=-2, axis2=-1))
    return _as_diagonal(np.asarray(scale)[..., None] * variances)


def _as_diagonal(variances: np.ndarray) -> np.ndarray:
    out = np.zeros(variances.shape + (variances.shape[-1],), dtype=complex)
    idx = np.arange(variances.shape[-1])
    out[..., idx, idx] = variances
    return out


def _uniform_quantize(x: np.ndarray, std: np.ndarray, bits: np.ndarray) -> np.ndarray:
    # mid-rise levels with step sqrt(12 KAPPA) std 2^-B, range not clipped
    step = np.sqrt(12.0 * KAPPA) * std * np.power(2.0, -bits)
    with np.errstate(divide="ignore", invalid="ignore"):
        cell = np.floor(np.where(step > 0, x / step, 0.0))
    return np.where(step > 0, (cell + 0.5) * step, 0.0)


def _compand_quantize(x: np.ndarray, std: np.ndarray, bits: np.ndarray) -> np.ndarray:
    # 2^B uniform levels on the cube-root compander of a Gaussian: u = Phi(x / (sqrt(3) std))
    levels = np.power(2.0, bits)
    scale = np.sqrt(3.0) * std
    with np.errstate(divide="ignore", invalid="ignore"):
        u = norm.cdf(np.where(scale > 0, x / scale, 0.0))
    cell = np.clip(np.floor(u * levels), 0, levels - 1)
    centre = (cell + 0.5) / levels
    return np.where(scale > 0, scale * norm.ppf(centre), 0.0)


SCALAR_QUANTIZERS = {"uniform": _uniform_quantize, "companded": _compand_quantize}


def quantize_csi(
    h_est: np.ndarray,
    Q: np.ndarray,
    rng: np.random.Generator,
    mode: str = "statistical",
    bits=None,
) -> np.ndarray:
    """
    Quantize channel estimates for the fronthaul.

    Args:
        h_est: (..., N) estimates.
        Q: (..., N, N) diagonal quantization-noise covariance.
        rng: Random generator (statistical mode only).
        mode: ``statistical`` adds CN(0, Q). ``uniform`` rounds each real
            component to a grid with step sqrt(12 KAPPA) sigma 2^-B, whose
            error variance is exactly what Q models. ``companded`` puts 2^B
            levels on the Gaussian compander instead, a fixed-rate quantizer
            with the same high-resolution distortion.
        bits: Bits per real component, required by the scalar quantizers.

    Returns:
        Quantized estimates h_bar with the shape of ``h_est``.
    """
    if mode == "statistical":
        return h_est + complex_gaussian(Q, rng)
    if mode not in SCALAR_QUANTIZERS:
        raise ValueError(f"unknown quantization mode '{mode}'")
    if bits is None:
        raise ValueError(f"{mode} quantization needs the bit depth")

    quantize = SCALAR_QUANTIZERS[mode]
    bits = np.broadcast_to(np.asarray(bits, dtype=float)[..., None], h_est.shape)
    q_var = np.real(np.diagonal(Q, axis1=-2, axis2=-1))
    # per-component standard deviation of the estimate, recovered from Q
    component_std = np.sqrt(q_var / (KAPPA * np.power(2.0, -2.0 * bits)) / 2.0)
    return quantize(h_est.real, component_std, bits) + 1j * quantize(h_est.imag, component_std, bits)


def data_quant_noise_cov(F_l: np.ndarray, eta: float, P: float) -> np.ndarray:
    """
    Covariance of the precoded-signal quantization noise of one RRH.

    Args:
        F_l: (N, K) precoder block of the RRH.
        eta: Quantization noise scale.
        P: Transmit power in watts.

    Returns:
        (N, N) diagonal V_l = P * eta * diag(sum_k |f^n_{l,k}|^2).
    """
    return np.diag(P * eta * np.sum(np.abs(F_l) ** 2, axis=1)).astype(complex)


def acquire_csit(
    topology: Topology,
    cfg: NetworkConfig,
    plan: QuantizationPlan,
    rng: np.random.Generator,
) -> ChannelSet:
    """
    Run the CSI acquisition chain for one fading realization.

    Each RRH estimates all K channels from uplink pilots, keeps the U
    strongest, quantizes them and reports them to the BBU.

    Args:
        topology: Positions and large-scale gains.
        cfg: Scenario, including the CSIT mode.
        plan: Per-RRH fronthaul plan.
        rng: Random generator for fading, estimation and quantization.

    Returns:
        ChannelSet with true, estimated and quantized channels.
    """
    beta = topology.beta
    R = link_covariances(topology, cfg)
    L, K, N = cfg.L, cfg.K, cfg.N

    if cfg.csit_mode == "perfect":
        h_true = complex_gaussian(beta[..., None, None] * R, rng)
        zeros = np.zeros((L, K, N, N), dtype=complex)
        return ChannelSet(
            R=R, beta=beta, h_bar=h_true.copy(), Phi=zeros, Q=zeros.copy(),
            selected=tuple(tuple(range(K)) for _ in range(L)),
            h_true=h_true, h_est=h_true.copy(),
        )

    h_true, h_est, Phi = sample_channel_and_estimate(beta, R, cfg, rng)

    if cfg.csit_mode == "noisy":
        selected = tuple(tuple(range(K)) for _ in range(L))
        return ChannelSet(
            R=R, beta=beta, h_bar=h_est.copy(), Phi=Phi,
            Q=np.zeros_like(Phi), selected=selected,
            h_true=h_true, h_est=h_est,
        )

    selected = tuple(select_channels(h_est[ell], int(plan.U[ell])) for ell in range(L))
    known = np.zeros((L, K), dtype=bool)
    for ell, users in enumerate(selected):
        known[ell, list(users)] = True

    Q = csi_quant_noise_cov(beta, R, cfg.tau, cfg.p_ul, cfg.sigma2, plan.B[:, None])
    Q = np.where(known[..., None, None], Q, 0.0)
    h_bar = quantize_csi(h_est, Q, rng, mode=cfg.quant_mode, bits=plan.B[:, None])
    h_bar = np.where(known[..., None], h_bar, 0.0)

    logger.debug("Selected users per RRH: %s", selected)
    return ChannelSet(
        R=R, beta=beta, h_bar=h_bar, Phi=Phi, Q=Q, selected=selected,
        h_true=h_true, h_est=h_est,
    )


def sharing_overhead(plan: QuantizationPlan, active, cfg: NetworkConfig) -> dict[str, float]:
    """
    Fronthaul overheads of a sparse transmission.

    Returns:
        Dictionary with ``csi_factor`` (sum U_l / (K L)), ``data_load``
        (|A| * C per channel use) and ``data_load_full`` (L * C).
    """
    return {
        "csi_factor": float(np.sum(plan.U)) / (cfg.K * cfg.L),
        "data_load": len(active) * cfg.C_bits_per_use,
        "data_load_full": cfg.L * cfg.C_bits_per_use,
    }
