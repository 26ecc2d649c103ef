"""
Network model: topology, large-scale fading, spatially correlated channels
and the MMSE channel-estimation error model.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import toeplitz
from scipy.spatial.distance import cdist

from .config import NetworkConfig
from .errors import ConfigError

logger = logging.getLogger(__name__)

D_MIN_M = 10.0


@dataclass(frozen=True)
class Topology:
    """
    RRH and user positions with the large-scale gains between them.

    Attributes:
        rrh_xy: (L, 2) RRH positions in meters.
        user_xy: (K, 2) user positions in meters.
        beta: (L, K) linear large-scale fading gains.
    """

    rrh_xy: np.ndarray
    user_xy: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class CsitView:
    """
    What the BBU knows about the channels: quantized estimates and the
    second-order statistics of their errors. Precoding strategies only ever
    receive this view, never the true channels.

    Attributes:
        R: (L, K, N, N) spatial correlation matrices.
        beta: (L, K) large-scale gains.
        h_bar: (L, K, N) quantized estimates, zero where unknown.
        Phi: (L, K, N, N) estimation-error covariances.
        Q: (L, K, N, N) diagonal CSI-quantization covariances.
        selected: Per-RRH ordered tuple of reported user indices.
    """

    R: np.ndarray
    beta: np.ndarray
    h_bar: np.ndarray
    Phi: np.ndarray
    Q: np.ndarray
    selected: tuple[tuple[int, ...], ...]

    @property
    def L(self) -> int:
        return self.h_bar.shape[0]

    @property
    def K(self) -> int:
        return self.h_bar.shape[1]

    @property
    def N(self) -> int:
        return self.h_bar.shape[2]

    @property
    def known(self) -> np.ndarray:
        """(L, K) mask of links whose CSI reached the BBU."""
        mask = np.zeros((self.L, self.K), dtype=bool)
        for ell, users in enumerate(self.selected):
            mask[ell, list(users)] = True
        return mask


@dataclass(frozen=True)
class ChannelSet(CsitView):
    """
    Full channel state of one fading realization.

    Extends the BBU view with the true channels and the unquantized RRH-side
    estimates, which only the evaluation of true SINR may touch.

    Attributes:
        h_true: (L, K, N) true channels.
        h_est: (L, K, N) MMSE estimates at the RRHs.
    """

    h_true: Optional[np.ndarray] = None
    h_est: Optional[np.ndarray] = None

    def csit(self) -> CsitView:
        """Strip the true channels, returning what the BBU may use."""
        return CsitView(
            R=self.R, beta=self.beta, h_bar=self.h_bar,
            Phi=self.Phi, Q=self.Q, selected=self.selected,
        )


def pathloss_db(d_m, cfg: NetworkConfig):
    """
    COST-231 Hata path loss (medium city) in dB.

    Distances below D_MIN_M are clamped so co-located nodes keep a finite gain.

    Args:
        d_m: Distance(s) in meters, scalar or array.
        cfg: Scenario holding carrier frequency and antenna heights.

    Returns:
        Path loss in dB with the shape of ``d_m``.
    """
    d_km = np.maximum(np.asarray(d_m, dtype=float), D_MIN_M) / 1000.0
    log_f = np.log10(cfg.carrier_mhz)
    log_hb = np.log10(cfg.h_rrh_m)
    a_hm = (1.1 * log_f - 0.7) * cfg.h_user_m - (1.56 * log_f - 0.8)
    return (
        46.3 + 33.9 * log_f - 13.82 * log_hb - a_hm
        + (44.9 - 6.55 * log_hb) * np.log10(d_km)
    )


def generate_topology(cfg: NetworkConfig, rng: np.random.Generator) -> Topology:
    """
    Drop L RRHs and K users uniformly in the square and compute beta.

    Args:
        cfg: Scenario parameters.
        rng: Random generator; the same seed yields the same topology.

    Returns:
        Topology with positions and large-scale gains.
    """
    rrh_xy = rng.uniform(0.0, cfg.area_m, size=(cfg.L, 2))
    user_xy = rng.uniform(0.0, cfg.area_m, size=(cfg.K, 2))
    distances = cdist(rrh_xy, user_xy)
    beta = 10.0 ** (-pathloss_db(distances, cfg) / 10.0)
    return Topology(rrh_xy=rrh_xy, user_xy=user_xy, beta=beta)


def spatial_covariance(N: int, corr_r: float) -> np.ndarray:
    """Exponential correlation model R[m, n] = corr_r ** |m - n|."""
    if not 0.0 <= corr_r < 1.0:
        raise ConfigError(f"Configuration errors: corr_r={corr_r} outside [0, 1)")
    return toeplitz(corr_r ** np.arange(N)).astype(complex)


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Hermitian square root of (a stack of) PSD matrices; tiny negative eigenvalues are clipped."""
    w, v = np.linalg.eigh(cov)
    root = np.sqrt(np.clip(w, 0.0, None))
    return (v * root[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def complex_gaussian(cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one CN(0, cov) vector per covariance in the stack."""
    shape = cov.shape[:-1]
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return np.einsum("...ij,...j->...i", psd_sqrt(cov), z)


def pilot_noise_ratio(cfg: NetworkConfig) -> float:
    """Effective estimation noise sigma^2 / (tau * p_ul)."""
    return cfg.sigma2 / (cfg.tau * cfg.p_ul)


def estimate_covariance(beta, R: np.ndarray, c: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Covariances of the MMSE estimate and of its error.

    Args:
        beta: Large-scale gain(s), broadcastable against R[..., 0, 0].
        R: Spatial correlation matrix (stack).
        c: Pilot noise ratio sigma^2 / (tau * p_ul), must be positive.

    Returns:
        Tuple (Gamma, Phi) with Gamma = beta^2 R (beta R + c I)^-1 R and
        Phi = beta R - Gamma.

    Raises:
        ValueError: If c is not positive.
    """
    if not c > 0:
        raise ValueError(f"pilot noise ratio must be positive, got {c}")
    b_r = np.asarray(beta, dtype=float)[..., None, None] * R
    eye = np.eye(R.shape[-1])
    gamma = b_r @ np.linalg.solve(b_r + c * eye, b_r)
    gamma = 0.5 * (gamma + np.swapaxes(gamma.conj(), -1, -2))
    phi = b_r - gamma
    phi = 0.5 * (phi + np.swapaxes(phi.conj(), -1, -2))
    return gamma, phi


def sample_channel_and_estimate(
    beta,
    R: np.ndarray,
    cfg: NetworkConfig,
    rng: np.random.Generator,
    pilot_ratio: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Sample true channel, MMSE estimate and error covariance for one or many links.

    The estimate and the error are drawn independently and the true channel
    is formed as h = h_est - e, so the error is independent of the estimate.

    Args:
        beta: Large-scale gain, scalar or (L, K).
        R: (N, N) or (L, K, N, N) correlation matrices.
        cfg: Scenario (pilot length, powers).
        rng: Random generator.
        pilot_ratio: Override for sigma^2 / (tau * p_ul).

    Returns:
        Tuple (h_true, h_est, Phi).
    """
    c = pilot_noise_ratio(cfg) if pilot_ratio is None else pilot_ratio
    gamma, phi = estimate_covariance(beta, R, c)
    h_est = complex_gaussian(gamma, rng)
    error = complex_gaussian(phi, rng)
    return h_est - error, h_est, phi


def link_covariances(topology: Topology, cfg: NetworkConfig) -> np.ndarray:
    """(L, K, N, N) correlation matrices, one per RRH-user link."""
    R = spatial_covariance(cfg.N, cfg.corr_r)
    return np.broadcast_to(R, topology.beta.shape + R.shape).copy()
