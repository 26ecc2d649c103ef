"""
Spectral-efficiency metrics: the effective noise of imperfect CSIT, the
lower bound the optimizer maximizes, the true SINR and Monte Carlo ergodic
spectral efficiency.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .config import NetworkConfig
from .errors import ConfigError, DimensionMismatch, SimulationError, SparseJTError
from .fronthaul import GainProfile, QuantizationPlan, acquire_csit, plan_quantization
from .net_model import (
    ChannelSet,
    CsitView,
    Topology,
    generate_topology,
    link_covariances,
    sample_channel_and_estimate,
)
from .spca_core import StackedPrecoder, data_noise_terms

logger = logging.getLogger(__name__)

Strategy = Callable[[CsitView, QuantizationPlan, NetworkConfig], StackedPrecoder]
Precoder = Union[StackedPrecoder, np.ndarray]


@dataclass(frozen=True)
class NoiseBudget:
    """
    Effective noise variance of one user, split by origin (watts).

    Attributes:
        estimation: Channel-estimation error term.
        csi_quantization: CSI quantization term.
        data_quantization: Precoded-signal quantization term.
        thermal: Receiver noise sigma^2.
    """

    estimation: float
    csi_quantization: float
    data_quantization: float
    thermal: float

    @property
    def sigma_tilde_sq(self) -> float:
        return self.estimation + self.csi_quantization + self.data_quantization + self.thermal


@dataclass(frozen=True)
class SEReport:
    """Per-user and total spectral efficiency in bits/s/Hz."""

    per_user: np.ndarray
    total: float


@dataclass(frozen=True)
class TrueSE:
    """Per-user SINR under the true channels and the resulting SE."""

    sinr: np.ndarray
    per_user: np.ndarray
    total: float


@dataclass(frozen=True)
class ErgodicReport:
    """
    Monte Carlo estimate of the ergodic sum-SE.

    Attributes:
        mean: Mean sum-SE including the training prefactor.
        stderr: Standard error of the mean.
        prefactor: 1 - (tau_u + tau_d) / tau_c.
        n_ok: Realizations evaluated.
        n_failed: Realizations skipped because the strategy failed.
        samples: Per-realization sum-SE values in (drop, fade) order.
    """

    mean: float
    stderr: float
    prefactor: float
    n_ok: int
    n_failed: int
    samples: np.ndarray


def _blocks(f: Precoder, csit: CsitView) -> np.ndarray:
    """(L, K, N) blocks of a stacked vector or of an already unstacked array."""
    if isinstance(f, StackedPrecoder):
        if (f.L, f.N, f.K) != (csit.L, csit.N, csit.K):
            raise DimensionMismatch(
                f"precoder dimensions {(f.L, f.N, f.K)} do not match channels {(csit.L, csit.N, csit.K)}"
            )
        return f.unstack()
    F = np.asarray(f, dtype=complex)
    if F.shape != (csit.L, csit.K, csit.N):
        raise DimensionMismatch(f"expected precoder blocks of shape {(csit.L, csit.K, csit.N)}, got {F.shape}")
    return F


def effective_noise_var(
    f: Precoder,
    channels: CsitView,
    plan: QuantizationPlan,
    cfg: NetworkConfig,
    k: int,
) -> NoiseBudget:
    """
    Effective noise variance of user k.

    sigma~^2_k = P sum_l sum_i f_{l,i}^H (Phi_{l,k} + Q_{l,k}) f_{l,i}
                 + sum_l beta_{l,k} Tr(R_{l,k} V_l) + sigma^2,

    with Phi and Q counted only on links whose CSI reached the BBU.

    Args:
        f: Precoder at its physical power level.
        channels: CSIT view or full channel set.
        plan: Fronthaul plan providing eta.
        cfg: Scenario.
        k: User index.

    Raises:
        DimensionMismatch: If f does not match the channel dimensions.
    """
    F = _blocks(f, channels)
    known = channels.known[:, k]
    power_cov = np.einsum("lin,lim->lnm", F, F.conj())
    phi = np.einsum("lnm,lmn->l", channels.Phi[:, k], power_cov).real
    q = np.einsum("lnm,lmn->l", channels.Q[:, k], power_cov).real
    data = data_noise_terms(channels, plan, cfg, F)[k]
    return NoiseBudget(
        estimation=cfg.P * float(np.sum(phi[known])),
        csi_quantization=cfg.P * float(np.sum(q[known])),
        data_quantization=float(data),
        thermal=cfg.sigma2,
    )


def se_lower_bound(
    f: Precoder,
    channels: CsitView,
    plan: QuantizationPlan,
    cfg: NetworkConfig,
    method: str = "stacked",
) -> SEReport:
    """
    Lower bound on the instantaneous SE given the BBU's CSIT.

    R_k = log2(1 + |h_k^H f_k|^2 / (sum_{i != k} |h_k^H f_i|^2 + sigma~^2_k / P))
    with h_k the stacked quantized channel (zero blocks where unknown).

    Args:
        method: ``stacked`` evaluates with network-wide vectors, ``per_rrh``
            accumulates the per-RRH inner products one RRH at a time.
    """
    F = _blocks(f, channels)
    L, K = channels.L, channels.K
    h_bar = np.where(channels.known[..., None], channels.h_bar, 0.0)

    if method == "stacked":
        h = h_bar.transpose(1, 0, 2).reshape(K, -1)
        Fm = F.transpose(1, 0, 2).reshape(K, -1)
        X = h.conj() @ Fm.T
    elif method == "per_rrh":
        X = np.zeros((K, K), dtype=complex)
        for ell in range(L):
            for k in range(K):
                for i in range(K):
                    X[k, i] += np.vdot(h_bar[ell, k], F[ell, i])
    else:
        raise ValueError(f"unknown evaluation method '{method}'")

    received = np.abs(X) ** 2
    signal = np.diagonal(received)
    interference = received.sum(axis=1) - signal
    noise = np.array([
        effective_noise_var(F, channels, plan, cfg, k).sigma_tilde_sq for k in range(K)
    ]) / cfg.P
    per_user = np.log2(1.0 + signal / (interference + noise))
    return SEReport(per_user=per_user, total=float(per_user.sum()))


def sinr_true(
    channels: ChannelSet,
    F: Precoder,
    plan: QuantizationPlan,
    cfg: NetworkConfig,
) -> TrueSE:
    """
    SINR of every user under the true channels.

    SINR_k = |sum_l h_{l,k}^H f_{l,k}|^2 /
             (sum_{i != k} |sum_l h_{l,k}^H f_{l,i}|^2 + sum_l h_{l,k}^H V_l h_{l,k} / P + sigma^2 / P)

    Users with a zero precoder get SINR 0.

    Raises:
        SimulationError: If the channel set carries no true channels.
    """
    if getattr(channels, "h_true", None) is None:
        raise SimulationError("true channels are not available for SINR evaluation")
    blocks = _blocks(F, channels)
    h = channels.h_true

    X = np.einsum("lkn,lin->ki", h.conj(), blocks)
    received = np.abs(X) ** 2
    signal = np.diagonal(received)
    interference = received.sum(axis=1) - signal

    # V_l diagonal: h^H V_l h = sum_n |h_n|^2 V_l[n, n]
    v_diag = cfg.P * plan.eta[:, None] * np.sum(np.abs(blocks) ** 2, axis=1)
    data = np.einsum("lkn,ln->k", np.abs(h) ** 2, v_diag) / cfg.P

    sinr = signal / (interference + data + cfg.sigma2 / cfg.P)
    per_user = np.log2(1.0 + sinr)
    return TrueSE(sinr=sinr, per_user=per_user, total=float(per_user.sum()))


def topology_rng(seed: int, drop: int) -> np.random.Generator:
    return np.random.default_rng([seed, drop])


def fading_rng(seed: int, drop: int, fade: int) -> np.random.Generator:
    return np.random.default_rng([seed, drop, fade])


def draw_realization(
    cfg: NetworkConfig,
    plan: QuantizationPlan,
    seed: int,
    drop: int,
    fade: int,
    topology: Optional[Topology] = None,
) -> tuple[Topology, ChannelSet]:
    """
    Draw one (drop, fade) realization from its own random substreams.

    The topology depends only on (seed, drop), the channels on
    (seed, drop, fade), so realizations can be evaluated in any order.
    """
    if topology is None:
        topology = generate_topology(cfg, topology_rng(seed, drop))
    channels = acquire_csit(topology, cfg, plan, fading_rng(seed, drop, fade))
    return topology, channels


def gain_profile(cfg: NetworkConfig, n_drops: int, seed: Optional[int] = None) -> GainProfile:
    """
    Pool the per-antenna channel-estimate gains of every RRH-user link.

    Uses the first fade of each drop, from the same substreams as
    ``draw_realization``.

    Raises:
        ConfigError: If n_drops < 1.
    """
    if n_drops < 1:
        raise ConfigError("Configuration errors: gain profile needs at least one drop")
    seed = cfg.seed if seed is None else seed
    samples = []
    for drop in range(n_drops):
        topology = generate_topology(cfg, topology_rng(seed, drop))
        R = link_covariances(topology, cfg)
        _, h_est, _ = sample_channel_and_estimate(topology.beta, R, cfg, fading_rng(seed, drop, 0))
        samples.append(np.abs(h_est.reshape(-1)) ** 2)
    return GainProfile.from_samples(np.concatenate(samples))


def summarize(samples) -> tuple[float, float]:
    """Mean and standard error of a sample; the error is 0 for fewer than two values."""
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        return math.nan, math.nan
    if values.size < 2:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def ergodic_se(
    cfg: NetworkConfig,
    strategy: Strategy,
    n_drops: int,
    n_fades: int,
    seed: Optional[int] = None,
    threads: int = 1,
) -> ErgodicReport:
    """
    Average the true sum-SE of a precoding strategy over drops and fades.

    The strategy only ever receives the BBU's CSIT view. A realization on
    which it raises a sparse_jt error or a numerical error (overflow,
    LinAlgError, ValueError) is logged and counted in n_failed.

    Args:
        cfg: Scenario.
        strategy: Callable (csit, plan, cfg) -> StackedPrecoder.
        n_drops: Topology drops, >= 1.
        n_fades: Fading realizations per drop, >= 1.
        seed: Master seed (cfg.seed when None).
        threads: Worker threads.

    Returns:
        ErgodicReport with the prefactor applied.
    """
    if n_drops < 1 or n_fades < 1:
        raise ValueError("n_drops and n_fades must be >= 1")
    seed = cfg.seed if seed is None else seed
    plan = plan_quantization(cfg)
    prefactor = cfg.training_prefactor

    def evaluate(task: tuple[int, int]) -> Optional[float]:
        drop, fade = task
        _, channels = draw_realization(cfg, plan, seed, drop, fade)
        try:
            f = strategy(channels.csit(), plan, cfg)
        except (SparseJTError, ArithmeticError, ValueError) as e:
            logger.warning("Skipping drop %s fade %s: %s", drop, fade, e)
            return None
        return prefactor * sinr_true(channels, f, plan, cfg).total

    tasks = [(d, t) for d in range(n_drops) for t in range(n_fades)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(evaluate, tasks))

    samples = np.array([r for r in results if r is not None])
    mean, stderr = summarize(samples)
    n_failed = sum(r is None for r in results)
    logger.info("Ergodic SE %.4f +/- %.4f over %s realizations (%s failed)", mean, stderr, samples.size, n_failed)
    return ErgodicReport(
        mean=mean, stderr=stderr, prefactor=prefactor,
        n_ok=int(samples.size), n_failed=int(n_failed), samples=samples,
    )
