"""
Zero-forcing comparison schemes: network-wide ZF, RRH-centric clustering
with ZF (RCC-ZF) and ZF on the sparse-JT support (SC-ZF).
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import NetworkConfig
from .errors import EmptySupport, RankDeficient
from .fronthaul import QuantizationPlan, plan_quantization
from .net_model import CsitView
from .solver import ZF_REGULARIZATION, SolverResult, project_per_rrh_power
from .spca_core import StackedPrecoder, stack

logger = logging.getLogger(__name__)

SUPPORT_THRESHOLD = 1e-3


@dataclass(frozen=True)
class BaselineResult:
    """
    Precoder of a comparison scheme.

    Attributes:
        f: Power-feasible precoder, zero outside the active RRHs.
        active: RRHs that transmit.
        scheme: Scheme tag (``zf``, ``rcc_zf`` or ``sc_zf``).
    """

    f: StackedPrecoder
    active: frozenset[int]
    scheme: str


def _known_channels(channels: CsitView) -> np.ndarray:
    return np.where(channels.known[..., None], channels.h_bar, 0.0)


def _top_indices(scores: np.ndarray, count: int) -> np.ndarray:
    # descending score, ties to the lower index
    order = np.lexsort((np.arange(scores.size), -scores))
    return np.sort(order[:count])


def regularized_zf(H: np.ndarray) -> np.ndarray:
    """
    F = H (H^H H + delta I)^-1 with delta = 1e-6 * tr(H^H H) / K.

    Args:
        H: (M, K) channel matrix, one column per user.

    Raises:
        RankDeficient: If H is zero.
    """
    K = H.shape[1]
    gram = H.conj().T @ H
    delta = ZF_REGULARIZATION * float(np.trace(gram).real) / K
    if delta <= 0:
        raise RankDeficient("channel matrix is zero")
    return H @ np.linalg.solve(gram + delta * np.eye(K), np.eye(K))


def rcc_zf(
    channels: CsitView,
    plan: QuantizationPlan,
    cfg: NetworkConfig,
    S: Optional[int] = None,
    scheme: str = "rcc_zf",
) -> BaselineResult:
    """
    Activate the S RRHs with the largest aggregate channel gain and
    zero-force over them.

    When K exceeds S*N only the S*N users with the largest gains towards
    the active RRHs are served; the others get a zero precoder.
    """
    S = cfg.S if S is None else S
    if S < 1:
        raise ValueError(f"S must be >= 1, got {S}")
    L, N, K = channels.L, channels.N, channels.K
    h_bar = _known_channels(channels)

    rrh_gain = np.sum(np.abs(h_bar) ** 2, axis=(1, 2))
    active = _top_indices(rrh_gain, min(S, L))

    user_gain = np.sum(np.abs(h_bar[active]) ** 2, axis=(0, 2))
    served = _top_indices(user_gain, min(K, active.size * N))
    if served.size < K:
        logger.debug("RCC-ZF drops users %s", sorted(set(range(K)) - set(served.tolist())))

    # (|A| N, |served|) restricted channel
    H = h_bar[np.ix_(active, served)].transpose(1, 0, 2).reshape(served.size, -1).T
    W = regularized_zf(H)

    F = np.zeros((L, K, N), dtype=complex)
    F[np.ix_(active, served)] = W.T.reshape(served.size, active.size, N).transpose(1, 0, 2)
    f = project_per_rrh_power(stack(F), plan.budgets)
    return BaselineResult(f=f, active=frozenset(int(a) for a in active), scheme=scheme)


def network_zf(channels: CsitView, plan: QuantizationPlan, cfg: NetworkConfig) -> BaselineResult:
    """Full-cooperation ZF over all L RRHs."""
    return rcc_zf(channels, plan, cfg, S=channels.L, scheme="zf")


def sc_zf(
    sparse_jt_result: SolverResult,
    channels: CsitView,
    cfg: NetworkConfig,
    plan: Optional[QuantizationPlan] = None,
) -> BaselineResult:
    """
    Zero-forcing restricted to the (RRH, user) support found by sparse-JT.

    User k is precoded by x = G (G^H G + delta I)^-1 e_k, where G stacks
    every user's channel from the RRHs that serve k. Users without support
    get a zero precoder.

    Raises:
        EmptySupport: If the support selects no block at all.
    """
    plan = plan or plan_quantization(cfg)
    L, N, K = channels.L, channels.N, channels.K
    power = sparse_jt_result.f.block_power()
    peak = float(np.max(power))
    support = power > SUPPORT_THRESHOLD * peak if peak > 0 else np.zeros_like(power, dtype=bool)
    if not support.any():
        raise EmptySupport("sparse-JT precoder has no active block")

    h_bar = _known_channels(channels)
    F = np.zeros((L, K, N), dtype=complex)
    for k in range(K):
        rrhs = np.flatnonzero(support[:, k])
        if rrhs.size == 0:
            continue
        G = h_bar[rrhs].transpose(1, 0, 2).reshape(K, -1).T
        try:
            x = regularized_zf(G)[:, k]
        except RankDeficient:
            logger.debug("SC-ZF user %s has no channel on its support", k)
            continue
        F[rrhs, k] = x.reshape(rrhs.size, N)

    if not np.any(F):
        raise EmptySupport("no user could be precoded on the sparse-JT support")
    active = frozenset(int(ell) for ell in np.flatnonzero(support.any(axis=1)))
    f = project_per_rrh_power(stack(F), plan.budgets)
    return BaselineResult(f=f, active=active, scheme="sc_zf")
