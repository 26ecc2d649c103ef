"""
Generalized sparse-PCA core.

The sum-SE lower bound is rewritten as a product of Rayleigh quotients over
one network-wide precoding vector f of length L*N*K, ordered user-major, then
RRH, then antenna:

    f = [f_{1,1}; ...; f_{L,1}; ...; f_{1,K}; ...; f_{L,K}]

A_k and B_k are never stored densely. They share the structure
I_K (x) G_k + c_k I, where G_k is an LN x LN matrix, and B_k differs from A_k
by a rank-one term in its k-th diagonal block. LiftedProblem keeps only G_k's
factors, and the dense builders exist for reference checks.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import block_diag, eigvalsh, null_space

from .config import NetworkConfig
from .errors import DimensionMismatch, NotStationary, ZeroDenominator
from .fronthaul import QuantizationPlan
from .net_model import CsitView

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StackedPrecoder:
    """
    Network-wide precoding vector.

    Attributes:
        vector: Complex vector of length L*N*K in user-major order.
        L: Number of RRHs.
        N: Antennas per RRH.
        K: Number of users.
    """

    vector: np.ndarray
    L: int
    N: int
    K: int

    def __post_init__(self):
        vector = np.asarray(self.vector, dtype=complex).reshape(-1)
        if vector.size != self.L * self.N * self.K:
            raise DimensionMismatch(
                f"precoder has {vector.size} entries, expected L*N*K={self.L * self.N * self.K}"
            )
        if not np.all(np.isfinite(vector)):
            raise DimensionMismatch("precoder has non-finite entries")
        object.__setattr__(self, "vector", vector)

    @staticmethod
    def offset(ell: int, k: int, L: int, N: int) -> int:
        """Start index of block (ell, k), zero-based."""
        return k * L * N + ell * N

    def unstack(self) -> np.ndarray:
        """(L, K, N) per-link blocks."""
        return self.vector.reshape(self.K, self.L, self.N).transpose(1, 0, 2)

    def matrix(self) -> np.ndarray:
        """(K, L*N) view with one row per user stream."""
        return self.vector.reshape(self.K, self.L * self.N)

    def rrh_block(self, ell: int) -> np.ndarray:
        """(N, K) precoder matrix F_l of one RRH."""
        return self.unstack()[ell].T

    def per_rrh_power(self) -> np.ndarray:
        """(L,) transmit power sum_k ||f_{l,k}||^2 of each RRH."""
        return np.sum(np.abs(self.unstack()) ** 2, axis=(1, 2))

    def block_power(self) -> np.ndarray:
        """(L, K) power ||f_{l,k}||^2 of each block."""
        return np.sum(np.abs(self.unstack()) ** 2, axis=2)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.vector, self.vector).real)

    def scaled(self, alpha: float) -> "StackedPrecoder":
        return StackedPrecoder(alpha * self.vector, self.L, self.N, self.K)

    def normalized(self, total_power: float) -> "StackedPrecoder":
        """Rescale so that ||f||^2 equals total_power."""
        if self.norm2 <= 0:
            raise ZeroDenominator("cannot normalize a zero precoder")
        return self.scaled(np.sqrt(total_power / self.norm2))


def stack(F: np.ndarray) -> StackedPrecoder:
    """
    Concatenate per-link blocks into the network-wide vector.

    Args:
        F: (L, K, N) array of blocks f_{l,k}.

    Raises:
        DimensionMismatch: If F is not three-dimensional.
    """
    F = np.asarray(F, dtype=complex)
    if F.ndim != 3:
        raise DimensionMismatch(f"expected (L, K, N) blocks, got shape {F.shape}")
    L, K, N = F.shape
    return StackedPrecoder(F.transpose(1, 0, 2).reshape(-1), L, N, K)


def unstack(f: StackedPrecoder) -> np.ndarray:
    """Inverse of stack: (L, K, N) blocks."""
    return f.unstack()


Vector = Union[StackedPrecoder, np.ndarray]


@dataclass(frozen=True)
class LiftedProblem:
    """
    Compact form of the lifted matrices A_k, B_k and C_l.

    A_k = I_K (x) (h_k h_k^H + E_k) + c_k I, B_k = A_k - e_k e_k^T (x) h_k h_k^H,
    C_l = I_K (x) (a_l a_l^T (x) I_N / eps + I_{LN} / L).

    Attributes:
        L, N, K: Network dimensions.
        h: (K, L*N) stacked quantized channels (zero blocks when unknown).
        E: (K, L*N, L*N) block-diagonal error covariances Phi_k + Q_k.
        c: (K,) scalar noise terms.
        eps: Sparsity-relaxation parameter.
        budgets: (L,) per-RRH power caps (1 + eta_l)^-1.
        S: Sparsity budget.
        scale: Common factor applied to h h^H, E and c (P / sigma^2 when
            noise-normalized, 1 for the raw formulas).
    """

    L: int
    N: int
    K: int
    h: np.ndarray
    E: np.ndarray
    c: np.ndarray
    eps: float
    budgets: np.ndarray
    S: int
    scale: float = 1.0
    _eye: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_eye", np.eye(self.L * self.N))

    @property
    def mu_eps(self) -> float:
        return 1.0 / np.log2(1.0 + 1.0 / self.eps)

    @property
    def dim(self) -> int:
        return self.L * self.N * self.K

    @property
    def total_power(self) -> float:
        """In-loop normalization ||f||^2 = sum_l (1 + eta_l)^-1."""
        return float(np.sum(self.budgets))

    @property
    def min_sparsity(self) -> float:
        """Smallest sparsity measure on the in-loop sphere, reached with all power on one RRH."""
        T, L = self.total_power, self.L
        return float(self.mu_eps * (np.log2(T / self.eps + T / L) + (L - 1) * np.log2(T / L)))

    def as_matrix(self, f: Vector) -> np.ndarray:
        """(K, L*N) view of a precoder given as StackedPrecoder or flat array."""
        vector = f.vector if isinstance(f, StackedPrecoder) else np.asarray(f, dtype=complex)
        if vector.size != self.dim:
            raise DimensionMismatch(f"vector of size {vector.size} does not match L*N*K={self.dim}")
        return vector.reshape(self.K, self.L * self.N)

    def gram(self, k: int) -> np.ndarray:
        """G_k = h_k h_k^H + E_k."""
        return np.outer(self.h[k], self.h[k].conj()) + self.E[k]

    def cross_terms(self, Fm: np.ndarray) -> np.ndarray:
        """X[k, i] = h_k^H f_i."""
        return self.h.conj() @ Fm.T

    def quad_A(self, Fm: np.ndarray, X: Optional[np.ndarray] = None) -> np.ndarray:
        """(K,) values f^H A_k f."""
        X = self.cross_terms(Fm) if X is None else X
        received = np.sum(np.abs(X) ** 2, axis=1)
        error = np.einsum("ia,kab,ib->k", Fm.conj(), self.E, Fm).real
        return received + error + self.c * float(np.vdot(Fm, Fm).real)

    def quad_B(self, Fm: np.ndarray, X: Optional[np.ndarray] = None) -> np.ndarray:
        """(K,) values f^H B_k f."""
        X = self.cross_terms(Fm) if X is None else X
        return self.quad_A(Fm, X) - np.abs(np.diagonal(X)) ** 2

    def rrh_power(self, Fm: np.ndarray) -> np.ndarray:
        return np.sum(np.abs(Fm.reshape(self.K, self.L, self.N)) ** 2, axis=(0, 2))

    def quad_C(self, Fm: np.ndarray) -> np.ndarray:
        """(L,) values f^H C_l f."""
        return self.rrh_power(Fm) / self.eps + float(np.vdot(Fm, Fm).real) / self.L

    def weighted_operators(self, Fm: np.ndarray, lam: float):
        """
        Common blocks of the functional matrices at f.

        M_A(f) = sum_k A_k / (f^H A_k f) + lam mu L I / ||f||^2 equals
        I_K (x) D_A, while the i-th diagonal block of M_B(f) = sum_k B_k /
        (f^H B_k f) + lam mu sum_l C_l / (f^H C_l f) equals D_B - v_i h_i h_i^H.
        The identity term balances the degree of the sparsity factor, so a
        fixed point of the power iteration is stationary on the power sphere.

        Returns:
            Tuple (D_A, D_B, v, X) with v_k = 1 / (f^H B_k f).
        """
        X = self.cross_terms(Fm)
        qa = self.quad_A(Fm, X)
        qb = qa - np.abs(np.diagonal(X)) ** 2
        qc = self.quad_C(Fm)
        if np.any(qa <= 0) or np.any(qb <= 0) or np.any(qc <= 0):
            raise ZeroDenominator("a Rayleigh-quotient denominator vanished")
        w = 1.0 / qa
        v = 1.0 / qb

        hh_w = self.h.T @ (w[:, None] * self.h.conj())
        hh_v = self.h.T @ (v[:, None] * self.h.conj())
        E_w = np.einsum("k,kab->ab", w, self.E)
        E_v = np.einsum("k,kab->ab", v, self.E)

        lam_mu = lam * self.mu_eps
        D_A = hh_w + E_w + (np.dot(w, self.c) + lam_mu * self.L / float(np.vdot(Fm, Fm).real)) * self._eye
        d_c = lam_mu * (np.repeat(1.0 / qc, self.N) / self.eps + np.sum(1.0 / qc) / self.L)
        D_B = hh_v + E_v + np.dot(v, self.c) * self._eye + np.diag(d_c)
        return D_A, D_B, v, X

    def functional_products(self, Fm: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
        """(M_A f, M_B f) as (K, L*N) arrays."""
        D_A, D_B, v, X = self.weighted_operators(Fm, lam)
        ma = Fm @ D_A.T
        mb = Fm @ D_B.T - (v * np.diagonal(X))[:, None] * self.h
        return ma, mb

    def dense_A(self, k: int) -> np.ndarray:
        return np.kron(np.eye(self.K), self.gram(k)) + self.c[k] * np.eye(self.dim)

    def dense_B(self, k: int) -> np.ndarray:
        return self.dense_A(k) - np.kron(_basis(k, self.K), np.outer(self.h[k], self.h[k].conj()))

    def dense_C(self, ell: int) -> np.ndarray:
        return build_C(ell, self.L, self.N, self.K, self.eps)

    def dense_functionals(self, Fm: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
        """Dense M_A(f) and M_B(f), for reference solves and curvature tests."""
        D_A, D_B, v, _ = self.weighted_operators(Fm, lam)
        M_A = np.kron(np.eye(self.K), D_A)
        M_B = block_diag(*[D_B - v[i] * np.outer(self.h[i], self.h[i].conj()) for i in range(self.K)])
        return M_A, M_B

    def with_c(self, c: np.ndarray) -> "LiftedProblem":
        return LiftedProblem(
            L=self.L, N=self.N, K=self.K, h=self.h, E=self.E, c=np.asarray(c, dtype=float),
            eps=self.eps, budgets=self.budgets, S=self.S, scale=self.scale,
        )


def _basis(k: int, size: int) -> np.ndarray:
    e = np.zeros((size, size))
    e[k, k] = 1.0
    return e


def _stacked_channels(csit: CsitView) -> np.ndarray:
    # (K, L*N), rows h_bar_k with zero blocks for unknown links
    h = np.where(csit.known[..., None], csit.h_bar, 0.0)
    return h.transpose(1, 0, 2).reshape(csit.K, csit.L * csit.N)


def _stacked_errors(csit: CsitView, extra_diag: Optional[np.ndarray] = None) -> np.ndarray:
    L, K, N = csit.L, csit.K, csit.N
    masked = np.where(csit.known[..., None, None], csit.Phi + csit.Q, 0.0)
    E = np.zeros((K, L * N, L * N), dtype=complex)
    for ell in range(L):
        sl = slice(ell * N, (ell + 1) * N)
        E[:, sl, sl] = masked[ell]
        if extra_diag is not None:
            idx = np.arange(ell * N, (ell + 1) * N)
            E[:, idx, idx] += extra_diag[ell]
    return E


def data_noise_terms(csit: CsitView, plan: QuantizationPlan, cfg: NetworkConfig, F: Optional[np.ndarray]) -> np.ndarray:
    """
    (K,) values sum_l beta_{l,k} Tr(R_{l,k} V_l(F)) in watts.

    Args:
        F: (L, K, N) precoder blocks at the physical power level, or None for V = 0.
    """
    if F is None:
        return np.zeros(csit.K)
    # V_l is diagonal: Tr(R V_l) = sum_n R[n, n] V_l[n, n]
    antenna_power = np.sum(np.abs(F) ** 2, axis=1)
    v_diag = cfg.P * plan.eta[:, None] * antenna_power
    r_diag = np.real(np.diagonal(csit.R, axis1=-2, axis2=-1))
    return np.einsum("lk,lkn,ln->k", csit.beta, r_diag, v_diag)


def build_lifted(
    csit: CsitView,
    plan: QuantizationPlan,
    cfg: NetworkConfig,
    f_prev: Optional[StackedPrecoder] = None,
    a_mode: str = "lagged",
    normalize: bool = True,
) -> LiftedProblem:
    """
    Assemble the lifted problem for the current CSIT.

    Args:
        csit: BBU view of the channels.
        plan: Fronthaul plan (eta, budgets).
        cfg: Scenario (powers, epsilon, S).
        f_prev: Iterate that fixes the data-quantization term in lagged mode;
            it is rescaled to the in-loop power before use.
        a_mode: ``lagged`` or ``exact`` (data-quantization noise folded into
            E_k as a diagonal quadratic form).
        normalize: Scale every matrix by P / sigma^2 so that noise is O(1).

    Returns:
        LiftedProblem for the current iterate.
    """
    budgets = plan.budgets
    total = float(np.sum(budgets))
    scale = cfg.P / cfg.sigma2 if normalize else 1.0

    if a_mode == "exact":
        r_diag = np.real(np.diagonal(csit.R, axis1=-2, axis2=-1))
        # (L, K, N) -> per user, per RRH diagonal of eta beta R
        extra = plan.eta[:, None, None] * csit.beta[..., None] * r_diag
        E = _stacked_errors(csit, extra_diag=extra.transpose(0, 1, 2))
        c = np.full(csit.K, cfg.sigma2 / (cfg.P * total))
    elif a_mode == "lagged":
        E = _stacked_errors(csit)
        F = None if f_prev is None else f_prev.normalized(total).unstack()
        c = (data_noise_terms(csit, plan, cfg, F) + cfg.sigma2) / (cfg.P * total)
    else:
        raise ValueError(f"unknown a_mode '{a_mode}'")

    return LiftedProblem(
        L=csit.L, N=csit.N, K=csit.K,
        h=np.sqrt(scale) * _stacked_channels(csit),
        E=scale * E,
        c=scale * c,
        eps=cfg.epsilon_sparse,
        budgets=budgets,
        S=cfg.S,
        scale=scale,
    )


def refresh_lagged(lifted: LiftedProblem, csit: CsitView, plan: QuantizationPlan, cfg: NetworkConfig, f: StackedPrecoder) -> LiftedProblem:
    """Rebuild only the lagged scalar terms c_k from iterate f."""
    F = f.normalized(lifted.total_power).unstack()
    c = (data_noise_terms(csit, plan, cfg, F) + cfg.sigma2) / (cfg.P * lifted.total_power)
    return lifted.with_c(lifted.scale * c)


def build_A(
    csit: CsitView,
    plan: QuantizationPlan,
    cfg: NetworkConfig,
    f_prev: Optional[StackedPrecoder],
    k: int,
    a_mode: str = "lagged",
) -> np.ndarray:
    """Dense A_k = I_K (x) (h_k h_k^H + Phi_k + Q_k) + c_k I in raw units."""
    return build_lifted(csit, plan, cfg, f_prev, a_mode=a_mode, normalize=False).dense_A(k)


def build_B(A_k: np.ndarray, h_bar_k: np.ndarray, k: int, K: int) -> np.ndarray:
    """Dense B_k = A_k - e_k e_k^T (x) h_k h_k^H."""
    h_bar_k = np.asarray(h_bar_k, dtype=complex).reshape(-1)
    if A_k.shape != (K * h_bar_k.size, K * h_bar_k.size):
        raise DimensionMismatch(f"A_k of shape {A_k.shape} does not match K={K} and |h|={h_bar_k.size}")
    return A_k - np.kron(_basis(k, K), np.outer(h_bar_k, h_bar_k.conj()))


def build_C(ell: int, L: int, N: int, K: int, eps: float) -> np.ndarray:
    """Dense C_l = I_K (x) (a_l a_l^T (x) I_N / eps + I_{LN} / L)."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    diag = np.full(L * N, 1.0 / L)
    diag[ell * N:(ell + 1) * N] += 1.0 / eps
    return np.kron(np.eye(K), np.diag(diag))


def log2_gamma(f: Vector, lam: float, lifted: LiftedProblem) -> float:
    """
    log2 of gamma(f, lam) = prod_k (f^H A_k f) / (prod_k (f^H B_k f) prod_l (f^H C_l f)^(mu lam)).

    At lam = 0 this is the sum-SE lower bound in bits/s/Hz. For lam > 0 the
    sparsity factor is evaluated at f rescaled to the in-loop power, which
    makes the value independent of the scale of f and equal to the product
    above on the sphere ||f||^2 = sum_l budgets_l.

    Raises:
        ZeroDenominator: If f is zero or a denominator vanishes.
    """
    Fm = lifted.as_matrix(f)
    X = lifted.cross_terms(Fm)
    qa = lifted.quad_A(Fm, X)
    qb = qa - np.abs(np.diagonal(X)) ** 2
    if np.any(qa <= 0) or np.any(qb <= 0):
        raise ZeroDenominator("f^H B_k f vanished")
    value = float(np.sum(np.log2(qa)) - np.sum(np.log2(qb)))
    if lam != 0.0:
        qc = lifted.quad_C(Fm)
        if np.any(qc <= 0):
            raise ZeroDenominator("f^H C_l f vanished")
        norm2 = float(np.vdot(Fm, Fm).real)
        value -= lam * lifted.mu_eps * (
            float(np.sum(np.log2(qc))) - lifted.L * np.log2(norm2 / lifted.total_power)
        )
    return value


def gamma(f: Vector, lam: float, lifted: LiftedProblem) -> float:
    """gamma(f, lam) itself; may overflow for large problems, prefer log2_gamma."""
    return float(2.0 ** log2_gamma(f, lam, lifted))


def sparsity_measure(f: Vector, lifted: LiftedProblem) -> float:
    """
    Smooth RRH count mu_eps * sum_l log2(f^H C_l f) at the in-loop power.

    Raises:
        ZeroDenominator: If f is zero.
    """
    Fm = lifted.as_matrix(f)
    norm2 = float(np.vdot(Fm, Fm).real)
    if norm2 <= 0:
        raise ZeroDenominator("sparsity of a zero precoder is undefined")
    Fm = Fm * np.sqrt(lifted.total_power / norm2)
    return float(lifted.mu_eps * np.sum(np.log2(lifted.quad_C(Fm))))


@dataclass(frozen=True)
class KKTReport:
    """Gradient of log gamma (up to a positive constant) and its relative size."""

    gradient: np.ndarray
    residual: float


def kkt_gradient(f: Vector, lam: float, lifted: LiftedProblem) -> KKTReport:
    """
    Stationarity residual g = M_A(f) f - M_B(f) f.

    The gradient of ln gamma with respect to the real and imaginary parts of
    f is 2 Re(g) and 2 Im(g). Since gamma is scale invariant, g is orthogonal
    to f and a zero residual means f is stationary on the power sphere.

    Returns:
        KKTReport with the flat gradient and ||g|| / ||f||.
    """
    Fm = lifted.as_matrix(f)
    ma, mb = lifted.functional_products(Fm, lam)
    g = (ma - mb).reshape(-1)
    return KKTReport(gradient=g, residual=float(np.linalg.norm(g) / np.linalg.norm(Fm)))


@dataclass(frozen=True)
class SecondOrderReport:
    """
    Outcome of the curvature test.

    Attributes:
        passed: True when the curvature margin is positive.
        margin: Margin scaled by ||f||^2, so it does not depend on the scale of f.
        rho_min: Smallest eigenvalue of the A-side matrix (scaled likewise).
        rho_max: Largest eigenvalue of the B-side matrix (scaled likewise).
        mode: ``hessian`` or ``separation``.
    """

    passed: bool
    margin: float
    rho_min: float
    rho_max: float
    mode: str


def curvature_margin(a_side: np.ndarray, b_side: np.ndarray, mode: str = "separation") -> tuple[bool, float]:
    """
    Compare two Hermitian curvature matrices.

    ``separation`` returns rho_min(a_side) - rho_max(b_side); ``difference``
    returns rho_min(a_side - b_side), which is never smaller.
    """
    if mode == "separation":
        margin = float(eigvalsh(a_side)[0] - eigvalsh(b_side)[-1])
    elif mode == "difference":
        margin = float(eigvalsh(a_side - b_side)[0])
    else:
        raise ValueError(f"unknown margin mode '{mode}'")
    return margin > 0.0, margin


def _rank_one_vectors(Fm: np.ndarray, lifted: LiftedProblem):
    X = lifted.cross_terms(Fm)
    qa = lifted.quad_A(Fm, X)
    qb = qa - np.abs(np.diagonal(X)) ** 2
    qc = lifted.quad_C(Fm)
    a_vecs, b_vecs = [], []
    for k in range(lifted.K):
        Akf = Fm @ lifted.gram(k).T + lifted.c[k] * Fm
        Bkf = Akf.copy()
        Bkf[k] -= lifted.h[k] * X[k, k]
        a_vecs.append(Akf.reshape(-1) / qa[k])
        b_vecs.append(Bkf.reshape(-1) / qb[k])
    c_vecs = []
    blocks = Fm.reshape(lifted.K, lifted.L, lifted.N)
    for ell in range(lifted.L):
        Cf = blocks / lifted.L
        Cf[:, ell, :] += blocks[:, ell, :] / lifted.eps
        c_vecs.append(Cf.reshape(-1) / qc[ell])
    return np.array(a_vecs), np.array(b_vecs), np.array(c_vecs)


def _realify(M: np.ndarray) -> np.ndarray:
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def _real_outer_sum(vectors: np.ndarray) -> np.ndarray:
    U = np.concatenate([vectors.real, vectors.imag], axis=1)
    return U.T @ U


def _tangent_basis(Fm: np.ndarray) -> np.ndarray:
    flat = Fm.reshape(-1)
    invariant = [np.concatenate([flat.real, flat.imag])]
    for k in range(Fm.shape[0]):
        phase = np.zeros_like(Fm)
        phase[k] = 1j * Fm[k]
        invariant.append(np.concatenate([phase.reshape(-1).real, phase.reshape(-1).imag]))
    return null_space(np.array(invariant))


def tangent_curvature(f: Vector, lam: float, lifted: LiftedProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Split Hessian of ln gamma on the real tangent space at f.

    The tangent space is orthogonal to f and to the per-user phase directions
    i*f_k, along which gamma is constant. On it the Hessian (lifted matrices
    held fixed) equals 2 (B-side - A-side).

    Returns:
        Tuple (basis, a_side, b_side); basis has shape (2 L N K, d) and maps
        tangent coordinates to stacked [Re f; Im f] directions.
    """
    Fm = lifted.as_matrix(f)
    a_vecs, b_vecs, c_vecs = _rank_one_vectors(Fm, lifted)
    M_A, M_B = lifted.dense_functionals(Fm, lam)
    a_side = _realify(M_B) + 2.0 * _real_outer_sum(a_vecs)
    b_side = _realify(M_A) + 2.0 * _real_outer_sum(b_vecs)
    if lam != 0.0:
        b_side = b_side + 2.0 * lam * lifted.mu_eps * _real_outer_sum(c_vecs)
    basis = _tangent_basis(Fm)
    return basis, basis.T @ a_side @ basis, basis.T @ b_side @ basis


def second_order_check(
    f: Vector,
    lam: float,
    lifted: LiftedProblem,
    tol: float = 1e-5,
    mode: str = "hessian",
) -> SecondOrderReport:
    """
    Certify that a stationary point is a strict local maximum.

    In ``hessian`` mode the exact Hessian of ln gamma (lifted matrices held
    fixed) is restricted to the real tangent space orthogonal to f and to the
    per-user phase directions i*f_k, along which gamma is constant. It is
    split as

        A-side = M_B + 2 sum_k a_k a_k^T
        B-side = M_A + 2 sum_k b_k b_k^T + 2 lam mu sum_l c_l c_l^T

    with a_k = A_k f / f^H A_k f (similarly b_k, c_l), all realified. The
    point passes when A-side - B-side is positive definite on that space.
    ``separation`` mode applies the bare test rho_min(sum a_k a_k^H) >
    rho_max(sum b_k b_k^H + lam mu sum c_l c_l^H) over the full space.

    Raises:
        NotStationary: If the KKT residual exceeds 10 * tol.
    """
    Fm = lifted.as_matrix(f)
    report = kkt_gradient(Fm.reshape(-1), lam, lifted)
    if report.residual > 10.0 * tol:
        raise NotStationary(f"KKT residual {report.residual:.3e} exceeds {10.0 * tol:.1e}")

    norm2 = float(np.vdot(Fm, Fm).real)

    if mode == "separation":
        a_vecs, b_vecs, c_vecs = _rank_one_vectors(Fm, lifted)
        a_side = a_vecs.T @ a_vecs.conj()
        b_side = b_vecs.T @ b_vecs.conj() + lam * lifted.mu_eps * (c_vecs.T @ c_vecs.conj())
        passed, margin = curvature_margin(a_side, b_side, "separation")
    elif mode == "hessian":
        _, a_side, b_side = tangent_curvature(Fm.reshape(-1), lam, lifted)
        passed, margin = curvature_margin(a_side, b_side, "difference")
    else:
        raise ValueError(f"unknown second-order mode '{mode}'")
    rho_min = float(eigvalsh(a_side)[0])
    rho_max = float(eigvalsh(b_side)[-1])

    logger.debug("Second-order margin %.3e (mode=%s)", margin * norm2, mode)
    return SecondOrderReport(
        passed=passed,
        margin=margin * norm2,
        rho_min=rho_min * norm2,
        rho_max=rho_max * norm2,
        mode=mode,
    )
