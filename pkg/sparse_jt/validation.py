"""
Invariant suites run by ``sparse-jt validate``.

Every check draws its own small random instance from a fixed seed, so a
report is reproducible. The ``full`` level adds the 50-instance solver audit.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.linalg import eigh

from .baselines import network_zf, rcc_zf, sc_zf
from .config import NetworkConfig, SolverSettings, preset
from .fronthaul import KAPPA, QuantizationPlan, plan_csi_bits, plan_quantization, quantize_csi
from .net_model import CsitView, estimate_covariance, pathloss_db, spatial_covariance
from .se_metrics import draw_realization, se_lower_bound
from .solver import SolverResult, gpi_inner, solve, zf_init
from .spca_core import (
    StackedPrecoder,
    build_C,
    build_lifted,
    kkt_gradient,
    log2_gamma,
)

logger = logging.getLogger(__name__)

LEVELS = ("fast", "full")


@dataclass(frozen=True)
class CheckResult:
    """One invariant check."""

    module: str
    name: str
    passed: bool
    detail: str


def random_instance(cfg: NetworkConfig, seed: int) -> tuple[CsitView, QuantizationPlan]:
    """CSIT view and plan of a fresh (seed, 0, 0) realization."""
    plan = plan_quantization(cfg)
    _, channels = draw_realization(cfg, plan, seed, 0, 0)
    return channels.csit(), plan


def random_precoder(csit: CsitView, rng: np.random.Generator) -> StackedPrecoder:
    size = csit.L * csit.N * csit.K
    return StackedPrecoder(rng.standard_normal(size) + 1j * rng.standard_normal(size), csit.L, csit.N, csit.K)


def _check_pathloss(level: str) -> tuple[bool, str]:
    value = float(pathloss_db(1000.0, NetworkConfig()))
    return abs(value - 137.36) < 0.5, f"pathloss(1 km) = {value:.2f} dB"


def _check_estimate_split(level: str) -> tuple[bool, str]:
    R = spatial_covariance(4, 0.5)
    gamma, phi = estimate_covariance(1e-10, R, 1e-11)
    total = np.max(np.abs(gamma + phi - 1e-10 * R)) / 1e-10
    min_eig = min(np.linalg.eigvalsh(gamma)[0], np.linalg.eigvalsh(phi)[0]) / 1e-10
    return total < 1e-10 and min_eig > -1e-12, f"split error {total:.1e}, min eigenvalue {min_eig:.1e}"


def _check_csi_bits(level: str) -> tuple[bool, str]:
    bits = plan_csi_bits(300.0, 6, 4)
    return bits == 6, f"plan_csi_bits(300, 6, 4) = {bits}"


def _check_quantizer(level: str) -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    samples, bits = 100_000, 6
    h = (rng.standard_normal((samples, 1)) + 1j * rng.standard_normal((samples, 1))) / math.sqrt(2.0)
    q_var = KAPPA * 2.0 ** (-2 * bits)
    Q = np.broadcast_to(np.array([[q_var]], dtype=complex), (samples, 1, 1))
    h_bar = quantize_csi(h, Q, rng, mode="uniform", bits=np.full(samples, bits))
    empirical = float(np.mean(np.abs(h_bar - h) ** 2))
    ratio = empirical / q_var
    return abs(ratio - 1.0) <= 0.15, f"empirical/model distortion = {ratio:.3f}"


def _check_rank_one_gap(level: str) -> tuple[bool, str]:
    csit, plan = random_instance(preset("small"), 1)
    lifted = build_lifted(csit, plan, preset("small"), normalize=False)
    rng = np.random.default_rng(1)
    Fm = random_precoder(csit, rng).matrix()
    gap = lifted.quad_A(Fm) - lifted.quad_B(Fm)
    direct = np.abs(np.einsum("ka,ka->k", lifted.h.conj(), Fm)) ** 2
    err = float(np.max(np.abs(gap - direct)) / max(np.max(direct), 1e-300))
    return err < 1e-10, f"relative gap error {err:.1e}"


def _check_gradient(level: str) -> tuple[bool, str]:
    cfg = preset("small")
    worst = 0.0
    for seed in range(10):
        csit, plan = random_instance(cfg, seed)
        lifted = build_lifted(csit, plan, cfg, a_mode="exact")
        rng = np.random.default_rng(seed)
        f = random_precoder(csit, rng)
        lam = 0.5
        g = kkt_gradient(f, lam, lifted).gradient
        analytic = np.concatenate([2.0 * g.real, 2.0 * g.imag])
        x = np.concatenate([f.vector.real, f.vector.imag])
        numeric = np.zeros_like(x)
        step = 1e-5
        n = f.vector.size

        def ln_gamma(point: np.ndarray) -> float:
            return math.log(2.0) * log2_gamma(point[:n] + 1j * point[n:], lam, lifted)

        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = step
            numeric[j] = (ln_gamma(x + e) - ln_gamma(x - e)) / (2.0 * step)
        worst = max(worst, float(np.linalg.norm(numeric - analytic) / np.linalg.norm(analytic)))
    return worst < 1e-4, f"worst relative gradient error {worst:.1e}"


def _check_scale_invariance(level: str) -> tuple[bool, str]:
    cfg = preset("small")
    csit, plan = random_instance(cfg, 2)
    lifted = build_lifted(csit, plan, cfg)
    f = random_precoder(csit, np.random.default_rng(2))
    base = log2_gamma(f, 0.0, lifted)
    worst = max(abs(log2_gamma(f.scaled(a), 0.0, lifted) - base) for a in (0.5, 2.0, 10.0))
    return worst < 1e-10 * max(1.0, abs(base)), f"max deviation {worst:.1e}"


def _check_c_spectrum(level: str) -> tuple[bool, str]:
    L, N, K = 4, 2, 3
    low = min(float(np.linalg.eigvalsh(build_C(ell, L, N, K, 1e-2))[0]) for ell in range(L))
    return abs(low - 1.0 / L) < 1e-12, f"min eigenvalue {low:.6f}"


def _check_a_psd(level: str) -> tuple[bool, str]:
    cfg = preset("small")
    csit, plan = random_instance(cfg, 3)
    lifted = build_lifted(csit, plan, cfg)
    worst = math.inf
    for k in range(csit.K):
        for matrix in (lifted.dense_A(k), lifted.dense_B(k)):
            w = np.linalg.eigvalsh(matrix)
            worst = min(worst, float(w[0] / w[-1]))
    return worst > -1e-10, f"smallest relative eigenvalue {worst:.1e}"


def _check_two_path(level: str) -> tuple[bool, str]:
    cfg = preset("small")
    worst = 0.0
    for seed in range(100 if level == "full" else 20):
        csit, plan = random_instance(cfg, seed)
        f = random_precoder(csit, np.random.default_rng(seed)).normalized(float(np.sum(plan.budgets)))
        stacked = se_lower_bound(f, csit, plan, cfg).total
        per_rrh = se_lower_bound(f, csit, plan, cfg, method="per_rrh").total
        worst = max(worst, abs(stacked - per_rrh) / max(abs(stacked), 1e-12))
    return worst < 1e-9, f"worst relative difference {worst:.1e}"


def _check_gamma_bound(level: str) -> tuple[bool, str]:
    cfg = preset("small")
    csit, plan = random_instance(cfg, 4)
    f = random_precoder(csit, np.random.default_rng(4)).normalized(float(np.sum(plan.budgets)))
    lifted = build_lifted(csit, plan, cfg, f_prev=f)
    bound = se_lower_bound(f, csit, plan, cfg).total
    value = log2_gamma(f, 0.0, lifted)
    err = abs(value - bound) / max(abs(bound), 1e-12)
    return err < 1e-9, f"log2 gamma {value:.10f} vs bound {bound:.10f}"


def _check_gpi_eigen(level: str) -> tuple[bool, str]:
    worst = 0.0
    for seed in range(20 if level == "full" else 5):
        cfg = NetworkConfig(L=2 + seed % 5, N=2, K=1, S=1, tau=1, area_m=500.0, C_bits_per_use=100.0)
        csit, plan = random_instance(cfg, seed)
        lifted = build_lifted(csit, plan, cfg, a_mode="exact")
        top = float(eigh(lifted.dense_A(0), lifted.dense_B(0), eigvals_only=True)[-1])
        result = gpi_inner(zf_init(csit, cfg, plan), 0.0, lifted, tol=1e-12, max_iter=2000)
        worst = max(worst, abs(2.0 ** result.log2_gamma - top) / top)
    return worst < 1e-6, f"worst relative eigenvalue error {worst:.1e}"


def _check_solver(level: str) -> tuple[bool, str]:
    cfg = replace(preset("small"), S=2)
    settings = SolverSettings(check_second_order=level == "full")
    n = 50 if level == "full" else 3
    ok = violations = second_pass = checked = 0
    for seed in range(n):
        csit, plan = random_instance(cfg, 100 + seed)
        result = solve(csit, plan, cfg, settings)
        if not result.success:
            continue
        ok += 1
        budget = float(np.min(plan.budgets))
        if (
            result.kkt_residual >= 1e-5
            or (result.status == "converged" and abs(result.sparsity - cfg.S) > settings.sparsity_tol)
            or np.max(result.f.per_rrh_power()) > budget + 1e-9
        ):
            violations += 1
        if result.second_order_pass != "not-checked":
            checked += 1
            second_pass += result.second_order_pass == "pass"
    passed = ok > 0 and violations == 0
    detail = f"{ok}/{n} successful solves, {violations} invariant violations"
    if level == "full":
        passed = passed and second_pass >= 48 * checked / 50
        detail += f", second-order pass {second_pass}/{checked}"
    return passed, detail


def _check_rcc_size(level: str) -> tuple[bool, str]:
    cfg = preset("small")
    csit, plan = random_instance(cfg, 5)
    sizes = [len(rcc_zf(csit, plan, cfg, S).active) for S in range(1, cfg.L + 1)]
    return sizes == list(range(1, cfg.L + 1)), f"active sizes {sizes}"


def _check_sc_full_support(level: str) -> tuple[bool, str]:
    cfg = preset("small")
    csit, plan = random_instance(cfg, 6)
    full = StackedPrecoder(np.ones(cfg.L * cfg.N * cfg.K), cfg.L, cfg.N, cfg.K)
    fake = SolverResult(
        f=full, lam=0.0, objective_bits=0.0, sparsity=float(cfg.L), active=frozenset(range(cfg.L)),
        inner_iters=0, outer_iters=0, kkt_residual=0.0, second_order_pass="not-checked",
        status="constraint_inactive", inner_converged=True,
    )
    restricted = sc_zf(fake, csit, cfg, plan).f.vector
    reference = network_zf(csit, plan, cfg).f.vector
    err = float(np.max(np.abs(restricted - reference)) / np.max(np.abs(reference)))
    return err < 1e-9, f"max relative difference {err:.1e}"


CHECKS: list[tuple[str, str, Callable[[str], tuple[bool, str]]]] = [
    ("net_model", "pathloss_reference", _check_pathloss),
    ("net_model", "estimate_error_split", _check_estimate_split),
    ("fronthaul", "csi_bits_reference", _check_csi_bits),
    ("fronthaul", "uniform_quantizer_calibration", _check_quantizer),
    ("spca_core", "rank_one_gap", _check_rank_one_gap),
    ("spca_core", "gradient_finite_difference", _check_gradient),
    ("spca_core", "scale_invariance", _check_scale_invariance),
    ("spca_core", "c_min_eigenvalue", _check_c_spectrum),
    ("spca_core", "lifted_psd", _check_a_psd),
    ("se_metrics", "two_path_objective", _check_two_path),
    ("se_metrics", "gamma_equals_bound", _check_gamma_bound),
    ("solver", "gpi_generalized_eigenvalue", _check_gpi_eigen),
    ("solver", "kkt_sparsity_power", _check_solver),
    ("baselines", "rcc_active_size", _check_rcc_size),
    ("baselines", "sc_zf_full_support", _check_sc_full_support),
]


def run_suite(level: str = "fast") -> list[CheckResult]:
    """
    Run every invariant check at the given level.

    Args:
        level: ``fast`` or ``full``.

    Returns:
        One CheckResult per check, in module order.
    """
    if level not in LEVELS:
        raise ValueError(f"unknown validation level '{level}'")
    results = []
    for module, name, check in CHECKS:
        try:
            passed, detail = check(level)
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        logger.info("%s.%s: %s (%s)", module, name, "pass" if passed else "FAIL", detail)
        results.append(CheckResult(module=module, name=name, passed=bool(passed), detail=detail))
    return results
