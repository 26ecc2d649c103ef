"""
Sparse joint transmission solver.

A generalized power iteration maximizes gamma(f, lam) for a fixed multiplier
and a bisection on lam steers the smooth RRH count to the budget S. The
power iteration does the bulk of the ascent; when it stalls above the KKT
tolerance a quasi-Newton run and a few tangent-space Newton steps finish
the job. The final vector is rescaled onto the per-RRH power constraints.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve as dense_solve
from scipy.optimize import minimize

from .config import NetworkConfig, SolverSettings
from .errors import (
    BracketFailure,
    ConfigError,
    MaxIterExceeded,
    NotStationary,
    RankDeficient,
    SingularSystem,
    SparseJTError,
    ZeroDenominator,
)
from .fronthaul import QuantizationPlan, plan_quantization
from .net_model import CsitView
from .spca_core import (
    LiftedProblem,
    StackedPrecoder,
    build_lifted,
    kkt_gradient,
    log2_gamma,
    refresh_lagged,
    second_order_check,
    sparsity_measure,
    tangent_curvature,
)

logger = logging.getLogger(__name__)

ZF_REGULARIZATION = 1e-6
LN2 = math.log(2.0)
# Power iteration hands over to the polish once gamma moves less than this per step
HANDOVER_CHANGE = 1e-5
NEWTON_STEPS = 8
NEWTON_MAX_DIM = 1024

STATUS_CONVERGED = "converged"
STATUS_INACTIVE = "constraint_inactive"
STATUS_TOLERANCE = "tolerance_not_met"
STATUS_BRACKET = "bracket_failure"


@dataclass(frozen=True)
class InnerResult:
    """Outcome of one power-iteration run at a fixed multiplier."""

    f: StackedPrecoder
    iterations: int
    converged: bool
    log2_gamma: float
    residual: float


@dataclass(frozen=True)
class SolverResult:
    """
    Outcome of a sparse joint transmission solve.

    Attributes:
        f: Precoder after the per-RRH power projection.
        lam: Final multiplier.
        objective_bits: log2 gamma(f, 0), the SE lower bound.
        sparsity: Smooth RRH count at the in-loop normalization.
        active: RRHs carrying more than the threshold share of power.
        inner_iters: Inner steps (power iteration and polish) summed over all
            multipliers.
        outer_iters: Multipliers evaluated.
        kkt_residual: Stationarity residual at the final multiplier.
        second_order_pass: ``pass``, ``fail`` or ``not-checked``.
        status: One of converged, constraint_inactive, tolerance_not_met,
            bracket_failure.
        inner_converged: False if the last inner solve missed kkt_tol.
        second_order_margin: Curvature margin when checked.
    """

    f: StackedPrecoder
    lam: float
    objective_bits: float
    sparsity: float
    active: frozenset[int]
    inner_iters: int
    outer_iters: int
    kkt_residual: float
    second_order_pass: str
    status: str
    inner_converged: bool
    second_order_margin: Optional[float] = None

    @property
    def success(self) -> bool:
        return self.inner_converged and self.status in (STATUS_CONVERGED, STATUS_INACTIVE)


def zf_init(channels: CsitView, cfg: NetworkConfig, plan: Optional[QuantizationPlan] = None) -> StackedPrecoder:
    """
    Regularized zero-forcing starting point.

    F = H (H^H H + delta I)^-1 with delta = 1e-6 * tr(H^H H) / K, where H is
    the LN x K aggregate of the quantized channels (zero rows where unknown).
    The result is normalized to ||f||^2 = sum_l (1 + eta_l)^-1.

    Raises:
        RankDeficient: If K > L*N or the aggregate channel is zero.
    """
    L, N, K = channels.L, channels.N, channels.K
    if K > L * N:
        raise RankDeficient(f"cannot zero-force K={K} users with L*N={L * N} antennas")
    plan = plan or plan_quantization(cfg)

    h_bar = np.where(channels.known[..., None], channels.h_bar, 0.0)
    H = h_bar.transpose(1, 0, 2).reshape(K, L * N).T
    gram = H.conj().T @ H
    delta = ZF_REGULARIZATION * float(np.trace(gram).real) / K
    if delta <= 0:
        raise RankDeficient("aggregate channel matrix is zero")
    try:
        F = H @ np.linalg.solve(gram + delta * np.eye(K), np.eye(K))
    except np.linalg.LinAlgError as e:
        raise RankDeficient(f"regularized Gram matrix is singular: {e}") from e

    f = StackedPrecoder(F.T.reshape(-1), L, N, K)
    return f.normalized(float(np.sum(plan.budgets)))


def _fast_step(Fm: np.ndarray, lam: float, lifted: LiftedProblem) -> np.ndarray:
    D_A, D_B, v, _ = lifted.weighted_operators(Fm, lam)
    rhs = Fm @ D_A.T
    try:
        factor = cho_factor(D_B)
    except LinAlgError as e:
        raise SingularSystem(f"Cholesky factorization failed: {e}") from e
    Z = cho_solve(factor, rhs.T).T
    U = cho_solve(factor, lifted.h.T).T
    hz = np.sum(lifted.h.conj() * Z, axis=1)
    hu = np.sum(lifted.h.conj() * U, axis=1)
    # Sherman-Morrison downdate of D_B by v_i h_i h_i^H for each user block
    denom = 1.0 - v * hu.real
    if np.any(denom <= 1e-14):
        raise SingularSystem("rank-one downdate is singular")
    return Z + (v * hz / denom)[:, None] * U


def _dense_step(Fm: np.ndarray, lam: float, lifted: LiftedProblem) -> np.ndarray:
    M_A, M_B = lifted.dense_functionals(Fm, lam)
    try:
        y = dense_solve(M_B, M_A @ Fm.reshape(-1), assume_a="her")
    except LinAlgError as e:
        raise SingularSystem(f"dense solve failed: {e}") from e
    return y.reshape(Fm.shape)


def relative_change(old_log2: float, new_log2: float) -> float:
    """|gamma_new / gamma_old - 1| from log2 values; inf when the ratio overflows."""
    d = LN2 * (new_log2 - old_log2)
    if not math.isfinite(d) or d >= 700.0:
        return math.inf
    return abs(math.expm1(d))


def _newton_direction(f: StackedPrecoder, lam: float, lifted: LiftedProblem) -> np.ndarray:
    basis, a_side, b_side = tangent_curvature(f, lam, lifted)
    g = kkt_gradient(f, lam, lifted).gradient
    rhs = basis.T @ np.concatenate([g.real, g.imag])
    try:
        factor = cho_factor(a_side - b_side)
    except LinAlgError as e:
        raise SingularSystem(f"tangent Hessian is not negative definite: {e}") from e
    d = basis @ cho_solve(factor, rhs)
    n = f.vector.size
    return d[:n] + 1j * d[n:]


def polish(
    f: StackedPrecoder,
    lam: float,
    lifted: LiftedProblem,
    kkt_tol: float,
    max_iter: int,
    refresh: Optional[Callable[[StackedPrecoder], LiftedProblem]] = None,
) -> tuple[StackedPrecoder, LiftedProblem, int]:
    """
    Drive the KKT residual of an ascent iterate below kkt_tol.

    ln gamma is scale invariant, so it is maximized without constraints by
    L-BFGS with the exact gradient 2 [Re g; Im g]. Damped Newton steps on the
    tangent space follow while they shrink the residual. In lagged mode the
    lifted problem is refreshed between the two stages and after each Newton
    step.

    Returns:
        Tuple (f, lifted at f, iterations spent), f on the in-loop sphere.
    """
    total = lifted.total_power
    n = f.vector.size
    current = lifted

    def negative_ln_gamma(x: np.ndarray) -> tuple[float, np.ndarray]:
        vector = x[:n] + 1j * x[n:]
        g = kkt_gradient(vector, lam, current).gradient
        return -LN2 * log2_gamma(vector, lam, current), -2.0 * np.concatenate([g.real, g.imag])

    x0 = np.concatenate([f.vector.real, f.vector.imag])
    # gtol bounds the largest real gradient entry; this keeps ||g|| / ||f|| under kkt_tol / 2
    gtol = kkt_tol * total / (math.sqrt(x0.size) * float(np.linalg.norm(x0)))
    steps = 0
    try:
        result = minimize(
            negative_ln_gamma, x0, jac=True, method="L-BFGS-B",
            options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-15, "maxcor": 20},
        )
        steps = int(result.nit)
        f = StackedPrecoder(result.x[:n] + 1j * result.x[n:], f.L, f.N, f.K).normalized(total)
        logger.debug("L-BFGS lam=%.4g: %s iterations (%s)", lam, steps, result.message)
    except (SparseJTError, ArithmeticError, ValueError) as e:
        logger.info("L-BFGS polish failed at lam=%.4g: %s", lam, e)
    if refresh:
        current = refresh(f)
    residual = kkt_gradient(f, lam, current).residual

    if 2 * n > NEWTON_MAX_DIM:
        return f, current, steps
    for _ in range(NEWTON_STEPS):
        if residual <= kkt_tol:
            break
        try:
            direction = _newton_direction(f, lam, current)
        except SingularSystem as e:
            logger.debug("Newton polish stopped: %s", e)
            break
        steps += 1
        for t in (1.0, 0.5, 0.25, 0.125):
            trial = StackedPrecoder(f.vector + t * direction, f.L, f.N, f.K).normalized(total)
            trial_lifted = refresh(trial) if refresh else current
            trial_residual = kkt_gradient(trial, lam, trial_lifted).residual
            if trial_residual < residual:
                f, current, residual = trial, trial_lifted, trial_residual
                break
        else:
            break
    logger.debug("Polish lam=%.4g: residual %.3e after %s iterations", lam, residual, steps)
    return f, current, steps


def gpi_inner(
    f0: StackedPrecoder,
    lam: float,
    lifted: LiftedProblem,
    tol: float = 1e-8,
    max_iter: int = 500,
    kkt_tol: Optional[float] = None,
    dense: bool = False,
    refresh: Optional[Callable[[StackedPrecoder], LiftedProblem]] = None,
    strict: bool = False,
    refine_iters: int = 0,
) -> InnerResult:
    """
    Generalized power iteration f <- M_B(f)^-1 M_A(f) f.

    Each step is renormalized to ||f||^2 = sum_l (1 + eta_l)^-1. Iteration
    stops when the relative change of gamma is at most ``tol`` and, if given,
    the KKT residual is at most ``kkt_tol``. With ``refine_iters`` > 0 and a
    ``kkt_tol``, an iteration that has slowed down (or reached the cap) with
    the residual still above ``kkt_tol`` is finished by ``polish``.

    Args:
        f0: Nonzero starting vector.
        lam: Sparsity multiplier.
        lifted: Lifted problem.
        tol: Relative gamma-change tolerance.
        max_iter: Iteration cap.
        kkt_tol: Optional residual tolerance.
        dense: Solve with dense LNK x LNK matrices.
        refresh: Rebuilds the lifted problem from the current iterate
            (lagged data-quantization term).
        strict: Raise MaxIterExceeded instead of returning a flagged result.
        refine_iters: Quasi-Newton iteration cap of the polish (0 disables).

    Raises:
        MaxIterExceeded: At the cap when strict.
        SingularSystem: If a linear solve fails.
        ZeroDenominator: If f0 is zero.
    """
    total = lifted.total_power
    f = f0.normalized(total)
    step = _dense_step if dense else _fast_step
    current = refresh(f) if refresh else lifted
    lg = log2_gamma(f, lam, current)
    residual = math.inf
    refining = refine_iters > 0 and kkt_tol is not None
    handover = max(tol, HANDOVER_CHANGE)
    it = 0

    while it < max_iter:
        it += 1
        y = step(f.matrix(), lam, current)
        f = StackedPrecoder(y.reshape(-1), f.L, f.N, f.K).normalized(total)
        if refresh:
            current = refresh(f)
        lg_new = log2_gamma(f, lam, current)
        change = relative_change(lg, lg_new)
        lg = lg_new
        logger.debug("GPI lam=%.4g it=%s log2(gamma)=%.10f change=%.3e", lam, it, lg, change)

        if change <= tol or (refining and change <= handover):
            residual = kkt_gradient(f, lam, current).residual
            if kkt_tol is None or residual <= kkt_tol:
                return InnerResult(f=f, iterations=it, converged=True, log2_gamma=lg, residual=residual)
            if refining:
                break

    if refining:
        f, current, steps = polish(f, lam, current, kkt_tol, refine_iters, refresh)
        it += steps
        lg = log2_gamma(f, lam, current)
        residual = kkt_gradient(f, lam, current).residual
        if residual <= kkt_tol:
            return InnerResult(f=f, iterations=it, converged=True, log2_gamma=lg, residual=residual)
    else:
        residual = kkt_gradient(f, lam, current).residual
    if strict:
        raise MaxIterExceeded(f"power iteration did not converge in {it} steps (residual {residual:.3e})")
    logger.warning("Power iteration stopped after %s steps at lam=%.4g (residual %.3e)", it, lam, residual)
    return InnerResult(f=f, iterations=it, converged=False, log2_gamma=lg, residual=residual)


def project_per_rrh_power(f: StackedPrecoder, budgets) -> StackedPrecoder:
    """
    Uniformly rescale f so the most loaded RRH meets the smallest budget.

    Raises:
        ValueError: If a budget is not positive.
        ZeroDenominator: If f is zero.
    """
    budgets = np.asarray(budgets, dtype=float)
    if np.any(budgets <= 0):
        raise ValueError("power budgets must be positive")
    peak = float(np.max(f.per_rrh_power()))
    if peak <= 0:
        raise ZeroDenominator("cannot project a zero precoder")
    return f.scaled(math.sqrt(float(np.min(budgets)) / peak))


def active_set(f: StackedPrecoder, threshold_frac: float = 1e-3) -> frozenset[int]:
    """RRHs whose power exceeds threshold_frac times the largest per-RRH power."""
    power = f.per_rrh_power()
    peak = float(np.max(power))
    if peak <= 0:
        raise ZeroDenominator("active set of a zero precoder is undefined")
    return frozenset(int(ell) for ell in np.flatnonzero(power > threshold_frac * peak))


class _Evaluator:
    """Runs the inner iteration for one multiplier and records g(lam)."""

    def __init__(self, lifted, refresh, settings: SolverSettings, S: int):
        self.lifted = lifted
        self.refresh = refresh
        self.settings = settings
        self.S = S
        self.inner_iters = 0
        self.history: list[tuple[float, float]] = []

    def __call__(self, lam: float, start: StackedPrecoder) -> tuple[InnerResult, float]:
        s = self.settings
        result = gpi_inner(
            start, lam, self.lifted,
            tol=s.inner_tol, max_iter=s.max_inner_iters, kkt_tol=s.kkt_tol,
            dense=s.dense, refresh=self.refresh, strict=s.strict, refine_iters=s.refine_iters,
        )
        self.inner_iters += result.iterations
        g = sparsity_measure(result.f, self.lifted) - self.S
        self._check_monotone(lam, g)
        self.history.append((lam, g))
        logger.debug("g(%.6g) = %.6f after %s steps", lam, g, result.iterations)
        return result, g

    def _check_monotone(self, lam: float, g: float) -> None:
        tol = self.settings.sparsity_tol
        for lam_prev, g_prev in self.history:
            if (lam > lam_prev and g > g_prev + tol) or (lam < lam_prev and g < g_prev - tol):
                logger.warning("g(lambda) not monotone: g(%.4g)=%.4f vs g(%.4g)=%.4f", lam_prev, g_prev, lam, g)
                return


def solve(
    channels: CsitView,
    plan: QuantizationPlan,
    cfg: NetworkConfig,
    settings: Optional[SolverSettings] = None,
    f0: Optional[StackedPrecoder] = None,
) -> SolverResult:
    """
    Sparse joint transmission precoder for one CSIT realization.

    Bisects lam on g(lam) = sparsity(f*(lam)) - S. The bracket starts at
    [0, 1] and its upper end doubles until g turns negative. When g(0) is
    already within tolerance the constraint is inactive and lam = 0. A budget
    below the smallest reachable sparsity is reported as a bracket failure
    without searching.

    Args:
        channels: BBU view of the channels.
        plan: Fronthaul plan.
        cfg: Scenario with S and epsilon.
        settings: Solver knobs.
        f0: Starting vector (ZF when None).

    Returns:
        SolverResult after the per-RRH power projection.

    Raises:
        BracketFailure: If no sign change is found and settings.strict.
        ConfigError: If S is outside [1, L].
    """
    settings = settings or SolverSettings()
    settings.validate()
    if not 1 <= cfg.S <= channels.L:
        raise ConfigError(f"Configuration errors: S={cfg.S} outside [1, {channels.L}]")

    start = f0 or zf_init(channels, cfg, plan)
    lifted = build_lifted(channels, plan, cfg, f_prev=start, a_mode=settings.a_mode)
    refresh = None
    if settings.a_mode == "lagged":
        def refresh(f: StackedPrecoder) -> LiftedProblem:
            return refresh_lagged(lifted, channels, plan, cfg, f)

    evaluate = _Evaluator(lifted, refresh, settings, cfg.S)
    tol = settings.sparsity_tol

    base, g0 = evaluate(0.0, start)
    chosen, lam, g_chosen = base, 0.0, g0

    if g0 <= tol:
        status = STATUS_INACTIVE
    elif lifted.min_sparsity - cfg.S > tol:
        status = _bracket_failure(
            f"S={cfg.S} lies below the smallest reachable sparsity {lifted.min_sparsity:.3f}", settings
        )
    else:
        lam_lo, lam_hi = 0.0, 1.0
        warm = base.f
        hi_result, g_hi = None, math.nan
        for _ in range(settings.max_doublings):
            hi_result, g_hi = evaluate(lam_hi, warm if settings.warm_start else start)
            if g_hi < 0 or abs(g_hi) <= tol:
                break
            lam_lo, lam_hi = lam_hi, 2.0 * lam_hi
            warm = hi_result.f
        else:
            hi_result = None

        if hi_result is None:
            status = _bracket_failure(f"no sign change of g(lambda) up to lambda={lam_hi:.3g}", settings)
        else:
            chosen, lam, g_chosen = hi_result, lam_hi, g_hi
            warm = hi_result.f
            while abs(g_chosen) > tol and lam_hi - lam_lo >= settings.bracket_width:
                mid = 0.5 * (lam_lo + lam_hi)
                result, g = evaluate(mid, warm if settings.warm_start else start)
                warm = result.f
                if abs(g) <= tol:
                    chosen, lam, g_chosen = result, mid, g
                    break
                if g > 0:
                    lam_lo = mid
                else:
                    lam_hi = mid
                    chosen, lam, g_chosen = result, mid, g
            status = STATUS_CONVERGED if abs(g_chosen) <= tol else STATUS_TOLERANCE

    return _finish(chosen, lam, status, evaluate, lifted, refresh, plan, settings)


def _bracket_failure(message: str, settings: SolverSettings) -> str:
    if settings.strict:
        raise BracketFailure(message)
    logger.warning("%s; returning the lambda=0 solution", message)
    return STATUS_BRACKET


def _finish(
    chosen: InnerResult,
    lam: float,
    status: str,
    evaluate: _Evaluator,
    lifted: LiftedProblem,
    refresh,
    plan: QuantizationPlan,
    settings: SolverSettings,
) -> SolverResult:
    f_loop = chosen.f
    at_f = refresh(f_loop) if refresh else lifted
    f_out = project_per_rrh_power(f_loop, plan.budgets)

    second_order, margin = "not-checked", None
    if settings.check_second_order:
        try:
            report = second_order_check(f_loop, lam, at_f, tol=10.0 * settings.kkt_tol)
            second_order, margin = ("pass" if report.passed else "fail"), report.margin
        except NotStationary as e:
            logger.info("Skipping second-order check: %s", e)

    result = SolverResult(
        f=f_out,
        lam=lam,
        objective_bits=log2_gamma(f_out, 0.0, at_f),
        sparsity=sparsity_measure(f_loop, lifted),
        active=active_set(f_out, settings.active_threshold),
        inner_iters=evaluate.inner_iters,
        outer_iters=len(evaluate.history),
        kkt_residual=chosen.residual,
        second_order_pass=second_order,
        status=status,
        inner_converged=chosen.converged,
        second_order_margin=margin,
    )
    logger.info(
        "Solve finished: status=%s lam=%.4g sparsity=%.3f active=%s objective=%.4f bits",
        result.status, result.lam, result.sparsity, len(result.active), result.objective_bits,
    )
    return result
