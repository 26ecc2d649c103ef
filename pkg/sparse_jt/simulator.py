"""
Sparse-JT simulator - orchestrates realizations, precoding schemes and
Monte Carlo aggregation.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .baselines import network_zf, rcc_zf, sc_zf
from .config import Config, NetworkConfig, SolverSettings
from .errors import ConfigError, SimulationError, SparseJTError
from .fronthaul import QuantizationPlan, plan_quantization, sharing_overhead
from .net_model import ChannelSet, Topology
from .se_metrics import draw_realization, sinr_true, summarize
from .solver import SolverResult, solve
from .spca_core import StackedPrecoder, build_lifted, log2_gamma, sparsity_measure

logger = logging.getLogger(__name__)

SCHEMES = ("sparse_jt", "rcc_zf", "sc_zf", "zf")
SWEEP_AXES = ("S", "C")


@dataclass(frozen=True)
class Realization:
    """One topology drop with one fading realization."""

    drop: int
    fade: int
    topology: Topology
    channels: ChannelSet
    plan: QuantizationPlan


@dataclass(frozen=True)
class SchemeOutcome:
    """
    Result of one precoding scheme on one realization.

    Attributes:
        seed: Master seed.
        drop: Topology index.
        fade: Fading index.
        scheme: Scheme tag.
        S: Sparsity budget.
        f: Precoder, None when the scheme failed.
        solver: Sparse-JT solver result backing the scheme, if any.
        objective_bits: SE lower bound log2 gamma(f, 0).
        sum_se_true: True sum-SE including the training prefactor.
        sparsity: Smooth RRH count of f.
        active: Active RRHs.
        error: Failure reason, None on success.
    """

    seed: int
    drop: int
    fade: int
    scheme: str
    S: int
    f: Optional[StackedPrecoder] = None
    solver: Optional[SolverResult] = None
    objective_bits: float = float("nan")
    sum_se_true: float = float("nan")
    sparsity: float = float("nan")
    active: frozenset[int] = frozenset()
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class SweepRow:
    """Aggregate of one scheme at one sweep point."""

    axis: str
    value: float
    scheme: str
    mean_se: float
    stderr: float
    n_ok: int
    n_failed: int


class SparseJTSimulator:
    """
    Runs sparse joint transmission and its baselines over random C-RAN
    realizations.
    """

    def __init__(
        self,
        cfg: Optional[NetworkConfig] = None,
        settings: Optional[SolverSettings] = None,
        config: Optional[Config] = None,
    ):
        """
        Initialize the simulator.

        Args:
            cfg: Scenario; defaults to NetworkConfig().
            settings: Solver knobs; defaults to SolverSettings().
            config: Runtime settings; read from the environment when None.

        Raises:
            ConfigError: If the scenario or the solver knobs are invalid.
        """
        self.cfg = cfg or NetworkConfig()
        self.settings = settings or SolverSettings()
        self.config = config or Config()

        self.cfg.validate()
        self.settings.validate()

        self.plan = plan_quantization(self.cfg)
        logger.debug("Quantization plan: U=%s B=%s B_bar=%s", self.plan.U, self.plan.B, self.plan.B_bar)

    def realize(self, drop: int, fade: int) -> Realization:
        """Draw the (drop, fade) realization from its own random substreams."""
        topology, channels = draw_realization(self.cfg, self.plan, self.cfg.seed, drop, fade)
        return Realization(drop=drop, fade=fade, topology=topology, channels=channels, plan=self.plan)

    def evaluate(self, realization: Realization, schemes: Sequence[str] = SCHEMES) -> list[SchemeOutcome]:
        """
        Run every requested scheme on one realization.

        Schemes only see the CSIT view. The sparse-JT solve is shared by
        ``sparse_jt`` and ``sc_zf``. A scheme that fails yields an outcome
        carrying the reason instead of raising; that includes numerical
        failures (overflow, LinAlgError) as well as solver errors.
        """
        _check_schemes(schemes)
        csit = realization.channels.csit()
        cfg, plan = self.cfg, self.plan
        solved: dict[str, object] = {}

        def sparse() -> SolverResult:
            if "result" not in solved:
                try:
                    solved["result"] = solve(csit, plan, cfg, self.settings)
                except (SparseJTError, ArithmeticError, ValueError) as e:
                    solved["result"] = e
            if isinstance(solved["result"], Exception):
                raise solved["result"]
            return solved["result"]

        outcomes = []
        for scheme in schemes:
            base = dict(seed=cfg.seed, drop=realization.drop, fade=realization.fade, scheme=scheme, S=cfg.S)
            try:
                if scheme == "sparse_jt":
                    result = sparse()
                    f, solver_result = result.f, result
                elif scheme == "sc_zf":
                    solver_result = sparse()
                    f = sc_zf(solver_result, csit, cfg, plan).f
                elif scheme == "rcc_zf":
                    f, solver_result = rcc_zf(csit, plan, cfg).f, None
                else:
                    f, solver_result = network_zf(csit, plan, cfg).f, None
                outcomes.append(self._score(base, f, solver_result, realization))
            except (SparseJTError, ArithmeticError, ValueError) as e:
                logger.warning(
                    "Scheme %s failed on drop %s fade %s: %s",
                    scheme, realization.drop, realization.fade, e,
                )
                outcomes.append(SchemeOutcome(**base, error=f"{type(e).__name__}: {e}"))
        return outcomes

    def _score(self, base: dict, f: StackedPrecoder, solver_result, realization: Realization) -> SchemeOutcome:
        csit = realization.channels.csit()
        lifted = build_lifted(csit, self.plan, self.cfg, f_prev=f, a_mode=self.settings.a_mode)
        true_se = sinr_true(realization.channels, f, self.plan, self.cfg)
        if solver_result is not None and base["scheme"] == "sparse_jt":
            objective, sparsity, active = solver_result.objective_bits, solver_result.sparsity, solver_result.active
        else:
            power = f.per_rrh_power()
            objective = log2_gamma(f, 0.0, lifted)
            sparsity = sparsity_measure(f, lifted)
            active = frozenset(int(ell) for ell in np.flatnonzero(power > self.settings.active_threshold * power.max()))
        return SchemeOutcome(
            **base,
            f=f,
            solver=solver_result,
            objective_bits=objective,
            sum_se_true=self.cfg.training_prefactor * true_se.total,
            sparsity=sparsity,
            active=active,
        )

    def run(
        self,
        n_drops: int,
        n_fades: int,
        schemes: Sequence[str] = SCHEMES,
        threads: Optional[int] = None,
    ) -> list[SchemeOutcome]:
        """
        Evaluate every (drop, fade, scheme) combination.

        Realizations run concurrently; the returned outcomes are sorted by
        drop, fade and scheme order, independent of the thread count.

        Raises:
            SimulationError: If a realization cannot be drawn.
        """
        if n_drops < 1 or n_fades < 1:
            raise ConfigError("Configuration errors: drops and fades must be >= 1")
        _check_schemes(schemes)
        threads = threads or self.config.threads

        def task(pair: tuple[int, int]) -> list[SchemeOutcome]:
            drop, fade = pair
            try:
                realization = self.realize(drop, fade)
            except SparseJTError as e:
                raise SimulationError(f"Failed to draw drop {drop} fade {fade}: {e}") from e
            return self.evaluate(realization, schemes)

        pairs = [(d, t) for d in range(n_drops) for t in range(n_fades)]
        logger.info("Running %s realizations x %s schemes on %s threads", len(pairs), len(schemes), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(task, pairs))

        order = {s: i for i, s in enumerate(schemes)}
        outcomes = [o for batch in batches for o in batch]
        return sorted(outcomes, key=lambda o: (o.drop, o.fade, order[o.scheme]))

    def sweep(
        self,
        axis: str,
        values: Sequence[float],
        n_drops: int,
        n_fades: int,
        schemes: Sequence[str] = SCHEMES,
        threads: Optional[int] = None,
    ) -> list[SweepRow]:
        """
        Mean true sum-SE per (sweep value, scheme).

        Args:
            axis: ``S`` (active RRH budget) or ``C`` (fronthaul bits per use).
            values: Sweep points, in output order.

        Raises:
            ConfigError: On an unknown axis or an invalid sweep value.
        """
        if axis not in SWEEP_AXES:
            raise ConfigError(f"Configuration errors: unknown sweep axis '{axis}'")
        settings = replace(self.settings, check_second_order=False)
        rows = []
        for value in values:
            point = SparseJTSimulator(self.point_config(axis, value), settings, self.config)
            outcomes = point.run(n_drops, n_fades, schemes, threads)
            for scheme in schemes:
                ok = [o.sum_se_true for o in outcomes if o.scheme == scheme and o.ok]
                failed = sum(1 for o in outcomes if o.scheme == scheme and not o.ok)
                mean, stderr = summarize(ok)
                rows.append(SweepRow(axis, value, scheme, mean, stderr, len(ok), failed))
                logger.info("%s=%s %s: %.4f +/- %.4f (%s failed)", axis, value, scheme, mean, stderr, failed)
        return rows

    def point_config(self, axis: str, value: float) -> NetworkConfig:
        """
        Scenario of one sweep point.

        Sweeping C re-derives the CSI and data bits from each capacity, so
        bit overrides are dropped; a U override is kept.
        """
        if axis == "S":
            return replace(self.cfg, S=int(value))
        if axis == "C":
            return replace(self.cfg, C_bits_per_use=float(value), B_override=None, B_bar_override=None)
        raise ConfigError(f"Configuration errors: unknown sweep axis '{axis}'")

    def overhead(self, outcome: SchemeOutcome) -> dict[str, float]:
        """Fronthaul sharing overheads of one outcome."""
        return sharing_overhead(self.plan, outcome.active, self.cfg)


def _check_schemes(schemes: Sequence[str]) -> None:
    if not schemes:
        raise ConfigError("Configuration errors: at least one scheme is required")
    unknown = [s for s in schemes if s not in SCHEMES]
    if unknown:
        raise ConfigError(f"Configuration errors: unknown schemes {', '.join(unknown)}")
