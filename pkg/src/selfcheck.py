"""
Numerical self-checks run by `ris-zf-sim selfcheck`

Each check returns a CheckResult with the measured worst-case value and the
tolerance it was held to. Everything is seeded; a failure is reproducible.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np

from src.analysis import (empirical_inverse_gram, inverse_diagonal, power_scaling_check,
                          rate_bound_corollary4, rate_bound_eq20, rate_bound_ris_free,
                          scaling_slope, wishart_inverse_expectation)
from src.channels import StatisticalCsi, build_statistical_csi, random_statistical_csi
from src.logging_config import logger
from src.optimizer import (AscentOptions, build_objective_context, gradient_ascent,
                           random_phase_baseline, sum_rate_gradient, sum_rate_objective)
from src.scenario import (RngStream, ScenarioConfig, build_geometry, compute_path_losses,
                          rng_substream)

DEFAULT_SEED = 2021
FD_STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        mark = "✅" if self.passed else "❌"
        return (f"{mark} {self.name:<22} measured={self.measured:.3e}  "
                f"tol={self.tolerance:.1e}  {self.detail}")


@dataclass
class SelfCheckReport:
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]

    def summary(self) -> str:
        lines = [r.line() for r in self.results]
        lines.append(f"{len(self.results) - len(self.failures)}/{len(self.results)} checks passed")
        return "\n".join(lines)


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), np.finfo(float).tiny)))


def _instance(rng: np.random.Generator, M: int = 8, N: int = 16, K: int = 3,
              delta: Optional[float] = None):
    delta = rng.uniform(0.5, 5.0) if delta is None else delta
    csi = random_statistical_csi(rng, M, N, K, delta=delta)
    phases = random_phase_baseline(N, rng)
    return csi, phases


def check_woodbury(rng: np.random.Generator, instances: int = 50,
                   tol: float = 1e-10) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        csi, phases = _instance(rng)
        worst = max(worst, _rel(inverse_diagonal(csi, phases, "woodbury"),
                                inverse_diagonal(csi, phases, "direct")))
    return CheckResult("woodbury", worst <= tol, worst, tol, f"{instances} instances")


def check_objective_consistency(rng: np.random.Generator, instances: int = 50,
                                tol: float = 1e-10) -> CheckResult:
    worst = 0.0
    p, noise = 1.0, 1.0
    for _ in range(instances):
        csi, phases = _instance(rng)
        ctx = build_objective_context(csi, p, noise, csi.M, csi.K)
        bound = rate_bound_eq20(csi, phases, p, noise, csi.M, csi.K)
        worst = max(worst, _rel(sum_rate_objective(ctx, phases), bound.sum_rate))
    return CheckResult("objective-consistency", worst <= tol, worst, tol, f"{instances} instances")


def check_ordering(rng: np.random.Generator, instances: int = 100,
                   tol: float = 1e-12) -> CheckResult:
    """Per-user phase-independent exact bound never exceeds the phase-aware one"""
    worst = -np.inf
    for _ in range(instances):
        csi, phases = _instance(rng)
        eq20 = rate_bound_eq20(csi, phases, 1.0, 1.0, csi.M, csi.K).per_user
        exact = rate_bound_corollary4(csi, 1.0, 1.0, csi.M, csi.K, mode="exact").per_user
        worst = max(worst, float(np.max(exact - eq20)))
    return CheckResult("ordering", worst <= tol, worst, tol, "max(corollary4-exact - eq20)")


def check_gradient(rng: np.random.Generator, instances: int = 50, tol: float = 1e-6,
                   corrupt: bool = False) -> CheckResult:
    """Central differences along random complex directions against 2 Re(e^H g)"""
    sign = -1.0 if corrupt else 1.0
    worst = 0.0
    for _ in range(instances):
        csi, phases = _instance(rng, delta=rng.uniform(1.0, 5.0))
        ctx = build_objective_context(csi, 1.0, 1.0, csi.M, csi.K)
        v = phases.v
        e = rng.standard_normal(v.size) + 1j * rng.standard_normal(v.size)
        e /= np.linalg.norm(e)
        grad = sign * sum_rate_gradient(ctx, v)
        fd = (sum_rate_objective(ctx, v + FD_STEP * e)
              - sum_rate_objective(ctx, v - FD_STEP * e)) / (2 * FD_STEP)
        analytic = 2.0 * np.real(np.vdot(e, grad))
        scale = max(abs(analytic), float(np.linalg.norm(grad)))
        worst = max(worst, abs(fd - analytic) / scale)
    detail = f"{instances} instances" + (" (gradient sign flipped)" if corrupt else "")
    return CheckResult("gradient", worst <= tol, worst, tol, detail)


def check_ascent(rng: np.random.Generator, instances: int = 20, tol: float = 1e-12) -> CheckResult:
    opts = AscentOptions(max_iters=100)
    worst_drop = 0.0
    all_improved = True
    for _ in range(instances):
        csi, phases = _instance(rng, delta=rng.uniform(1.0, 5.0))
        ctx = build_objective_context(csi, 1.0, 1.0, csi.M, csi.K)
        trace = gradient_ascent(ctx, phases, opts)
        drops = -np.diff(trace.objectives)
        worst_drop = max(worst_drop, float(np.max(drops, initial=0.0)))
        all_improved &= trace.final_objective > trace.initial_objective
        all_improved &= bool(np.all(np.abs(np.abs(trace.final_phases.v) - 1.0) <= 1e-12))
    passed = worst_drop <= tol and all_improved
    detail = "monotone, feasible and improving" if all_improved else "no strict improvement"
    return CheckResult("ascent", passed, worst_drop, tol, detail)


def _wishart_instance(seed: int, delta: float):
    rng = rng_substream(seed, RngStream.ANGLES, 7)
    csi = random_statistical_csi(rng, M=8, N=4, K=2, delta=delta, loss_range=(1.0, 1.0))
    phases = random_phase_baseline(4, rng)
    return csi, phases


def check_wishart(seed: int, delta: float, tol: float, draws: int = 100_000,
                  diagonal_only: bool = False) -> CheckResult:
    csi, phases = _wishart_instance(seed, delta)
    analytic = wishart_inverse_expectation(csi, phases)
    empirical = empirical_inverse_gram(csi, phases, draws, rng_substream(seed, RngStream.TRIALS, 7))
    scale = np.sqrt(np.outer(np.real(np.diag(analytic)), np.real(np.diag(analytic))))
    err = np.abs(empirical - analytic) / scale
    worst = float(np.max(np.diag(err)) if diagonal_only else np.max(err))
    name = "wishart-exact" if delta == 0 else "wishart-approx"
    return CheckResult(name, worst <= tol, worst, tol, f"delta={delta:g}, {draws} draws")


def _default_csi(seed: int):
    cfg = ScenarioConfig(seed=seed)
    losses = compute_path_losses(build_geometry(cfg), cfg)
    return cfg, build_statistical_csi(cfg, losses, rng_substream(seed, RngStream.ANGLES))


def check_power_scaling(seed: int, tol: float = 0.02) -> CheckResult:
    cfg, csi = _default_csi(seed)
    phases = random_phase_baseline(cfg.N, rng_substream(seed, RngStream.PHASES, 0))
    table = power_scaling_check(csi, phases, [512, 1024], cfg.noise_watts, c=10.0)
    first, last = table["sum"].iloc[0], table["sum"].iloc[1]
    change = abs(last - first) / first
    return CheckResult("power-scaling", change < tol and last > 0, change, tol,
                       f"sum {first:.4f} -> {last:.4f} bits/s/Hz")


def check_scaling_slope(seed: int, lo: float = 0.9, hi: float = 1.0) -> CheckResult:
    """
    Bits per doubling of N (reflected-path dominant) and of M (RIS-free)

    Single-user instance; the M fit uses an SNR coefficient of 0.9 so that
    log2(1 + SNR) sits just under its asymptotic slope.
    """
    rng = rng_substream(seed, RngStream.ANGLES, 11)
    slopes = []

    # RIS sizes must be perfect squares
    n_values = [256, 576, 1024]
    rates, args = [], []
    for N in n_values:
        csi = random_statistical_csi(rng_substream(seed, RngStream.ANGLES, 11), 64, N, 1,
                                     delta=1.0, loss_range=(1.0, 1.0))
        csi = _with_gamma(csi, 1e-6)
        r = rate_bound_corollary4(csi, 1.0, 1.0, 64, 1, mode="largeN").per_user[0]
        rates.append(r)
        args.append(2.0 ** r - 1.0)
    slopes.append(scaling_slope(n_values, rates, log_arguments=args))

    m_values = [128, 256, 512, 1024]
    csi = random_statistical_csi(rng, 16, 16, 1, delta=1.0, loss_range=(1.0, 1.0))
    rates, args = [], []
    for M in m_values:
        r = rate_bound_ris_free(csi, 0.9, 1.0, M, 1).per_user[0]
        rates.append(r)
        args.append(2.0 ** r - 1.0)
    slopes.append(scaling_slope(m_values, rates, log_arguments=args))

    passed = all(lo <= s <= hi for s in slopes)
    return CheckResult("scaling-slope", passed, min(slopes), lo,
                       f"slope vs N {slopes[0]:.4f}, vs M {slopes[1]:.4f}, "
                       f"window [{lo:g}, {hi:g}]")


def _with_gamma(csi: StatisticalCsi, gamma: float) -> StatisticalCsi:
    return replace(csi, gamma=np.full(csi.K, gamma))


def check_phase_independence(rng: np.random.Generator, draws: int = 10,
                             tol: float = 1e-12) -> CheckResult:
    csi, _ = _instance(rng, delta=0.0)
    values = np.array([
        rate_bound_eq20(csi, random_phase_baseline(csi.N, rng), 1.0, 1.0, csi.M, csi.K).per_user
        for _ in range(draws)
    ])
    spread = _rel(values.max(axis=0), values.min(axis=0))
    return CheckResult("phase-independence", spread <= tol, spread, tol, f"{draws} phase draws")


def run_selfcheck(seed: int = DEFAULT_SEED, corrupt_gradient: bool = False,
                  wishart_draws: int = 100_000) -> SelfCheckReport:
    suites: Dict[str, Callable[[], CheckResult]] = {
        "woodbury": lambda: check_woodbury(rng_substream(seed, RngStream.TRIALS, 101)),
        "objective-consistency": lambda: check_objective_consistency(
            rng_substream(seed, RngStream.TRIALS, 102)),
        "ordering": lambda: check_ordering(rng_substream(seed, RngStream.TRIALS, 103)),
        "gradient": lambda: check_gradient(rng_substream(seed, RngStream.TRIALS, 104),
                                           corrupt=corrupt_gradient),
        "ascent": lambda: check_ascent(rng_substream(seed, RngStream.TRIALS, 105)),
        "wishart-exact": lambda: check_wishart(seed, 0.0, 0.02, wishart_draws),
        "wishart-approx": lambda: check_wishart(seed, 1.0, 0.10, wishart_draws,
                                                diagonal_only=True),
        "power-scaling": lambda: check_power_scaling(seed),
        "scaling-slope": lambda: check_scaling_slope(seed),
        "phase-independence": lambda: check_phase_independence(
            rng_substream(seed, RngStream.TRIALS, 106)),
    }

    report = SelfCheckReport()
    for name, suite in suites.items():
        logger.info(f"Running check: {name}")
        result = suite()
        report.results.append(result)
        if not result.passed:
            logger.error(f"Check {name} failed: measured {result.measured:.3e} "
                         f"vs tolerance {result.tolerance:.1e}")
    logger.info(f"Self-check: {len(report.results) - len(report.failures)}"
                f"/{len(report.results)} passed")
    return report
