"""
RIS phase design from statistical CSI

The closed-form sum rate is rewritten as a sum of Rayleigh-quotient terms

    R(v) = sum_k log2(1 + v^H B v / v^H A_k v)

and maximised by projected gradient ascent on the unit-modulus torus with a
backtracking (Armijo) line search evaluated on the projected iterate.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.linalg import cho_solve

from src.analysis import DimensionError, lambda_matrix
from src.channels import PhaseShiftVector, StatisticalCsi
from src.logging_config import logger
from src.scenario import RngStream, resolve_workers, rng_substream

VectorLike = Union[PhaseShiftVector, np.ndarray]


class ObjectiveError(ValueError):
    """Objective denominator v^H A_k v is not positive"""


@dataclass(frozen=True)
class ObjectiveContext:
    b_mat: np.ndarray            # (N, N)
    a_mats: np.ndarray           # (K, N, N)
    s_vecs: np.ndarray           # (K, N), row k is s_k
    p: float
    noise: float
    M: int
    K: int
    delta: float
    beta: float
    lambda_inv_diag: np.ndarray  # (K,)

    @property
    def N(self) -> int:
        return self.b_mat.shape[0]

    def scaled(self, factor: float) -> "ObjectiveContext":
        """Same context with B and every A_k multiplied by `factor`"""
        return ObjectiveContext(
            b_mat=factor * self.b_mat, a_mats=factor * self.a_mats, s_vecs=self.s_vecs,
            p=self.p, noise=self.noise, M=self.M, K=self.K, delta=self.delta,
            beta=self.beta, lambda_inv_diag=self.lambda_inv_diag)


@dataclass
class AscentOptions:
    max_iters: int = 500
    tol: float = 1e-6
    initial_step: float = 1.0
    shrink: float = 0.5
    armijo_c: float = 1e-4
    max_backtracks: int = 30
    grad_tol: float = 1e-10

    def __post_init__(self):
        if self.max_iters < 0 or self.max_backtracks < 1:
            raise ValueError("max_iters must be >= 0 and max_backtracks >= 1")
        if not 0 < self.shrink < 1:
            raise ValueError(f"shrink must lie in (0, 1), got {self.shrink}")
        if self.initial_step <= 0:
            raise ValueError(f"initial_step must be positive, got {self.initial_step}")


@dataclass(frozen=True)
class AscentStep:
    iteration: int
    objective: float
    step: float
    grad_norm: float


@dataclass
class AscentTrace:
    iterations: List[AscentStep] = field(default_factory=list)
    converged: bool = False
    final_phases: Optional[PhaseShiftVector] = None
    history: List[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def initial_objective(self) -> float:
        return self.iterations[0].objective

    @property
    def final_objective(self) -> float:
        return self.iterations[-1].objective

    @property
    def objectives(self) -> np.ndarray:
        return np.array([s.objective for s in self.iterations])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(s.iteration, s.objective, s.step, s.grad_norm) for s in self.iterations],
            columns=["iteration", "objective", "step", "grad_norm"])


def _as_array(v: VectorLike) -> np.ndarray:
    if isinstance(v, PhaseShiftVector):
        return v.v
    return np.asarray(v, dtype=complex).ravel()


def build_objective_context(csi: StatisticalCsi, p: float, noise: float, M: int,
                            K: int) -> ObjectiveContext:
    if M <= K:
        raise DimensionError(f"Objective needs M > K, got M={M}, K={K}")
    if K != csi.K:
        raise DimensionError(f"K={K} does not match the CSI ({csi.K} users)")

    N = csi.N
    lam = lambda_matrix(csi)
    factor = lam.factor()
    lam_inv_diag = lam.inverse_diagonal()
    rank_one = csi.beta * csi.delta

    # F = H1^H diag(a_N); row k of Lambda^-1 F is s_k^H
    f_mat = csi.h1_bar.conj().T * csi.a_N[None, :]
    lam_inv_f = cho_solve(factor, f_mat)
    b_mat = np.eye(N, dtype=complex) / N + rank_one * (f_mat.conj().T @ lam_inv_f)
    b_mat = 0.5 * (b_mat + b_mat.conj().T)

    s_vecs = lam_inv_f.conj()
    scale = noise * (csi.delta + 1.0) / (p * (M - K))
    a_mats = np.stack([
        scale * (lam_inv_diag[k] * b_mat - rank_one * np.outer(s_vecs[k], s_vecs[k].conj()))
        for k in range(K)
    ])
    a_mats = 0.5 * (a_mats + np.conj(np.swapaxes(a_mats, -1, -2)))

    return ObjectiveContext(b_mat=b_mat, a_mats=a_mats, s_vecs=s_vecs, p=p, noise=noise,
                            M=M, K=K, delta=csi.delta, beta=csi.beta,
                            lambda_inv_diag=lam_inv_diag)


def _quadratic_forms(ctx: ObjectiveContext, v: np.ndarray):
    b = np.real(np.vdot(v, ctx.b_mat @ v))
    a_v = ctx.a_mats @ v                       # (K, N)
    a = np.real(np.einsum("n,kn->k", v.conj(), a_v))
    if np.any(a <= 0):
        raise ObjectiveError(f"Non-positive v^H A_k v encountered: {a}")
    return b, a, a_v


def sum_rate_objective(ctx: ObjectiveContext, v: VectorLike) -> float:
    """Sum rate in bits/s/Hz; accepts points off the unit-modulus set"""
    b, a, _ = _quadratic_forms(ctx, _as_array(v))
    return float(np.sum(np.log2(1.0 + b / a)))


def sum_rate_gradient(ctx: ObjectiveContext, v: VectorLike) -> np.ndarray:
    """Conjugate-coordinate gradient dR/dv*"""
    v = _as_array(v)
    b, a, a_v = _quadratic_forms(ctx, v)
    if ctx.beta * ctx.delta == 0:
        # every A_k is then a multiple of B: the objective is constant
        return np.zeros_like(v)
    b_v = ctx.b_mat @ v
    weights = 1.0 / (np.log(2.0) * (1.0 + b / a))
    terms = b_v[None, :] / a[:, None] - (b / a ** 2)[:, None] * a_v
    return np.sum(weights[:, None] * terms, axis=0)


def project_unit_modulus(v: np.ndarray) -> PhaseShiftVector:
    """exp(j arg v_n); numpy's arg(0) = 0 sends zeros to 1"""
    return PhaseShiftVector(np.exp(1j * np.angle(np.asarray(v, dtype=complex))))


def random_phase_baseline(N: int, rng: np.random.Generator) -> PhaseShiftVector:
    return PhaseShiftVector.from_angles(rng.uniform(0.0, 2 * np.pi, size=N))


def gradient_ascent(ctx: ObjectiveContext, v0: PhaseShiftVector,
                    opts: Optional[AscentOptions] = None) -> AscentTrace:
    opts = opts or AscentOptions()
    v = v0.v.copy()
    objective = sum_rate_objective(ctx, v)
    grad = sum_rate_gradient(ctx, v)
    trace = AscentTrace(final_phases=v0)
    trace.iterations.append(AscentStep(0, objective, 0.0, float(np.linalg.norm(grad))))
    trace.history.append(v.copy())

    for it in range(1, opts.max_iters + 1):
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= opts.grad_tol * (1.0 + abs(objective)):
            logger.debug(f"Stationary point at iteration {it - 1} (|g|={grad_norm:.3e})")
            trace.converged = True
            break

        step = opts.initial_step
        accepted = None
        for _ in range(opts.max_backtracks):
            candidate = project_unit_modulus(v + step * grad).v
            cand_objective = sum_rate_objective(ctx, candidate)
            predicted = 2.0 * np.real(np.vdot(grad, candidate - v))
            if cand_objective >= objective and \
                    cand_objective >= objective + opts.armijo_c * predicted:
                accepted = candidate
                break
            step *= opts.shrink

        if accepted is None:
            logger.warning(f"Line search failed at iteration {it}; stopping at R={objective:.6f}")
            trace.converged = False
            break

        improvement = (cand_objective - objective) / max(abs(objective), np.finfo(float).tiny)
        v, objective = accepted, cand_objective
        grad = sum_rate_gradient(ctx, v)
        trace.iterations.append(AscentStep(it, objective, step, float(np.linalg.norm(grad))))
        trace.history.append(v.copy())
        logger.debug(f"Iteration {it}: R={objective:.8f}, step={step:.3e}")

        if improvement < opts.tol:
            trace.converged = True
            break
    else:
        trace.converged = opts.max_iters == 0

    trace.final_phases = PhaseShiftVector(v)
    logger.info(f"Ascent finished after {len(trace.iterations) - 1} steps: "
                f"R {trace.initial_objective:.4f} -> {trace.final_objective:.4f} bits/s/Hz "
                f"(converged={trace.converged})")
    return trace


def _single_start(ctx: ObjectiveContext, seed: int, index: int,
                  opts: Optional[AscentOptions]) -> AscentTrace:
    v0 = random_phase_baseline(ctx.N, rng_substream(seed, RngStream.PHASES, index))
    return gradient_ascent(ctx, v0, opts)


def optimize_phases(ctx: ObjectiveContext, seed: int, restarts: int = 1,
                    opts: Optional[AscentOptions] = None,
                    n_jobs: Optional[int] = None) -> AscentTrace:
    """
    Best-of multi-start ascent

    Start r uses PHASES substream r + 1 (index 0 is the random-phase baseline).
    Ties keep the lowest start index.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    traces = Parallel(n_jobs=resolve_workers(n_jobs))(
        delayed(_single_start)(ctx, seed, r + 1, opts) for r in range(restarts)
    )
    best = max(range(restarts), key=lambda r: (traces[r].final_objective, -r))
    logger.info(f"Best of {restarts} start(s): R={traces[best].final_objective:.4f} (start {best})")
    return traces[best]
