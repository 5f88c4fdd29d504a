"""
Linear receivers and the Monte Carlo ergodic-rate estimator

ZF:  A = Q (Q^H Q)^-1,  SINR_k = p / (sigma^2 [(Q^H Q)^-1]_kk)
MRC: A = Q,             SINR_k = p|g_kk|^2 / (p sum_{i!=k} |g_ki|^2 + sigma^2 g_kk),  G = Q^H Q
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.linalg import cho_factor, cho_solve

from src.channels import PhaseShiftVector, StatisticalCsi, sample_realization
from src.logging_config import logger
from src.scenario import RngStream, ScenarioConfig, resolve_workers, rng_substream

CONDITION_LIMIT = 1e12
CHUNK_SIZE = 500


class SingularGramError(ValueError):
    """Gram matrix Q^H Q too ill-conditioned to invert"""


class Detector(Enum):
    ZF = "zf"
    MRC = "mrc"


class RateMethod(Enum):
    MONTE_CARLO_ZF = "monte-carlo-zf"
    MONTE_CARLO_MRC = "monte-carlo-mrc"
    CLOSED_FORM = "closed-form"
    COROLLARY4 = "corollary4"
    RIS_FREE = "ris-free"


@dataclass(frozen=True)
class SinrVector:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("SINR values must be finite and non-negative")
        object.__setattr__(self, "values", values)


@dataclass
class RateReport:
    """Per-user ergodic rates (bits/s/Hz) with their provenance"""
    per_user: np.ndarray
    method: RateMethod
    trials: int = 0
    std_err: Optional[np.ndarray] = None
    sum_std_err: float = 0.0
    excluded: int = 0

    def __post_init__(self):
        self.per_user = np.asarray(self.per_user, dtype=float)
        if np.any(self.per_user < 0):
            raise ValueError("Rates must be non-negative")

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.per_user))

    @property
    def K(self) -> int:
        return self.per_user.size

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "per_user": self.per_user.tolist(),
            "sum": self.sum_rate,
            "trials": self.trials,
            "std_err": None if self.std_err is None else self.std_err.tolist(),
            "excluded": self.excluded,
        }

    def to_frame(self) -> pd.DataFrame:
        """One row per user (1-based) plus a "sum" row"""
        std = self.std_err if self.std_err is not None else np.zeros(self.K)
        rows = [
            {"method": self.method.value, "user": str(k + 1),
             "rate": float(self.per_user[k]), "std_err": float(std[k])}
            for k in range(self.K)
        ]
        rows.append({"method": self.method.value, "user": "sum",
                     "rate": self.sum_rate, "std_err": float(self.sum_std_err)})
        return pd.DataFrame(rows, columns=["method", "user", "rate", "std_err"])


def _check_gram(gram: np.ndarray) -> None:
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0 or eig[-1] / eig[0] > CONDITION_LIMIT:
        raise SingularGramError(
            f"Gram matrix is singular or ill-conditioned (eigenvalues {eig[0]:.3e}..{eig[-1]:.3e})")


def _gram_factor(q: np.ndarray):
    q = np.asarray(q, dtype=complex)
    M, K = q.shape
    if M <= K:
        raise SingularGramError(f"ZF needs more antennas than users, got M={M}, K={K}")
    gram = q.conj().T @ q
    _check_gram(gram)
    return cho_factor(gram, lower=True)


def zf_detector(q: np.ndarray) -> np.ndarray:
    factor = _gram_factor(q)
    # A^H = G^-1 Q^H
    return cho_solve(factor, np.asarray(q, dtype=complex).conj().T).conj().T


def zf_sinr(q: np.ndarray, p: float, noise: float) -> SinrVector:
    factor = _gram_factor(q)
    K = np.shape(q)[1]
    inv_diag = np.real(np.diag(cho_solve(factor, np.eye(K, dtype=complex))))
    return SinrVector(p / (noise * inv_diag))


def mrc_sinr(q: np.ndarray, p: float, noise: float) -> SinrVector:
    q = np.asarray(q, dtype=complex)
    gram = q.conj().T @ q
    g_kk = np.real(np.diag(gram))
    if np.any(g_kk <= 0):
        raise SingularGramError("MRC needs non-zero channel columns")
    interference = np.sum(np.abs(gram) ** 2, axis=1) - g_kk ** 2
    return SinrVector(p * g_kk ** 2 / (p * interference + noise * g_kk))


def instantaneous_rates(sinr: SinrVector) -> np.ndarray:
    return np.log2(1.0 + sinr.values)


def _batch_gram(q_batch: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(q_batch, -1, -2)) @ q_batch


def _well_conditioned(gram: np.ndarray) -> np.ndarray:
    eig = np.linalg.eigvalsh(gram)
    lo, hi = eig[:, 0], eig[:, -1]
    return (lo > 0) & (hi <= CONDITION_LIMIT * np.where(lo > 0, lo, 1.0))


def zf_sinr_batch(q_batch: np.ndarray, p: float, noise: float) -> Tuple[np.ndarray, np.ndarray]:
    """SINRs for a stack of channels, shape (T, K), and the mask of usable trials"""
    gram = _batch_gram(q_batch)
    valid = _well_conditioned(gram)
    K = gram.shape[-1]
    gram[~valid] = np.eye(K)
    chol = np.linalg.cholesky(gram)
    chol_inv = np.linalg.solve(chol, np.broadcast_to(np.eye(K, dtype=complex), chol.shape))
    # G^-1 = L^-H L^-1, so [G^-1]_kk is the column-k energy of L^-1
    inv_diag = np.sum(np.abs(chol_inv) ** 2, axis=-2)
    return p / (noise * inv_diag), valid


def mrc_sinr_batch(q_batch: np.ndarray, p: float, noise: float) -> Tuple[np.ndarray, np.ndarray]:
    gram = _batch_gram(q_batch)
    g_kk = np.real(np.diagonal(gram, axis1=-2, axis2=-1))
    valid = np.all(g_kk > 0, axis=-1)
    safe = np.where(g_kk > 0, g_kk, 1.0)
    interference = np.sum(np.abs(gram) ** 2, axis=-1) - g_kk ** 2
    return p * g_kk ** 2 / (p * interference + noise * safe), valid


def _run_chunk(csi: StatisticalCsi, phases: PhaseShiftVector, detector: Detector,
               p: float, noise: float, seed: int, start: int, stop: int):
    q_batch = np.stack([
        sample_realization(csi, phases, rng_substream(seed, RngStream.TRIALS, t)).q
        for t in range(start, stop)
    ])
    sinr_fn = zf_sinr_batch if detector is Detector.ZF else mrc_sinr_batch
    sinr, valid = sinr_fn(q_batch, p, noise)
    logger.debug(f"Monte Carlo chunk [{start}, {stop}) done, {int(np.sum(~valid))} excluded")
    return np.log2(1.0 + sinr), valid


def _chunks(trials: int, size: int) -> List[Tuple[int, int]]:
    return [(s, min(s + size, trials)) for s in range(0, trials, size)]


def monte_carlo_rate(csi: StatisticalCsi, phases: PhaseShiftVector, detector: Detector,
                     cfg: ScenarioConfig, n_jobs: Optional[int] = None) -> RateReport:
    """
    Average log2(1 + SINR_k) over cfg.mc_trials independent fading draws

    Trial t always uses substream (seed, TRIALS, t), and chunk results are
    concatenated in trial order, so the estimate does not depend on n_jobs.
    """
    detector = Detector(detector)
    trials = cfg.mc_trials
    if trials < 1:
        raise ValueError(f"mc_trials must be >= 1, got {trials}")

    p, noise = cfg.p_watts, cfg.noise_watts
    results = Parallel(n_jobs=resolve_workers(n_jobs))(
        delayed(_run_chunk)(csi, phases, detector, p, noise, cfg.seed, start, stop)
        for start, stop in _chunks(trials, CHUNK_SIZE)
    )
    rates = np.concatenate([r for r, _ in results])
    valid = np.concatenate([v for _, v in results])

    excluded = int(np.sum(~valid))
    if excluded:
        logger.warning(f"{excluded}/{trials} trials excluded by the condition guard")
    used = rates[valid]
    if used.shape[0] == 0:
        raise SingularGramError("Every Monte Carlo trial tripped the condition guard")

    # (K, T) contiguous rows so numpy reduces each user with pairwise summation
    per_trial = np.ascontiguousarray(used.T)
    sums = np.sum(per_trial, axis=0)
    T = per_trial.shape[1]
    per_user = np.sum(per_trial, axis=1) / T
    if T > 1:
        std_err = np.std(per_trial, axis=1, ddof=1) / np.sqrt(T)
        sum_std_err = float(np.std(sums, ddof=1) / np.sqrt(T))
    else:
        std_err = np.zeros(csi.K)
        sum_std_err = 0.0

    method = RateMethod.MONTE_CARLO_ZF if detector is Detector.ZF else RateMethod.MONTE_CARLO_MRC
    logger.info(f"Monte Carlo {detector.value.upper()}: {T} trials, sum rate "
                f"{np.sum(per_user):.4f} +/- {sum_std_err:.4f} bits/s/Hz")
    return RateReport(per_user=per_user, method=method, trials=T, std_err=std_err,
                      sum_std_err=sum_std_err, excluded=excluded)
