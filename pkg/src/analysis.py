"""
Closed-form statistical-CSI rate bounds

    Lambda = beta H1^H H1 + (delta+1) Omega_d
    u      = H1^H Phi^H a_N
    R_k   >= log2(1 + p(M-K) / (sigma^2 (delta+1) [(Lambda + beta delta u u^H)^-1]_kk))

The rank-one update is handled with the Woodbury identity around one
Cholesky factor of Lambda.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.linalg import cho_factor, cho_solve

from src.channels import (PhaseShiftVector, StatisticalCsi, effective_los_vector,
                          sample_aggregated_batch)
from src.detection import RateMethod, RateReport
from src.logging_config import logger

HIGH_SNR_GATE = 100.0


class DimensionError(ValueError):
    """Array dimensions outside the ZF regime (needs M > K)"""


class BoundKind(Enum):
    EQ20 = "eq20"
    COROLLARY4_EXACT = "corollary4_exact"
    COROLLARY4_LARGE_N = "corollary4_largeN"
    RIS_FREE = "ris_free"


_REPORT_METHOD = {
    BoundKind.EQ20: RateMethod.CLOSED_FORM,
    BoundKind.COROLLARY4_EXACT: RateMethod.COROLLARY4,
    BoundKind.COROLLARY4_LARGE_N: RateMethod.COROLLARY4,
    BoundKind.RIS_FREE: RateMethod.RIS_FREE,
}


@dataclass(frozen=True)
class LambdaMatrix:
    matrix: np.ndarray

    @property
    def K(self) -> int:
        return self.matrix.shape[0]

    def factor(self):
        return cho_factor(self.matrix, lower=True)

    def inverse_diagonal(self) -> np.ndarray:
        inv = cho_solve(self.factor(), np.eye(self.K, dtype=complex))
        return np.real(np.diag(inv))


@dataclass(frozen=True)
class ClosedFormRate:
    per_user: np.ndarray
    kind: BoundKind

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.per_user))

    def as_rate_report(self) -> RateReport:
        return RateReport(per_user=self.per_user, method=_REPORT_METHOD[self.kind])


def _check_dimensions(csi: StatisticalCsi, M: int, K: int) -> None:
    if M <= K:
        raise DimensionError(f"Closed forms need M > K, got M={M}, K={K}")
    if K != csi.K:
        raise DimensionError(f"K={K} does not match the CSI ({csi.K} users)")


def _check_finite_delta(csi: StatisticalCsi) -> None:
    if not np.isfinite(csi.delta):
        raise ValueError("Closed-form bounds need a finite Rician factor")


def lambda_matrix(csi: StatisticalCsi) -> LambdaMatrix:
    _check_finite_delta(csi)
    gram = csi.h1_bar.conj().T @ csi.h1_bar
    lam = csi.beta * gram + (csi.delta + 1.0) * csi.omega_d
    # exact Hermitian symmetry for the Cholesky factor
    lam = 0.5 * (lam + lam.conj().T)
    return LambdaMatrix(matrix=lam)


def inverse_diagonal(csi: StatisticalCsi, phases: PhaseShiftVector,
                     method: str = "woodbury") -> np.ndarray:
    """Diagonal of (Lambda + beta delta u u^H)^-1"""
    lam = lambda_matrix(csi)
    u = effective_los_vector(csi, phases)
    rank_one = csi.beta * csi.delta

    if method == "woodbury":
        factor = lam.factor()
        lam_inv_diag = np.real(np.diag(cho_solve(factor, np.eye(csi.K, dtype=complex))))
        w = cho_solve(factor, u)
        denom = 1.0 + rank_one * np.real(np.vdot(u, w))
        return lam_inv_diag - rank_one * np.abs(w) ** 2 / denom
    if method == "direct":
        full = lam.matrix + rank_one * np.outer(u, u.conj())
        return np.real(np.diag(np.linalg.inv(full)))
    raise ValueError(f"Unknown inverse method: {method}")


def wishart_inverse_expectation(csi: StatisticalCsi, phases: PhaseShiftVector,
                                M: Optional[int] = None) -> np.ndarray:
    """
    E{(Q^H Q)^-1} under the central-Wishart moment match of Q^H Q

    Exact when delta = 0 (Q is then zero-mean Gaussian).
    """
    _check_finite_delta(csi)
    M = csi.M if M is None else M
    _check_dimensions(csi, M, csi.K)
    scale = csi.delta + 1.0
    u = effective_los_vector(csi, phases)
    sigma = (csi.beta / scale) * (csi.h1_bar.conj().T @ csi.h1_bar) + csi.omega_d \
        + (csi.beta * csi.delta / scale) * np.outer(u, u.conj())
    sigma = 0.5 * (sigma + sigma.conj().T)
    inv = cho_solve(cho_factor(sigma, lower=True), np.eye(csi.K, dtype=complex))
    return inv / (M - csi.K)


def empirical_inverse_gram(csi: StatisticalCsi, phases: PhaseShiftVector, trials: int,
                           rng: np.random.Generator, batch: int = 10_000) -> np.ndarray:
    """Brute-force Monte Carlo mean of (Q^H Q)^-1"""
    total = np.zeros((csi.K, csi.K), dtype=complex)
    remaining = trials
    while remaining > 0:
        size = min(batch, remaining)
        q = sample_aggregated_batch(csi, phases, rng, size)
        gram = np.conj(np.swapaxes(q, -1, -2)) @ q
        total += np.sum(np.linalg.inv(gram), axis=0)
        remaining -= size
    return total / trials


def _snr_to_rate(snr: np.ndarray) -> np.ndarray:
    return np.log2(1.0 + snr)


def rate_bound_eq20(csi: StatisticalCsi, phases: PhaseShiftVector, p: float, noise: float,
                    M: int, K: int) -> ClosedFormRate:
    _check_dimensions(csi, M, K)
    diag = inverse_diagonal(csi, phases)
    snr = p * (M - K) / (noise * (csi.delta + 1.0) * diag)
    return ClosedFormRate(per_user=_snr_to_rate(snr), kind=BoundKind.EQ20)


def rate_bound_corollary4(csi: StatisticalCsi, p: float, noise: float, M: int, K: int,
                          mode: str = "largeN") -> ClosedFormRate:
    """
    Phase-independent lower bounds

    "exact" keeps [Lambda^-1]_kk; "largeN" drops the off-diagonal part of H1^H H1.
    """
    _check_dimensions(csi, M, K)
    _check_finite_delta(csi)
    scale = csi.delta + 1.0
    if mode == "exact":
        lam_inv_diag = lambda_matrix(csi).inverse_diagonal()
        snr = p * (M - K) / (noise * scale * lam_inv_diag)
        return ClosedFormRate(per_user=_snr_to_rate(snr), kind=BoundKind.COROLLARY4_EXACT)
    if mode == "largeN":
        gain = csi.N * csi.alpha * csi.beta / scale + csi.gamma
        snr = (p * (M - K) / noise) * gain
        return ClosedFormRate(per_user=_snr_to_rate(snr), kind=BoundKind.COROLLARY4_LARGE_N)
    raise ValueError(f"Unknown corollary mode: {mode}")


def rate_bound_ris_free(csi: StatisticalCsi, p: float, noise: float, M: int,
                        K: int) -> ClosedFormRate:
    _check_dimensions(csi, M, K)
    snr = p * (M - K) * csi.gamma / noise
    return ClosedFormRate(per_user=_snr_to_rate(snr), kind=BoundKind.RIS_FREE)


def power_scaling_check(csi: StatisticalCsi, phases: PhaseShiftVector, m_values: Sequence[int],
                        noise: float, c: float = 10.0, exponent: float = 1.0) -> pd.DataFrame:
    """
    Bound under the power law p = c / M^exponent for each M

    The BS array inside `csi` is ignored: its antenna count and steering
    vector play no part, and only the (M - K) array gain changes with M.
    The RIS and user geometry stay those of `csi`.
    """
    rows = []
    for M in m_values:
        _check_dimensions(csi, M, csi.K)
        p = c / float(M) ** exponent
        bound = rate_bound_eq20(csi, phases, p, noise, M, csi.K)
        row = {"M": int(M), "p_watts": p}
        row.update({f"user_{k + 1}": float(r) for k, r in enumerate(bound.per_user)})
        row["sum"] = bound.sum_rate
        rows.append(row)
    return pd.DataFrame(rows)


def scaling_slope(parameters: Sequence[float], values: Sequence[float],
                  log_arguments: Optional[Sequence[float]] = None,
                  min_log_argument: float = HIGH_SNR_GATE) -> float:
    """Least-squares slope of values against log2(parameters), in bits per doubling"""
    x = np.asarray(parameters, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 3 or x.size != y.size:
        raise ValueError(f"Slope fit needs >= 3 matching points, got {x.size} and {y.size}")
    if np.any(x <= 0):
        raise ValueError("Parameters must be positive for a log2 fit")
    if log_arguments is not None:
        args = np.asarray(log_arguments, dtype=float)
        if np.any(args < min_log_argument):
            raise ValueError(
                f"Points below the high-SNR gate ({args.min():.3g} < {min_log_argument})")
    slope = float(np.polyfit(np.log2(x), y, 1)[0])
    logger.debug(f"Fitted slope {slope:.4f} bits per doubling over {x.size} points")
    return slope
