"""
Channel layer: USPA steering vectors, statistical CSI and fading draws

Model (uplink, RIS phase matrix Phi = diag(v^H)):
    D  = D~ Omega_d^1/2                              Rayleigh direct link
    H1 = [sqrt(a_1) h_1, ..., sqrt(a_K) h_K]         pure LoS user-RIS
    H2 = sqrt(b d/(d+1)) a_M a_N^H + sqrt(b/(d+1)) H2~   Rician RIS-BS
    Q  = H2 Phi H1 + D

Statistical CSI is fixed per scenario; D~ and H2~ are redrawn every trial.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from src.logging_config import logger
from src.scenario import PathLossSet, ScenarioConfig

UNIT_MODULUS_TOL = 1e-12


class SteeringError(ValueError):
    """Array geometry that the planar steering model cannot express"""


@dataclass(frozen=True)
class SteeringVector:
    entries: np.ndarray
    grid_shape: Tuple[int, int]

    @property
    def grid_side(self) -> int:
        rows, cols = self.grid_shape
        if rows != cols:
            raise SteeringError(f"Rectangular {rows}x{cols} grid has no single side")
        return rows

    def __len__(self) -> int:
        return self.entries.size


def planar_steering_vector(rows: int, cols: int, azimuth: float, elevation: float,
                           spacing_ratio: float = 0.5) -> SteeringVector:
    """Planar array response, x over rows and y over cols, y varying fastest"""
    if rows < 1 or cols < 1:
        raise SteeringError(f"Invalid grid {rows}x{cols}")
    x = np.arange(rows)[:, None]
    y = np.arange(cols)[None, :]
    phase = 2 * np.pi * spacing_ratio * (
        x * np.sin(elevation) * np.sin(azimuth) + y * np.cos(elevation))
    return SteeringVector(entries=np.exp(1j * phase).ravel(), grid_shape=(rows, cols))


def steering_vector(X: int, azimuth: float, elevation: float,
                    spacing_ratio: float = 0.5) -> SteeringVector:
    """Uniform squared planar array response for X = side^2 elements"""
    side = math.isqrt(X) if X >= 1 else 0
    if side < 1 or side * side != X:
        raise SteeringError(f"USPA needs a perfect-square element count, got {X}")
    return planar_steering_vector(side, side, azimuth, elevation, spacing_ratio)


def near_square_grid(X: int) -> Tuple[int, int]:
    rows = math.isqrt(X)
    while X % rows:
        rows -= 1
    return rows, X // rows


def array_steering_vector(X: int, azimuth: float, elevation: float,
                          spacing_ratio: float = 0.5) -> SteeringVector:
    """
    BS-side array factory: square counts use the USPA, anything else the most
    nearly square rectangular grid
    """
    rows, cols = near_square_grid(X)
    if rows != cols:
        logger.debug(f"{X} antennas are not a square; using a {rows}x{cols} planar grid")
    return planar_steering_vector(rows, cols, azimuth, elevation, spacing_ratio)


@dataclass(frozen=True)
class PhaseShiftVector:
    """Unit-modulus RIS coefficients v with Phi = diag(v^H)"""
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=complex).ravel()
        if np.any(np.abs(np.abs(v) - 1.0) > UNIT_MODULUS_TOL):
            raise ValueError("Phase-shift entries must have unit modulus")
        object.__setattr__(self, "v", v)

    @classmethod
    def from_angles(cls, theta: np.ndarray) -> "PhaseShiftVector":
        """Build from the RIS phase shifts theta_n (Phi_nn = e^{j theta_n})"""
        return cls(np.exp(-1j * np.asarray(theta, dtype=float)))

    @property
    def thetas(self) -> np.ndarray:
        return np.mod(-np.angle(self.v), 2 * np.pi)

    @property
    def phi(self) -> np.ndarray:
        return np.diag(self.v.conj())

    def __len__(self) -> int:
        return self.v.size


@dataclass(frozen=True)
class StatisticalCsi:
    """Long-term channel quantities; everything the closed-form bound needs"""
    h1_bar: np.ndarray   # (N, K), column k = sqrt(alpha_k) * a_N(user k angles)
    a_M: np.ndarray      # (M,)
    a_N: np.ndarray      # (N,)
    alpha: np.ndarray    # (K,)
    beta: float
    delta: float
    gamma: np.ndarray    # (K,)

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.delta >= 0:
            raise ValueError(f"Rician factor must be >= 0, got {self.delta}")
        if np.any(np.asarray(self.gamma) <= 0):
            raise ValueError("Direct-link losses must be strictly positive")

    @property
    def M(self) -> int:
        return self.a_M.size

    @property
    def N(self) -> int:
        return self.a_N.size

    @property
    def K(self) -> int:
        return self.h1_bar.shape[1]

    @property
    def omega_d(self) -> np.ndarray:
        return np.diag(self.gamma)

    @property
    def h2_los(self) -> np.ndarray:
        """Rank-one LoS part a_M a_N^H"""
        return np.outer(self.a_M, self.a_N.conj())


@dataclass(frozen=True)
class ChannelRealization:
    d_mat: np.ndarray     # (M, K)
    h2_tilde: np.ndarray  # (M, N)
    q: np.ndarray         # (M, K)


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1): real and imaginary parts each N(0, 1/2)"""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def rician_weights(beta: float, delta: float) -> Tuple[float, float]:
    """(LoS, NLoS) amplitudes of H2; delta = inf is the pure-LoS limit"""
    if math.isinf(delta):
        return math.sqrt(beta), 0.0
    return math.sqrt(beta * delta / (delta + 1.0)), math.sqrt(beta / (delta + 1.0))


def build_statistical_csi(cfg: ScenarioConfig, losses: PathLossSet,
                          rng: np.random.Generator) -> StatisticalCsi:
    """
    Draw every LoS angle once from [0, 2pi) and assemble the long-term CSI

    Draw order: user (azimuth, elevation) pairs, BS arrival pair, RIS
    departure pair. The count does not depend on M or N, so sweeping the
    array sizes keeps the same angles.
    """
    user_angles = rng.uniform(0.0, 2 * np.pi, size=(cfg.K, 2))
    bs_az, bs_el = rng.uniform(0.0, 2 * np.pi, size=2)
    ris_az, ris_el = rng.uniform(0.0, 2 * np.pi, size=2)

    columns = [
        np.sqrt(losses.alpha[k]) * steering_vector(cfg.N, az, el, cfg.spacing_ratio).entries
        for k, (az, el) in enumerate(user_angles)
    ]
    h1_bar = np.column_stack(columns)
    a_M = array_steering_vector(cfg.M, bs_az, bs_el, cfg.spacing_ratio).entries
    a_N = steering_vector(cfg.N, ris_az, ris_el, cfg.spacing_ratio).entries

    return StatisticalCsi(
        h1_bar=h1_bar,
        a_M=a_M,
        a_N=a_N,
        alpha=np.asarray(losses.alpha, dtype=float),
        beta=float(losses.beta),
        delta=float(cfg.rician_delta),
        gamma=np.asarray(losses.gamma, dtype=float),
    )


def random_statistical_csi(rng: np.random.Generator, M: int, N: int, K: int,
                           delta: float = 1.0, spacing_ratio: float = 0.5,
                           loss_range: Tuple[float, float] = (0.5, 2.0)) -> StatisticalCsi:
    """Unit-scale random instance (losses uniform in loss_range) for oracles and checks"""
    lo, hi = loss_range
    alpha = rng.uniform(lo, hi, size=K)
    beta = float(rng.uniform(lo, hi))
    gamma = rng.uniform(lo, hi, size=K)
    angles = rng.uniform(0.0, 2 * np.pi, size=(K + 2, 2))
    h1_bar = np.column_stack([
        np.sqrt(alpha[k]) * steering_vector(N, *angles[k], spacing_ratio).entries
        for k in range(K)
    ])
    a_M = array_steering_vector(M, *angles[K], spacing_ratio).entries
    a_N = steering_vector(N, *angles[K + 1], spacing_ratio).entries
    return StatisticalCsi(h1_bar=h1_bar, a_M=a_M, a_N=a_N, alpha=alpha,
                          beta=beta, delta=float(delta), gamma=gamma)


def _phase_applied_h1(csi: StatisticalCsi, phases: PhaseShiftVector) -> np.ndarray:
    """Phi H1 without forming the diagonal matrix"""
    return phases.v.conj()[:, None] * csi.h1_bar


def sample_realization(csi: StatisticalCsi, phases: PhaseShiftVector,
                       rng: np.random.Generator) -> ChannelRealization:
    d_tilde = complex_gaussian(rng, (csi.M, csi.K))
    h2_tilde = complex_gaussian(rng, (csi.M, csi.N))

    d_mat = d_tilde * np.sqrt(csi.gamma)[None, :]
    phi_h1 = _phase_applied_h1(csi, phases)
    los_w, nlos_w = rician_weights(csi.beta, csi.delta)

    q = los_w * np.outer(csi.a_M, csi.a_N.conj() @ phi_h1) + nlos_w * (h2_tilde @ phi_h1) + d_mat
    return ChannelRealization(d_mat=d_mat, h2_tilde=h2_tilde, q=q)


def sample_aggregated_batch(csi: StatisticalCsi, phases: PhaseShiftVector,
                            rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorised draw of `size` aggregated channels, shape (size, M, K)"""
    d_tilde = complex_gaussian(rng, (size, csi.M, csi.K))
    h2_tilde = complex_gaussian(rng, (size, csi.M, csi.N))

    phi_h1 = _phase_applied_h1(csi, phases)
    los_w, nlos_w = rician_weights(csi.beta, csi.delta)
    los = los_w * np.outer(csi.a_M, csi.a_N.conj() @ phi_h1)
    return los[None, :, :] + nlos_w * (h2_tilde @ phi_h1) + d_tilde * np.sqrt(csi.gamma)


def effective_los_vector(csi: StatisticalCsi, phases: PhaseShiftVector) -> np.ndarray:
    """u = H1^H Phi^H a_N, evaluated as H1^H diag(a_N) v"""
    return csi.h1_bar.conj().T @ (csi.a_N * phases.v)


def aligned_phases(csi: StatisticalCsi, k: int) -> PhaseShiftVector:
    """Phases that add user k's reflected LoS paths coherently (|u_k| = sqrt(alpha_k) N)"""
    column = csi.h1_bar[:, k]
    return PhaseShiftVector(csi.a_N.conj() * column / np.abs(column))


def _format_entry(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}i"


def dump_realization(realization: ChannelRealization, path: str) -> Path:
    """Write D, H2~ and Q as row-major text matrices ("re+im i" entries)"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as f:
        for name in ("d_mat", "h2_tilde", "q"):
            matrix = getattr(realization, name)
            f.write(f"# {name} {matrix.shape[0]} {matrix.shape[1]}\n")
            for row in matrix:
                f.write(" ".join(_format_entry(z) for z in row) + "\n")
    logger.info(f"Realization dumped to {out}")
    return out
