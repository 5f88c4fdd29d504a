"""
Scenario layer: experiment configuration, node geometry and path losses

Everything downstream (channels, closed forms, optimizer, Monte Carlo) is a
function of one ScenarioConfig. The config is immutable; sweeps derive new
configs with `with_overrides`.

Layout (2-D, meters):
    BS at the origin, RIS at (d_ib, 0), K users evenly spread on the half-circle
    of radius d_ui around the RIS, on the side facing away from the BS.
"""

import math
import os
from dataclasses import asdict, dataclass, fields, replace
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import yaml

from src.logging_config import logger

DEFAULT_CONFIG_FILE = "config.yaml"
WORKERS_ENV = "RIS_ZF_WORKERS"
INTEGER_FIELDS = frozenset({"M", "N", "K", "seed", "mc_trials"})
SEED_LIMIT = 2 ** 64


class ConfigError(ValueError):
    """Invalid scenario configuration or config file"""


class RngStream(IntEnum):
    """Independent random streams derived from one scenario seed"""
    ANGLES = 0
    TRIALS = 1
    PHASES = 2


def dbm_to_watts(x_dbm: float) -> float:
    """dBm (referenced to 1 mW) to watts"""
    return float(10.0 ** ((x_dbm - 30.0) / 10.0))


def watts_to_dbm(x_w: float) -> float:
    if x_w <= 0:
        raise ConfigError(f"Power must be positive to express in dBm, got {x_w}")
    return float(10.0 * math.log10(x_w) + 30.0)


def db_to_linear(x_db: float) -> float:
    return float(10.0 ** (x_db / 10.0))


def is_perfect_square(x: int) -> bool:
    return x >= 1 and math.isqrt(x) ** 2 == x


def _as_int(name: str, value: Any) -> int:
    """Integers as-is, whole-number floats converted; anything else is a ConfigError"""
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)) and math.isfinite(value) and value == int(value):
        return int(value)
    raise ConfigError(f"{name} must be an integer, got {value!r}")


def _as_float(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    return float(value)


def rng_substream(seed: int, stream: RngStream, index: int = 0) -> np.random.Generator:
    """
    Counter-based generator for (seed, stream, index)

    The same triple always yields the same stream, independent of how many
    other streams were consumed before, so parallel workers reproduce the
    serial draw sequence.
    """
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class ScenarioConfig:
    """Single source of truth for one experiment (defaults = the reference operating point)"""
    M: int = 64
    N: int = 64
    K: int = 4
    p_dbm: float = 30.0
    noise_dbm: float = -104.0
    rician_delta: float = 1.0
    d_ui_m: float = 20.0
    d_ib_m: float = 700.0
    spacing_ratio: float = 0.5
    pathloss_exponents: Tuple[float, float, float] = (2.0, 2.5, 4.0)
    pathloss_ref_db: float = -30.0
    seed: int = 2021
    mc_trials: int = 10_000

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in INTEGER_FIELDS:
                object.__setattr__(self, f.name, _as_int(f.name, value))
            elif f.name != "pathloss_exponents":
                object.__setattr__(self, f.name, _as_float(f.name, value))
        # YAML hands lists back; keep the tuple so the config stays hashable
        exponents = self.pathloss_exponents
        if isinstance(exponents, (str, bytes)) or not hasattr(exponents, "__iter__"):
            raise ConfigError(f"pathloss_exponents needs a list of numbers, got {exponents!r}")
        object.__setattr__(self, "pathloss_exponents",
                           tuple(_as_float("pathloss_exponents", e) for e in exponents))
        self.validate()

    @property
    def p_watts(self) -> float:
        return dbm_to_watts(self.p_dbm)

    @property
    def noise_watts(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    def validate(self) -> None:
        if self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K}")
        if self.M <= self.K:
            raise ConfigError(f"ZF needs M > K, got M={self.M}, K={self.K}")
        if not is_perfect_square(self.N):
            raise ConfigError(f"RIS element count N must be a perfect square, got {self.N}")
        if not (math.isfinite(self.p_dbm) and math.isfinite(self.noise_dbm)):
            raise ConfigError("Transmit and noise powers must be finite dBm values")
        if not self.rician_delta >= 0:
            raise ConfigError(f"Rician factor must be >= 0, got {self.rician_delta}")
        if self.d_ui_m < 0 or self.d_ib_m <= 0:
            raise ConfigError(
                f"Distances must be non-negative (d_ib strictly positive), "
                f"got d_ui={self.d_ui_m}, d_ib={self.d_ib_m}")
        if self.spacing_ratio <= 0:
            raise ConfigError(f"spacing_ratio must be positive, got {self.spacing_ratio}")
        if len(self.pathloss_exponents) != 3:
            raise ConfigError("pathloss_exponents needs (user-RIS, RIS-BS, user-BS)")
        if self.mc_trials < 1:
            raise ConfigError(f"mc_trials must be >= 1, got {self.mc_trials}")
        if not 0 <= self.seed < SEED_LIMIT:
            raise ConfigError(f"seed must lie in [0, 2**64), got {self.seed}")

    def with_overrides(self, **overrides: Any) -> "ScenarioConfig":
        return replace(self, **overrides)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["pathloss_exponents"] = list(self.pathloss_exponents)
        return data

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]] = None) -> "ScenarioConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown scenario keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Bad scenario value: {e}") from e


def load_config(config_path: Optional[str] = None) -> dict:
    """
    Load a flat YAML scenario file

    With no path the repository default is tried and a missing file only
    warns; an explicitly requested file that is missing or malformed is a
    ConfigError.
    """
    explicit = config_path is not None
    config_file = Path(config_path or DEFAULT_CONFIG_FILE)

    if not config_file.exists():
        if explicit:
            raise ConfigError(f"Config file not found: {config_file}")
        logger.warning(f"Config file not found: {config_file}, using defaults")
        return {}

    try:
        with open(config_file, 'r') as f:
            config = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Failed to parse config {config_file}: {e}") from e

    if not isinstance(config, dict):
        raise ConfigError(f"Config {config_file} must be a flat key-value mapping")
    logger.info(f"Configuration loaded from {config_file}")
    return config


@dataclass(frozen=True)
class Geometry:
    """Planar node positions in meters"""
    bs_position: np.ndarray
    ris_position: np.ndarray
    user_positions: np.ndarray  # (K, 2)

    def user_ris_distances(self) -> np.ndarray:
        return np.linalg.norm(self.user_positions - self.ris_position, axis=1)

    def user_bs_distances(self) -> np.ndarray:
        return np.linalg.norm(self.user_positions - self.bs_position, axis=1)

    def ris_bs_distance(self) -> float:
        return float(np.linalg.norm(self.ris_position - self.bs_position))


@dataclass(frozen=True)
class PathLossSet:
    """Linear large-scale power gains"""
    alpha: np.ndarray   # user-RIS, (K,)
    beta: float         # RIS-BS
    gamma: np.ndarray   # user-BS, (K,)

    def __post_init__(self):
        if np.any(self.alpha <= 0) or self.beta <= 0 or np.any(self.gamma <= 0):
            raise ConfigError("All path-loss factors must be strictly positive")


def user_angles(K: int) -> np.ndarray:
    """Half-circle angles seen from the RIS; cos > 0 puts users away from the BS"""
    k = np.arange(1, K + 1)
    return -np.pi / 2 + (k - 0.5) * np.pi / K


def build_geometry(cfg: ScenarioConfig) -> Geometry:
    if cfg.K < 1:
        raise ConfigError(f"Need at least one user, got K={cfg.K}")
    if cfg.d_ui_m < 0 or cfg.d_ib_m <= 0:
        raise ConfigError(f"Non-positive distance: d_ui={cfg.d_ui_m}, d_ib={cfg.d_ib_m}")

    bs = np.zeros(2)
    ris = np.array([cfg.d_ib_m, 0.0])
    psi = user_angles(cfg.K)
    users = ris + cfg.d_ui_m * np.column_stack([np.cos(psi), np.sin(psi)])
    return Geometry(bs_position=bs, ris_position=ris, user_positions=users)


def log_distance_loss(distance_m, exponent: float, ref_db: float) -> np.ndarray:
    """10^(ref_db/10) * d^-exponent with the reference taken at 1 m"""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ConfigError(f"Path loss undefined at non-positive distance {d}")
    return db_to_linear(ref_db) * d ** (-exponent)


def compute_path_losses(geom: Geometry, cfg: ScenarioConfig) -> PathLossSet:
    exp_ui, exp_ib, exp_ub = cfg.pathloss_exponents
    alpha = log_distance_loss(geom.user_ris_distances(), exp_ui, cfg.pathloss_ref_db)
    beta = float(log_distance_loss(geom.ris_bs_distance(), exp_ib, cfg.pathloss_ref_db))
    gamma = log_distance_loss(geom.user_bs_distances(), exp_ub, cfg.pathloss_ref_db)
    logger.debug(f"Path losses: alpha={alpha}, beta={beta:.3e}, gamma={gamma}")
    return PathLossSet(alpha=alpha, beta=beta, gamma=gamma)


def resolve_workers(n_jobs: Optional[int] = None) -> int:
    """Worker count for joblib pools: explicit argument, then RIS_ZF_WORKERS, then 1"""
    if n_jobs is not None:
        return int(n_jobs)
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError as e:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from e
    if workers == 0:
        raise ConfigError(f"{WORKERS_ENV} must be non-zero (use -1 for all cores)")
    return workers
