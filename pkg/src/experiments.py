"""
Figure sweeps: rate vs N, power scaling vs M, Rician-factor sweep, custom sweeps

Each sweep point is evaluated independently (own statistical CSI, own phase
design, own Monte Carlo run) and dispatched to a joblib pool; rows are
assembled in sweep order once every point has finished.

CSV layout:
    # key: value            metadata lines
    sweep_param,value,method,user,rate,std_err,seed
"""

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import pandas as pd
from joblib import Parallel, delayed

from src.analysis import rate_bound_corollary4, rate_bound_eq20, rate_bound_ris_free
from src.channels import build_statistical_csi
from src.detection import Detector, RateReport, monte_carlo_rate
from src.logging_config import logger
from src.optimizer import (build_objective_context, optimize_phases,
                           random_phase_baseline)
from src.scenario import (INTEGER_FIELDS, ConfigError, RngStream, ScenarioConfig, build_geometry,
                          compute_path_losses, is_perfect_square, resolve_workers,
                          rng_substream, watts_to_dbm)

CSV_COLUMNS = ["sweep_param", "value", "method", "user", "rate", "std_err", "seed"]
FLOAT_FORMAT = "%.10g"


class ExperimentError(ValueError):
    """Invalid sweep definition"""


class ExperimentName(Enum):
    FIG2 = "fig2-rate-vs-N"
    FIG3 = "fig3-power-scaling"
    FIG4 = "fig4-rician-sweep"
    CUSTOM = "custom-sweep"


class Method(Enum):
    MC_ZF = "mc-zf"
    MC_MRC = "mc-mrc"
    EQ20 = "eq20"
    COROLLARY4 = "corollary4"
    COROLLARY4_EXACT = "corollary4-exact"
    RIS_FREE = "ris-free"
    RANDOM_PHASE = "random-phase"
    OPTIMIZED_PHASE = "optimized-phase"


PHASE_MEASURES = (Method.EQ20, Method.MC_ZF, Method.MC_MRC)
PHASE_DESIGNS = (Method.OPTIMIZED_PHASE, Method.RANDOM_PHASE)
STATIC_MEASURES = (Method.COROLLARY4, Method.COROLLARY4_EXACT, Method.RIS_FREE)

DEFAULT_METHODS = {
    ExperimentName.FIG2: frozenset(Method),
    ExperimentName.FIG3: frozenset({Method.EQ20, Method.MC_ZF, Method.OPTIMIZED_PHASE}),
    ExperimentName.FIG4: frozenset({Method.EQ20, Method.MC_ZF, Method.OPTIMIZED_PHASE}),
    ExperimentName.CUSTOM: frozenset({Method.EQ20, Method.MC_ZF, Method.OPTIMIZED_PHASE}),
}

DEFAULT_SWEEPS = {
    ExperimentName.FIG2: [16, 36, 64, 100, 144, 196, 256],
    ExperimentName.FIG3: [64, 128, 256, 512, 1024],
    ExperimentName.FIG4: [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0],
}


def parse_methods(text: Optional[str]) -> Optional[FrozenSet[Method]]:
    """Comma-separated method names; None passes through"""
    if text is None:
        return None
    try:
        return frozenset(Method(name.strip()) for name in text.split(",") if name.strip())
    except ValueError as e:
        valid = ", ".join(m.value for m in Method)
        raise ExperimentError(f"{e}; valid methods: {valid}") from e


@dataclass
class ExperimentSpec:
    name: ExperimentName
    sweep_values: List[float]
    methods: FrozenSet[Method] = frozenset()
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    output_path: Optional[str] = None
    sweep_param: Optional[str] = None
    restarts: int = 1
    distances: Tuple[float, ...] = (700.0, 300.0)
    power_constant: float = 10.0
    power_exponent: float = 1.0
    trace_dir: Optional[str] = None
    n_jobs: Optional[int] = None

    def __post_init__(self):
        self.name = ExperimentName(self.name)
        if not self.methods:
            self.methods = DEFAULT_METHODS[self.name]
        self.methods = frozenset(Method(m) for m in self.methods)
        self.sweep_values = list(self.sweep_values)
        self.validate()

    def validate(self) -> None:
        if not self.sweep_values:
            raise ExperimentError("Sweep values must be non-empty")
        if any(not math.isfinite(float(v)) for v in self.sweep_values):
            raise ExperimentError("Sweep values must be finite numbers")
        if any(b <= a for a, b in zip(self.sweep_values, self.sweep_values[1:])):
            raise ExperimentError(f"Sweep values must be strictly increasing: {self.sweep_values}")
        if self.restarts < 1:
            raise ExperimentError(f"restarts must be >= 1, got {self.restarts}")
        if self.name is ExperimentName.FIG4 and not self.distances:
            raise ExperimentError("The Rician sweep needs at least one RIS-BS distance")
        if self.name is ExperimentName.FIG3 and self.power_constant <= 0:
            raise ExperimentError(f"Power constant must be positive, got {self.power_constant}")

    @property
    def parameter(self) -> str:
        return {
            ExperimentName.FIG2: "N",
            ExperimentName.FIG3: "M",
            ExperimentName.FIG4: "rician_delta",
        }.get(self.name, self.sweep_param or "")


@dataclass
class ExperimentResult:
    frame: pd.DataFrame
    metadata: Dict[str, str]

    def rates(self, method: str, user: str = "sum") -> pd.Series:
        """Rate column for one method label, indexed by sweep value"""
        rows = self.frame[(self.frame["method"] == method) & (self.frame["user"] == user)]
        return rows.set_index("value")["rate"]

    def std_errs(self, method: str, user: str = "sum") -> pd.Series:
        rows = self.frame[(self.frame["method"] == method) & (self.frame["user"] == user)]
        return rows.set_index("value")["std_err"]

    def to_csv_text(self) -> str:
        header = "".join(f"# {key}: {value}\n" for key, value in self.metadata.items())
        body = self.frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return header + body

    def write(self, path: str) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(self.to_csv_text())
        logger.info(f"✅ {len(self.frame)} rows written to {out}")
        return out


def evaluation_plan(methods: Iterable[Method]) -> Tuple[List[Tuple[Method, Method]], List[Method]]:
    """
    Split methods into (measure, design) pairs and phase-independent measures

    A measure without a design runs on optimized phases; a design without a
    measure gets Monte Carlo ZF.
    """
    methods = frozenset(methods)
    measures = [m for m in PHASE_MEASURES if m in methods]
    designs = [d for d in PHASE_DESIGNS if d in methods]
    if measures and not designs:
        designs = [Method.OPTIMIZED_PHASE]
    if designs and not measures:
        measures = [Method.MC_ZF]
    pairs = [(m, d) for d in designs for m in measures]
    static = [m for m in STATIC_MEASURES if m in methods]
    return pairs, static


def _trace_path(trace_dir: str, parameter: str, value: float, suffix: str) -> Path:
    tag = f"{parameter}={value:g}{suffix}".replace("@", "_").replace("=", "-")
    return Path(trace_dir) / f"trace_{tag}.csv"


def evaluate_point(cfg: ScenarioConfig, methods: Iterable[Method], restarts: int = 1,
                   label_suffix: str = "", parameter: str = "", value: float = 0.0,
                   trace_dir: Optional[str] = None) -> pd.DataFrame:
    """Every requested rate measure at one scenario, as CSV rows"""
    pairs, static = evaluation_plan(methods)
    geom = build_geometry(cfg)
    losses = compute_path_losses(geom, cfg)
    csi = build_statistical_csi(cfg, losses, rng_substream(cfg.seed, RngStream.ANGLES))
    p, noise = cfg.p_watts, cfg.noise_watts

    phases = {}
    designs = {d for _, d in pairs}
    if Method.OPTIMIZED_PHASE in designs:
        ctx = build_objective_context(csi, p, noise, cfg.M, cfg.K)
        trace = optimize_phases(ctx, cfg.seed, restarts=restarts, n_jobs=1)
        phases[Method.OPTIMIZED_PHASE] = trace.final_phases
        if trace_dir:
            out = _trace_path(trace_dir, parameter, value, label_suffix)
            out.parent.mkdir(parents=True, exist_ok=True)
            trace.to_frame().to_csv(out, index=False, float_format=FLOAT_FORMAT)
    if Method.RANDOM_PHASE in designs:
        phases[Method.RANDOM_PHASE] = random_phase_baseline(
            cfg.N, rng_substream(cfg.seed, RngStream.PHASES, 0))

    reports: List[Tuple[str, RateReport]] = []
    for measure, design in pairs:
        v = phases[design]
        if measure is Method.EQ20:
            report = rate_bound_eq20(csi, v, p, noise, cfg.M, cfg.K).as_rate_report()
        else:
            detector = Detector.ZF if measure is Method.MC_ZF else Detector.MRC
            report = monte_carlo_rate(csi, v, detector, cfg, n_jobs=1)
        reports.append((f"{measure.value}:{design.value}", report))

    for measure in static:
        if measure is Method.RIS_FREE:
            bound = rate_bound_ris_free(csi, p, noise, cfg.M, cfg.K)
        else:
            mode = "exact" if measure is Method.COROLLARY4_EXACT else "largeN"
            bound = rate_bound_corollary4(csi, p, noise, cfg.M, cfg.K, mode=mode)
        reports.append((measure.value, bound.as_rate_report()))

    frames = []
    for label, report in reports:
        frame = report.to_frame()
        frame["method"] = label + label_suffix
        frames.append(frame)
    rows = pd.concat(frames, ignore_index=True)
    rows.insert(0, "sweep_param", parameter)
    rows.insert(1, "value", value)
    rows["seed"] = cfg.seed
    return rows[CSV_COLUMNS]


def _point_config(base: ScenarioConfig, **overrides) -> ScenarioConfig:
    try:
        return base.with_overrides(**overrides)
    except ConfigError as e:
        raise ExperimentError(f"Invalid sweep point {overrides}: {e}") from e


def _as_integers(values: Sequence[float], parameter: str) -> List[int]:
    ints = []
    for v in values:
        if float(v) != int(v):
            raise ExperimentError(f"{parameter} values must be integers, got {v}")
        ints.append(int(v))
    return ints


def _run_points(spec: ExperimentSpec, points: List[Tuple[float, ScenarioConfig, str]],
                metadata: Dict[str, str]) -> ExperimentResult:
    logger.info("=" * 70)
    logger.info(f"Experiment {spec.name.value}: {len(points)} point(s) over {spec.parameter}")
    logger.info(f"Methods: {', '.join(sorted(m.value for m in spec.methods))}")
    logger.info("=" * 70)

    frames = Parallel(n_jobs=resolve_workers(spec.n_jobs))(
        delayed(evaluate_point)(cfg, spec.methods, spec.restarts, suffix,
                                spec.parameter, value, spec.trace_dir)
        for value, cfg, suffix in points
    )
    frame = pd.concat(frames, ignore_index=True)[CSV_COLUMNS]

    base = spec.scenario
    meta = {
        "experiment": spec.name.value,
        "sweep_param": spec.parameter,
        "seed": str(base.seed),
        "mc_trials": str(base.mc_trials),
        "restarts": str(spec.restarts),
    }
    meta.update(metadata)
    if Method.MC_MRC in spec.methods:
        meta["mrc_phases"] = "MRC curves reuse the ZF-optimized (MRC-agnostic) phases"
    meta["scenario"] = " ".join(f"{k}={v}" for k, v in base.to_dict().items()
                                if k not in {"seed", "mc_trials"})

    result = ExperimentResult(frame=frame, metadata=meta)
    if spec.output_path:
        result.write(spec.output_path)
    logger.info(f"✅ Experiment {spec.name.value} finished")
    return result


def run_fig2(spec: ExperimentSpec) -> ExperimentResult:
    """Rate versus the number of RIS elements N"""
    values = _as_integers(spec.sweep_values, "N")
    bad = [n for n in values if not is_perfect_square(n)]
    if bad:
        raise ExperimentError(f"N values must be perfect squares, got {bad}")
    points = [(n, _point_config(spec.scenario, N=n), "") for n in values]
    return _run_points(spec, points, {})


def run_fig3(spec: ExperimentSpec) -> ExperimentResult:
    """Rate versus M with the transmit power scaled as p = c / M^exponent watts"""
    values = _as_integers(spec.sweep_values, "M")
    bad = [m for m in values if m <= spec.scenario.K]
    if bad:
        raise ExperimentError(f"M values must exceed K={spec.scenario.K}, got {bad}")
    points = []
    for m in values:
        p_watts = spec.power_constant / float(m) ** spec.power_exponent
        points.append((m, _point_config(spec.scenario, M=m, p_dbm=watts_to_dbm(p_watts)), ""))
    power = f"p = {spec.power_constant:g}/M^{spec.power_exponent:g} W (linear watts)"
    return _run_points(spec, points, {"power": power})


def run_fig4(spec: ExperimentSpec) -> ExperimentResult:
    """Rate versus the Rician factor for each RIS-BS distance"""
    bad = [d for d in spec.sweep_values if d < 0]
    if bad:
        raise ExperimentError(f"Rician factors must be >= 0, got {bad}")
    points = []
    for delta in spec.sweep_values:
        for d_ib in spec.distances:
            cfg = _point_config(spec.scenario, rician_delta=float(delta), d_ib_m=float(d_ib))
            points.append((float(delta), cfg, f"@d_ib={d_ib:g}"))
    distances = ",".join(f"{d:g}" for d in spec.distances)
    return _run_points(spec, points, {"distances_m": distances})


def run_sweep(spec: ExperimentSpec) -> ExperimentResult:
    """Sweep any scalar ScenarioConfig field"""
    parameter = spec.sweep_param
    scalar_fields = {f.name for f in fields(ScenarioConfig)} - {"pathloss_exponents"}
    if parameter not in scalar_fields:
        raise ExperimentError(
            f"Cannot sweep {parameter!r}; choose one of {', '.join(sorted(scalar_fields))}")
    if parameter in INTEGER_FIELDS:
        values: List[float] = list(_as_integers(spec.sweep_values, parameter))
    else:
        values = [float(v) for v in spec.sweep_values]
    points = [(v, _point_config(spec.scenario, **{parameter: v}), "") for v in values]
    return _run_points(spec, points, {})


RUNNERS = {
    ExperimentName.FIG2: run_fig2,
    ExperimentName.FIG3: run_fig3,
    ExperimentName.FIG4: run_fig4,
    ExperimentName.CUSTOM: run_sweep,
}


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    return RUNNERS[spec.name](spec)


PLOT_SCRIPT = '''"""Plot sum rates from {csv_name} (requires pandas and matplotlib)"""
import matplotlib.pyplot as plt
import pandas as pd

frame = pd.read_csv({csv_path!r}, comment="#")
sums = frame[frame["user"] == "sum"]
param = sums["sweep_param"].iloc[0]

fig, ax = plt.subplots(figsize=(7, 5))
for method, rows in sums.groupby("method", sort=False):
    ax.errorbar(rows["value"], rows["rate"], yerr=3 * rows["std_err"],
                marker="o", capsize=3, label=method)
ax.set_xlabel(param)
ax.set_ylabel("Sum rate (bits/s/Hz)")
ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig({png_path!r}, dpi=150)
print("Saved {png_path}")
'''


def write_plot_script(csv_path: str, script_path: str) -> Path:
    out = Path(script_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    png_path = str(Path(csv_path).with_suffix(".png"))
    out.write_text(PLOT_SCRIPT.format(csv_name=Path(csv_path).name, csv_path=str(csv_path),
                                      png_path=png_path))
    logger.info(f"Plot script written to {out}")
    return out
