"""
Tests for the figure sweeps and their CSV output
"""

from pathlib import Path

import numpy as np
import pytest

from src.analysis import rate_bound_eq20
from src.channels import build_statistical_csi
from src.experiments import (ExperimentError, ExperimentName, ExperimentSpec, Method,
                             evaluation_plan, parse_methods, run_experiment, run_fig2, run_fig3,
                             run_fig4, run_sweep, write_plot_script)
from src.logging_config import logger
from src.optimizer import build_objective_context, optimize_phases
from src.scenario import (RngStream, ScenarioConfig, build_geometry, compute_path_losses,
                          rng_substream)

GOLDEN_HEADER = Path(__file__).parent / "data" / "csv_header.golden"


@pytest.fixture
def tiny_cfg():
    return ScenarioConfig(M=8, N=16, K=2, mc_trials=50, seed=7)


def _header_line(text: str) -> str:
    return next(line for line in text.splitlines() if not line.startswith("#"))


class TestPlan:

    def test_parse_methods(self):
        assert parse_methods("eq20, mc-zf") == frozenset({Method.EQ20, Method.MC_ZF})
        assert parse_methods(None) is None
        with pytest.raises(ExperimentError, match="valid methods"):
            parse_methods("eq20,bogus")

    def test_measure_without_design_uses_optimized_phases(self):
        pairs, static = evaluation_plan({Method.EQ20})
        assert pairs == [(Method.EQ20, Method.OPTIMIZED_PHASE)] and static == []

    def test_design_without_measure_uses_monte_carlo(self):
        pairs, _ = evaluation_plan({Method.RANDOM_PHASE})
        assert pairs == [(Method.MC_ZF, Method.RANDOM_PHASE)]

    def test_static_only(self):
        pairs, static = evaluation_plan({Method.RIS_FREE, Method.COROLLARY4})
        assert pairs == [] and static == [Method.COROLLARY4, Method.RIS_FREE]


class TestSpecValidation:

    @pytest.mark.parametrize("values, message", [
        ([], "non-empty"),
        ([16, 16], "strictly increasing"),
        ([64, 16], "strictly increasing"),
        ([16, float("nan")], "finite"),
    ])
    def test_bad_sweep_values(self, values, message):
        with pytest.raises(ExperimentError, match=message):
            ExperimentSpec(name=ExperimentName.FIG2, sweep_values=values)

    def test_bad_restarts(self):
        with pytest.raises(ExperimentError, match="restarts"):
            ExperimentSpec(name=ExperimentName.FIG2, sweep_values=[16], restarts=0)

    def test_defaults(self):
        spec = ExperimentSpec(name="fig3-power-scaling", sweep_values=[64, 128])
        assert spec.name is ExperimentName.FIG3 and spec.parameter == "M"
        assert spec.methods == frozenset({Method.EQ20, Method.MC_ZF, Method.OPTIMIZED_PHASE})

    def test_non_square_ris_rejected(self, tiny_cfg):
        spec = ExperimentSpec(name=ExperimentName.FIG2, sweep_values=[16, 50], scenario=tiny_cfg)
        with pytest.raises(ExperimentError, match="perfect squares"):
            run_fig2(spec)

    def test_too_few_antennas_rejected(self, tiny_cfg):
        spec = ExperimentSpec(name=ExperimentName.FIG3, sweep_values=[2, 8], scenario=tiny_cfg)
        with pytest.raises(ExperimentError, match="exceed K"):
            run_fig3(spec)

    def test_negative_rician_factor_rejected(self, tiny_cfg):
        spec = ExperimentSpec(name=ExperimentName.FIG4, sweep_values=[-1.0, 1.0],
                              scenario=tiny_cfg)
        with pytest.raises(ExperimentError, match="Rician"):
            run_fig4(spec)

    def test_unknown_sweep_parameter(self, tiny_cfg):
        spec = ExperimentSpec(name=ExperimentName.CUSTOM, sweep_values=[1, 2],
                              scenario=tiny_cfg, sweep_param="pathloss_exponents")
        with pytest.raises(ExperimentError, match="Cannot sweep"):
            run_sweep(spec)

    def test_invalid_point_wrapped(self, tiny_cfg):
        spec = ExperimentSpec(name=ExperimentName.CUSTOM, sweep_values=[1, 2, 3],
                              scenario=tiny_cfg, sweep_param="M",
                              methods=frozenset({Method.EQ20}))
        with pytest.raises(ExperimentError, match="Invalid sweep point"):
            run_sweep(spec)


class TestRateVsRisSize:

    def test_rows_and_labels(self, tiny_cfg):
        logger.info("Testing rate-vs-N sweep on a tiny scenario")
        spec = ExperimentSpec(name=ExperimentName.FIG2, sweep_values=[4, 16], scenario=tiny_cfg)
        result = run_fig2(spec)
        frame = result.frame
        # 6 phase-dependent labels + 3 static ones, each with K + 1 rows
        assert len(frame) == 2 * 9 * 3
        assert set(frame["method"]) == {
            "eq20:optimized-phase", "mc-zf:optimized-phase", "mc-mrc:optimized-phase",
            "eq20:random-phase", "mc-zf:random-phase", "mc-mrc:random-phase",
            "corollary4", "corollary4-exact", "ris-free",
        }
        assert set(frame["sweep_param"]) == {"N"}
        assert set(frame["seed"]) == {7}
        assert list(result.rates("ris-free").index) == [4, 16]
        assert np.all(result.std_errs("eq20:optimized-phase") == 0.0)
        assert np.all(result.std_errs("mc-zf:random-phase") > 0.0)
        assert "mrc_phases" in result.metadata

    def test_header_matches_golden(self, tiny_cfg):
        spec = ExperimentSpec(name=ExperimentName.FIG2, sweep_values=[16], scenario=tiny_cfg,
                              methods=frozenset({Method.EQ20}))
        text = run_fig2(spec).to_csv_text()
        assert text.startswith("# experiment: fig2-rate-vs-N\n")
        assert _header_line(text) + "\n" == GOLDEN_HEADER.read_text()

    def test_byte_identical_reruns(self, tiny_cfg, tmp_path):
        spec = ExperimentSpec(name=ExperimentName.FIG2, sweep_values=[4, 16], scenario=tiny_cfg,
                              methods=frozenset({Method.EQ20, Method.MC_ZF,
                                                 Method.RANDOM_PHASE}))
        first = run_experiment(spec).write(str(tmp_path / "a.csv"))
        spec.n_jobs = 2
        second = run_experiment(spec).write(str(tmp_path / "b.csv"))
        assert first.read_bytes() == second.read_bytes()

    def test_design_irrelevant_without_los(self, tiny_cfg):
        cfg = tiny_cfg.with_overrides(rician_delta=0.0)
        spec = ExperimentSpec(name=ExperimentName.FIG2, sweep_values=[4, 16], scenario=cfg,
                              methods=frozenset({Method.EQ20, Method.OPTIMIZED_PHASE,
                                                 Method.RANDOM_PHASE}))
        result = run_fig2(spec)
        np.testing.assert_allclose(result.rates("eq20:optimized-phase"),
                                   result.rates("eq20:random-phase"), rtol=1e-12)

    def test_ris_free_constant_across_ris_size(self, tiny_cfg):
        spec = ExperimentSpec(name=ExperimentName.FIG2, sweep_values=[4, 16, 36],
                              scenario=tiny_cfg, methods=frozenset({Method.RIS_FREE}))
        rates = run_fig2(spec).rates("ris-free").to_numpy()
        np.testing.assert_allclose(rates, rates[0], rtol=1e-12)

    def test_trace_files(self, tiny_cfg, tmp_path):
        spec = ExperimentSpec(name=ExperimentName.FIG2, sweep_values=[16], scenario=tiny_cfg,
                              methods=frozenset({Method.EQ20}), trace_dir=str(tmp_path))
        run_fig2(spec)
        traces = list(tmp_path.glob("trace_*.csv"))
        assert len(traces) == 1
        assert traces[0].read_text().startswith("iteration,objective,step,grad_norm")


class TestPowerScaling:

    def test_power_law_points(self, tiny_cfg):
        logger.info("Testing power-scaling sweep")
        spec = ExperimentSpec(name=ExperimentName.FIG3, sweep_values=[8, 16, 32],
                              scenario=tiny_cfg, methods=frozenset({Method.EQ20}))
        result = run_fig3(spec)
        assert list(result.rates("eq20:optimized-phase").index) == [8, 16, 32]
        assert result.metadata["power"].startswith("p = 10/M^1 W")

    def test_fixed_power_grows_with_antennas(self, tiny_cfg):
        spec = ExperimentSpec(name=ExperimentName.FIG3, sweep_values=[8, 16, 32],
                              scenario=tiny_cfg, methods=frozenset({Method.EQ20}),
                              power_constant=1.0, power_exponent=0.0)
        rates = run_fig3(spec).rates("eq20:optimized-phase").to_numpy()
        assert np.all(np.diff(rates) > 0)


class TestRicianSweep:

    def test_labels_per_distance(self, tiny_cfg):
        logger.info("Testing Rician-factor sweep")
        spec = ExperimentSpec(name=ExperimentName.FIG4, sweep_values=[0.0, 1.0],
                              scenario=tiny_cfg, methods=frozenset({Method.EQ20}))
        result = run_fig4(spec)
        assert set(result.frame["method"]) == {"eq20:optimized-phase@d_ib=700",
                                               "eq20:optimized-phase@d_ib=300"}
        assert result.metadata["distances_m"] == "700,300"
        assert len(result.frame) == 2 * 2 * 3

    def test_closer_ris_helps(self, tiny_cfg):
        spec = ExperimentSpec(name=ExperimentName.FIG4, sweep_values=[1.0], scenario=tiny_cfg,
                              methods=frozenset({Method.EQ20}))
        result = run_fig4(spec)
        near = result.rates("eq20:optimized-phase@d_ib=300").iloc[0]
        far = result.rates("eq20:optimized-phase@d_ib=700").iloc[0]
        assert near > far

    def test_no_los_ignores_phase_initialization(self, tiny_cfg):
        cfg = tiny_cfg.with_overrides(rician_delta=0.0)
        losses = compute_path_losses(build_geometry(cfg), cfg)
        csi = build_statistical_csi(cfg, losses, rng_substream(cfg.seed, RngStream.ANGLES))
        ctx = build_objective_context(csi, cfg.p_watts, cfg.noise_watts, cfg.M, cfg.K)
        sums = []
        for seed in range(5):
            phases = optimize_phases(ctx, seed).final_phases
            sums.append(rate_bound_eq20(csi, phases, cfg.p_watts, cfg.noise_watts,
                                        cfg.M, cfg.K).sum_rate)
        np.testing.assert_allclose(sums, sums[0], rtol=1e-12)


class TestCustomSweep:

    def test_power_sweep_monotone(self, tiny_cfg):
        spec = ExperimentSpec(name=ExperimentName.CUSTOM, sweep_values=[0, 10, 20],
                              scenario=tiny_cfg, sweep_param="p_dbm",
                              methods=frozenset({Method.EQ20, Method.RIS_FREE}))
        result = run_sweep(spec)
        assert set(result.frame["sweep_param"]) == {"p_dbm"}
        assert np.all(np.diff(result.rates("eq20:optimized-phase").to_numpy()) > 0)
        assert np.all(np.diff(result.rates("ris-free").to_numpy()) > 0)

    def test_integer_parameter(self, tiny_cfg):
        spec = ExperimentSpec(name=ExperimentName.CUSTOM, sweep_values=[8, 12.5],
                              scenario=tiny_cfg, sweep_param="M")
        with pytest.raises(ExperimentError, match="integers"):
            run_sweep(spec)


class TestPlotScript:

    def test_script_references_csv(self, tmp_path):
        csv_path = str(tmp_path / "fig2.csv")
        script = write_plot_script(csv_path, str(tmp_path / "plots" / "fig2.py"))
        text = script.read_text()
        assert repr(csv_path) in text
        assert str(tmp_path / "fig2.png") in text
        compile(text, str(script), "exec")


@pytest.mark.slow
class TestAcceptance:

    def test_rate_grows_with_ris_size(self):
        logger.info("Testing rate-vs-N acceptance at the default scenario")
        spec = ExperimentSpec(name=ExperimentName.FIG2, sweep_values=[16, 64, 256],
                              methods=frozenset({Method.EQ20}))
        rates = run_fig2(spec).rates("eq20:optimized-phase").to_numpy()
        assert np.all(np.diff(rates) > 0)

    def test_power_scaling_plateau(self):
        spec = ExperimentSpec(name=ExperimentName.FIG3, sweep_values=[256, 512, 1024],
                              methods=frozenset({Method.EQ20}))
        rates = run_fig3(spec).rates("eq20:optimized-phase").to_numpy()
        assert abs(rates[2] - rates[1]) / rates[1] < 0.02

    def test_rician_crossover(self):
        logger.info("Testing Rician-factor crossover at 700 m and 300 m")
        spec = ExperimentSpec(name=ExperimentName.FIG4, sweep_values=[0.1, 10.0],
                              scenario=ScenarioConfig(mc_trials=2000),
                              methods=frozenset({Method.MC_ZF, Method.OPTIMIZED_PHASE}))
        result = run_fig4(spec)
        far = "mc-zf:optimized-phase@d_ib=700"
        near = "mc-zf:optimized-phase@d_ib=300"
        for label, sign in [(far, -1.0), (near, 1.0)]:
            rates = result.rates(label).to_numpy()
            errs = result.std_errs(label).to_numpy()
            gap = sign * (rates[1] - rates[0])
            assert gap > 3.0 * np.hypot(errs[0], errs[1])
