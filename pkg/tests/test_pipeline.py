import numpy as np
import pytest

from yosida_fde import pipeline
from yosida_fde.config import parse_config
from yosida_fde.errors import ConfigError, StructuralError
from yosida_fde.grid import DelayGeometry, HistorySegment, TimeGrid, Trajectory


def test_check_rng_is_per_name_and_reproducible():
    a = pipeline.check_rng(3, "inequalities").random(4)
    np.testing.assert_array_equal(a, pipeline.check_rng(3, "inequalities").random(4))
    assert not np.allclose(a, pipeline.check_rng(3, "integral").random(4))
    assert not np.allclose(a, pipeline.check_rng(4, "inequalities").random(4))


def test_linear_oracle_scenario(scenarios):
    cfg, res = scenarios.run("linear_oracle")
    assert res.converged and res.message == "converged"
    assert res.oracle_error <= 5e-3
    rates = pipeline.summarize_rates(res.report)
    assert rates["outer_iterations"] >= 1
    assert rates["cross_lambda_final"] is not None


def test_run_checks_all_pass(scenarios):
    cfg, res = scenarios.run("linear_oracle")
    reps = pipeline.run_checks(cfg, res.trajectory)
    assert set(reps) == set(cfg.verify["checks"])
    assert all(r.passed for r in reps.values())


def test_run_checks_rejects_unknown_and_mismatch(scenarios):
    cfg, res = scenarios.run("linear_oracle")
    with pytest.raises(ConfigError):
        pipeline.run_checks(cfg, res.trajectory, ["nonsense"])
    geom = DelayGeometry.finite(0.5)
    grid = TimeGrid.for_geometry(geom, 1.0, 0.01)
    other = Trajectory.constant_extension(grid, HistorySegment.constant(geom, [1.0]))
    with pytest.raises(StructuralError):
        pipeline.run_checks(cfg, other)


def test_oracle_for_rejects_unsupported_history(scenarios):
    raw = dict(scenarios.config("linear_oracle").raw)
    raw["history"] = {"shape": "sinusoid", "amplitude": 1.0, "frequency": 1.0}
    cfg = parse_config(raw)
    with pytest.raises(ConfigError):
        pipeline.oracle_for(cfg)


def test_run_asymptotics_decay_and_periodic(scenarios):
    cfg, res = scenarios.run("halfline_decay")
    out, split = pipeline.run_asymptotics(cfg, res.trajectory)
    assert split is None and out["decay"]["verdict"] == "decaying"
    cfg, res = scenarios.run("halfline_periodic")
    out, split = pipeline.run_asymptotics(cfg, res.trajectory)
    assert out["passed"]
    assert out["almost_periodicity_defect"] <= 1e-3
    assert split.defect <= 1e-3 and split.stable
