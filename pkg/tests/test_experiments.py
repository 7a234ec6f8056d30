"""Sweep harness, artifact emission, and the command line front end.

Everything here runs tiny configurations (N <= 8, a handful of trials) so the
whole file stays in the unit-test budget; the desk-scale reproductions live in
test_acceptance.py.
"""

import numpy as np
import pytest

from csdesign import (
    CANNED_FIGURES,
    ExperimentConfig,
    ParameterError,
    SensingMatrix,
    SupportEnsemble,
    SystemModel,
    design_tight_frame,
    emit_results,
    exponential_correlation,
    fig2_config,
    fig3_config,
    fig4_config,
    fig5_config,
    run_sweep,
)
from csdesign.cli import load_config, main


def tiny_config(**kw):
    kw.setdefault("n", 8)
    kw.setdefault("k", 2)
    kw.setdefault("rho", 0.25)
    kw.setdefault("m", 4)
    kw.setdefault("trials", 4)
    kw.setdefault("designs", ("gaussian", "tight_frame"))
    kw.setdefault("estimator", "omp")
    return ExperimentConfig(**kw)


# -----------------------------------------------------------------------------
# configuration
# -----------------------------------------------------------------------------

def test_config_validation_battery():
    bad = [
        dict(n=4, k=5, rho=0.2, m=2),                      # k > n
        dict(n=8, k=2, rho=1.0, m=4),                      # rho out of range
        dict(n=8, k=2, rho=-0.1, m=4),                     # rho negative
        dict(n=8, k=2, rho=0.2, m=4, trials=0),
        dict(n=8, k=2, rho=0.2, m=4, g=0.0),
        dict(n=8, k=2, rho=0.2, m=4, sigma_w=-1.0),
        dict(n=8, k=2, rho=0.2),                           # no m, no sweep list
        dict(n=8, k=2, rho=0.2, m_list=(2, 4), p_db_list=(0.0, 5.0)),
        dict(n=8, k=2, rho=0.2, m_list=(4, 2)),            # not ascending
        dict(n=8, k=2, rho=0.2, m_list=(2, 9)),            # m > n
        dict(n=8, k=2, rho=0.2, m_list=(2.5,)),            # fractional m
        dict(n=8, k=2, rho=0.2, p_db_list=(0.0, 5.0)),     # sweep without m
        dict(n=8, k=2, rho=0.2, m=4, designs=("nope",)),
        dict(n=8, k=2, rho=0.2, m=4, designs=("gaussian", "gaussian")),
        dict(n=8, k=2, rho=0.2, m=4, designs=()),
        dict(n=8, k=2, rho=0.2, m=4, estimator="cosamp"),
        dict(n=60, k=6, rho=0.2, m=10, estimator="mmse"),  # C(60,6) too large
        dict(n=8, k=2, rho=0.2, m=4, ensemble="sampled:0"),
        dict(n=8, k=2, rho=0.2, m=4, ensemble="sampled:x"),
        dict(n=8, k=2, rho=0.2, m=4, ensemble="most"),
        dict(n=8, k=2, rho=0.2, m=4, label="no spaces"),
        dict(n=8, k=2, rho=0.2, m=4, sigma_w=0.0, csnr_db_list=(0.0, 5.0)),
        dict(n=8.5, k=2, rho=0.2, m=4),                    # non-integer n
    ]
    for kwargs in bad:
        with pytest.raises(ParameterError):
            ExperimentConfig(**kwargs)


def test_config_single_m_becomes_one_point_sweep():
    config = tiny_config()
    assert config.sweep_var == "m"
    assert config.sweep_values == (4,)


def test_config_designs_accept_comma_string():
    config = tiny_config(designs="gaussian,tight_frame")
    assert config.designs == ("gaussian", "tight_frame")


def test_model_at_power_sweep_maps_db_to_linear():
    config = tiny_config(m=4, p_db_list=(0.0, 13.0), m_list=None)
    model = config.model_at(13.0)
    np.testing.assert_allclose(model.p, 10.0 ** 1.3)
    assert model.m == 4
    # off-sweep parameters come from the scalar fields
    np.testing.assert_allclose(config.model_at(0.0).p, 1.0)


def test_model_at_csnr_sweep_sets_gain():
    config = tiny_config(m=4, csnr_db_list=(0.0, 20.0), m_list=None, sigma_w=0.3)
    np.testing.assert_allclose(config.model_at(20.0).g, 0.3 * 10.0)
    np.testing.assert_allclose(config.model_at(0.0).g, 0.3)
    # and the m sweep maps its value onto m with defaults elsewhere
    config_m = tiny_config(m_list=(2, 6), m=None)
    model = config_m.model_at(6)
    assert model.m == 6
    np.testing.assert_allclose(model.p, 10.0)


def test_ensemble_at_full_and_sampled():
    config = tiny_config(ensemble="full")
    ens = config.ensemble_at(0)
    assert ens.kind == "full"
    assert ens.count == 28
    sampled = tiny_config(ensemble="sampled:9")
    e0a, e0b = sampled.ensemble_at(0), sampled.ensemble_at(0)
    np.testing.assert_array_equal(e0a.supports, e0b.supports)
    assert e0a.count == 9
    e1 = sampled.ensemble_at(1)
    assert not np.array_equal(e0a.supports, e1.supports)


def test_snapshot_roundtrips_through_config_parser(tmp_path):
    config = ExperimentConfig(
        n=8, k=2, rho=0.25, m=4, g=0.5, sigma_v=0.2, sigma_w=0.1, trials=7,
        seed=11, designs=("gaussian", "tight_frame"), estimator="omp",
        ensemble="sampled:12", randomized_draws=17, romp_passes=9,
        label="roundtrip",
    )
    path = tmp_path / "snap.cfg"
    path.write_text("\n".join(config.snapshot_lines()) + "\n")
    assert load_config(path) == config


def test_snapshot_roundtrip_with_sweep_list(tmp_path):
    config = ExperimentConfig(
        n=8, k=2, rho=0.5, m=4, p_db_list=(-5.0, 0.0, 2.5), estimator="lmmse",
    )
    path = tmp_path / "snap.cfg"
    path.write_text("\n".join(config.snapshot_lines()) + "\n")
    assert load_config(path) == config


# -----------------------------------------------------------------------------
# sweep driver
# -----------------------------------------------------------------------------

def test_noiseless_square_system_reaches_zero_nmse():
    config = ExperimentConfig(
        n=6, k=2, rho=0.3, m=6, sigma_v=0.0, sigma_w=0.0, trials=2,
        designs=("tight_frame",), estimator="oracle", seed=5,
    )
    run = run_sweep(config)
    outcome = run.points[0].designs["tight_frame"]
    # exact recovery up to least-squares round-off
    assert outcome.nmse <= 1e-25
    assert outcome.nmse_db < -200.0
    assert outcome.error is None


def test_run_sweep_deterministic_and_emission_byte_identical(tmp_path):
    config = tiny_config(m_list=(3, 5), m=None, trials=5, seed=9)
    run_a = run_sweep(config)
    run_b = run_sweep(config)
    for pa, pb in zip(run_a.points, run_b.points):
        for name in config.designs:
            assert pa.designs[name].nmse == pb.designs[name].nmse
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    paths_a = emit_results(run_a, dir_a)
    paths_b = emit_results(run_b, dir_b)
    for fa, fb in zip(paths_a, paths_b):
        assert fa.read_bytes() == fb.read_bytes()


def test_run_sweep_marks_failed_design_and_continues():
    # the linear-estimator design needs channel noise; with sigma_w = 0 it
    # must fail in place while the other designs still produce numbers
    config = ExperimentConfig(
        n=6, k=2, rho=0.3, m=6, sigma_v=0.0, sigma_w=0.0, trials=2,
        designs=("upper_bound", "tight_frame"), estimator="oracle",
    )
    run = run_sweep(config)
    failed = run.points[0].designs["upper_bound"]
    assert failed.error is not None
    assert np.isnan(failed.nmse_db)
    assert run.points[0].designs["tight_frame"].error is None


def test_lmmse_estimator_path_runs():
    config = tiny_config(estimator="lmmse", trials=3, sigma_w=0.2)
    run = run_sweep(config)
    for name in config.designs:
        assert np.isfinite(run.points[0].designs[name].nmse_db)


def test_romp_and_mmse_estimator_paths_run():
    config = tiny_config(estimator="romp", trials=2, romp_passes=3)
    run = run_sweep(config)
    assert np.isfinite(run.points[0].designs["gaussian"].nmse_db)
    config = tiny_config(estimator="mmse", trials=2)
    run = run_sweep(config)
    assert np.isfinite(run.points[0].designs["gaussian"].nmse_db)


def test_bound_curve_reported_with_lower_bound_design():
    config = tiny_config(designs=("lower_bound",), trials=2, estimator="oracle")
    run = run_sweep(config)
    point = run.points[0]
    assert np.isfinite(point.bound_nmse_db)
    # the bound is a lower bound on the oracle decoder's NMSE up to MC noise;
    # with so few trials just check both numbers exist and the bound is lower
    assert point.bound_nmse_db <= point.designs["lower_bound"].nmse_db + 3.0


def test_emit_results_structure(tmp_path):
    config = tiny_config(m_list=(3, 5), m=None, trials=2, label="shape")
    run = run_sweep(config)
    csv_path, snap_path, dat_path = emit_results(run, tmp_path)
    assert dat_path.name == "shape.dat"

    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "design,sweep_var,value,nmse_db,stderr"
    # per point: one row per design plus the bound curve
    assert len(lines) == 1 + 2 * (len(config.designs) + 1)
    assert any(row.startswith("lower_bound_curve,m,") for row in lines[1:])

    snap = load_config(snap_path)
    assert snap == config

    dat = dat_path.read_text().strip().splitlines()
    assert dat[0] == "# m gaussian tight_frame lower_bound_curve"
    assert len(dat) == 3
    assert len(dat[1].split()) == 4


# -----------------------------------------------------------------------------
# canned figures
# -----------------------------------------------------------------------------

def test_canned_figure_configs_construct():
    assert set(CANNED_FIGURES) == {"fig2", "fig3", "fig4", "fig5"}
    fig2 = fig2_config()
    assert fig2.sweep_var == "m" and fig2.label == "fig2"
    fig3 = fig3_config()
    assert fig3.sweep_var == "p_db" and fig3.m == 18
    fig4 = fig4_config()
    assert fig4.sweep_var == "csnr_db" and fig4.estimator == "omp"
    fig5 = fig5_config()
    assert fig5.ensemble == "sampled:2500"
    assert "randomized" in fig5.designs
    for factory in CANNED_FIGURES.values():
        config = factory(trials=10, seed=2)
        assert config.trials == 10 and config.seed == 2


# -----------------------------------------------------------------------------
# command line
# -----------------------------------------------------------------------------

SINGLE_POINT_CFG = """\
# one-point configuration for the CLI tests
n = 7
k = 2
rho = 0.3
m = 4
trials = 3
designs = gaussian,tight_frame
estimator = omp
seed = 4
"""


def write_cfg(tmp_path, text=SINGLE_POINT_CFG, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_cli_design_then_evaluate_roundtrip(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "out"
    assert main(["design", "--config", str(cfg), "--designer", "tight_frame",
                 "--out", str(out)]) == 0
    matrix_path = out / "tight_frame_a.txt"
    assert matrix_path.exists()
    design_text = capsys.readouterr().out
    assert "mse_lower_bound" in design_text and "transmit_power" in design_text

    assert main(["evaluate", "--config", str(cfg), "--matrix", str(matrix_path)]) == 0
    eval_text = capsys.readouterr().out
    assert "mutual_coherence" in eval_text
    # the two subcommands report the same bound for the same matrix
    line = [l for l in design_text.splitlines() if l.startswith("mse_lower_bound")][0]
    assert line in eval_text


def test_cli_sweep_writes_artifacts(tmp_path, capsys):
    text = SINGLE_POINT_CFG.replace("m = 4", "m_list = 3,5")
    cfg = write_cfg(tmp_path, text)
    out = tmp_path / "results"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "results.csv").exists()
    assert (out / "config.snapshot").exists()
    assert (out / "sweep.dat").exists()
    assert "wrote" in capsys.readouterr().out


def test_cli_trials_and_seed_overrides(tmp_path):
    text = SINGLE_POINT_CFG.replace("m = 4", "m_list = 3,5")
    cfg = write_cfg(tmp_path, text)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["sweep", "--config", str(cfg), "--out", str(out_a),
                 "--trials", "2", "--seed", "8"]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(out_b),
                 "--trials", "2", "--seed", "8"]) == 0
    assert (out_a / "results.csv").read_bytes() == (out_b / "results.csv").read_bytes()
    snap = load_config(out_a / "config.snapshot")
    assert snap.trials == 2 and snap.seed == 8


def test_cli_rejects_bad_config_with_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "n = 7\nk = 2\n", name="missing.cfg")  # no rho
    assert main(["sweep", "--config", str(cfg)]) == 2
    assert "error:" in capsys.readouterr().err
    cfg2 = write_cfg(tmp_path, "n = 7\nk = 2\nrho = 0.3\nm = 4\nwhat = 1\n",
                     name="unknown.cfg")
    assert main(["design", "--config", str(cfg2)]) == 2


def test_cli_design_needs_single_point_config(tmp_path):
    text = SINGLE_POINT_CFG.replace("m = 4", "m_list = 3,5")
    cfg = write_cfg(tmp_path, text)
    assert main(["design", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_cli_numerical_failure_exits_3(tmp_path):
    # a noiseless config makes the bound singular: evaluate reports exit 3
    text = SINGLE_POINT_CFG + "sigma_w = 0\n"
    cfg = write_cfg(tmp_path, text, name="noiseless.cfg")
    model = SystemModel(n=7, k=2, m=4, r=exponential_correlation(2, 0.3),
                        sigma_v=0.0, sigma_w=0.0, p=10.0)
    sm = design_tight_frame(model, np.random.default_rng(0))
    matrix_path = tmp_path / "a.txt"
    sm.save(matrix_path)
    assert main(["evaluate", "--config", str(cfg), "--matrix", str(matrix_path)]) == 3


def test_cli_argparse_rejects_unknown_command():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
    with pytest.raises(SystemExit):
        main([])


def test_cli_config_parse_errors(tmp_path):
    bad_line = write_cfg(tmp_path, "n 7\n", name="noequals.cfg")
    with pytest.raises(ParameterError):
        load_config(bad_line)
    dupe = write_cfg(tmp_path, "n = 7\nn = 8\n", name="dupe.cfg")
    with pytest.raises(ParameterError):
        load_config(dupe)
    with pytest.raises(ParameterError):
        load_config(tmp_path / "absent.cfg")
    bad_value = write_cfg(tmp_path, "n = x\nk = 2\nrho = 0.3\nm = 2\n", name="badval.cfg")
    with pytest.raises(ParameterError):
        load_config(bad_value)
