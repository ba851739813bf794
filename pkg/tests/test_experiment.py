import math
from dataclasses import replace

import numpy as np
import pytest

from ovals.evolve import rescale_profile
from ovals.experiment import (REPORT_FIELDS, ConfigError, ExperimentConfig, analyse_run, branch_of, c2_fit,
                              difference_norms, intermediate_error, nearest_snapshot, parse_initial, run_experiment,
                              save_run, simulate, verify_uniqueness_probe)
from ovals.io import file_sha256
from ovals.match import GaugeParams, RescaledRun, zero_projections

from conftest import spheroid_config


# -- configuration ----------------------------------------------------------------

def test_default_config_is_valid():
    assert ExperimentConfig().validate().initial == {"kind": "spheroid", "a": 4.0, "b": 1.0}


@pytest.mark.parametrize("bad", [
    {"n": 1},
    {"N": 32},
    {"theta": 0.0},
    {"dt_cfl": -0.1},
    {"tau_targets": [-12.0, -0.5]},
    {"initial": {"kind": "sphere", "r": 0.0}},
    {"initial": {"kind": "spheroid", "a": 1.0}},
    {"initial": {"kind": "torus"}},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="frobnicate"):
        ExperimentConfig.from_dict({"frobnicate": 1})


def test_config_dict_round_trip():
    cfg = ExperimentConfig(n=3, N=128, tau_targets=[-5.0])
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("text, expected", [
    ("spheroid:4,1", {"kind": "spheroid", "a": 4.0, "b": 1.0}),
    ("sphere:2.5", {"kind": "sphere", "r": 2.5}),
])
def test_parse_initial(text, expected):
    assert parse_initial(text) == expected


@pytest.mark.parametrize("text", ["spheroid:4", "sphere:1,2", "cube:1", "sphere:x", ""])
def test_parse_initial_rejects(text):
    with pytest.raises(ConfigError):
        parse_initial(text)


# -- diagnostics on closed forms --------------------------------------------------

def test_c2_fit_recovers_parabolic_correction():
    y = np.linspace(-2, 2, 401)
    tau = -20.0
    u = math.sqrt(2) * (1 - (y * y - 2) / (4 * abs(tau)))
    assert c2_fit(y, u, 2) == pytest.approx(-math.sqrt(2) / (4 * abs(tau)), rel=1e-10)


def test_c2_fit_of_cylinder_is_zero():
    y = np.linspace(-3, 3, 301)
    assert c2_fit(y, np.full_like(y, math.sqrt(4)), 3) == pytest.approx(0.0, abs=1e-14)


def test_intermediate_error_of_exact_law_is_zero():
    tau = -16.0
    y = np.linspace(-4.8, 4.8, 97)
    u = np.sqrt(2.0 - (y / 4.0) ** 2)
    assert intermediate_error(y, u, 2, tau) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("u0, n, branch", [(math.sqrt(2), 2, "cylinder"), (2.0, 2, "sphere"),
                                           (1.5, 2, "cylinder"), (1.9, 2, "sphere")])
def test_branch_of(u0, n, branch):
    assert branch_of(u0, n) == branch


def test_nearest_snapshot_needs_extinction_time(run_4to1_coarse):
    with pytest.raises(ConfigError):
        nearest_snapshot(replace(run_4to1_coarse, T=None), -12.0, 0.1)


# -- reports ----------------------------------------------------------------------

def test_every_target_recorded_or_skipped(run_4to1_coarse):
    targets = [-12.0, -13.0, -14.0, -15.0, -30.0, -2.0]
    rep = analyse_run(run_4to1_coarse, spheroid_config(4.0, N=256, tau_targets=targets))
    seen = sorted([r["target"] for r in rep.records] + [s["tau"] for s in rep.skipped])
    assert seen == sorted(targets)
    assert {s["tau"] for s in rep.skipped} == {-30.0, -2.0}
    for r in rep.records:
        assert all(math.isfinite(r[f]) for f in REPORT_FIELDS)
        assert r["branch"] == "cylinder"
    assert set(rep.trends) == set(REPORT_FIELDS)


def test_doubling_resolution_changes_less_than_half_the_deviation(run_4to1_coarse, run_4to1):
    targets = [-12.0, -13.0, -14.0, -15.0]
    coarse = analyse_run(run_4to1_coarse, spheroid_config(4.0, N=256, tau_targets=targets))
    fine = analyse_run(run_4to1, spheroid_config(4.0, tau_targets=targets))
    targets_of = {"c2_ratio": 1.0, "inter_err": 0.0, "tip_err": 0.0, "hmax_law": 1.0}
    for a, b in zip(coarse.records, fine.records):
        for f, target in targets_of.items():
            assert abs(a[f] - b[f]) < 0.5 * abs(b[f] - target)


def test_sphere_report_flags_sphere_branch():
    cfg = ExperimentConfig(initial={"kind": "sphere", "r": 1.0}, N=256, tau_targets=[-9.0, -8.0, -7.5])
    run, rep = run_experiment(cfg)
    assert len(rep.records) == 3
    assert all(r["branch"] == "sphere" for r in rep.records)
    # the shrinking sphere is stationary after rescaling, so its fitted coefficient does not move with tau
    c2 = [r["c2_fit"] for r in rep.records]
    assert max(c2) - min(c2) < 1e-3
    # the same weighted fit of the exact shrinker on the run's own nodes
    i, _ = nearest_snapshot(run, -9.0, 0.1)
    p = rescale_profile(run.curve(i), run.T, run.scale)
    assert c2[0] == pytest.approx(c2_fit(p.y, np.sqrt(np.clip(4 - p.y**2, 0, None)), 2), abs=1e-2)


# -- determinism and the uniqueness probe -------------------------------------------

def test_identical_configs_give_identical_archives(tmp_path):
    cfg = spheroid_config(2.0, N=128, snapshot_cadence=0.05)
    hashes = []
    for k in range(2):
        d = save_run(simulate(cfg), tmp_path / str(k))
        hashes.append((file_sha256(d / "run.csv"), file_sha256(d / "run.json")))
    assert hashes[0] == hashes[1]


def test_probe_on_identical_runs_is_zero(run_4to1_coarse):
    cfg = spheroid_config(4.0, N=256)
    rep = verify_uniqueness_probe(cfg, cfg, -13.0, window=0.5, step=0.25, runs=(run_4to1_coarse, run_4to1_coarse))
    assert rep["residual"] == 0.0
    assert rep["gauge"]["bGA"] == [0.0, 0.0, 0.0]
    for row in rep["series"]:
        assert row["a"] == 0.0 and row["w_C"] == 0.0 and row["ratio"] == 0.0


def test_time_shift_gauge_beats_naive_alignment(run_4to1_coarse):
    # a clock error in T is a pure time translation; fixing the gauge must remove its neutral component
    base = RescaledRun(run_4to1_coarse)
    delta = 2e-5
    shifted = RescaledRun(run_4to1_coarse, T=run_4to1_coarse.T + delta, center=base.center)
    res = zero_projections(base, shifted, -13.0, 0.4)
    assert res.gauge.beta == pytest.approx(run_4to1_coarse.scale**2 * delta, rel=1e-3)
    taus = np.arange(-13.5, -12.99, 0.1)
    post = max(abs(difference_norms(base, shifted, res.gauge, 0.4, t)["a"]) for t in taus)
    pre = min(max(abs(difference_norms(base, shifted, GaugeParams(gamma=gm, tau0=-13.0), 0.4, t)["a"])
                  for t in taus) for gm in (0.0, 0.01, -0.01))
    assert post < 10 * pre
    assert post < 0.1 * max(abs(difference_norms(base, shifted, GaugeParams(tau0=-13.0), 0.4, t)["a"])
                            for t in taus)
