import math

import numpy as np
import pytest

from synchro import (
    ContractError, LoadDemand, LoadEvent, ParameterError, Scenario, Trajectory, case1_scenario, case2_scenario,
    export_csv, load_scenario, read_csv, simulate,
)
from synchro.harness import compare, expected_rows, parse_scenario, prepare, rmse, window_rmse


def _traj(t, omega, model="m"):
    t = np.asarray(t, dtype=float)
    omega = np.asarray(omega, dtype=float)
    return Trajectory(model, t, np.zeros_like(t), omega, np.ones_like(t), np.ones_like(t), np.zeros_like(t))


def test_case1_definition():
    sc = case1_scenario()
    assert sc.duration == 90.0
    assert sc.initial_load == LoadDemand(0.05)
    assert sc.events == (LoadEvent(30.0, 0.25),)


def test_case2_definitions():
    full, short = case2_scenario(), case2_scenario(compressed=True)
    assert [e.P_L for e in full.events] == [e.P_L for e in short.events] == [0.25, 0.35, 0.3, 0.15]
    assert [e.t for e in full.events] == [30.0, 1530.0, 3030.0, 4530.0]
    assert full.duration == 6000.0 and short.duration == 270.0
    assert load_scenario("case2-compressed") == short


def test_parse_scenario():
    sc = parse_scenario(
        "name = probe\nduration = 5\nP_L = 0.1\nevent = 1, 0.2\nevent = 3, 0.15, 0.01, none\n"
        "models = elemental, damped\ndt = 0.002\n"
    )
    assert sc.name == "probe"
    assert sc.initial_load == LoadDemand(0.1)
    assert sc.events == (LoadEvent(1.0, 0.2), LoadEvent(3.0, 0.15, 0.01, None))
    assert sc.models == ("elemental", "damped")
    assert sc.config("damped").dt == 0.002
    assert sc.config("high-order").dt == 0.002


@pytest.mark.parametrize("text, match", [
    ("P_L = 0.1\n", "duration"),
    ("duration = 5\nspeed = 3\n", "unknown"),
    ("duration = 5\nduration = 6\n", "duplicate"),
    ("duration = five\n", "not a number"),
    ("duration = 5\nevent = 1\n", "event"),
    ("duration = 5\nevent = 6, 0.2\n", "inside"),
    ("duration = 5\nevent = 2, 0.2\nevent = 1, 0.3\n", "increasing"),
    ("duration = 5\nmodels = elemental, ninth\n", "unknown model"),
])
def test_parse_scenario_errors(text, match):
    with pytest.raises(ParameterError, match=match):
        parse_scenario(text)


def test_missing_scenario_file(tmp_path):
    with pytest.raises(ParameterError):
        load_scenario(tmp_path / "nope.txt")


def test_scenario_validation():
    with pytest.raises(ContractError):
        Scenario("x", -1.0, LoadDemand(0.1))
    with pytest.raises(ContractError):
        Scenario("x", 10.0, LoadDemand(0.1), (LoadEvent(0.0, 0.2),))


def test_rmse_identity_and_offset():
    a = np.linspace(0, 1, 11)
    assert rmse(a, a) == 0.0
    assert rmse(a + 0.3, a) == pytest.approx(0.3, rel=1e-14)
    assert math.isnan(rmse([], []))


def test_window_rmse_picks_its_window():
    t = np.linspace(0.0, 10.0, 101)
    ref = _traj(t, np.zeros_like(t))
    traj = _traj(t, np.where(t < 5.0, 1.0, 3.0))
    assert window_rmse(traj, ref, "omega", 0.0, 4.9) == pytest.approx(1.0)
    assert window_rmse(traj, ref, "omega", 5.0, 10.0) == pytest.approx(3.0)


def test_compare_is_decimation_invariant():
    # a linear signal interpolates exactly from a coarser grid
    fine = np.linspace(0.0, 2.0, 201)
    ref = _traj(fine, np.zeros_like(fine), "ref")
    a = _traj(fine, 0.5 * fine)
    b = _traj(fine[::4], 0.5 * fine[::4])
    ra = compare({"a": a}, ref)["a"]["omega_rpm"]
    rb = compare({"b": b}, ref)["b"]["omega_rpm"]
    assert ra == pytest.approx(rb, rel=1e-12)


def test_compare_covers_partial_runs():
    t = np.linspace(0.0, 1.0, 11)
    ref = _traj(t, np.zeros_like(t), "ref")
    part = _traj(t[:6], np.ones(6))
    part.complete = False
    report = compare({"p": part}, ref)
    assert report["p"]["omega_rpm"] == pytest.approx(60.0 / (2 * math.pi))
    assert report.spans["p"] == pytest.approx(0.5)
    assert "up to t = 0.5 s" in report.to_text()


def test_csv_round_trip(tmp_path):
    t = np.linspace(0.0, 1.0, 7)
    tr = Trajectory("x", t, np.sin(t) * 57.0, 376.99 + t / 3, 1 + t / 7, 1 - t / 11, -t)
    back = read_csv(export_csv(tr, tmp_path / "x.csv"))
    for got, want in zip(back.columns(), tr.columns()):
        np.testing.assert_array_equal(got, want)
    header = (tmp_path / "x.csv").read_text().splitlines()[0]
    assert header.startswith("t [s],delta_s [deg],omega_s [rad/s],omega_s [rpm]")


def test_empty_trajectory_writes_header_only(tmp_path):
    e = np.zeros(0)
    path = export_csv(Trajectory("e", e, e, e, e, e, e), tmp_path / "e.csv")
    assert len(path.read_text().splitlines()) == 1
    assert len(read_csv(path)) == 0


@pytest.fixture(scope="module")
def short_run():
    sc = Scenario("short", 2.0, LoadDemand(0.05), (LoadEvent(1.0, 0.15),), models=("elemental",))
    plan = prepare(sc)
    return sc, plan


@pytest.mark.parametrize("kind", ["elemental", "classical", "high-order"])
def test_short_run_row_count(short_run, kind):
    sc, plan = short_run
    traj = simulate(kind, sc, plan)
    assert traj.complete
    assert len(traj) == expected_rows(sc.duration, sc.config(kind))
    assert np.all(np.diff(traj.t) > 0)


def test_short_run_starts_at_rest(short_run):
    sc, plan = short_run
    traj = simulate("elemental", sc, plan)
    before = traj.t < 1.0
    # the shared initial point is close to the elemental equilibrium
    assert np.ptp(traj.omega[before]) < 0.05
    assert traj.omega[-1] < traj.omega[0]


def test_simulation_is_deterministic(short_run):
    sc, plan = short_run
    a, b = simulate("damped", sc, plan), simulate("damped", sc, plan)
    for x, y in zip(a.columns(), b.columns()):
        np.testing.assert_array_equal(x, y)


def test_unknown_model_rejected(short_run):
    sc, plan = short_run
    with pytest.raises(ContractError):
        simulate("tenth-order", sc, plan)
