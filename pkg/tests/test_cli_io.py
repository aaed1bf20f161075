import os

import numpy as np
import pytest
import yaml
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from docking_ocp import DockingOptimizer
from docking_ocp.cli import main
from docking_ocp.errors import ConfigError, DomainError
from docking_ocp.pipeline import RunOptions, run_propagate, run_solve
from docking_ocp.results import (COLUMNS, read_trajectory_csv, report_text, trajectory_csv,
                                 trajectory_from_columns)
from docking_ocp.scenario import flyaround_path, load_scenario, scenario_from_dict


@pytest.fixture(scope="module")
def small_run(scenario, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    traj = run_solve(scenario, RunOptions(steps=24), out=out)
    return traj, out


def write_scenario(tmp_path, edit):
    doc = yaml.safe_load(flyaround_path().read_text())
    edit(doc)
    path = tmp_path / "edited.scenario"
    path.write_text(yaml.safe_dump(doc))
    return path


def test_shipped_scenario_values(scenario):
    assert scenario.bounds.u_max == 0.15 and scenario.bounds.m_max == 1.0
    assert tuple(scenario.inertia_t.as_array()) == (1000, 2000, 1000)
    assert tuple(scenario.inertia_s.as_array()) == (2000, 5000, 2000)
    assert scenario.geometry.d_t == (0, -1, 0) and scenario.geometry.d_s == (0, 1, 0)
    assert scenario.geometry.r_s == scenario.geometry.r_t == 1.0
    assert scenario.mass == 200 and scenario.orbit_radius == 7071000 and scenario.gm == 398e12
    assert scenario.q_t0 == (0, 0, 0, 1) and scenario.q_s0 == (0, 0, 1, 0)
    assert scenario.w_t0 == pytest.approx((0, 0.052359, 0), abs=1e-15)
    assert scenario.r0 == (0, 3, 0) and scenario.steps == 370


def test_small_spheres_valid(tmp_path):
    def edit(d):
        d["servicer"]["safety_radius_m"] = 0.5
        d["target"]["safety_radius_m"] = 0.5
    assert load_scenario(write_scenario(tmp_path, edit)).geometry.r_s == 0.5


def test_overlapping_docking_points_rejected(tmp_path):
    def edit(d):
        d["servicer"]["docking_point_m"] = [0, 0, 0]
        d["target"]["docking_point_m"] = [0, 0, 0]
    with pytest.raises(ConfigError, match="docking distance"):
        load_scenario(write_scenario(tmp_path, edit))


def test_diagnostics_name_field_and_line(tmp_path):
    path = tmp_path / "bad.scenario"
    text = flyaround_path().read_text().replace("mass_kg: 200", "mass_kg: heavy")
    path.write_text(text)
    with pytest.raises(ConfigError) as err:
        load_scenario(path)
    line = next(i for i, l in enumerate(text.splitlines(), 1) if "mass_kg" in l)
    assert err.value.field == "servicer.mass_kg" and err.value.line == line
    path.write_text(text.replace("mass_kg: heavy", "mass_kg: 200").replace("l_u: 1", "l_x: 1"))
    with pytest.raises(ConfigError, match="unknown field"):
        load_scenario(path)
    path.write_text("orbit: [unclosed")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_scenario(path)


def test_dict_roundtrip(scenario):
    again = scenario_from_dict(scenario.to_dict())
    assert again == scenario and again.digest() == scenario.digest()


def test_csv_roundtrip_exact(scenario, small_run):
    traj, out = small_run
    cols = read_trajectory_csv(out / "trajectory.csv")
    assert len(cols["k"]) == traj.steps + 1
    assert tuple(cols) == COLUMNS
    x0 = scenario.initial_state()
    row0 = np.array([cols[c][0] for c in COLUMNS[2:22]])
    np.testing.assert_array_equal(row0, x0)
    back = trajectory_from_columns(cols, scenario)
    np.testing.assert_array_equal(back.states, traj.states)
    np.testing.assert_array_equal(back.controls, traj.controls)
    assert back.t_f == traj.t_f
    assert trajectory_csv(back) == trajectory_csv(traj)
    leftovers = [f for f in os.listdir(out) if f.endswith(".tmp")]
    assert not leftovers


def test_trajectory_invariants(scenario, small_run):
    traj, _ = small_run
    np.testing.assert_allclose(np.diff(traj.times), traj.t_f / traj.steps, rtol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(traj.body_thrust, axis=1),
                               np.linalg.norm(traj.controls[:, :3], axis=1), atol=1e-9)
    w = scenario.weights
    assert traj.J == pytest.approx(w.l_tf * traj.t_f + w.l_u * traj.u_total
                                   + w.l_m * traj.m_total, abs=1e-12)
    assert "Converged" in report_text(traj)


def test_report_recomputes_cost(small_run):
    traj, out = small_run
    text = (out / "report.txt").read_text()
    vals = {l.split()[0]: l.split()[1] for l in text.splitlines() if l.strip()}
    J, tf, ut, mt = (float(vals[k]) for k in ("J", "t_f", "u_total", "m_total"))
    assert J == pytest.approx(tf + ut + mt, abs=1e-12)


def test_deterministic_csv(scenario, small_run):
    traj, _ = small_run
    again = run_solve(scenario, RunOptions(steps=24))
    assert trajectory_csv(again) == trajectory_csv(traj)


def test_time_only_weights(scenario):
    from docking_ocp.constraints_cost import CostWeights

    sc = scenario.replace(weights=CostWeights(1.0, 0.0, 0.0), t_f_min=380.0, t_f_max=381.0)
    traj = run_solve(sc, RunOptions(steps=40))
    assert traj.solve_report.converged
    assert traj.J == pytest.approx(traj.t_f, abs=1e-12)


def test_propagate_modes(scenario):
    t, ana = run_propagate(scenario, 400.0, "analytic-cw", dt=10.0)
    _, ref = run_propagate(scenario, 400.0, "reference-rk", dt=10.0)
    assert np.max(np.abs(ref[:, :6] - ana)) <= 1e-8 * max(1.0, np.max(np.abs(ana)))
    np.testing.assert_allclose(ref[:, 9:12], np.tile([0, 0.052359, 0], (len(t), 1)), atol=1e-12)
    _, trap = run_propagate(scenario, 40.0, "trapezoidal", dt=1.0)
    assert trap.shape == (41, 20)
    with pytest.raises(DomainError):
        run_propagate(scenario, 10.0, "euler")


def test_analytic_mode_refuses_controls(scenario):
    from docking_ocp.propagation import propagate

    with pytest.raises(DomainError):
        propagate(scenario.initial_state(), scenario.body_params, [0, 1], "analytic-cw",
                  controls=np.ones((2, 6)))


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["solve", "--steps", "16", "--out", str(tmp_path / "a")]) == 0
    assert (tmp_path / "a" / "trajectory.csv").exists()
    assert (tmp_path / "a" / "plot_series.json").exists()
    assert main(["report", "--out", str(tmp_path / "a")]) == 0
    assert main(["solve", "--scenario", str(tmp_path / "missing.scenario")]) == 4
    bad = tmp_path / "bad.scenario"
    bad.write_text("orbit: {gm_m3_per_s2: -1}\n")
    assert main(["solve", "--scenario", str(bad)]) == 3

    def short(d):
        d["bounds"]["t_f_max_s"] = 11
    path = write_scenario(tmp_path, short)
    code = main(["solve", "--scenario", str(path), "--steps", "10", "--out", str(tmp_path / "b")])
    assert code == 2
    assert (tmp_path / "b" / "report.txt").exists()


def test_cli_propagate_and_verify(tmp_path, capsys):
    assert main(["propagate", "--mode", "analytic-cw", "--t-end", "20", "--out",
                 str(tmp_path)]) == 0
    assert (tmp_path / "propagate_analytic-cw.csv").exists()
    assert main(["verify"]) == 0
    assert capsys.readouterr().out.count("[PASS]") == 6


def test_estimator_api(scenario):
    est = DockingOptimizer(steps=16)
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(NotFittedError):
        est.predict([0.0])
    est.fit(scenario)
    assert est.converged_
    states = est.predict([0.0, est.t_f_])
    np.testing.assert_array_equal(states[0], est.trajectory_.states[0])
    np.testing.assert_array_equal(states[1], est.trajectory_.states[-1])
    assert est.controls([0.0]).shape == (1, 6)
    free = DockingOptimizer(steps=16, collision_constraint=False).fit(scenario)
    assert free.cost_ <= est.cost_ + 1e-6
