import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import nnloop as nl
from nnloop.assets import PENDULUM_D, example_nn_path
from nnloop.cli import main
from nnloop.network import save_nn
from nnloop.plant import save_plant

PENDULUM_FLAG = "m=0.15,L=0.5,mu=0.5,g=9.81,Ts=0.02,disc=exact-zoh"


@pytest.fixture
def scalar_files(tmp_path, schur_scalar):
    plant, nn, k_xi = schur_scalar
    plant_path = tmp_path / "plant.json"
    nn_path = tmp_path / "nn.json"
    save_plant(plant, plant_path)
    save_nn(nn, nn_path)
    return str(plant_path), str(nn_path), str(k_xi)


def read_report(out_dir, name="verify_report.json"):
    with open(f"{out_dir}/{name}") as fh:
        return json.load(fh)


def test_verify_global_feasible_exit_zero(tmp_path, scalar_files, capsys):
    plant_path, nn_path, k_xi = scalar_files
    code = main(["verify", "--plant", plant_path, "--nn", nn_path,
                 "--kxi", k_xi, "--theorem", "global",
                 "--out", str(tmp_path / "out")])
    assert code == 0
    report = read_report(tmp_path / "out")
    assert report["status"] == "feasible"
    assert min(report["margins"].values()) >= 0.0


def test_verify_global_infeasible_exit_one(tmp_path, scalar_files):
    plant_path, nn_path, k_xi = scalar_files
    unstable = nl.Plant(A=[[2.0]], B=[[1.0]], C=[[1.0]])
    bad_path = tmp_path / "unstable.json"
    save_plant(unstable, bad_path)
    code = main(["verify", "--plant", str(bad_path), "--nn", nn_path,
                 "--kxi", k_xi, "--theorem", "global",
                 "--out", str(tmp_path / "out")])
    assert code == 1
    assert read_report(tmp_path / "out")["status"] == "infeasible"


def test_verify_missing_nn_exit_three(tmp_path, scalar_files, capsys):
    plant_path, _nn, k_xi = scalar_files
    code = main(["verify", "--plant", plant_path, "--nn",
                 str(tmp_path / "missing.json"), "--kxi", k_xi,
                 "--theorem", "global", "--out", str(tmp_path)])
    assert code == 3
    assert "error" in capsys.readouterr().err


def test_verify_requires_one_plant_source(tmp_path):
    code = main(["verify", "--plant", "a.json", "--pendulum", PENDULUM_FLAG,
                 "--nn", example_nn_path(), "--theorem", "global",
                 "--out", str(tmp_path)])
    assert code == 3


def test_verify_local_range_pendulum(tmp_path):
    out = str(tmp_path / "out")
    code = main(["verify", "--pendulum", PENDULUM_FLAG,
                 "--nn", example_nn_path(), "--kxi", "1.0",
                 "--theorem", "local-range", "--rnom", "0",
                 "--d", str(PENDULUM_D), "--out", out])
    assert code == 0
    report = read_report(out)
    assert report["status"] == "feasible"
    lo, hi = report["admissible_references"]["interval"]
    assert lo < 0.0 < hi


def test_verify_local_missing_d_exit_three(tmp_path):
    code = main(["verify", "--pendulum", PENDULUM_FLAG,
                 "--nn", example_nn_path(), "--theorem", "local-fixed",
                 "--out", str(tmp_path)])
    assert code == 3


def test_bounds_report_values(tmp_path):
    out = str(tmp_path / "out")
    code = main(["bounds", "--pendulum", PENDULUM_FLAG,
                 "--nn", example_nn_path(), "--kxi", "1.0",
                 "--r", "0", "--d", "0.345", "--out", out])
    assert code == 0
    report = read_report(out, "bounds_report.json")
    assert len(report["neurons"]) == 10
    first = report["neurons"][0]
    assert first["alpha_phi"] == pytest.approx(np.tanh(0.345) / 0.345, abs=1e-4)
    assert first["beta_phi"] == pytest.approx(1.0, abs=1e-9)
    assert report["io"]["state_feedback"] is True


def test_bounds_relu_fixture(tmp_path):
    # relu anchored at v_* = 1 with box [-1, 2] gives sectors [0.5, 1]
    plant = nl.Plant(A=[[0.0]], B=[[1.0]], C=[[1.0]])
    nn = nl.FeedForwardNN(
        Hx0=np.eye(1), Hr0=np.zeros((1, 1)),
        layers=((np.array([[1.0]]), np.zeros(1)),),
        Wl=np.ones((1, 1)), bl=np.zeros(1),
        activation=nl.Activation.relu(),
    )
    ppath, npath = tmp_path / "p.json", tmp_path / "n.json"
    save_plant(plant, ppath)
    save_nn(nn, npath)
    out = str(tmp_path / "out")
    # x_*(1) = 1 so v_* = 1; d = 2 gives the box [-1, 3]
    code = main(["bounds", "--plant", str(ppath), "--nn", str(npath),
                 "--kxi", "1.0", "--r", "1", "--d", "2", "--out", out])
    assert code == 0
    rep = read_report(out, "bounds_report.json")
    assert rep["neurons"][0]["alpha_phi"] == pytest.approx(0.5, abs=1e-12)
    assert rep["neurons"][0]["beta_phi"] == pytest.approx(1.0, abs=1e-12)


def test_bounds_zero_d_exit_three(tmp_path):
    code = main(["bounds", "--pendulum", PENDULUM_FLAG,
                 "--nn", example_nn_path(), "--kxi", "1.0",
                 "--r", "0", "--d", "0", "--out", str(tmp_path)])
    assert code == 3


def test_simulate_from_steady_state_constant_rows(tmp_path):
    out = str(tmp_path / "out")
    plant, nn, k_xi = nl.Plant(A=[[0.5]], B=[[1.0]], C=[[1.0]]), None, None
    ss_plant, ss_nn, k = (plant,
                          nl.FeedForwardNN(Hx0=np.eye(1), Hr0=np.zeros((1, 1)),
                                           layers=((np.zeros((1, 1)), np.zeros(1)),),
                                           Wl=np.zeros((1, 1)), bl=np.zeros(1),
                                           activation=nl.Activation.tanh()),
                          1.0)
    ppath, npath = tmp_path / "p.json", tmp_path / "n.json"
    save_plant(ss_plant, ppath)
    save_nn(ss_nn, npath)
    ss = nl.steady_state(ss_plant, ss_nn, k, np.array([0.2]))
    x0 = ",".join(repr(float(v)) for v in ss.xtil_star)
    code = main(["simulate", "--plant", str(ppath), "--nn", str(npath),
                 "--kxi", "1.0", "--r", "0.2", "--x0", x0,
                 "--steps", "60", "--out", out])
    assert code == 0
    with open(f"{out}/trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    states = np.array([[float(v) for v in row[1:4]] for row in rows[1:]])
    assert np.max(np.abs(states - states[0])) <= 1e-9


def test_simulate_governed_with_svg(tmp_path):
    out = str(tmp_path / "out")
    code = main(["verify", "--pendulum", PENDULUM_FLAG,
                 "--nn", example_nn_path(), "--kxi", "1.0",
                 "--theorem", "local-range", "--rnom", "0",
                 "--d", str(PENDULUM_D), "--out", out])
    assert code == 0
    sim_out = str(tmp_path / "sim")
    code = main(["simulate", "--pendulum", PENDULUM_FLAG,
                 "--nn", example_nn_path(), "--kxi", "1.0",
                 "--governed", "--report", f"{out}/verify_report.json",
                 "--r", "-1.0", "--steps", "1200", "--svg",
                 "--out", sim_out])
    assert code == 0
    with open(f"{sim_out}/trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    report = read_report(out)
    lo = report["admissible_references"]["interval"][0]
    assert float(rows[-1][-1]) == pytest.approx(lo, abs=1e-6)
    root = ET.parse(f"{sim_out}/trajectory.svg").getroot()
    polylines = [c for c in root if c.tag.endswith("polyline")]
    assert len(polylines) >= 2  # ellipse slices plus the trajectory


def test_simulate_requires_reference(tmp_path):
    code = main(["simulate", "--pendulum", PENDULUM_FLAG,
                 "--nn", example_nn_path(), "--kxi", "1.0",
                 "--out", str(tmp_path)])
    assert code == 3


def test_report_determinism(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        code = main(["verify", "--pendulum", PENDULUM_FLAG,
                     "--nn", example_nn_path(), "--kxi", "1.0",
                     "--theorem", "local-fixed", "--r", "0",
                     "--d", str(PENDULUM_D), "--out", out])
        assert code == 0
        rep = read_report(out)
        rep.pop("meta")  # wall-clock time is the only varying field
        outs.append(json.dumps(rep, sort_keys=True))
    assert outs[0] == outs[1]


def test_roa_plot(tmp_path):
    out = str(tmp_path / "out")
    code = main(["verify", "--pendulum", PENDULUM_FLAG,
                 "--nn", example_nn_path(), "--kxi", "1.0",
                 "--theorem", "local-fixed", "--r", "0",
                 "--d", str(PENDULUM_D), "--out", out])
    assert code == 0
    plot_out = str(tmp_path / "plot")
    code = main(["roa-plot", "--pendulum", PENDULUM_FLAG,
                 "--nn", example_nn_path(), "--kxi", "1.0",
                 "--report", f"{out}/verify_report.json", "--out", plot_out])
    assert code == 0
    root = ET.parse(f"{plot_out}/roa.svg").getroot()
    assert any(c.tag.endswith("polyline") for c in root)


def test_ref_schedule_file(tmp_path):
    out = str(tmp_path / "out")
    sched_path = tmp_path / "sched.json"
    sched_path.write_text(json.dumps([[0, 0.0], [30, 0.1]]))
    code = main(["simulate", "--pendulum", PENDULUM_FLAG,
                 "--nn", example_nn_path(), "--kxi", "1.0",
                 "--ref-schedule", str(sched_path), "--steps", "80",
                 "--out", out])
    assert code == 0
    with open(f"{out}/trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    rhats = [float(r[-1]) for r in rows[1:]]
    assert rhats[10] == 0.0
    assert rhats[50] == 0.1
