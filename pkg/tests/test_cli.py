import json
import socket
import threading

import numpy as np
import pytest

from cloudmhe.cli import main
from conftest import SCENARIO_X0


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def write_config(path, **overrides):
    config = {
        "sim": {"duration": 0.5, "ts": 0.01, "seed": 3,
                "initial_state": list(SCENARIO_X0)},
        "road": {"speed": 15.0, "segments": [
            {"start": 0.9, "end": 3.0, "amplitude": 0.0258,
             "omega": 6.283185307179586, "basis": "time"}]},
    }
    config.update(overrides)
    path.write_text(json.dumps(config))
    return path


class TestSimulate:
    def test_bundled_scenario_row_counts(self, tmp_path):
        out = tmp_path / "out"
        assert main(["simulate", "--out", str(out)]) == 0
        truth_lines = (out / "truth.csv").read_text().splitlines()
        est_lines = (out / "estimates.csv").read_text().splitlines()
        assert len(truth_lines) == 602  # header + 601 samples
        assert len(est_lines) == 602
        assert (out / "metrics.json").exists()

    def test_golden_headers(self, tmp_path):
        out = tmp_path / "out"
        write_config(tmp_path / "cfg.json")
        assert main(["simulate", "--config", str(tmp_path / "cfg.json"),
                     "--out", str(out)]) == 0
        truth_head = (out / "truth.csv").read_text().splitlines()[0]
        assert truth_head == ("t," + ",".join(f"x{i}" for i in range(1, 15))
                              + "," + ",".join(f"u{i}" for i in range(1, 5))
                              + "," + ",".join(f"r{i}" for i in range(1, 5))
                              + "," + ",".join(f"y{i}" for i in range(1, 8)))
        est_head = (out / "estimates.csv").read_text().splitlines()[0]
        assert est_head == ("t," + ",".join(f"xhat{i}" for i in range(1, 15))
                            + ",qp_iters,qp_status")

    def test_noise_free_exact_prior_is_tight(self, tmp_path):
        out = tmp_path / "out"
        write_config(
            tmp_path / "cfg.json",
            sim={"duration": 1.0, "ts": 0.01, "seed": 3, "w_std": 0.0,
                 "v_std": 0.0, "initial_state": list(SCENARIO_X0)},
            mhe={"x0": list(SCENARIO_X0), "pi0_diag": 1e-4,
                 "v_lo": None, "v_hi": None})
        assert main(["simulate", "--config", str(tmp_path / "cfg.json"),
                     "--out", str(out)]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["rmse_unmeasured"]["mean"] < 1e-6

    def test_negative_mass_exits_2_naming_key(self, tmp_path, capsys):
        write_config(tmp_path / "cfg.json", params={"ms": -1.0})
        code = main(["simulate", "--config", str(tmp_path / "cfg.json"),
                     "--out", str(tmp_path / "out")])
        assert code == 2
        assert "ms" in capsys.readouterr().err

    def test_deterministic_artifacts(self, tmp_path):
        write_config(tmp_path / "cfg.json")
        for name in ("a", "b"):
            assert main(["simulate", "--config", str(tmp_path / "cfg.json"),
                         "--out", str(tmp_path / name)]) == 0
        for artifact in ("truth.csv", "estimates.csv", "metrics.json"):
            assert (tmp_path / "a" / artifact).read_bytes() == \
                (tmp_path / "b" / artifact).read_bytes()

    def test_seed_override_changes_run(self, tmp_path):
        write_config(tmp_path / "cfg.json")
        main(["simulate", "--config", str(tmp_path / "cfg.json"),
              "--out", str(tmp_path / "a")])
        main(["simulate", "--config", str(tmp_path / "cfg.json"),
              "--out", str(tmp_path / "b"), "--seed", "99"])
        assert (tmp_path / "a" / "truth.csv").read_bytes() != \
            (tmp_path / "b" / "truth.csv").read_bytes()


class TestMetricsCommand:
    def test_identical_files_score_zero(self, tmp_path):
        out = tmp_path / "out"
        write_config(tmp_path / "cfg.json")
        main(["simulate", "--config", str(tmp_path / "cfg.json"),
              "--out", str(out)])
        scored = tmp_path / "scored"
        code = main(["metrics", str(out / "truth.csv"),
                     str(out / "estimates.csv"), "--out", str(scored),
                     "--t-start", "0.2"])
        assert code == 0
        metrics = json.loads((scored / "metrics.json").read_text())
        assert metrics["window"][0] == pytest.approx(0.2)
        assert (scored / "heave.dat").exists()

    def test_constant_offset_rmse(self, tmp_path):
        out = tmp_path / "out"
        write_config(tmp_path / "cfg.json")
        main(["simulate", "--config", str(tmp_path / "cfg.json"),
              "--out", str(out)])
        # graft a known offset onto the estimates of x1
        lines = (out / "estimates.csv").read_text().splitlines()
        doctored = [lines[0]]
        truth_lines = (out / "truth.csv").read_text().splitlines()[1:]
        for est_line, truth_line in zip(lines[1:], truth_lines):
            cells = est_line.split(",")
            truth_cells = truth_line.split(",")
            cells[1:15] = truth_cells[1:15]
            cells[1] = repr(float(truth_cells[1]) + 0.01)
            doctored.append(",".join(cells))
        (out / "estimates.csv").write_text("\n".join(doctored) + "\n")
        scored = tmp_path / "scored"
        assert main(["metrics", str(out / "truth.csv"),
                     str(out / "estimates.csv"), "--out", str(scored)]) == 0
        metrics = json.loads((scored / "metrics.json").read_text())
        assert metrics["rmse"]["x1"] == pytest.approx(0.01, rel=1e-9)
        assert metrics["rmse"]["x9"] == 0.0

    def test_misaligned_timestamps_rejected(self, tmp_path, capsys):
        out = tmp_path / "out"
        write_config(tmp_path / "cfg.json")
        main(["simulate", "--config", str(tmp_path / "cfg.json"),
              "--out", str(out)])
        lines = (out / "estimates.csv").read_text().splitlines()
        cells = lines[1].split(",")
        cells[0] = "0.5"
        lines[1] = ",".join(cells)
        (out / "estimates.csv").write_text("\n".join(lines) + "\n")
        code = main(["metrics", str(out / "truth.csv"),
                     str(out / "estimates.csv"), "--out", str(tmp_path / "s")])
        assert code == 2
        assert "misaligned" in capsys.readouterr().err


class TestDumpAndQp:
    def test_dump_model_writes_matrices(self, tmp_path):
        out = tmp_path / "out"
        assert main(["dump-model", "--out", str(out)]) == 0
        a = np.loadtxt(out / "a.csv", delimiter=",")
        assert a.shape == (14, 14)
        assert a[1, 0] == pytest.approx(-3446.6667, abs=1e-3)
        assert np.loadtxt(out / "b.csv", delimiter=",").shape == (14, 4)
        assert np.loadtxt(out / "br.csv", delimiter=",").shape == (14, 4)
        assert np.loadtxt(out / "c.csv", delimiter=",").shape == (7, 14)

    def test_solve_qp_prints_solution(self, tmp_path, capsys):
        bundle = tmp_path / "problem.json"
        bundle.write_text(json.dumps({
            "h": [[2.0, 0.0], [0.0, 2.0]], "f": [-2.0, -4.0],
            "g": [[1.0, 0.0], [0.0, 1.0]],
            "lo": ["-inf", "-inf"], "hi": [0.5, "inf"]}))
        assert main(["solve-qp", str(bundle)]) == 0
        out = capsys.readouterr().out
        assert "status: solved" in out
        z = [float(v) for v in out.splitlines()[-1].split()[1:]]
        np.testing.assert_allclose(z, [0.5, 2.0], atol=1e-7)

    def test_solve_qp_bad_bundle_exits_2(self, tmp_path, capsys):
        bundle = tmp_path / "problem.json"
        bundle.write_text(json.dumps({"h": [[1.0]], "f": [0.0], "oops": 1}))
        assert main(["solve-qp", str(bundle)]) == 2


class TestNetworkedCommands:
    def test_vehicle_without_cloud_exits_4(self, tmp_path, capsys):
        write_config(tmp_path / "cfg.json")
        code = main(["run-vehicle", "--config", str(tmp_path / "cfg.json"),
                     "--out", str(tmp_path / "out"),
                     "--connect", f"127.0.0.1:{free_port()}",
                     "--timeout", "0.5"])
        assert code == 4
        assert "connection failed" in capsys.readouterr().err

    def test_cloud_pair_reproduces_simulate(self, tmp_path):
        config_path = write_config(tmp_path / "cfg.json")
        sim_out = tmp_path / "sim"
        assert main(["simulate", "--config", str(config_path),
                     "--out", str(sim_out)]) == 0

        port = free_port()
        cloud_out = tmp_path / "cloud"
        vehicle_out = tmp_path / "vehicle"
        cloud_code = {}

        def cloud():
            cloud_code["code"] = main(["serve-cloud", "--config", str(config_path),
                                       "--out", str(cloud_out),
                                       "--listen", f"127.0.0.1:{port}",
                                       "--timeout", "15"])

        thread = threading.Thread(target=cloud)
        thread.start()
        vehicle_code = main(["run-vehicle", "--config", str(config_path),
                             "--out", str(vehicle_out),
                             "--connect", f"127.0.0.1:{port}",
                             "--timeout", "15"])
        thread.join(timeout=30)
        assert vehicle_code == 0
        assert cloud_code["code"] == 0
        assert (cloud_out / "estimates.csv").read_bytes() == \
            (sim_out / "estimates.csv").read_bytes()
        assert (vehicle_out / "truth.csv").read_bytes() == \
            (sim_out / "truth.csv").read_bytes()
        session = (vehicle_out / "session_vehicle.csv").read_text().splitlines()
        assert session[0] == "seq,t_sent,t_recv,staleness"
        assert len(session) == 52  # header + 51 sent measurements
