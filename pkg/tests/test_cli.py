import json

import pytest

from qhetfed.cli import main


TINY = {
    "seed": 7,
    "repeats": 1,
    "dataset": {
        "classes": 3,
        "per_class": 20,
        "input_dim": 4,
        "separation": 4.0,
        "noise": 1.0,
        "test_fraction": 0.2,
    },
    "partition": {"scheme": "iid", "size_min": 5, "size_max": 10},
    "topology": {"num_sets": 2, "devices_per_set": 2},
    "schedule": {"tau": 2, "gamma": 1, "mu": 0.05, "rounds": 3, "batch": 5},
}


def write_config(tmp_path, payload):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def parse_kv(output):
    pairs = {}
    for line in output.strip().splitlines():
        if ": " in line:
            key, value = line.split(": ", 1)
            pairs[key] = value
    return pairs


def test_run_subcommand_succeeds(tmp_path, capsys):
    cfg = write_config(tmp_path, TINY)
    code = main(["run", "--config", cfg, "--output-dir", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "metrics.csv" in out
    assert (tmp_path / "out" / "runs.json").exists()


def test_run_rejects_unknown_config_key(tmp_path, capsys):
    cfg = write_config(tmp_path, {"colour": "blue"})
    code = main(["run", "--config", cfg, "--output-dir", str(tmp_path / "out")])
    assert code == 2
    assert "colour" in capsys.readouterr().err


def test_run_set_override_applies(tmp_path):
    cfg = write_config(tmp_path, TINY)
    code = main([
        "run", "--config", cfg, "--output-dir", str(tmp_path / "out"),
        "--set", "schedule.rounds=2",
    ])
    assert code == 0
    with open(tmp_path / "out" / "runs.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    assert all(m["iterations_completed"] == 2 for m in manifest)


def test_run_set_override_rejects_unknown_path(tmp_path, capsys):
    cfg = write_config(tmp_path, TINY)
    code = main([
        "run", "--config", cfg, "--output-dir", str(tmp_path / "out"),
        "--set", "bogus.key=1",
    ])
    assert code == 2
    assert "bogus" in capsys.readouterr().err


def test_plan_prints_frozen_schedule(capsys):
    code = main([
        "plan", "--deadline", "15600", "--rounds", "100", "--q1", "1",
        "--num-sets", "3", "--num-devices", "60",
        "--t-cp", "2.0", "--t-de", "0.17629143438888212",
        "--t-ec", "1.7629143438888213",
    ])
    assert code == 0
    pairs = parse_kv(capsys.readouterr().out)
    assert pairs["tau"] == "69"
    assert pairs["gamma"] == "2"
    assert abs(float(pairs["iteration_delay_s"]) - 155.9270233167217) < 1e-9
    assert float(pairs["total_time_s"]) <= 15600.0


def test_plan_link_mode_matches_direct_times(capsys):
    args = [
        "plan", "--deadline", "15600", "--rounds", "100", "--q1", "1",
        "--num-sets", "3", "--num-devices", "60",
        "--bandwidth-hz", "1e6", "--power-w", "0.5", "--noise-w", "1e-10",
        "--channel-gain", "1e-8", "--cycles-per-bit", "20", "--cpu-hz", "1e9",
        "--bits-per-local-iter", "1e8", "--model-bits", "1e6",
        "--edge-cloud-ratio", "10.0",
    ]
    assert main(args) == 0
    pairs = parse_kv(capsys.readouterr().out)
    assert abs(float(pairs["t_cp"]) - 2.0) < 1e-12
    assert abs(float(pairs["t_de"]) - 0.17629143438888212) < 1e-15
    assert pairs["tau"] == "69"


def test_plan_infeasible_deadline_fails(capsys):
    code = main([
        "plan", "--deadline", "30", "--rounds", "10", "--q1", "1",
        "--num-sets", "2", "--num-devices", "10",
        "--t-cp", "1.0", "--t-de", "0.2", "--t-ec", "1.0",
    ])
    assert code == 1
    assert capsys.readouterr().err != ""


def test_plan_requires_complete_time_set(capsys):
    with pytest.raises(SystemExit) as exc:
        main([
            "plan", "--deadline", "100", "--rounds", "10", "--q1", "1",
            "--num-sets", "2", "--num-devices", "10", "--t-cp", "1.0",
        ])
    assert exc.value.code == 2


def test_plan_rejects_mixed_time_modes(capsys):
    with pytest.raises(SystemExit) as exc:
        main([
            "plan", "--deadline", "100", "--rounds", "10", "--q1", "1",
            "--num-sets", "2", "--num-devices", "10",
            "--t-cp", "1.0", "--t-de", "0.2", "--t-ec", "1.0",
            "--bandwidth-hz", "1e6",
        ])
    assert exc.value.code == 2


def test_bounds_prints_frozen_values(capsys):
    code = main([
        "bounds", "--L", "1", "--delta", "1", "--sigma2", "1", "--batch", "1",
        "--G2", "1", "--q1", "1", "--q2", "1", "--mu", "0.01",
        "--tau", "12", "--gamma", "3", "--rounds", "100",
        "--devices-per-set", "20,20,20",
    ])
    assert code == 0
    pairs = parse_kv(capsys.readouterr().out)
    assert abs(float(pairs["qhetfed_c"]) - 0.85) < 1e-12
    assert abs(float(pairs["qhetfed_gap_bound"]) - 0.5003773770386936) < 1e-10
    assert abs(float(pairs["baseline_gap_bound"]) - 0.5004658333333333) < 1e-10
    assert abs(float(pairs["delta_total"]) - 0.1051111) < 1e-10
    assert pairs["baseline_cond"] == "False"
    # q1 = 1 sits below the switch point N/C - 1 = 19
    assert pairs["tau_preference"] == "prefer_high_tau"


def test_bounds_rejects_bad_device_list(capsys):
    with pytest.raises(SystemExit) as exc:
        main([
            "bounds", "--L", "1", "--delta", "1", "--sigma2", "1", "--batch", "1",
            "--G2", "1", "--q1", "1", "--q2", "1", "--mu", "0.01",
            "--tau", "12", "--gamma", "3", "--rounds", "100",
            "--devices-per-set", "20,x",
        ])
    assert exc.value.code == 2


def test_quantizer_table_outputs_rows(capsys):
    code = main([
        "quantizer-table", "--levels", "1,4", "--dim", "16",
        "--trials", "2000", "--seed", "0",
    ])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "levels,variance_factor,theory_cap"
    rows = [line.split(",") for line in lines[1:]]
    assert [int(r[0]) for r in rows] == [1, 4]
    # more levels means lower variance, and estimates respect the cap
    assert float(rows[1][1]) < float(rows[0][1])
    for r in rows:
        assert float(r[1]) <= float(r[2]) * 1.05


def test_missing_config_file_fails(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "missing.json")])
    assert code in (1, 2)
    assert capsys.readouterr().err != ""
