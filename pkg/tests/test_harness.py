import json
import os

import numpy as np
import pytest

from qhetfed.federation import RunRecord
from qhetfed.harness import (
    AGG_COLUMNS,
    ConfigError,
    RUN_COLUMNS,
    aggregate_records,
    config_hash,
    emit_metrics,
    parse_config,
    resolved_config,
    run_experiment,
)
from qhetfed.planner import LinkComputeParams, compute_times
from qhetfed.quantizer import IDENTITY


LINK_BLOCK = {
    "bandwidth_hz": 1e6,
    "power_w": 0.5,
    "noise_w": 1e-10,
    "channel_gain": 1e-8,
    "cycles_per_bit": 20,
    "cpu_hz": 1e9,
    "bits_per_local_iter": 1e8,
    "model_bits": 1e6,
    "edge_cloud_ratio": 10.0,
}


TINY = {
    "seed": 7,
    "repeats": 2,
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


def make_record(algorithm, losses, accs=None, delay=2.0):
    n = len(losses)
    return RunRecord(
        algorithm=algorithm,
        master_seed=0,
        train_loss=list(losses),
        test_accuracy=list(accs) if accs is not None else [0.0] * n,
        runtime_s=[(t + 1) * delay for t in range(n)],
        param_hash=[f"h{t}" for t in range(n)],
        final_params=np.zeros(1),
        diverged_at=None,
        snapshots=None,
        config=None,
    )


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = tuple(lines[0].split(","))
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


# ---------------------------------------------------------------------------
# config resolution


def test_defaults_resolve():
    cfg = parse_config({})
    assert cfg.seed == 0
    assert cfg.repeats == 10
    assert cfg.schedule.tau == 12 and cfg.schedule.gamma == 3
    assert cfg.topology.devices_per_set == (20, 20, 20)
    assert cfg.model.kind == "logistic" and cfg.model.num_classes == 10
    assert cfg.q1.levels == 4 and cfg.q2.levels == 10
    assert cfg.times.t_cp == 2.0


def test_unknown_key_rejected_with_dotted_path():
    with pytest.raises(ConfigError, match="schedule.tua"):
        parse_config({"schedule": {"tua": 1}})
    with pytest.raises(ConfigError, match="colour"):
        parse_config({"colour": "blue"})


def test_scalar_where_table_expected():
    with pytest.raises(ConfigError):
        parse_config({"schedule": 5})


def test_partial_override_keeps_sibling_defaults():
    cfg = parse_config({"schedule": {"tau": 4}})
    assert cfg.schedule.tau == 4
    assert cfg.schedule.gamma == 3
    assert cfg.schedule.rounds == 50


def test_identity_quantizer_mode():
    cfg = parse_config({"quantizers": {"mode": "identity"}})
    assert cfg.q1.mode == IDENTITY and cfg.q2.mode == IDENTITY


def test_devices_per_set_list_form():
    cfg = parse_config({"topology": {"num_sets": 2, "devices_per_set": [3, 5]}})
    assert cfg.topology.devices_per_set == (3, 5)
    with pytest.raises(ConfigError):
        parse_config({"topology": {"num_sets": 3, "devices_per_set": [3, 5]}})


def test_link_block_replaces_runtime_table():
    resolved = resolved_config({"link": LINK_BLOCK})
    assert "runtime" not in resolved
    cfg = parse_config({"link": LINK_BLOCK})
    expected = compute_times(LinkComputeParams(**LINK_BLOCK))
    assert cfg.times == expected


def test_link_block_rejects_unknown_key():
    block = dict(LINK_BLOCK, bandwith_hz=1.0)
    with pytest.raises(ConfigError, match="link.bandwith_hz"):
        resolved_config({"link": block})


def test_validation_of_counts():
    with pytest.raises(ConfigError):
        parse_config({"repeats": 0})
    with pytest.raises(ConfigError):
        parse_config({"metric_cadence": 0})
    with pytest.raises(ConfigError):
        parse_config({"algorithms": ["sgd"]})


def test_config_hash_ignores_output_dir():
    a = parse_config({"output_dir": "/tmp/a", **TINY})
    b = parse_config({"output_dir": "/tmp/b", **TINY})
    assert config_hash(a) == config_hash(b)
    c = parse_config({"seed": 8, **{k: v for k, v in TINY.items() if k != "seed"}})
    assert config_hash(a) != config_hash(c)


# ---------------------------------------------------------------------------
# metric tables


def test_aggregate_sample_std_hand_value():
    recs = [
        ("a", make_record("qhetfed", [1.0])),
        ("b", make_record("qhetfed", [3.0])),
    ]
    report = aggregate_records(recs, {})
    point = report.curves["qhetfed"][0]
    assert point.runs == 2
    assert point.train_loss_mean == 2.0
    assert abs(point.train_loss_std - 2.0 ** 0.5) < 1e-15


def test_aggregate_single_run_has_zero_std():
    report = aggregate_records([("a", make_record("qhetfed", [1.5, 1.2]))], {})
    for point in report.curves["qhetfed"]:
        assert point.train_loss_std == 0.0
        assert point.runs == 1


def test_aggregate_of_identical_runs_equals_single_run():
    base = make_record("qhetfed", [2.0, 1.0], accs=[0.3, 0.6])
    twin = make_record("qhetfed", [2.0, 1.0], accs=[0.3, 0.6])
    report = aggregate_records([("a", base), ("b", twin)], {})
    for t, point in enumerate(report.curves["qhetfed"]):
        assert point.train_loss_mean == base.train_loss[t]
        assert point.train_loss_std == 0.0
        assert point.test_accuracy_mean == base.test_accuracy[t]


def test_emit_metrics_empty_is_header_only(tmp_path):
    written = emit_metrics([], str(tmp_path))
    header, rows = read_csv(os.path.join(str(tmp_path), "metrics.csv"))
    assert header == RUN_COLUMNS and rows == []
    header, rows = read_csv(os.path.join(str(tmp_path), "aggregate.csv"))
    assert header == AGG_COLUMNS and rows == []
    assert len(written) == 3


def test_metrics_round_trip_exact(tmp_path):
    rec = make_record("qhetfed", [0.1 + 0.2, 1.0 / 3.0], accs=[0.5, 2.0 / 3.0], delay=33.878411556555406)
    emit_metrics([("run0", rec)], str(tmp_path))
    _, rows = read_csv(os.path.join(str(tmp_path), "metrics.csv"))
    assert len(rows) == 2
    for t, row in enumerate(rows):
        assert row[0] == "run0" and row[1] == "qhetfed"
        assert int(row[2]) == t + 1
        assert float(row[3]) == rec.train_loss[t]
        assert float(row[4]) == rec.test_accuracy[t]
        assert float(row[5]) == rec.runtime_s[t]


def test_metric_cadence_keeps_last_iteration(tmp_path):
    rec = make_record("qhetfed", [float(t) for t in range(12)])
    emit_metrics([("run0", rec)], str(tmp_path), cadence=5)
    _, rows = read_csv(os.path.join(str(tmp_path), "metrics.csv"))
    assert [int(r[2]) for r in rows] == [5, 10, 12]


def test_aggregate_json_contains_config_echo(tmp_path):
    rec = make_record("qhetfed", [1.0])
    emit_metrics([("run0", rec)], str(tmp_path), config_echo={"seed": 9})
    with open(os.path.join(str(tmp_path), "aggregate.json"), encoding="utf-8") as fh:
        data = json.load(fh)
    assert data["config"] == {"seed": 9}
    assert data["curves"]["qhetfed"][0]["train_loss_mean"] == 1.0


# ---------------------------------------------------------------------------
# experiment driver


def test_run_experiment_end_to_end(tmp_path):
    user = dict(TINY, output_dir=str(tmp_path / "out"))
    written = run_experiment(user)
    names = sorted(os.path.basename(p) for p in written)
    assert "metrics.csv" in names
    assert "aggregate.csv" in names
    assert "aggregate.json" in names
    assert "runs.json" in names
    assert "resolved_config.json" in names
    per_run = [n for n in names if n.endswith(".csv") and n not in ("metrics.csv", "aggregate.csv")]
    assert len(per_run) == 4  # 2 algorithms x 2 repeats

    with open(tmp_path / "out" / "runs.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    assert len(manifest) == 4
    for entry in manifest:
        assert entry["iterations_completed"] == 3
        assert entry["diverged_at"] is None
        assert (tmp_path / "out" / entry["file"]).exists()

    with open(tmp_path / "out" / "resolved_config.json", encoding="utf-8") as fh:
        resolved = json.load(fh)
    assert resolved["schedule"]["tau"] == 2
    assert resolved["repeats"] == 2
    assert resolved["quantizers"]["levels_device"] == 4  # default survived the merge


def test_run_experiment_reruns_byte_identical(tmp_path):
    user_a = dict(TINY, output_dir=str(tmp_path / "a"))
    user_b = dict(TINY, output_dir=str(tmp_path / "b"))
    run_experiment(user_a)
    run_experiment(user_b)
    for name in ("metrics.csv", "aggregate.csv"):
        with open(tmp_path / "a" / name, "rb") as fh:
            blob_a = fh.read()
        with open(tmp_path / "b" / name, "rb") as fh:
            blob_b = fh.read()
        assert blob_a == blob_b, name
    # the json report embeds the config echo, whose output_dir legitimately
    # differs between the two runs; the curves themselves must match
    with open(tmp_path / "a" / "aggregate.json", encoding="utf-8") as fh:
        curves_a = json.load(fh)["curves"]
    with open(tmp_path / "b" / "aggregate.json", encoding="utf-8") as fh:
        curves_b = json.load(fh)["curves"]
    assert curves_a == curves_b
    csvs_a = sorted(p.name for p in (tmp_path / "a").glob("*_s7_*.csv"))
    csvs_b = sorted(p.name for p in (tmp_path / "b").glob("*_s7_*.csv"))
    assert csvs_a == csvs_b and len(csvs_a) == 4


def test_run_experiment_gamma1_algorithm_forces_gamma(tmp_path):
    user = dict(TINY, output_dir=str(tmp_path / "out"), algorithms=["qhetfed_gamma1"])
    run_experiment(user)
    with open(tmp_path / "out" / "runs.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    assert {m["algorithm"] for m in manifest} == {"qhetfed_gamma1"}
    assert all(m["iterations_completed"] == 3 for m in manifest)
