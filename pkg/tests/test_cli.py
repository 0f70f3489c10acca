import csv
import json

import pytest

from cepam.cli import main


GOOD_CONFIG = {
    "clients": 4,
    "tau": 5,
    "total_iters": 30,
    "clip_radius": 10.0,
    "mechanism": {"kind": "cepam_gaussian", "dim": 3, "sigma": 0.01, "alpha": 0.001},
    "lr": {"kind": "fixed", "eta": 0.1},
    "task": {"kind": "least_squares", "dim": 12, "samples_per_client": 32,
             "heterogeneity": 0.5, "data_seed": 0},
    "seed": 7,
}


def write_config(tmp_path, payload=GOOD_CONFIG, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def test_channel_audit_report(tmp_path, capsys):
    rc = main([
        "channel-audit", "--family", "gaussian", "--dim", "2", "--sigma", "0.01",
        "--samples", "20000", "--seed", "3", "--out", str(tmp_path / "a"),
    ])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ks_pvalue"][0] > 0.01
    assert abs(report["acceptance_rate"] - report["acceptance_expected"]) < 0.01
    assert (tmp_path / "a" / "manifest.json").exists()
    saved = json.loads((tmp_path / "a" / "channel_audit.json").read_text())
    assert saved == report


def test_channel_audit_laplace_mean_h(capsys):
    rc = main([
        "channel-audit", "--family", "laplace", "--dim", "1", "--scale-b", "0.01",
        "--samples", "10000", "--seed", "1",
    ])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["mean_h"] == 1.0


def test_channel_audit_byte_identical(tmp_path):
    for sub in ("x", "y"):
        rc = main([
            "channel-audit", "--family", "laplace", "--scale-b", "0.01",
            "--samples", "10000", "--seed", "5", "--out", str(tmp_path / sub),
        ])
        assert rc == 0
    a = (tmp_path / "x" / "channel_audit.json").read_bytes()
    b = (tmp_path / "y" / "channel_audit.json").read_bytes()
    assert a == b


def test_channel_audit_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["channel-audit", "--family", "cauchy"])
    assert exc.value.code == 2


def test_channel_audit_missing_param_exits_2():
    assert main(["channel-audit", "--family", "gaussian", "--samples", "10000"]) == 2


def test_privacy_budget_forward_laplace(capsys):
    rc = main([
        "privacy-budget", "--family", "laplace", "--epsilon-tilde", "3000",
        "--local-steps", "14", "--clip", "1", "--dataset-size", "2000",
        "--scale-b", "0.01",
    ])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert abs(report["epsilon"] - 2995.0) < 0.5
    assert report["delta"] == 0.0


def test_privacy_budget_forward_gaussian_p_one(capsys):
    rc = main([
        "privacy-budget", "--family", "gaussian", "--epsilon-tilde", "2.0",
        "--local-steps", "3", "--clip", "1", "--clients", "10",
        "--dataset-size", "1", "--sigma", "0.5",
    ])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["p"] == 1.0
    assert report["epsilon"] == pytest.approx(2.0)


def test_privacy_budget_inverse_round_trip(capsys):
    rc = main([
        "privacy-budget", "--family", "gaussian", "--epsilon", "1.5",
        "--delta", "1e-4", "--local-steps", "14", "--clip", "1",
        "--clients", "30", "--dataset-size", "2000",
    ])
    assert rc == 0
    inverse = json.loads(capsys.readouterr().out)
    rc = main([
        "privacy-budget", "--family", "gaussian",
        "--epsilon-tilde", str(inverse["epsilon_tilde"]),
        "--local-steps", "14", "--clip", "1", "--clients", "30",
        "--dataset-size", "2000", "--sigma", str(inverse["sigma_or_b"]),
    ])
    assert rc == 0
    forward = json.loads(capsys.readouterr().out)
    assert forward["epsilon"] == pytest.approx(1.5, rel=1e-6)
    assert forward["delta"] <= 1e-4


def test_privacy_budget_infeasible_exits_3(capsys):
    rc = main([
        "privacy-budget", "--family", "laplace", "--epsilon-tilde", "10",
        "--local-steps", "14", "--clip", "1", "--dataset-size", "2000",
        "--scale-b", "0.001",
    ])
    assert rc == 3


def test_fl_run_outputs(tmp_path, capsys):
    config = write_config(tmp_path)
    out = tmp_path / "run"
    rc = main(["fl-run", "--config", config, "--reps", "2", "--out", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["repetitions"] == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "fl-run"
    assert manifest["seeds"] == [7, 8]
    with open(out / "run_seed7.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6  # 30 iterations / tau 5
    assert set(rows[0]) == {"round", "objective_gap", "accuracy", "snr_db", "bits", "elapsed_ms"}


def test_fl_run_byte_identical_outputs(tmp_path):
    config = write_config(tmp_path)
    blobs = []
    for sub in ("r1", "r2"):
        out = tmp_path / sub
        assert main(["fl-run", "--config", config, "--reps", "1", "--out", str(out)]) == 0
        blobs.append(
            (out / "run_seed7.csv").read_bytes() + (out / "summary.json").read_bytes()
        )
    assert blobs[0] == blobs[1]


def test_fl_run_bad_config_exits_2(tmp_path, capsys):
    bad = dict(GOOD_CONFIG, tau=1)
    config = write_config(tmp_path, bad, "bad.json")
    rc = main(["fl-run", "--config", config, "--reps", "1", "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "tau" in capsys.readouterr().err


def test_fl_run_missing_file_exits_2(tmp_path):
    rc = main(["fl-run", "--config", str(tmp_path / "none.json"), "--reps", "1",
               "--out", str(tmp_path / "o")])
    assert rc == 2


def test_bit_audit_totals_match_fl_run(tmp_path, capsys):
    config = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["fl-run", "--config", config, "--reps", "1", "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["bit-audit", "--config", config, "--rep", "0"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    total = int(lines[0].split(",")[1])
    per_record = sum(int(row.split(",")[3]) for row in lines[2:])
    assert total == per_record
    with open(out / "run_seed7.csv") as fh:
        csv_total = sum(int(row["bits"]) for row in csv.DictReader(fh))
    assert total == csv_total


def test_bit_audit_rejects_plain_mechanism(tmp_path, capsys):
    cfg = dict(GOOD_CONFIG, mechanism={"kind": "plain"})
    config = write_config(tmp_path, cfg, "plain.json")
    assert main(["bit-audit", "--config", config]) == 2


def test_bound_check_satisfied(tmp_path, capsys):
    cfg = dict(
        GOOD_CONFIG,
        lr={"kind": "inverse_time"},
        total_iters=100,
        clip_radius=50.0,
    )
    config = write_config(tmp_path, cfg, "bound.json")
    rc = main(["bound-check", "--config", config, "--reps", "3",
               "--out", str(tmp_path / "bc")])
    assert rc == 0
    report = json.loads((tmp_path / "bc" / "bound_check.json").read_text())
    assert report["satisfied"] is True
    assert report["measured_gap"] <= report["bound"]
    assert {"T", "measured_gap", "bound", "satisfied"} <= set(report)


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
