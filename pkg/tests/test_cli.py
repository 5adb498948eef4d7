import json

import numpy as np
import pytest

from scenario_dp.cli import SUBCOMMANDS, build_parser, main
from scenario_dp.formats import write_scenario_file


@pytest.fixture
def toy_files(data_dir):
    return str(data_dir / "toy_split.txt"), str(data_dir / "toy_demands.csv")


def test_split_eval_toy(toy_files, capsys):
    inst, sc = toy_files
    assert main(["split-eval", "--instance", inst, "--scenarios", sc]) == 0
    out = capsys.readouterr().out
    assert "total 8" in out and "V = 0,4,4,8" in out


def test_dsirp_eval_toy(data_dir, tmp_path, capsys):
    sc = tmp_path / "d.csv"
    sc.write_text("1,1\n")
    assert main(["dsirp-eval", "--instance", str(data_dir / "toy_customer.txt"), "--scenarios", str(sc)]) == 0
    assert "total 4 deliver 11" in capsys.readouterr().out


def test_oracle_check_zero(capsys):
    assert main(["oracle-check", "--trials", "0"]) == 0
    assert "0 comparisons" in capsys.readouterr().out


def test_oracle_check_some(capsys):
    assert main(["oracle-check", "--trials", "5", "--seed", "3"]) == 0
    assert "15 comparisons, 0 mismatches" in capsys.readouterr().out


def test_help_lists_subcommands_and_streams(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for cmd in SUBCOMMANDS:
        assert cmd in out
    assert "Sub-streams of --seed" in out


def test_no_subcommand(capsys):
    assert main([]) == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_conflicting_flags(toy_files):
    inst, sc = toy_files
    with pytest.raises(SystemExit) as exc:
        main(["split-eval", "--instance", inst, "--beta", "1", "--hard", "--scenarios", sc])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["split-eval", "--instance", inst, "--scenarios", sc, "--gen", "uniform:1:2"])
    assert main(["split-eval", "--instance", inst, "--scenarios", sc, "--threads", "4"]) == 2


def test_missing_inputs(toy_files, capsys):
    inst, _ = toy_files
    assert main(["split-eval", "--instance", inst]) == 2
    assert main(["split-eval", "--gen", "uniform:1:2"]) == 2
    assert main(["dsirp-eval", "--instance", inst, "--gen", "uniform:1:2"]) == 2


def test_bad_file_is_error(tmp_path, toy_files, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("3 5\n")
    assert main(["split-eval", "--instance", str(bad), "--gen", "uniform:1:2"]) == 1
    err = capsys.readouterr().err
    assert "bad.txt:1" in err and len(err.strip().splitlines()) == 1


def test_infeasible_exit_status(toy_files):
    inst, _ = toy_files
    args = ["split-eval", "--instance", inst, "--gen", "uniform:4:9", "--m", "5", "--hard"]
    assert main(args) == 1
    assert main(args + ["--allow-infeasible"]) == 0
    assert main(["split-eval", "--instance", inst, "--gen", "uniform:4:9", "--m", "5", "--beta", "2"]) == 0


def test_row_mismatch(toy_files, tmp_path):
    inst, _ = toy_files
    sc = tmp_path / "s.bin"
    write_scenario_file(sc, np.ones((4, 2), dtype=np.uint32))
    assert main(["split-eval", "--instance", inst, "--scenarios", str(sc)]) == 2


def test_split_eval_csv_embeds_config_and_sidecar(toy_files, tmp_path):
    inst, sc = toy_files
    out = tmp_path / "r.csv"
    assert main(["split-eval", "--instance", inst, "--scenarios", sc, "--out", str(out), "--seed", "5"]) == 0
    text = out.read_text()
    assert f"# instance={inst}" in text and "# seed=5" in text and "# mean=8.0" in text
    assert "scenario,total,routes,values" in text
    meta = json.loads((tmp_path / "r.csv.meta.json").read_text())
    assert meta["mode"] == "single" and meta["batch_size"] == 1 << 20 and "backend" in meta


def _run_outputs(tmp_path, argv, variants):
    blobs = []
    for k, extra in enumerate(variants):
        out = tmp_path / f"o{k}.csv"
        assert main(argv + extra + ["--out", str(out)]) == 0
        blobs.append(out.read_bytes())
    return blobs


VARIANTS = [
    ["--mode", "single", "--batch-size", "1"],
    ["--mode", "multi", "--threads", "2", "--batch-size", "37"],
    ["--mode", "multi", "--threads", "8"],
]


def test_split_eval_byte_identical(tmp_path, toy_files):
    inst = str(tmp_path / "inst.txt")
    from scenario_dp.formats import write_instance_file
    from scenario_dp.saa import euclidean_instance

    write_instance_file(inst, euclidean_instance(20, 40, seed=1))
    argv = ["split-eval", "--instance", inst, "--gen", "uniform:1:10", "--m", "500", "--seed", "2"]
    blobs = _run_outputs(tmp_path, argv, VARIANTS)
    assert blobs[0] == blobs[1] == blobs[2]


def test_saa_bias_byte_identical(tmp_path):
    argv = ["saa-bias", "--n", "5", "--m-list", "10,40", "--reps", "2", "--eval-size", "300",
            "--budget", "15", "--seed", "4"]
    blobs = _run_outputs(tmp_path, argv, VARIANTS)
    assert blobs[0] == blobs[1] == blobs[2]
    assert b"# n=5" in blobs[0]


@pytest.mark.parametrize("cmd", ["saa-convergence", "quality-vs-scenarios"])
def test_other_saa_commands(cmd, tmp_path, capsys):
    argv = [cmd, "--n", "4", "--m-list", "5,20", "--reps", "2", "--eval-size", "200", "--budget", "5"]
    assert main(argv) == 0
    assert "experiment,instance,m,rep,metric,value,elapsed_ms,seed" in capsys.readouterr().out


def test_time_budget_and_scaling(tmp_path, capsys):
    assert main(["time-budget", "--n", "6", "--budgets", "0.02,0.05", "--modes", "single,multi:2", "--m", "50"]) == 0
    assert "best_cost" in capsys.readouterr().out
    assert main(["time-budget", "--n", "6", "--modes", "turbo"]) == 2
    assert main(["scaling-bench", "--n", "8", "--m-list", "100,1000", "--repeats", "1"]) == 0
    assert "log-log slope" in capsys.readouterr().out


@pytest.mark.parametrize("kind", ["split", "dsirp"])
def test_mem_report(kind, capsys):
    assert main(["mem-report", "--kind", kind, "--n", "10", "--capacity", "10", "--m-list", "100,200", "--measure"]) == 0
    out = capsys.readouterr().out
    assert out.count("predicted=") == 2 and "ratio=" in out


def test_gen_scenarios_round_trip(tmp_path, toy_files, capsys):
    inst, _ = toy_files
    sc = tmp_path / "s.bin"
    assert main(["gen-scenarios", "--gen", "uniform:1:3", "--rows", "3", "--m", "6", "--out", str(sc)]) == 0
    assert main(["split-eval", "--instance", inst, "--scenarios", str(sc), "--mode", "multi", "--threads", "2"]) == 0


def test_timing_csv_flag(tmp_path, toy_files):
    inst, _ = toy_files
    t = tmp_path / "t.csv"
    assert main(["split-eval", "--instance", inst, "--gen", "uniform:1:3", "--m", "10", "--batch-size", "4",
                 "--timing-csv", str(t)]) == 0
    assert len(t.read_text().splitlines()) == 4


def test_threads_env_default(monkeypatch):
    monkeypatch.setenv("SCENARIO_DP_THREADS", "3")
    from scenario_dp.cli import _config

    args = build_parser().parse_args(["split-eval", "--mode", "multi"])
    assert _config(args).workers == 3
