import argparse
import json
import subprocess
import sys

import pytest

from lnsilp.cli import main, parse_float_list, parse_int_list


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--kind", "mvc", "--n", "25", "--scale", "0.04", "--seed", "3", "--out-dir", str(out)]) == 0
    return out


def read_json(path):
    return json.loads(path.read_text())


def test_range_parsing():
    assert parse_int_list("2..5") == [2, 3, 4, 5]
    assert parse_int_list("1,3") == [1, 3]
    assert parse_float_list("1..3") == [1.0, 2.0, 3.0]
    with pytest.raises(argparse.ArgumentTypeError):
        parse_int_list("5..2")


def test_generate_writes_disjoint_splits(generated):
    manifest = read_json(generated / "manifest.json")
    sizes = {k: len(v) for k, v in manifest["splits"].items()}
    assert sizes == {"train": 4, "val": 1, "test": 2}
    ids = [e["id"] for split in manifest["splits"].values() for e in split]
    assert len(ids) == len(set(ids))
    seeds = [e["seed"] for split in manifest["splits"].values() for e in split]
    assert len(seeds) == len(set(seeds))
    assert all((generated / e["file"]).exists() for split in manifest["splits"].values() for e in split)
    assert read_json(generated / "run.json")["command"] == "generate"


def test_generate_is_seeded(generated, tmp_path):
    main(["generate", "--kind", "mvc", "--n", "25", "--scale", "0.04", "--seed", "3", "--out-dir", str(tmp_path)])
    a = (generated / "instances" / "test" / "mvc-test000.json").read_text()
    assert (tmp_path / "instances" / "test" / "mvc-test000.json").read_text() == a


def test_solve_twice_gives_identical_records(generated, tmp_path):
    inst = str(generated / "instances" / "test" / "mvc-test000.json")
    for run in ("a", "b"):
        args = ["solve", "--method", "random-lns", "--instance", inst, "--iters", "3", "--node-limit", "3",
                "--time-limit", "100", "--out-dir", str(tmp_path / run)]
        assert main(args) == 0
    sol = [read_json(tmp_path / run / "solution.json") for run in ("a", "b")]
    assert sol[0]["values"] == sol[1]["values"]
    rows = [(tmp_path / run / "records.csv").read_text().splitlines() for run in ("a", "b")]
    strip = [[",".join(r.split(",")[:4] + r.split(",")[5:]) for r in rs] for rs in rows]
    assert strip[0] == strip[1]
    run = read_json(tmp_path / "a" / "run.json")
    assert run["config"]["seed"] == 0 and run["argv"][0] == "solve"
    assert run["instances"][0]["sha256"]


def test_bc_without_demos_exits_with_message(generated, tmp_path, capsys):
    code = main(["train", "--method", "bc", "--instances", str(generated / "instances" / "train"),
                 "--out-dir", str(tmp_path)])
    assert code == 2
    assert "collect-demos" in capsys.readouterr().err


def test_sweep_grid(generated, tmp_path, capsys):
    assert main(["sweep", "--instances", str(generated / "instances" / "val"), "--k", "2..5", "--t", "0.01,0.02,0.03",
                 "--seeds", "0", "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "k,t_limit_s,ratio_mean,ratio_stderr,n"
    assert len(lines) == 13
    assert "selected k=" in capsys.readouterr().out
    assert set(read_json(tmp_path / "run.json")["resolved"]["selected"]) == {"k", "t_limit_s"}


def test_pipeline_demos_train_bench_profile_replay(generated, tmp_path):
    train = str(generated / "instances" / "train")
    test = str(generated / "instances" / "test")
    fast = ["--iters", "2", "--node-limit", "2", "--time-limit", "100"]
    assert main(["collect-demos", "--instances", train, "--m", "2", "--iters", "2",
                 "--time-limit", "0.05", "--out-dir", str(tmp_path / "demos")]) == 0
    assert main(["train", "--method", "bc", "--instances", train, "--demos", str(tmp_path / "demos" / "demos.json"),
                 "--epochs", "2", "--pca-dim", "8", "--hidden", "6", "--out-dir", str(tmp_path / "bc")]) == 0
    bench = tmp_path / "bench"
    assert main(["bench", "--instances", test, "--methods", "random-lns,bc-lns,direct-solver,local-ratio",
                 "--policy", f"bc-lns={tmp_path / 'bc' / 'policy.json'}", *fast, "--out-dir", str(bench)]) == 0
    header = (bench / "records.csv").read_text().splitlines()[0]
    assert header == "instance,method,seed,iter,t_cum_s,objective"
    assert main(["profile", "--records", str(bench / "records.csv"), "--out-dir", str(tmp_path / "prof")]) == 0
    assert (tmp_path / "prof" / "profile.csv").exists()
    assert main(["replay", "--run", str(bench / "run.json"), "--out-dir", str(tmp_path / "replay")]) == 0
    assert read_json(tmp_path / "replay" / "run.json")["resolved"]["identical"] is True


def test_rl_and_ft_training(generated, tmp_path):
    train = str(generated / "instances" / "train")
    common = ["--instances", train, "--iters", "2", "--node-limit", "2", "--time-limit", "100",
              "--epochs", "1", "--pca-dim", "4", "--hidden", "3"]
    assert main(["train", "--method", "ft", "--m", "1", *common, "--out-dir", str(tmp_path / "ft")]) == 0
    assert len(read_json(tmp_path / "ft" / "policy.json")["stepwise"]) == 2
    assert main(["train", "--method", "rl", "--updates", "1", "--trajectories", "1", *common,
                 "--out-dir", str(tmp_path / "rl")]) == 0


@pytest.mark.parametrize("argv", [
    ["solve", "--method", "random-lns"],
    ["generate", "--kind", "tsp"],
    ["sweep", "--instances", "x", "--time-limit", "-1"],
    ["bench", "--instances", "x", "--iters", "ten"],
])
def test_bad_arguments_exit_nonzero(argv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main([*argv, "--out-dir", str(tmp_path)])
    assert exc.value.code != 0


def test_missing_instances_and_unknown_method(tmp_path, generated):
    assert main(["bench", "--instances", str(tmp_path / "nope"), "--out-dir", str(tmp_path)]) == 2
    inst = str(generated / "instances" / "test" / "mvc-test000.json")
    assert main(["solve", "--method", "annealing", "--instance", inst, "--out-dir", str(tmp_path)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "lnsilp", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("generate", "sweep", "collect-demos", "train", "solve", "bench", "profile"):
        assert cmd in res.stdout
