import csv
import json
import math
import subprocess
import sys

import pytest

from arcdyn import bench


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("syn")
    assert bench.main(["gen", "--n", "600", "--ntest", "60", "--d", "8", "--cond", "100",
                       "--seed", "2", "--out", str(out)]) == 0
    return out


def _run(data, out, *extra):
    return bench.main(["run", "--data", str(data), "--out", str(out), *extra])


def _trace(path):
    return bench.read_trace(path)


def test_gen_writes_files_deterministically(data, tmp_path):
    assert {p.name for p in data.iterdir()} == {"train.libsvm", "test.libsvm", "manifest"}
    again = tmp_path / "again"
    bench.main(["gen", "--n", "600", "--ntest", "60", "--d", "8", "--cond", "100", "--seed", "2",
                "--out", str(again)])
    for name in ("train.libsvm", "test.libsvm", "manifest"):
        assert (data / name).read_bytes() == (again / name).read_bytes()
    assert "seed = 2" in (data / "manifest").read_text()


def test_trace_schema_line_and_columns(data, tmp_path):
    assert _run(data, tmp_path, "--seeds", "1") == 0
    lines = (tmp_path / "trace_seed0.csv").read_text().splitlines()
    assert lines[0] == bench.TRACE_SCHEMA
    assert lines[1].split(",") == bench.TRACE_FIELDS
    rows = _trace(tmp_path / "trace_seed0.csv")
    assert rows[-1]["outcome"] == "terminated"
    assert all(math.isfinite(float(r["test_loss"])) for r in rows)


def test_fixed_and_full_sample_sizes(data, tmp_path):
    assert _run(data, tmp_path / "fix", "--variant", "fix", "--p", "0.05") == 0
    sizes = {int(r["sample_size"]) for r in _trace(tmp_path / "fix" / "trace_seed0.csv")[:-1]}
    assert sizes == {math.ceil(0.05 * 600)}
    assert _run(data, tmp_path / "full", "--variant", "full") == 0
    sizes = {int(r["sample_size"]) for r in _trace(tmp_path / "full" / "trace_seed0.csv")[:-1]}
    assert sizes == {600}


def test_config_precedence(data, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# settings\nvariant = fix\np = 0.1\nmax_iters = 2\n")
    assert _run(data, tmp_path / "a", "--config", str(cfg), "--p", "0.2") == 0
    rows = _trace(tmp_path / "a" / "trace_seed0.csv")
    assert int(rows[0]["sample_size"]) == 120
    assert len(rows) <= 3


def test_bad_input_exit_two(data, tmp_path):
    assert _run(tmp_path / "missing", tmp_path / "o") == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 3\n")
    assert _run(data, tmp_path / "o", "--config", str(bad)) == 2
    assert _run(data, tmp_path / "o", "--variant", "fix") == 2  # no p
    assert bench.main(["run", "--bogus"]) == 2
    (tmp_path / "t.libsvm").write_text("1 1:0.5\n7 1:1\n")
    assert bench.main(["run", "--train", str(tmp_path / "t.libsvm"), "--test",
                       str(tmp_path / "t.libsvm"), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_breakdown_exit_three(tmp_path):
    (tmp_path / "train.libsvm").write_text("1 1:1e308\n0 1:-1e308\n")
    (tmp_path / "test.libsvm").write_text("1 1:1\n")
    assert _run(tmp_path, tmp_path / "o", "--variant", "full", "--sigma0", "1e-300",
                "--sigma-min", "1e-300", "--eps", "1e-300") == 3


def test_compare_self_and_mismatch(data, tmp_path):
    _run(data, tmp_path / "a", "--seeds", "2")
    _run(data, tmp_path / "b", "--seeds", "3", "--variant", "full")
    out = tmp_path / "cmp.csv"
    ref = str(tmp_path / "a" / "summary.json")
    assert bench.main(["compare", "--ref", ref, ref, "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [float(rows[1][k]) for k in ("save_w", "save_b", "save_m")] == [0.0, 0.0, 0.0]
    assert bench.main(["compare", "--ref", ref, str(tmp_path / "b" / "summary.json")]) == 2


def test_profile_csv(data, tmp_path):
    _run(data, tmp_path / "a", "--seeds", "2")
    _run(data, tmp_path / "b", "--seeds", "2", "--variant", "full")
    out = tmp_path / "prof.csv"
    assert bench.main(["profile", "--solver", f"dyn={tmp_path / 'a' / 'summary.json'}",
                       "--solver", f"full={tmp_path / 'b' / 'summary.json'}",
                       "--points", "5", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["tau", "dyn", "full"]
    assert len(rows) == 6
    assert sum(float(v) for v in rows[1][1:]) >= 1.0  # every problem has a best solver
    assert bench.main(["profile", "--solver", "x=" + str(tmp_path / "a" / "summary.json")]) == 2


def test_summary_contents(data, tmp_path):
    _run(data, tmp_path, "--seeds", "2", "--check", "--series")
    s = json.loads((tmp_path / "summary.json").read_text())
    assert [r["seed"] for r in s["runs"]] == [0, 1]
    assert all(r["law_violations"] == 0 for r in s["runs"])
    assert (tmp_path / "series_seed1.dat").exists()


def test_parallel_cli_byte_identical(data, tmp_path):
    _run(data, tmp_path / "w1", "--seeds", "3", "--workers", "1")
    _run(data, tmp_path / "w3", "--seeds", "3", "--workers", "3")
    for name in ("trace_seed0.csv", "trace_seed2.csv", "summary.json"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w3" / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "arcdyn", "gen", "--n", "20", "--ntest", "5",
                           "--d", "2", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "arcdyn", "nope"], capture_output=True, text=True)
    assert proc.returncode == 2
