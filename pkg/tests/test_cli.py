import collections
import json
import subprocess
import sys

import pytest
from scipy import stats

from baxlab import io
from baxlab.cli import EXIT_IO, EXIT_OK, EXIT_PROPERTY, EXIT_USAGE, main
from baxlab.perm import enumerate_baxter


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_sample_size_one(capsys):
    code, out, _ = run(capsys, "sample", "--type", "perm", "--size", "1", "--seed", "7")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["payload"] == {"type": "permutation", "values": [1]}
    assert doc["config"]["seed"] == 7 and doc["config"]["realized_sizes"] == [1]


def test_sample_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"s{k}.json"
        subprocess.run([sys.executable, "-m", "baxlab.cli", "sample", "--type", "walk", "--size", "4",
                        "--window", "0.5", "--count", "3", "--seed", "11", "--out", str(path)], check=True)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    sizes = json.loads(outs[0])["config"]["realized_sizes"]
    assert all(4 <= m <= 6 for m in sizes)


@pytest.mark.parametrize("kind", ["perm", "walk", "coal", "map"])
def test_sample_types_render(capsys, tmp_path, kind):
    path = tmp_path / "a.json"
    assert main(["sample", "--type", kind, "--size", "3", "--seed", "3", "--out", str(path)]) == EXIT_OK
    assert io.read_artifact(path)["payload"]
    code, out, _ = run(capsys, "render", "--input", str(path))
    assert code == EXIT_OK and out.startswith("<svg")
    again = run(capsys, "render", "--input", str(path))[1]
    assert out == again


def test_uniform_over_seeds(capsys):
    counts = collections.Counter()
    for seed in range(1500):
        _, out, _ = run(capsys, "sample", "--type", "perm", "--size", "3", "--seed", str(seed))
        counts[tuple(json.loads(out)["payload"]["values"])] += 1
    support = {tuple(s.values) for s in enumerate_baxter(3)}
    assert set(counts) == support
    assert stats.chisquare([counts[s] for s in sorted(support)]).pvalue > 0.01


@pytest.mark.slow
def test_uniform_size_three_1e5(tmp_path):
    path = tmp_path / "b.json"
    assert main(["sample", "--type", "perm", "--size", "3", "--count", "100000",
                 "--seed", "1", "--out", str(path)]) == EXIT_OK
    items = io.read_artifact(path)["payload"]["items"]
    counts = collections.Counter(tuple(p["values"]) for p in items)
    assert len(counts) == 6
    assert stats.chisquare(list(counts.values())).pvalue > 0.01


def test_exit_codes(capsys, tmp_path):
    assert run(capsys, "sample", "--size", "0")[0] == EXIT_USAGE
    assert run(capsys, "sample", "--size", "2", "--window", "-1")[0] == EXIT_USAGE
    assert run(capsys, "nope")[0] == EXIT_USAGE
    assert run(capsys, "sample")[0] == EXIT_USAGE
    assert run(capsys, "render", "--input", str(tmp_path / "missing.json"))[0] == EXIT_IO
    assert run(capsys, "sample", "--size", "1", "--out", str(tmp_path / "no" / "dir.json"))[0] == EXIT_IO
    code, _, err = run(capsys, "sample", "--size", "400", "--max-trials", "1000")
    assert code == EXIT_IO and "budget" in err
    assert run(capsys, "limit", "--paths", "3")[0] == EXIT_USAGE


def test_check_pass_and_fail(capsys, tmp_path):
    code, out, _ = run(capsys, "check", "--suite", "diagram", "--max-size", "5", "--random-count", "2")
    assert code == EXIT_OK
    assert out.startswith("PASS diagram: 125 instances (123 exhaustive, 2 randomized)")
    path = tmp_path / "rep.json"
    code, out, _ = run(capsys, "check", "--suite", "diagram", "--max-size", "4", "--mutate", "--out", str(path))
    assert code == EXIT_PROPERTY
    assert "FAIL diagram" in out and "counterexample" in out
    rep = io.read_artifact(path)["payload"]["reports"][0]
    assert rep["counterexample"]["size"] == 2


def test_check_all(capsys):
    code, out, _ = run(capsys, "check", "--max-size", "4", "--random-count", "1", "--random-size", "50")
    assert code == EXIT_OK
    assert out.count("PASS") == 6


def test_stats_cocc_single_point(capsys):
    code, out, _ = run(capsys, "stats", "--kind", "cocc", "--pattern", "1", "--sizes", "2", "4",
                       "--samples", "5", "--window-samples", "50")
    assert code == EXIT_OK
    rows = out.strip().splitlines()
    assert rows[0] == "source,size,samples,estimate,stderr,status"
    for line in rows[1:]:
        assert line.split(",")[3] == "1.0"


def test_stats_other_kinds(capsys):
    code, out, _ = run(capsys, "stats", "--kind", "trajectory_law", "--k", "4", "--samples", "2000")
    assert code == EXIT_OK and out.startswith("k,samples")
    code, out, _ = run(capsys, "stats", "--kind", "sde_ks", "--dt", "0.01", "--paths", "200")
    assert code == EXIT_OK and len(out.strip().splitlines()) == 2
    code, out, _ = run(capsys, "stats", "--kind", "alpha_expectation", "--dt", "0.01", "--paths", "200")
    assert code == EXIT_OK and out.startswith("eps,")
    code, out, _ = run(capsys, "limit", "--sde", "--dt", "0.01", "--paths", "5")
    assert code == EXIT_OK and len(out.strip().splitlines()) == 6
