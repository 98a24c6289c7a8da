import csv
import io
import json

import pytest

from conftest import GOLDEN
from patrolsynth.cli import main
from patrolsynth.experiments import compare
from patrolsynth.io import BUILTIN_SPECS, load_game_spec, load_strategy, parse_game_spec
from patrolsynth.synthesis import synthesize


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def example2_file(tmp_path):
    path = tmp_path / "example2.json"
    path.write_text(json.dumps(BUILTIN_SPECS["example2"]))
    return path


def test_bound_json(capsys, example2_file):
    code, out, _ = run(capsys, "bound", example2_file, "-k", 2, "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["rho"] == pytest.approx(5.0, abs=1e-9)
    assert [g["Q"] for g in doc["groups"]] == pytest.approx([1 / 2, 2 / 3, 5 / 6], abs=1e-9)


def test_bound_text_example1(capsys):
    code, out, _ = run(capsys, "bound", "builtin:example1", "-k", 1)
    assert code == 0
    assert "0.666667" in out


def test_bound_surveillance_scale(capsys):
    code, out, _ = run(capsys, "bound", "builtin:surveillance", "-k", 6000, "--format", "json")
    assert code == 0
    assert 304_000 <= json.loads(out)["rho"] <= 312_000


def test_synthesize_round_trip(capsys, tmp_path, example2_file):
    path = tmp_path / "strategy.json"
    code, out, _ = run(capsys, "synthesize", example2_file, "-k", 2, "--seed", 4, "-o", path)
    assert code == 0
    assert "level of protection: 5.000000" in out
    gs, _ = load_game_spec(str(example2_file))
    assert load_strategy(path) == synthesize(gs, 2, seed=4)


def test_synthesize_example1_json(capsys):
    code, out, _ = run(capsys, "synthesize", "builtin:example1", "-k", 1, "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["level"] == pytest.approx(GOLDEN, abs=1e-9)
    assert doc["upper_bound"] == pytest.approx(2 / 3, abs=1e-9)


def test_synthesize_is_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert run(capsys, "synthesize", "builtin:example2", "-k", 2, "--seed", 1, "-o", path)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_patrollers(capsys):
    code, out, _ = run(capsys, "patrollers", "builtin:example2", "--protection", 5, "--format", "json")
    assert code == 0
    assert json.loads(out) == {"protection": 5.0, "k_bound": 2, "k_eta": 2, "k_sigma": 3}


def test_patrollers_zero_target(capsys):
    code, out, _ = run(capsys, "patrollers", "builtin:example2", "--protection", 0)
    assert code == 0
    assert "without any patroller" in out


def test_patrollers_infeasible_exit(capsys):
    code, _, err = run(capsys, "patrollers", "builtin:example2", "--protection", 7)
    assert code == 3
    assert "infeasible" in err


def test_compare_example1(capsys):
    code, out, _ = run(capsys, "compare", "builtin:example1", "-k", 1, "--format", "csv")
    assert code == 0
    (row,) = csv.DictReader(io.StringIO(out))
    assert float(row["level_eta"]) == pytest.approx(GOLDEN, abs=1e-9)
    assert float(row["level_sigma"]) == pytest.approx(5 / 9, abs=1e-9)


def test_compare_full_coverage(capsys):
    code, out, _ = run(capsys, "compare", "builtin:example2", "-k", 6, "--format", "json")
    doc = json.loads(out)
    assert doc["level_eta"] == doc["level_sigma"] == doc["bound"] == 6.0


@pytest.mark.parametrize("argv", [
    ("bound", "builtin:example2", "-k", 7),
    ("bound", "builtin:nope", "-k", 1),
    ("bound", "missing.json", "-k", 1),
])
def test_validation_exit(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_unknown_spec_field(capsys, tmp_path):
    doc = dict(BUILTIN_SPECS["example1"], colour="red")
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, _, err = run(capsys, "bound", path, "-k", 1)
    assert code == 2
    assert "colour" in err


def test_nonpositive_group_exit(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"detection_prob": 0.5, "groups": [{"count": 0, "attack_length": 2, "cost": 1}]}))
    assert run(capsys, "bound", path, "-k", 1)[0] == 2


def test_sweep_rows_and_determinism(capsys, tmp_path):
    sweep = tmp_path / "sweep.json"
    sweep.write_text(json.dumps({"game": BUILTIN_SPECS["example2"], "scale": {"start": 1, "stop": 2, "step": 0.25},
                                 "patrollers": 2}))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "sweep", sweep, "-o", a)[0] == 0
    assert run(capsys, "sweep", sweep, "-o", b, "--workers", 2)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(io.StringIO(a.read_text())))
    assert [float(r["x"]) for r in rows] == [1.0, 1.25, 1.5, 1.75, 2.0]
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    assert "nearest" in meta["count_rounding"]


def test_single_point_sweep_equals_compare(capsys):
    code, out, _ = run(capsys, "sweep", "builtin:example1", "--scale", 1, 1, 1, "-k", 1)
    assert code == 0
    (row,) = csv.DictReader(io.StringIO(out))
    c = compare(parse_game_spec(BUILTIN_SPECS["example1"])[0], 1)
    assert float(row["bound"]) == c.bound
    assert float(row["level_eta"]) == c.level_eta
    assert float(row["level_sigma"]) == c.level_sigma


def test_protection_sweep(capsys):
    code, out, _ = run(capsys, "sweep", "builtin:example2", "--protection-range", 1, 6, 1)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["protection", "k_bound", "k_eta", "k_sigma"]
    assert len(rows) == 6
    assert all(int(r["k_bound"]) <= int(r["k_eta"]) <= int(r["k_sigma"]) for r in rows)


def test_scale_sweep_needs_patrollers(capsys):
    assert run(capsys, "sweep", "builtin:example1", "--scale", 1, 2, 1)[0] == 2


def test_simulate(capsys, tmp_path):
    path = tmp_path / "s.json"
    run(capsys, "synthesize", "builtin:example2", "-k", 2, "-o", path)
    code, out, _ = run(capsys, "simulate", path, "builtin:example2", "--trials", 50_000, "--seed", 3,
                       "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["exact_damage"] == pytest.approx(1.0)
    assert abs(doc["mean_damage"] - 1.0) <= 3 * doc["stderr"]


def test_simulate_no_attack(capsys, tmp_path):
    path = tmp_path / "s.json"
    run(capsys, "synthesize", "builtin:example2", "-k", 2, "-o", path)
    code, out, _ = run(capsys, "simulate", path, "builtin:example2", "--no-attack", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["mean_damage"] == 0.0 and doc["empirical_level"] == 6.0
