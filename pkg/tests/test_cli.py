import json
import subprocess
import sys
from pathlib import Path

from conftest import FIXTURES

PKG = Path(__file__).resolve().parent.parent


def run_cli(*args, env_seed=None):
    import os
    env = dict(os.environ)
    env["PYTHONPATH"] = str(PKG / "src")
    if env_seed is not None:
        env["FLATCHECK_SEED"] = str(env_seed)
    else:
        env.pop("FLATCHECK_SEED", None)
    proc = subprocess.run([sys.executable, "-m", "flatcheck.cli", *args],
                          capture_output=True, text=True, env=env)
    return proc


def test_analyze_exit_codes_and_json():
    p = run_cli("analyze", str(FIXTURES / "chained.flt"), "--json", "--seed", "0")
    assert p.returncode == 0
    doc = json.loads(p.stdout)
    assert doc["verdict"] == "p2_flat"
    assert doc["j_min"] == [4, 0]
    assert doc["timings_ms"] is None
    want_keys = ["verdict", "j_min", "input_permutation", "k_star", "kappa",
                 "flat_outputs", "sigma_trace", "singular_locus", "seed",
                 "timings_ms", "witness", "initializations", "system",
                 "warnings"]
    assert list(doc.keys()) == want_keys

    p = run_cli("analyze", str(FIXTURES / "pendulum.flt"))
    assert p.returncode == 1


def test_analyze_empty_file(tmp_path):
    empty = tmp_path / "empty.flt"
    empty.write_text("")
    p = run_cli("analyze", str(empty))
    assert p.returncode == 64
    assert "error" in p.stderr


def test_parse_error_reports_location(tmp_path):
    bad = tmp_path / "bad.flt"
    bad.write_text("system s\nstate x1\ninput u\ndot x1 = (u\n")
    p = run_cli("analyze", str(bad))
    assert p.returncode == 64
    assert "line 4" in p.stderr


def test_verify_paths(tmp_path):
    p = run_cli("verify", str(FIXTURES / "driftless.flt"), "--prolong", "2,0")
    assert p.returncode == 0
    wrong = tmp_path / "wrong.flt"
    wrong.write_text((FIXTURES / "driftless.flt").read_text().replace(
        "flatoutput x1, x2", "flatoutput x3, x4"))
    p = run_cli("verify", str(wrong), "--prolong", "2,0")
    assert p.returncode == 1
    nothing = tmp_path / "nothing.flt"
    nothing.write_text((FIXTURES / "pendulum.flt").read_text())
    p = run_cli("verify", str(nothing))
    assert p.returncode == 64


def test_verify_without_prolong_uses_analysis():
    p = run_cli("verify", str(FIXTURES / "chained.flt"))
    assert p.returncode == 0, p.stdout + p.stderr


def test_bracket_golden():
    p = run_cli("bracket", str(FIXTURES / "chained.flt"), "g0", "g1", "--pow", "2")
    assert p.returncode == 0
    assert p.stdout.strip() == "d/dx12"
    p = run_cli("bracket", str(FIXTURES / "chained.flt"), "g0", "g1", "--pow", "0")
    assert p.stdout.strip() == "d/du1"
    p = run_cli("bracket", str(FIXTURES / "chained.flt"), "g0", "g2", "--pow", "1")
    assert p.stdout.strip() == "-d/dx22 - u1*d/dx3"


def test_bracket_matches_library_call(chained):
    from flatcheck.prolong import build_prolonged
    from flatcheck.jetgeom import ad_pow
    ps = build_prolonged(chained, [0, 0])
    want = ad_pow(ps.g0, ps.gi[1], 2).render()
    p = run_cli("bracket", str(FIXTURES / "chained.flt"), "g0", "g2", "--pow", "2")
    assert p.stdout.strip() == want


def test_lint():
    p = run_cli("lint", str(FIXTURES / "pendulum.flt"))
    assert p.returncode == 0
    assert "n=6, m=2" in p.stdout


def test_env_seed_override():
    a = run_cli("analyze", str(FIXTURES / "driftless.flt"), "--json",
                env_seed=7)
    doc = json.loads(a.stdout)
    assert doc["seed"] == 7
    b = run_cli("analyze", str(FIXTURES / "driftless.flt"), "--json",
                "--seed", "3", env_seed=7)
    assert json.loads(b.stdout)["seed"] == 3


def test_exit_codes_are_total():
    # every run above mapped to one of {0, 1, 2, 64}; spot-check usage errors
    p = run_cli("analyze", "/nonexistent.flt")
    assert p.returncode == 64
    p = run_cli("bracket", str(FIXTURES / "chained.flt"), "g0", "g9")
    assert p.returncode == 64


def test_json_validates_against_published_schema():
    import jsonschema
    schema = json.loads((PKG / "schema" / "report.schema.json").read_text())
    for name in ("chained", "pendulum", "threeinput"):
        p = run_cli("analyze", str(FIXTURES / (name + ".flt")), "--json")
        doc = json.loads(p.stdout)
        jsonschema.validate(doc, schema)


def test_analyze_trace_text_mode():
    p = run_cli("analyze", str(FIXTURES / "driftless.flt"), "--trace")
    assert p.returncode == 0
    assert "sigma_Delta" in p.stdout and "initialization keep=" in p.stdout


def test_inconclusive_exit_code():
    p = run_cli("analyze", str(FIXTURES / "chained.flt"), "--max-k", "1")
    assert p.returncode == 2


def test_verify_all_flat_fixtures_end_to_end():
    for name in ("clm", "threeinput"):
        p = run_cli("verify", str(FIXTURES / (name + ".flt")))
        assert p.returncode == 0, p.stdout + p.stderr


def test_prolong_flag_length_checked():
    p = run_cli("verify", str(FIXTURES / "chained.flt"), "--prolong", "1,2,3")
    assert p.returncode == 64
