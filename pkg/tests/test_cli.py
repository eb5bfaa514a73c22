"""Command-line interface: config parsing, caching, reports, exit codes."""
import math
import re

import pytest
from click.testing import CliRunner

from dimcert.cli import main, parse_scenario

TSIRELSON = 2 * math.sqrt(2)

CHSH_CFG = """\
# plain CHSH in probability form
[scenario]
type = bell
settings = 2,2
outcomes = 2
dim = 2
level = 2

[functional]
name = "chsh"
E:0,0 F:0,0  1
E:0,0 F:0,1 -1
E:0,1 F:0,0 -1
E:0,1 F:0,1  1
E:0,0 F:1,0  1
E:0,0 F:1,1 -1
E:0,1 F:1,0 -1
E:0,1 F:1,1  1
E:1,0 F:0,0  1
E:1,0 F:0,1 -1
E:1,1 F:0,0 -1
E:1,1 F:0,1  1
E:1,0 F:1,0 -1
E:1,0 F:1,1  1
E:1,1 F:1,0  1
E:1,1 F:1,1 -1
"""


@pytest.fixture
def runner():
    return CliRunner()


def _value(output, key):
    m = re.search(rf"^{key}: (\S+)$", output, re.M)
    assert m, f"{key!r} missing from report:\n{output}"
    return float(m.group(1))


def test_presets_listing(runner):
    res = runner.invoke(main, ["presets"])
    assert res.exit_code == 0
    for name in ("chsh", "i3322", "pironio", "tripartite", "qrac-2", "mod3"):
        assert name in res.output


def test_bound_preset_chsh(runner):
    res = runner.invoke(main, ["bound", "--preset", "chsh", "--seed", "0"])
    assert res.exit_code == 0, res.output
    assert "dimcert-report v1" in res.output
    assert abs(_value(res.output, "upper_bound") - TSIRELSON) < 1e-6
    assert abs(_value(res.output, "lower_bound") - TSIRELSON) < 1e-6


def test_config_file_matches_preset(runner, tmp_path):
    cfg = tmp_path / "chsh.cfg"
    cfg.write_text(CHSH_CFG)
    sc, functional, overrides = parse_scenario(cfg)
    assert functional.name == "chsh"
    a = runner.invoke(main, ["bound", "--scenario", str(cfg), "--seed", "0"])
    b = runner.invoke(main, ["bound", "--preset", "chsh", "--seed", "0"])
    assert a.exit_code == 0, a.output
    assert abs(_value(a.output, "upper_bound") - _value(b.output, "upper_bound")) < 1e-9


def test_config_parse_error_reports_position(runner, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[scenario]\ntype = bell\nsettings = 2,2\n"
                   "outcomes = 2\n\n[functional]\nE:0,0 Q:0,0 1\n")
    res = runner.invoke(main, ["bound", "--scenario", str(cfg)])
    assert res.exit_code == 1
    assert f"{cfg}:7:" in res.output  # line of the bad factor
    assert "Q" in res.output


def test_config_bad_int_list_reports_position(runner, tmp_path):
    cfg = tmp_path / "bad2.cfg"
    cfg.write_text("[scenario]\ntype = bell\nsettings = two,2\n\n[functional]\nE:0,0 F:0,0 1\n")
    res = runner.invoke(main, ["bound", "--scenario", str(cfg)])
    assert res.exit_code == 1
    assert f"{cfg}:3:" in res.output
    assert "settings" in res.output


def test_semantic_error_names_field(runner):
    res = runner.invoke(main, ["bound", "--preset", "chsh", "--ranks", "2,1;1,1;1,1;1,1"])
    assert res.exit_code == 1
    assert "rank sum" in res.output


def test_mutually_exclusive_sources(runner, tmp_path):
    res = runner.invoke(main, ["bound"])
    assert res.exit_code == 1
    cfg = tmp_path / "chsh.cfg"
    cfg.write_text(CHSH_CFG)
    res = runner.invoke(main, ["bound", "--preset", "chsh", "--scenario", str(cfg)])
    assert res.exit_code == 1


def test_ranks_all_rejected_for_single_bound(runner):
    res = runner.invoke(main, ["bound", "--preset", "chsh", "--ranks", "all"])
    assert res.exit_code == 1
    assert "sweep" in res.output.lower()


def test_basis_cache_roundtrip(runner, tmp_path):
    cache = tmp_path / "cache"
    args = ["basis", "--preset", "chsh", "--seed", "0", "--cache", str(cache)]
    first = runner.invoke(main, args)
    second = runner.invoke(main, args)
    assert first.exit_code == 0 and second.exit_code == 0
    assert "cache: stored" in first.output
    assert "cache: hit" in second.output
    n1 = _value(first.output, "span_dimension")
    assert n1 == _value(second.output, "span_dimension")
    # cached span yields the same bound
    a = runner.invoke(main, ["bound", "--preset", "chsh", "--cache", str(cache)])
    b = runner.invoke(main, ["bound", "--preset", "chsh"])
    assert abs(_value(a.output, "upper_bound") - _value(b.output, "upper_bound")) < 1e-9


def test_cache_env_var(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("DIMCERT_CACHE", str(tmp_path / "envcache"))
    res = runner.invoke(main, ["basis", "--preset", "chsh"])
    assert res.exit_code == 0
    assert "cache: stored" in res.output
    assert list((tmp_path / "envcache").glob("*.basis"))


def test_out_file_matches_stdout(runner, tmp_path):
    out = tmp_path / "report.txt"
    res = runner.invoke(main, ["bound", "--preset", "chsh", "--out", str(out)])
    assert res.exit_code == 0
    assert out.read_text() == res.output


def test_dump_sdp(runner):
    res = runner.invoke(main, ["bound", "--preset", "chsh", "--dump-sdp"])
    assert res.exit_code == 0
    assert "psd_blocks" in res.output
    assert "# dimcert standard-form dump" in res.output


def test_seesaw_command(runner):
    res = runner.invoke(main, ["seesaw", "--preset", "chsh", "--restarts", "4", "--seed", "0"])
    assert res.exit_code == 0, res.output
    assert abs(_value(res.output, "lower_bound") - TSIRELSON) < 1e-7


def test_sweep_command(runner):
    res = runner.invoke(main, ["sweep", "--preset", "chsh", "--seed", "0"])
    assert res.exit_code == 0, res.output
    assert abs(_value(res.output, "upper_bound") - TSIRELSON) < 1e-6
    assert "best_ranks:" in res.output
    assert _value(res.output, "failed_solves") == 0


def test_unknown_preset(runner):
    res = runner.invoke(main, ["bound", "--preset", "nope"])
    assert res.exit_code == 1


def test_report_reproducible_modulo_timing(runner):
    args = ["bound", "--preset", "chsh", "--seed", "5"]
    # drop the timing column/lines; everything else must be identical
    strip = lambda s: [
        re.sub(r"\s+\d+\.\d+$", "", l) for l in s.splitlines() if "time_s" not in l
    ]
    assert strip(runner.invoke(main, args).output) == strip(runner.invoke(main, args).output)
