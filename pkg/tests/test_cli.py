from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from qclab.cli import COMMANDS, EXIT_NUMERICAL, EXIT_OK, EXIT_PRECONDITION, EXIT_SCHEMA, EXIT_UNKNOWN, main, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
HEAVY = {"beurling-selftest", "beurling-weighted"}
SMALL = {
    "beurling-selftest": {"n": 256, "probes": 4, "seed": 0},
    "beurling-weighted": {"gauge": {"kind": "constant", "t": 1}, "level_range": [2, 3], "budget": 4,
                          "c_pack_max": 4, "grids": [64], "trials": 1, "spikes": 1, "seed": 0},
}


def write(tmp_path, cfg, name="cfg.json") -> Path:
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


@pytest.mark.parametrize("command", sorted(set(COMMANDS) - HEAVY))
def test_shipped_configs_run(command, tmp_path):
    out = tmp_path / "out"
    assert run(command, CONFIGS / f"{command}.json", out) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == command and man["exit_status"] == 0 and man["note"] is None
    assert set(man) >= {"config_sha256", "seed", "versions", "artifacts"}
    for name in man["artifacts"]:
        assert (out / name).exists()


@pytest.mark.parametrize("command", sorted(HEAVY))
def test_heavy_commands_on_small_configs(command, tmp_path):
    assert run(command, write(tmp_path, SMALL[command]), tmp_path / "out") == EXIT_OK


def test_reruns_are_byte_identical(tmp_path):
    for command in ("cantor-build", "content", "verify-thm12"):
        a, b = tmp_path / f"{command}-a", tmp_path / f"{command}-b"
        run(command, CONFIGS / f"{command}.json", a)
        run(command, CONFIGS / f"{command}.json", b)
        for f in a.iterdir():
            assert f.read_bytes() == (b / f.name).read_bytes()


def test_seed_override_changes_placement(tmp_path):
    cfg = CONFIGS / "cantor-build.json"
    run("cantor-build", cfg, tmp_path / "a")
    run("cantor-build", cfg, tmp_path / "b", seed=8)
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 8
    assert (tmp_path / "a" / "tree.csv").read_text() != (tmp_path / "b" / "tree.csv").read_text()


def test_exit_codes(tmp_path):
    good = CONFIGS / "capacity.json"
    assert run("nope", good, tmp_path / "u") == EXIT_UNKNOWN
    assert run("capacity", write(tmp_path, {"alpha": 1}), tmp_path / "s") == EXIT_SCHEMA
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{")
    assert run("capacity", bad_json, tmp_path / "j") == EXIT_SCHEMA
    cfg = json.loads(good.read_text()) | {"alpha": 1, "p": 2}  # alpha p = 2 is not admissible
    assert run("capacity", write(tmp_path, cfg, "pre.json"), tmp_path / "p") == EXIT_PRECONDITION
    man = json.loads((tmp_path / "p" / "manifest.json").read_text())
    assert man["exit_status"] == EXIT_PRECONDITION and man["note"]
    # a 64-pixel grid cannot meet the disk self-test tolerances
    assert run("beurling-selftest", write(tmp_path, {"n": 64, "probes": 2}, "st.json"), tmp_path / "n") == EXIT_NUMERICAL


def test_main_entry_point(tmp_path):
    src = tmp_path / "exponents.json"
    shutil.copy(CONFIGS / "exponents.json", src)
    assert main(["exponents", "--config", str(src), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "exponents.csv").read_text().splitlines()
    assert rows[0] == "K,t,t_prime,q,beta,alpha,p" and len(rows) == 28
    with pytest.raises(SystemExit):
        main(["exponents"])
