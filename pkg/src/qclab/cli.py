"""Batch driver: ``qclab <command> --config <path> --out <dir> [--seed N]``.

Each command validates its JSON config, writes CSV/JSON artifacts and a
manifest.json (config hash, seed, command, versions, artifact hashes).
Exit codes: 0 ok, 2 precondition failure, 3 numerical flag, 64 unknown
command, 65 schema violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import platform
import sys
import warnings
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy
import sympy

from . import __version__
from .beurling import build_packing, build_weight, disk_selftest, packing_grid, weighted_norm_harness
from .cantor import CantorParams, place_disks, sharpness_harness, sharp_radius, tree_csv, wolff_on_cantor
from .distortion import indices_from_target, t_prime, verify_thm11_on_cantor, verify_thm12_on_cantor
from .gauge import constant_gauge, measure_gauge
from .measures import (
    DiscreteMeasure,
    DyadicCellSet,
    UncoverableError,
    best_cover,
    content_oracle,
    dyadic_candidates,
    frostman_report,
)
from .potentials import RieszIndex, WolffOptions, capacity_lower

log = logging.getLogger("qclab")

EXIT_OK, EXIT_PRECONDITION, EXIT_NUMERICAL = 0, 2, 3
EXIT_UNKNOWN, EXIT_SCHEMA = 64, 65


class NumericalFlag(RuntimeError):
    """A computation finished but flagged divergence or a failed check."""


def _schema() -> dict:
    return json.loads(resources.files("qclab").joinpath("schemas/config.json").read_text(encoding="utf-8"))


def validate_config(command: str, config: dict) -> None:
    root = _schema()
    jsonschema.Draft202012Validator({**root, "$ref": f"#/$defs/cmd:{command}"}).validate(config)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _encode(v):
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    return float(v)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_encode) + "\n"


# config helpers

def _measure(cfg: dict, base: Path) -> DiscreteMeasure:
    if "csv" in cfg:
        return DiscreteMeasure.from_csv(base / cfg["csv"])
    pts = np.array([complex(x, y) for x, y in cfg["points"]])
    return DiscreteMeasure(pts, np.array(cfg["masses"], dtype=float))


def _gauge(cfg: dict, base: Path):
    if cfg["kind"] == "constant":
        return constant_gauge(cfg["t"], cfg.get("value", 1.0))
    return measure_gauge(_measure(cfg["measure"], base), cfg["a"], cfg["t"])


def _target(cfg: dict) -> DyadicCellSet:
    if "segment_level" in cfg:
        return DyadicCellSet.segment(cfg["segment_level"])
    if "block" in cfg:
        b = cfg["block"]
        return DyadicCellSet.block(b["level"], b["i0"], b["j0"], b["ni"], b["nj"])
    return DyadicCellSet.from_json(cfg)


def _as_list(v) -> list:
    return list(v) if isinstance(v, list) else [v]


# commands; each returns {filename: text} and an optional summary dict

def cmd_exponents(cfg, base, seed):
    rows = []
    for K in _as_list(cfg["K"]):
        for t in _as_list(cfg["t"]):
            for q in _as_list(cfg.get("q", 2.0)):
                tp = t_prime(t, K)
                p = 1 + (K * t / tp) * (q - 1)
                rows.append((float(K), float(t), tp, float(q), (2 - tp) / q, (2 - t) / p, p))
    return {"exponents.csv": _csv(["K", "t", "t_prime", "q", "beta", "alpha", "p"], rows)}, {"rows": len(rows)}


def cmd_cantor_build(cfg, base, seed):
    params = CantorParams.from_json(cfg["cantor"])
    rows = []
    log_s = log_t = 0.0
    log_m = 0.0
    for n in range(params.depth):
        log_s += np.log(params.source_factor[n])
        log_t += np.log(params.target_factor[n])
        log_m += 2 * np.log(params.R[n])
        rows.append((n + 1, params.R[n], params.sigma[n], params.d[n],
                     np.exp(log_s), np.exp(log_t), np.exp(log_m + params._log_deficit_tail[n + 1])))
    out = {
        "params.json": _json(json.loads(params.to_json())),
        "levels.csv": _csv(["level", "R", "sigma", "d", "source_radius", "target_radius", "mass"], rows),
    }
    if cfg.get("place", False):
        cmap = place_disks(params, seed)
        out["tree.csv"] = tree_csv(cmap, min(cfg.get("tree_depth", params.depth), params.depth))
    return out, {"depth": params.depth, "t_prime": params.t_prime, "total_mass": params.total_mass()}


def cmd_cantor_wolff(cfg, base, seed):
    params = CantorParams.from_json(cfg["cantor"])
    S = wolff_on_cantor(params, RieszIndex(cfg["alpha"], cfg["p"]), cfg["side"], None, cfg.get("N_max"))
    rows = [(n + 1, v) for n, v in enumerate(S)]
    if not np.all(np.isfinite(S)):
        raise NumericalFlag("generation sum overflowed")
    return {"wolff.csv": _csv(["N", "partial_sum"], rows)}, {"final": float(S[-1])}


def cmd_capacity(cfg, base, seed):
    mu = _measure(cfg["measure"], base)
    opts = None
    if "k_min" in cfg or "k_max" in cfg:
        d = WolffOptions.default_for(mu)
        opts = WolffOptions(cfg.get("k_min", d.k_min), cfg.get("k_max", d.k_max))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = capacity_lower(mu, RieszIndex(cfg["alpha"], cfg["p"]), opts=opts)
    summary = {"value": est.value, "w_sup": est.w_sup, "scale": est.scale, "diverged": est.diverged}
    if est.diverged:
        return {"capacity.json": _json(summary)}, summary | {"_flag": "Wolff potential diverged"}
    return {"capacity.json": _json(summary)}, summary


def cmd_content(cfg, base, seed):
    target = _target(cfg["target"])
    gauge = _gauge(cfg["gauge"], base)
    cands = dyadic_candidates(target, cfg.get("coarsest_level", 0))
    cover = best_cover(target, gauge, cands)
    summary = {"content_upper": cover.value, "candidates": len(cands), "cells": len(target)}
    if cfg.get("oracle", False):
        summary["content_oracle"] = content_oracle(target, gauge, cands)
    rows = [(b.center.real, b.center.imag, b.radius) for b in cover.balls]
    return {"content.json": _json(summary), "cover.csv": _csv(["center_x", "center_y", "radius"], rows)}, summary


def cmd_frostman(cfg, base, seed):
    target = _target(cfg["target"])
    gauge = _gauge(cfg["gauge"], base)
    res = frostman_report(target, gauge, cfg.get("max_level"))
    summary = {"mass": res.measure.total if len(res.measure) else 0.0, "content": res.content,
               "mass_ratio": res.mass_ratio, "ball_slack": res.ball_slack, "levels": list(res.levels),
               "level_ratio": {str(k): v for k, v in res.level_ratio.items()}}
    return {"frostman.json": _json(summary), "measure.csv": res.measure.to_csv()}, summary


def cmd_beurling_selftest(cfg, base, seed):
    res = disk_selftest(cfg.get("n", 1024), cfg.get("interior_radius", 0.9), tuple(cfg.get("eps_set", (0.5, 0.75))),
                        cfg.get("probes", 20), seed)
    summary = res.to_dict() | {"passed": bool(res.passed())}
    out = {"selftest.json": _json(summary)}
    if not res.passed():
        summary["_flag"] = "disk self-test tolerances exceeded"
    return out, summary


def cmd_beurling_weighted(cfg, base, seed):
    gauge = _gauge(cfg["gauge"], base)
    fam = build_packing(gauge, tuple(cfg["level_range"]), cfg["budget"], seed, cfg.get("c_pack_max"))
    out, sweep = {}, []
    for n in cfg.get("grids", [256, 512, 1024]):
        w = build_weight(fam, gauge, packing_grid(n))
        r = weighted_norm_harness(w, cfg.get("p", 2.0), cfg.get("trials", 4), seed, cfg.get("spikes", 2))
        out[f"harness_n{n}.csv"] = r.to_csv()
        sweep.append({"n": n, "ratio_max": r.ratio_max, "weak11_max": r.weak11_max,
                      "goodlambda": {repr(g): v for g, v in r.goodlambda.items()}})
    summary = {"squares": [list(s) for s in fam.squares], "C_pack": fam.C_pack, "sweep": sweep}
    out["summary.json"] = _json(summary)
    return out, summary


def cmd_verify_thm11(cfg, base, seed):
    idx = indices_from_target(cfg["beta"], cfg["q"], cfg["K"])
    t, K = float(idx.t), float(idx.K)
    mode = cfg.get("d_mode", "unit")
    delta = cfg.get("delta")
    if mode == "sharp":
        if delta is None:
            raise ValueError("sharp mode needs delta")
        R = cfg.get("R", sharp_radius(t, K, 2.0**delta))
    else:
        R = cfg.get("R", 1e-3)
    params = CantorParams.uniform(K, t, cfg["depth"], R, mode, delta)
    rows = []
    for N in cfg["N"]:
        r = verify_thm11_on_cantor(params, idx, N)
        rows.append((N, r.lhs, r.rhs, r.ratio, r.cap_target, r.cap_source))
    out = {"thm11.csv": _csv(["N", "lhs", "rhs", "ratio", "cap_target", "cap_source"], rows)}
    ratios = [r[3] for r in rows]
    return out, {"indices": idx.as_dict(), "ratio_min": min(ratios), "ratio_max": max(ratios)}


def cmd_verify_thm12(cfg, base, seed):
    params = CantorParams.from_json(cfg["cantor"])
    rows = []
    for N in cfg["N"]:
        r = verify_thm12_on_cantor(params, N, cfg.get("root_radius", 1.0))
        rows.append((N, r.lhs, r.rhs, r.C))
    return {"thm12.csv": _csv(["N", "lhs", "rhs", "C"], rows)}, {"C_max": max(r[3] for r in rows)}


def cmd_sharpness(cfg, base, seed):
    t, K, q = cfg["t"], cfg["K"], cfg["q"]
    if "p_tilde" in cfg:
        p_tilde = cfg["p_tilde"]
    else:
        tp = sympy.nsimplify(t_prime(sympy.nsimplify(t), sympy.nsimplify(K)))
        p = 1 + (sympy.nsimplify(K) * sympy.nsimplify(t) / tp) * (sympy.nsimplify(q) - 1)
        p_tilde = p + sympy.nsimplify(cfg.get("p_tilde_offset", 0.5))
    res = sharpness_harness(t, K, q, p_tilde, cfg.get("N", 10**6), cfg.get("numeric", True))
    summary = {
        "indices": {k: str(v) for k, v in vars(res.indices).items()},
        "target_exponent": str(res.target_exponent),
        "source_exponent": str(res.source_exponent),
        "verdicts": res.verdicts,
        "numeric": res.numeric,
    }
    return {"sharpness.json": _json(summary)}, summary


COMMANDS = {
    "exponents": cmd_exponents,
    "cantor-build": cmd_cantor_build,
    "cantor-wolff": cmd_cantor_wolff,
    "capacity": cmd_capacity,
    "content": cmd_content,
    "frostman": cmd_frostman,
    "beurling-selftest": cmd_beurling_selftest,
    "beurling-weighted": cmd_beurling_weighted,
    "verify-thm11": cmd_verify_thm11,
    "verify-thm12": cmd_verify_thm12,
    "sharpness": cmd_sharpness,
}


def _versions() -> dict:
    return {"qclab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "sympy": sympy.__version__, "python": platform.python_version()}


def run(command: str, config_path: str | Path, out_dir: str | Path, seed: int | None = None) -> int:
    """Execute one command; returns the process exit status."""
    if command not in COMMANDS:
        log.error("unknown command %r", command)
        return EXIT_UNKNOWN
    config_path = Path(config_path)
    raw = config_path.read_bytes()
    try:
        config = json.loads(raw)
        validate_config(command, config)
    except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
        log.error("config rejected: %s", getattr(exc, "message", exc))
        return EXIT_SCHEMA
    seed = int(seed if seed is not None else config.get("seed", 0))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    status, note = EXIT_OK, None
    artifacts: dict = {}
    try:
        artifacts, summary = COMMANDS[command](config, config_path.parent, seed)
        flag = summary.pop("_flag", None) if isinstance(summary, dict) else None
        if flag:
            status, note = EXIT_NUMERICAL, flag
    except (UncoverableError, NumericalFlag, FloatingPointError) as exc:
        status, note = EXIT_NUMERICAL, str(exc)
    except ValueError as exc:
        status, note = EXIT_PRECONDITION, str(exc)
    for name in sorted(artifacts):
        (out_dir / name).write_text(artifacts[name], encoding="utf-8", newline="")
    manifest = {
        "command": command,
        "config": str(config_path),
        "config_sha256": hashlib.sha256(raw).hexdigest(),
        "seed": seed,
        "versions": _versions(),
        "exit_status": status,
        "note": note,
        "artifacts": {n: hashlib.sha256(artifacts[n].encode("utf-8")).hexdigest() for n in sorted(artifacts)},
    }
    (out_dir / "manifest.json").write_text(_json(manifest), encoding="utf-8")
    if note:
        log.error("%s: %s", command, note)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qclab", description=__doc__.splitlines()[0])
    parser.add_argument("command", help=", ".join(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run(args.command, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
