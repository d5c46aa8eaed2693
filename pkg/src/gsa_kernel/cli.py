"""``gsa-kernel`` command line: audit, demo, bench, express-conv."""

from __future__ import annotations

import argparse
import copy
import csv
import json
import platform
import statistics
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import __version__
from .attention import FeatureMap, NeighborhoodSpec, init_attention_weights
from .encoding import PositionTable, fourier_encoding
from .errors import ConfigError, GsaError, InsufficientHeadsError
from .groups import AffineElement, GroupSpec, group_from_config, parse_designation
from .gsa import convolve_via_attention, lift_attend, lift_attend_fast
from .harness import act, conv_oracle, difference, make_action, run_suite
from .tensor import load_csv, load_gsat, save_csv, save_gsat

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_INT = {"type": "integer"}
_POS = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}
_PAIR = {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {"type": "string"},
        "group": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["trivial", "cyclic", "dihedral", "dilation"]},
                "n": _POS,
                "levels": {"type": "array", "items": _INT},
                "log_scales": {"type": "array", "items": _NUM},
                "factor": _NUM,
            },
            "required": ["family"],
        },
        "grid": _PAIR,
        "heads": _POS,
        "channels": {"type": "array", "items": _POS, "minItems": 1},
        "nbhd": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["global", "grid_window", "radius"]},
                "n": _POS,
                "r": _NUM,
            },
            "required": ["kind"],
        },
        "encoding": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["fourier", "table"]},
                "seed": {"type": "integer", "minimum": 0},
                "num_features": _POS,
                "length_scale": _NUM,
            },
        },
        "seeds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"weights": {"type": "integer", "minimum": 0}, "instance": {"type": "integer", "minimum": 0}},
        },
        "haar_weights": {"type": "boolean"},
        "audit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "heads": _POS,
                "head_dim": _POS,
                "channels": _POS,
                "window": _POS,
                "points": _POS,
                "disc_radius": _NUM,
                "point_radius": _NUM,
            },
        },
        "demo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"input": {"type": "string"}, "size": _POS, "channels": _POS},
        },
        "bench": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sizes": {"type": "array", "items": _POS, "minItems": 1},
                "repeats": _POS,
                "grid": _PAIR,
                "channels": _POS,
            },
        },
        "conv": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kernel": {"type": "string"},
                "k": _POS,
                "heads": _POS,
                "c_in": _POS,
                "c_out": _POS,
                "size": _PAIR,
                "seed": {"type": "integer", "minimum": 0},
            },
        },
    },
}

MODEL_PRESETS = ("Z2_SA", "R4_SA", "R8_SA", "R12_SA", "R16_SA", "Z2M_SA", "R4M_SA")


# -- config loading ---------------------------------------------------------------


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"--set has an empty key in {assignment!r}")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.setdefault(p, {}), dict):
            raise ConfigError(f"--set {key}: {p} is not an object")
        node = node[p]
    node[parts[-1]] = _parse_value(value)


def validate_config(cfg: dict) -> dict:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"config error at {_json_path(e.absolute_path)}: {e.message}")
    if "model" in cfg:
        try:
            parse_designation(cfg["model"])
        except ValueError as exc:
            raise ConfigError(f"config error at $.model: {exc}") from None
    if "group" in cfg:
        try:
            group_from_config(cfg["group"])
        except ValueError as exc:
            raise ConfigError(f"config error at $.group: {exc}") from None
    return cfg


def load_config(path: Optional[str], overrides: Sequence[str] = ()) -> dict:
    cfg: dict = {}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"{path}: top-level JSON value must be an object")
    cfg = copy.deepcopy(cfg)
    for o in overrides:
        apply_override(cfg, o)
    return validate_config(cfg)


def config_group(cfg: dict, default: str = "R4") -> GroupSpec:
    if "group" in cfg:
        return group_from_config(cfg["group"])
    return parse_designation(cfg.get("model", default))


def suite_config(cfg: dict) -> dict:
    """Translate the CLI config into the harness suite config."""
    out: dict = {}
    for key in ("seeds", "grid", "encoding", "haar_weights"):
        if key in cfg:
            out[key] = cfg[key]
    out.update(cfg.get("audit", {}))
    net: dict = {}
    if "model" in cfg:
        net["model"] = cfg["model"]
    if "channels" in cfg:
        net["channels"] = list(cfg["channels"])
        net["blocks"] = len(cfg["channels"])
    if "heads" in cfg:
        net["heads"] = cfg["heads"]
    nb = cfg.get("nbhd")
    if nb is not None:
        if nb["kind"] != "grid_window":
            raise ConfigError("config error at $.nbhd.kind: the network audit runs on grids and needs grid_window")
        net["window"] = nb.get("n", 3)
    if net:
        out["network"] = net
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def _metadata(command: str, extra: Optional[dict] = None) -> dict:
    meta = {
        "command": command,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    meta.update(extra or {})
    return meta


# -- commands -------------------------------------------------------------------


def cmd_audit(args, cfg: dict) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    claims = [c for spec in (args.claims or []) for c in spec.split(",") if c]
    reports = run_suite(suite_config(cfg), claims or None, args.group, timings)
    if not reports:
        raise ConfigError("no claims selected by the given filters")
    _write_json(out / "report.json", [r.to_json() for r in reports])
    _write_json(out / "metadata.json", _metadata("audit", {"runtime_seconds": timings}))
    for r in reports:
        print(f"{r.verdict.upper():4s} {r.claim:34s} residual={r.residual:.3e} threshold={r.threshold:.0e} ({r.kind})")
    failed = [r.claim for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} claims passed; report: {out / 'report.json'}")
    return EXIT_FAIL if failed else EXIT_OK


def synthetic_digit(size: int = 16) -> np.ndarray:
    """An asymmetric seven-like stroke pattern with a serif, so no rotation maps it to itself."""
    img = np.zeros((size, size))
    top = size // 5
    img[top, size // 4 : size - size // 5] = 1.0
    for r in range(top, size - size // 6):
        c = size - size // 5 - 1 - (r - top) * (size // 2) // (size - top)
        img[r, max(c, 0)] = 1.0
    img[size // 2, size // 3 : size // 2 + 1] = 0.6
    img[top + 1, size // 4] = 0.8
    return img


def _load_image(path: str) -> np.ndarray:
    p = Path(path)
    try:
        arr = load_gsat(p) if p.suffix.lower() == ".gsat" else load_csv(p)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read demo input {path}: {exc}") from None
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ConfigError(f"demo input {path} must be an image [H, W] or [H, W, C], got shape {arr.shape}")
    return arr


def _quarter_turn(group: GroupSpec):
    if group.family in ("cyclic", "dihedral") and group.n % 4 == 0:
        return group.rotation(group.n // 4)
    return None


def cmd_demo(args, cfg: dict) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dcfg = cfg.get("demo", {})
    group = config_group(cfg)
    if "input" in dcfg:
        img = _load_image(dcfg["input"])
    else:
        img = synthetic_digit(int(dcfg.get("size", 16)))[:, :, None]
    hgt, wid, c_in = img.shape
    pos = PositionTable.grid(hgt, wid)
    seeds = cfg.get("seeds", {})
    rng = np.random.default_rng(int(seeds.get("weights", 42)))
    c_out = int(dcfg.get("channels", 4))
    w = init_attention_weights(rng, c_in, c_out, int(cfg.get("heads", 9)), bias="random")
    ecfg = cfg.get("encoding", {})
    enc = fourier_encoding(c_in, None, seed=int(ecfg.get("seed", 42)), num_features=int(ecfg.get("num_features", 64)))
    nb = cfg.get("nbhd", {"kind": "grid_window", "n": 5})
    nbhd = NeighborhoodSpec(nb["kind"], int(nb.get("n", 3)), float(nb.get("r", 1.0)))
    quarter = _quarter_turn(group)
    rot_group = group if quarter is not None else GroupSpec("cyclic", 4)
    rot = quarter if quarter is not None else rot_group.rotation(1)
    action = make_action(AffineElement((0.0, 0.0), rot), pos)
    f = FeatureMap(pos, img.reshape(-1, c_in))
    f_rot = act(action, f)
    lifted = lift_attend_fast(w, f, enc, group, nbhd)
    lifted_rot = lift_attend_fast(w, f_rot, enc, group, nbhd)
    lines = [
        f"group: {group.name} ({group.order} stabilizer slices)",
        f"input: {hgt}x{wid}x{c_in} ({dcfg.get('input', 'synthetic pattern')})",
        f"neighborhood: {nbhd.kind} n={nbhd.n}",
        f"rotation applied: {rot} (quarter turn)",
    ]
    status = EXIT_OK
    if quarter is not None:
        aligned = act(action, lifted)
        residual = difference(lifted_rot, aligned) / (1.0 + float(np.abs(lifted.values).max()))
        save_gsat(out / "lift_original_aligned.gsat", aligned.values.reshape(hgt, wid, group.order, -1))
        shift = action.stabilizer_shift(group)
        lines.append(f"stabilizer shift (slice k of the original lands on slice shift[k]): {shift.tolist()}")
        lines.append(f"alignment residual: {residual:.3e} (threshold 1e-10)")
        ok = residual <= 1e-10
        lines.append("alignment: " + ("PASS" if ok else "FAIL"))
        status = EXIT_OK if ok else EXIT_FAIL
    else:
        lines.append("the group has no quarter turn, so no alignment is expected; slices dumped for inspection only")
    save_gsat(out / "input.gsat", img)
    save_gsat(out / "input_rotated.gsat", f_rot.values.reshape(hgt, wid, c_in))
    save_gsat(out / "lift_original.gsat", lifted.values.reshape(hgt, wid, group.order, -1))
    save_gsat(out / "lift_rotated.gsat", lifted_rot.values.reshape(hgt, wid, group.order, -1))
    for k in range(group.order):
        save_csv(out / f"lift_original_slice{k}.csv", lifted.values[:, k, :])
        save_csv(out / f"lift_rotated_slice{k}.csv", lifted_rot.values[:, k, :])
    save_csv(out / "input.csv", img[:, :, 0])
    save_csv(out / "input_rotated.csv", f_rot.values.reshape(hgt, wid, c_in)[:, :, 0])
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    _write_json(out / "metadata.json", _metadata("demo"))
    print("\n".join(lines))
    return status


BENCH_HEADER = ["n", "neighborhood_size", "naive_mean_s", "naive_std_s", "fast_mean_s", "fast_std_s"]


def cmd_bench(args, cfg: dict) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    bcfg = cfg.get("bench", {})
    group = config_group(cfg)
    hgt, wid = bcfg.get("grid", [16, 16])
    sizes = bcfg.get("sizes", [3, 5, 7, 9])
    repeats = int(bcfg.get("repeats", 3))
    c = int(bcfg.get("channels", 4))
    seeds = cfg.get("seeds", {})
    rng_w = np.random.default_rng(int(seeds.get("weights", 42)))
    rng_i = np.random.default_rng(int(seeds.get("instance", 7)))
    pos = PositionTable.grid(int(hgt), int(wid))
    f = FeatureMap(pos, rng_i.standard_normal((pos.n, c)))
    w = init_attention_weights(rng_w, c, c, int(cfg.get("heads", 9)), bias="random")
    enc = fourier_encoding(c, None, seed=int(cfg.get("encoding", {}).get("seed", 42)))
    rows = []
    for n in sizes:
        if n % 2 == 0:
            raise ConfigError(f"config error at $.bench.sizes: window size {n} must be odd")
        nbhd = NeighborhoodSpec("grid_window", int(n))
        times = {}
        for name, fn in (("naive", lift_attend), ("fast", lift_attend_fast)):
            samples = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                fn(w, f, enc, group, nbhd)
                samples.append(time.perf_counter() - t0)
            times[name] = (statistics.fmean(samples), statistics.pstdev(samples) if repeats > 1 else 0.0)
        rows.append([n, n * n, times["naive"][0], times["naive"][1], times["fast"][0], times["fast"][1]])
    with open(out / "bench.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(BENCH_HEADER)
        for r in rows:
            wr.writerow([r[0], r[1]] + [f"{v:.6f}" for v in r[2:]])
    naive = [r[2] for r in rows]
    fast = [r[4] for r in rows]
    notes = [
        f"group {group.name}, grid {hgt}x{wid}, repeats {repeats}",
        "naive time increases with n: " + str(all(a <= b for a, b in zip(naive, naive[1:]))),
        "fast path no slower than naive at every n: " + str(all(fv <= nv for fv, nv in zip(fast, naive))),
    ]
    (out / "bench_observations.txt").write_text("\n".join(notes) + "\n")
    _write_json(out / "metadata.json", _metadata("bench"))
    print(",".join(BENCH_HEADER))
    for r in rows:
        print(",".join([str(r[0]), str(r[1])] + [f"{v:.6f}" for v in r[2:]]))
    print("\n".join(notes))
    return EXIT_OK


def cmd_express_conv(args, cfg: dict) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ccfg = cfg.get("conv", {})
    seed = int(ccfg.get("seed", cfg.get("seeds", {}).get("instance", 7)))
    rng = np.random.default_rng(seed)
    if "kernel" in ccfg:
        try:
            kernel = load_gsat(ccfg["kernel"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read kernel {ccfg['kernel']}: {exc}") from None
        if kernel.ndim != 4:
            raise ConfigError(f"kernel must have rank 4 [k, k, C_in, C_out], got shape {kernel.shape}")
    else:
        k = int(ccfg.get("k", 3))
        kernel = rng.standard_normal((k, k, int(ccfg.get("c_in", 2)), int(ccfg.get("c_out", 2))))
    hgt, wid = ccfg.get("size", [8, 8])
    image = rng.standard_normal((int(hgt), int(wid), kernel.shape[2]))
    heads = ccfg.get("heads", cfg.get("heads"))
    attn = convolve_via_attention(kernel, image, heads=heads)
    diff = float(np.abs(attn - conv_oracle(kernel, image)).max())
    ok = diff <= 1e-6
    report = {"kernel_shape": list(kernel.shape), "image_shape": [int(hgt), int(wid)], "heads": kernel.shape[0] ** 2,
              "max_abs_diff": diff, "threshold": 1e-6, "verdict": "pass" if ok else "fail", "seed": seed}
    _write_json(out / "conv_report.json", report)
    _write_json(out / "metadata.json", _metadata("express-conv"))
    print(f"{'PASS' if ok else 'FAIL'} express-conv k={kernel.shape[0]} max_abs_diff={diff:.3e} threshold=1e-06")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"audit": cmd_audit, "demo": cmd_demo, "bench": cmd_bench, "express-conv": cmd_express_conv}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsa-kernel", description="Group self-attention kernels and equivariance audits.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("audit", "run the equivariance audit suite"),
        ("demo", "dump lifting outputs for an image and its quarter-turn rotation"),
        ("bench", "time naive and score-reuse lifting over neighborhood sizes"),
        ("express-conv", "check that attention reproduces a convolution"),
    ):
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (dotted key, JSON value); repeatable")
        sp.add_argument("--output-dir", default="gsa_out", help="directory for reports and dumps (default: gsa_out)")
        if name == "audit":
            sp.add_argument("--claims", action="append", help="claim id or family prefix (e.g. C4); repeatable")
            sp.add_argument("--group", help="keep only checks for this group designation (e.g. R4)")
        else:
            sp.add_argument("--group", help="group designation overriding the config model (e.g. R4, Z2)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.command != "audit" and args.group:
            cfg["model"] = args.group
            cfg.pop("group", None)
            validate_config(cfg)
        return COMMANDS[args.command](args, cfg)
    except InsufficientHeadsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
