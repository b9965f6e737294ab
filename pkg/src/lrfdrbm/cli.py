"""Command-line driver: ``lrfdrbm <subcommand> [options]``.

Every subcommand writes CSV tables (17 significant digits) plus a
``.meta.json`` sidecar into ``--out``, and prints a short JSON summary.
Exit codes: 0 success, 2 config error, 3 capacity error, 4 numerical error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, bounds
from .errors import ConfigError, LrfdError
from .exact import HamiltonianSpec, ground_state
from .experiments import (Table, run_correlations, run_eta, run_kron, run_nh_scaling, run_train,
                          run_trunc_sweep)
from .lrfd import PRESETS, DecayProfile, get_preset, load_profile, profile_to_dict
from .vmc import VmcConfig, load_train_config, train_config_from_dict

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_table(table: Table, out_dir: Path, name: str, resolved: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])
    meta = {"table": name, "columns": table.columns, "version": __version__,
            "config": _jsonable(resolved), "meta": _jsonable(table.meta)}
    (out_dir / f"{name}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _load_config(path):
    if path is None:
        return {}
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def _profile(args) -> tuple[DecayProfile, int]:
    """Profile and level offset from --profile FILE or --preset NAME."""
    if getattr(args, "profile", None):
        return load_profile(args.profile), args.ks
    pre = get_preset(args.preset)
    ks = 1 if pre.construction == "perturbed" else 0
    return pre.profile, ks if args.ks is None else args.ks


# ---------------------------------------------------------------- commands

def cmd_trunc_sweep(args, out):
    t = run_trunc_sweep(args.preset, args.L, args.nh_max)
    write_table(t, out, f"trunc_sweep_{args.preset}_L{args.L}", vars(args))
    return {"rows": len(t.rows), **t.meta}


def cmd_nh_scaling(args, out):
    t = run_nh_scaling(_floats(args.eps), _ints(args.L), args.preset, not args.bound_only)
    write_table(t, out, "nh_scaling", vars(args))
    return {"rows": len(t.rows)}


def cmd_correlations(args, out):
    t = run_correlations(_floats(args.alpha_q), _ints(args.L), args.alpha)
    write_table(t, out, "correlations", vars(args))
    return {"rows": len(t.rows)}


def cmd_eta(args, out):
    res = run_eta(args.source, args.alpha)
    stem = Path(args.source).stem
    write_table(res["eta"], out, f"eta_{stem}", vars(args))
    write_table(res["ridge"], out, f"eta_ridge_{stem}", vars(args))
    return res["ridge"].meta


def cmd_kron(args, out):
    res = run_kron(_floats(args.delta_p), args.L, args.mu0)
    write_table(res["spectrum"], out, "kron_spectrum", vars(args))
    write_table(res["ratio"], out, "kron_ratio", vars(args))
    return {"ratio_rows": res["ratio"].rows}


def cmd_train(args, out, cfg_dict):
    if cfg_dict:
        h, alpha, config = train_config_from_dict(cfg_dict)
    else:
        h = HamiltonianSpec(args.model, args.L, Bx=args.bx, Jz=args.jz)
        alpha, config = args.alpha, VmcConfig()
    if args.iterations is not None:
        config.n_iterations = args.iterations
    if args.seed is not None:
        config.seed = args.seed
    res = run_train(h, alpha, config, out)
    resolved = {"hamiltonian": asdict(h), "alpha": alpha, "vmc": asdict(config)}
    write_table(res["trace"], out, "energy_trace", resolved)
    write_table(res["truncation_errors"], out, "truncation_errors", resolved)
    return res["summary"]


def cmd_ed(args, out):
    h = HamiltonianSpec(args.model, args.L, Bx=args.bx, Jz=args.jz)
    gs = ground_state(h, seed=args.seed or 0)
    summary = {"model": args.model, "L": args.L, "energy": gs.energy, "residual": gs.residual,
               "degenerate": gs.degenerate, "gap_probe": gs.gap_probe}
    out.mkdir(parents=True, exist_ok=True)
    (out / f"ed_{args.model}_L{args.L}.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    if args.save_state:
        gs.state.save(out / f"ed_{args.model}_L{args.L}.bin")
    return summary


def cmd_presets(args, out):
    rows = [[p.name, p.construction, p.L, p.alpha, p.citation] for p in PRESETS.values()]
    t = Table(["name", "construction", "L", "alpha", "citation"], rows)
    write_table(t, out, "presets", {})
    return {p.name: {"citation": p.citation, "profile": profile_to_dict(p.profile)} for p in PRESETS.values()}


def cmd_bound_eval(args, out):
    profile, ks = _profile(args)
    rep = bounds.truncation_report(profile, args.L, args.nh, ks or 0)
    d = rep.to_dict()
    out.mkdir(parents=True, exist_ok=True)
    (out / f"bound_L{args.L}_Nh{args.nh}.json").write_text(json.dumps(_jsonable(d), indent=2) + "\n")
    return d


def cmd_classify(args, out):
    profile, _ = _profile(args)
    mc = bounds.classify_manifold(profile)
    return asdict(mc)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lrfdrbm", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="TOML/JSON file whose keys override subcommand options")
    ap.add_argument("--seed", type=int, default=None, help="master seed (unsigned 64-bit)")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="worker threads for compiled kernels")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trunc-sweep", help="exact vs bounded truncation errors")
    p.add_argument("--preset", default="fig2b", choices=["fig2a", "fig2b"])
    p.add_argument("--L", type=int, default=11)
    p.add_argument("--nh-max", type=int, default=None)

    p = sub.add_parser("nh-scaling", help="Nh* against L, exact search and bounds")
    p.add_argument("--preset", default="fig2b", choices=["fig2a", "fig2b"])
    p.add_argument("--eps", default="1e-7,1e-10")
    p.add_argument("--L", default="5..15")
    p.add_argument("--bound-only", action="store_true")

    p = sub.add_parser("correlations", help="z correlations of the fig3 family")
    p.add_argument("--alpha-q", default="0.5,1,2")
    p.add_argument("--L", default="22")
    p.add_argument("--alpha", type=int, default=5)

    p = sub.add_parser("eta", help="importance measure of a preset or checkpoint")
    p.add_argument("--source", default="fig1b")
    p.add_argument("--alpha", type=int, default=None)

    p = sub.add_parser("kron", help="Kronecker-delta spectra and peak ratios")
    p.add_argument("--delta-p", default="3,2,1.5,1.2,1.1")
    p.add_argument("--L", type=int, default=13)
    p.add_argument("--mu0", type=float, default=0.1)

    p = sub.add_parser("train", help="VMC training (use --config for full control)")
    p.add_argument("--model", default="tfim", choices=["tfim", "xxz", "cluster"])
    p.add_argument("--L", type=int, default=9)
    p.add_argument("--alpha", type=int, default=4)
    p.add_argument("--bx", type=float, default=1.0)
    p.add_argument("--jz", type=float, default=-0.2)
    p.add_argument("--iterations", type=int, default=None)

    p = sub.add_parser("ed", help="Lanczos ground state")
    p.add_argument("--model", default="tfim", choices=["tfim", "xxz", "cluster"])
    p.add_argument("--L", type=int, default=9)
    p.add_argument("--bx", type=float, default=1.0)
    p.add_argument("--jz", type=float, default=-0.2)
    p.add_argument("--save-state", action="store_true")

    sub.add_parser("presets", help="list presets with their citations")

    for name, helptext in (("bound-eval", "bound quantities for one (L, Nh)"),
                           ("classify", "complexity class of a profile")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--preset", default="fig2b")
        p.add_argument("--profile", default=None, help="profile TOML/JSON file")
        p.add_argument("--ks", type=int, default=None, help="levels preceding the LRFD profile")
        if name == "bound-eval":
            p.add_argument("--L", type=int, default=11)
            p.add_argument("--nh", type=int, default=44)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads is not None:
            import numba
            numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
        cfg = _load_config(args.config)
        out = Path(args.out)
        if args.command == "train":
            summary = cmd_train(args, out, cfg)
        else:
            for key, value in cfg.items():
                key = key.replace("-", "_")
                if not hasattr(args, key):
                    raise ConfigError(f"config key {key!r} is not an option of {args.command}")
                setattr(args, key, value)
            handler = {"trunc-sweep": cmd_trunc_sweep, "nh-scaling": cmd_nh_scaling,
                       "correlations": cmd_correlations, "eta": cmd_eta, "kron": cmd_kron,
                       "ed": cmd_ed, "presets": cmd_presets, "bound-eval": cmd_bound_eval,
                       "classify": cmd_classify}[args.command]
            summary = handler(args, out)
    except LrfdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    print(json.dumps(_jsonable(summary), indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
