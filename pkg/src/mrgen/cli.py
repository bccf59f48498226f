"""Command-line pipeline: generate data, build hierarchies, train, sample, evaluate.

Commands compose through files on disk and are deterministic per seed; every
writing command drops a ``manifest.json`` recording the effective options, a
hash of them, and the input/output paths, with no timestamps, so reruns are
byte-identical.  Options resolve as: command line > config file section >
built-in default.  The config file is JSON with one section per command, e.g.

    {"gen-data": {"kind": "rcg", "count": 200}, "train": {"epochs": 30}}
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from mrgen import datasets as ds
from mrgen import metrics as mt
from mrgen import model as md
from mrgen.graphs import (
    HGParseError,
    build_hierarchy,
    deserialize,
    format_edge_list,
    parse_edge_list,
    serialize,
)

__all__ = ["main"]


class CliError(Exception):
    def __init__(self, slug: str, message: str):
        super().__init__(message)
        self.slug = slug


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_manifest(out_dir: Path, command: str, options: dict, inputs: list[str], outputs: list[str]) -> None:
    semantic = {k: v for k, v in options.items() if k != "out"}  # location-independent
    manifest = {
        "command": command,
        "options": semantic,
        "config_hash": hashlib.sha256(_canonical(semantic).encode()).hexdigest(),
        "seed": options.get("seed"),
        "inputs": sorted(inputs),
        "outputs": sorted(outputs),
    }
    (out_dir / "manifest.json").write_text(_canonical(manifest) + "\n")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError("missing-config", f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CliError("bad-config", f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError("bad-config", "config top level must be an object")
    return cfg


def _resolve(args: argparse.Namespace, command: str, defaults: dict) -> dict:
    """Merge CLI values over the config section over defaults."""
    cfg = _load_config(args.config)
    section = cfg.get(command, {})
    if not isinstance(section, dict):
        raise CliError("bad-config", f"config section {command!r} must be an object")
    unknown = set(section) - set(defaults)
    if unknown:
        raise CliError("bad-config", f"unknown keys in config section {command!r}: {sorted(unknown)}")
    out = {}
    for key, default in defaults.items():
        cli_val = getattr(args, key.replace("-", "_"), None)
        if cli_val is not None:
            out[key] = cli_val
        elif key in section:
            out[key] = section[key]
        else:
            out[key] = default
    return out


def _out_dir(opts: dict) -> Path:
    if not opts.get("out"):
        raise CliError("missing-out", "an output directory is required (--out)")
    p = Path(opts["out"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def _require_dir(path: str | None, what: str) -> Path:
    if not path:
        raise CliError("missing-input", f"{what} directory is required")
    p = Path(path)
    if not p.is_dir():
        raise CliError("missing-input", f"{what} directory not found: {p}")
    return p


def _write_graphs(graphs, out: Path, prefix: str) -> list[str]:
    names = []
    for i, g in enumerate(graphs):
        name = f"{prefix}_{i:04d}.txt"
        (out / name).write_text(format_edge_list(g))
        names.append(name)
    return names


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    opts = _resolve(args, "gen-data", {
        "kind": "rcg", "count": 100, "seed": 0, "scale": "desk", "split": False, "out": None,
    })
    out = _out_dir(opts)
    spec = ds.DatasetSpec(kind=opts["kind"], count=int(opts["count"]), seed=int(opts["seed"]),
                          scale=opts["scale"])
    graphs = ds.gen_dataset(spec)
    outputs: list[str] = []
    if opts["split"]:
        parts = ds.split_80_20(graphs, seed=int(opts["seed"]))
        for part, items in parts.items():
            sub = out / part
            sub.mkdir(exist_ok=True)
            outputs += [f"{part}/{n}" for n in _write_graphs(items, sub, "graph")]
    else:
        outputs += _write_graphs(graphs, out, "graph")
    _write_manifest(out, "gen-data", opts, [], outputs)
    print(f"gen-data: wrote {len(graphs)} {opts['kind']} graphs to {out}")
    return 0


def cmd_build_hg(args) -> int:
    opts = _resolve(args, "build-hg", {"in": None, "depth": 2, "seed": 0, "out": None})
    src = _require_dir(opts["in"], "input")
    out = _out_dir(opts)
    files = sorted(src.glob("*.txt"))
    if not files:
        raise CliError("missing-input", f"no .txt edge lists under {src}")
    outputs = []
    for f in files:
        g = parse_edge_list(f.read_text())
        hg = build_hierarchy(g, int(opts["depth"]), int(opts["seed"]))
        name = f.stem + ".hg"
        (out / name).write_bytes(serialize(hg))
        outputs.append(name)
    _write_manifest(out, "build-hg", opts, [str(f) for f in files], outputs)
    print(f"build-hg: wrote {len(outputs)} hierarchies (depth {opts['depth']}) to {out}")
    return 0


def _load_hg_dir(path: Path):
    files = sorted(path.glob("*.hg"))
    if not files:
        raise CliError("missing-input", f"no .hg files under {path}")
    return [deserialize(f.read_bytes()) for f in files], files


def cmd_train(args) -> int:
    opts = _resolve(args, "train", {
        "in": None, "out": None, "seed": 0, "epochs": 30, "lr": 5e-4, "batch_size": 16,
        "d_h": 32, "k_mix": 6, "gnn_layers": 3, "leaf_head": "multihot",
        "shared": False, "input_width": 0,  # 0 = auto
    })
    src = _require_dir(opts["in"], "input")
    out = _out_dir(opts)
    hgs, files = _load_hg_dir(src)
    depths = {hg.depth for hg in hgs}
    if len(depths) != 1:
        raise CliError("bad-input", f"hierarchies have mixed depths {sorted(depths)}")
    width = int(opts["input_width"]) or max(max(lv.n for lv in hg.levels) for hg in hgs)
    model = md.init_model(
        seed=int(opts["seed"]), depth=depths.pop(), input_width=width,
        d_h=int(opts["d_h"]), K=int(opts["k_mix"]), gnn_layers=int(opts["gnn_layers"]),
        leaf_head=opts["leaf_head"], shared=bool(opts["shared"]),
    )
    result = md.train(model, hgs, md.TrainConfig(
        epochs=int(opts["epochs"]), lr=float(opts["lr"]),
        batch_size=int(opts["batch_size"]), seed=int(opts["seed"]),
    ))
    md.save_model(result.model, out / "model.npz")
    with (out / "loss_trace.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_nll"])
        for i, v in enumerate(result.loss_trace):
            writer.writerow([i, f"{v:.6f}"])
    _write_manifest(out, "train", opts, [str(f) for f in files], ["model.npz", "loss_trace.csv"])
    print(f"train: {len(hgs)} hierarchies, {opts['epochs']} epochs, "
          f"NLL {result.loss_trace[0]:.3f} -> {result.loss_trace[-1]:.3f}; model at {out / 'model.npz'}")
    return 0


def cmd_sample(args) -> int:
    opts = _resolve(args, "sample", {
        "model": None, "count": 20, "seed": 0, "threads": 1, "out": None,
    })
    if not opts["model"] or not Path(opts["model"]).exists():
        raise CliError("missing-input", f"model checkpoint not found: {opts['model']}")
    out = _out_dir(opts)
    model = md.load_model(opts["model"])
    hgs = md.generate_many(model, int(opts["count"]), seed=int(opts["seed"]),
                           threads=int(opts["threads"]))
    outputs = []
    for i, hg in enumerate(hgs):
        hg_name = f"sample_{i:04d}.hg"
        (out / hg_name).write_bytes(serialize(hg))
        leaf_name = f"sample_{i:04d}.txt"
        (out / leaf_name).write_text(format_edge_list(hg.leaf))
        outputs += [hg_name, leaf_name]
    _write_manifest(out, "sample", opts, [str(opts["model"])], outputs)
    print(f"sample: wrote {len(hgs)} hierarchies to {out}")
    return 0


def cmd_eval(args) -> int:
    opts = _resolve(args, "eval", {
        "ref": None, "gen": None, "out": None, "seed": 0, "threads": 1,
        "dump_hists": False,
    })
    opts["threads"] = opts["threads"] or 1
    ref_dir = _require_dir(opts["ref"], "reference")
    gen_dir = _require_dir(opts["gen"], "generated")
    out = _out_dir(opts)
    ref = ds.load_edge_list_dir(ref_dir)
    gen = ds.load_edge_list_dir(gen_dir)
    scores = mt.mmd_report(ref, gen, threads=int(opts["threads"]))

    header = {"degree": "Deg.", "clustering": "Clus.", "orbit": "Orbit", "spectrum": "Spec."}
    cols = [header[s] for s in mt.STATISTICS]
    vals = [f"{scores[s]:.6f}" for s in mt.STATISTICS]
    widths = [max(len(c), len(v)) for c, v in zip(cols, vals)]
    table = (
        " | ".join(c.ljust(w) for c, w in zip(cols, widths))
        + "\n"
        + "-+-".join("-" * w for w in widths)
        + "\n"
        + " | ".join(v.ljust(w) for v, w in zip(vals, widths))
        + "\n"
    )
    (out / "report.txt").write_text(table)
    (out / "mmd.json").write_text(_canonical({s: scores[s] for s in mt.STATISTICS}) + "\n")
    with (out / "mmd.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(mt.STATISTICS))
        writer.writerow([f"{scores[s]:.10f}" for s in mt.STATISTICS])
    outputs = ["report.txt", "mmd.json", "mmd.csv"]
    if opts["dump_hists"]:
        outputs += _dump_hists(out, ref, "ref") + _dump_hists(out, gen, "gen")
    _write_manifest(out, "eval", opts, [str(ref_dir), str(gen_dir)], outputs)
    print(table, end="")
    return 0


def _dump_hists(out: Path, graphs, label: str) -> list[str]:
    """Aggregate (mean) histogram per statistic, as plot-ready CSV."""
    written = []
    for stat in ("degree", "clustering", "spectrum"):
        hists = mt._hists_for(graphs, stat)
        mat = mt._align(hists)
        mean = mat.mean(axis=0)
        name = f"hist_{label}_{stat}.csv"
        with (out / name).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin", "mean_mass"])
            for i, v in enumerate(mean):
                writer.writerow([i, f"{v:.10f}"])
        written.append(name)
    return written


def cmd_inspect(args) -> int:
    opts = _resolve(args, "inspect", {"in": None})
    if not opts["in"] or not Path(opts["in"]).exists():
        raise CliError("missing-input", f"hierarchy file not found: {opts['in']}")
    hg = deserialize(Path(opts["in"]).read_bytes())
    print(f"hierarchy: depth {hg.depth}, total weight {hg.root_weight}")
    for i, g in enumerate(hg.levels):
        degs = np.zeros(g.n, dtype=np.int64)
        selfw = 0
        for u, v, w in g.edges:
            if u == v:
                selfw += w
            else:
                degs[u] += 1
                degs[v] += 1
        kind = "leaf" if g.leaf else ("root" if i == 0 else "mid")
        mean_deg = float(degs.mean()) if g.n else 0.0
        print(
            f"  level {i} ({kind}): {g.n} nodes, {g.num_edges} edges, "
            f"total weight {g.total_weight}, self-loop weight {selfw}, mean degree {mean_deg:.2f}"
        )
    for i, pm in enumerate(hg.parents):
        sizes = np.bincount(np.array(pm, dtype=np.int64), minlength=hg.levels[i].n)
        print(f"  parents {i + 1}->{i}: community sizes min {sizes.min()} / "
              f"mean {sizes.mean():.2f} / max {sizes.max()}")
    return 0


# ---------------------------------------------------------------------------
# wiring


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file with per-command sections")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--threads", type=int, help="worker threads for data-parallel stages")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrgen", description="Hierarchical multi-resolution graph generation pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset of edge lists")
    _add_common(p)
    p.add_argument("--kind", choices=("rcg", "ppg"))
    p.add_argument("--count", type=int)
    p.add_argument("--scale", choices=("desk", "paper"))
    p.add_argument("--split", action="store_const", const=True,
                   help="write train/val/test subdirectories (80/20 + 20%% val)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("build-hg", help="coarsen edge lists into hierarchy files")
    _add_common(p)
    p.add_argument("--in", dest="in_", help="directory of .txt edge lists")
    p.add_argument("--depth", type=int)
    p.set_defaults(func=cmd_build_hg, alias_in="in_")

    p = sub.add_parser("train", help="fit the generative model on hierarchy files")
    _add_common(p)
    p.add_argument("--in", dest="in_", help="directory of .hg files")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--d-h", type=int)
    p.add_argument("--k-mix", type=int)
    p.add_argument("--gnn-layers", type=int)
    p.add_argument("--leaf-head", choices=md.HEAD_KINDS)
    p.add_argument("--shared", action="store_const", const=True,
                   help="share one parameter set across levels")
    p.add_argument("--input-width", type=int)
    p.set_defaults(func=cmd_train, alias_in="in_")

    p = sub.add_parser("sample", help="generate hierarchies from a trained model")
    _add_common(p)
    p.add_argument("--model", help="model checkpoint (.npz)")
    p.add_argument("--count", type=int)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="compare generated and reference graph sets by MMD")
    _add_common(p)
    p.add_argument("--ref", help="directory of reference edge lists")
    p.add_argument("--gen", help="directory of generated edge lists")
    p.add_argument("--dump-hists", action="store_const", const=True,
                   help="also write mean histogram CSVs per statistic")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="print a readable summary of a hierarchy file")
    _add_common(p)
    p.add_argument("--in", dest="in_", help="hierarchy file (.hg)")
    p.set_defaults(func=cmd_inspect, alias_in="in_")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if hasattr(args, "in_"):
        setattr(args, "in", args.in_)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.slug}: {exc}", file=sys.stderr)
        return 2
    except HGParseError as exc:
        print(f"error: parse: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, md.TrainingDiverged) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
