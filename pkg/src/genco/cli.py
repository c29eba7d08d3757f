"""Command-line entry point: train, eval, sweep, data gen, reject, plot.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import binio, config, data, metrics, spectral, svg, trainer

EXIT_OK, EXIT_USAGE, EXIT_ABORT = 0, 2, 3

def _fail(msg: str) -> int:
    print(f"genco: error: {msg}", file=sys.stderr)
    return EXIT_USAGE


# ---------------------------------------------------------------- train / eval

def cmd_train(args) -> int:
    try:
        run = config.load(args.config, overrides=args.override)
    except config.ConfigError as exc:
        return _fail(str(exc))
    out = Path(args.out or run.out or Path("runs") / Path(args.config).stem)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return _fail(f"cannot create output directory {out}: {exc}")
    try:
        summary = trainer.run_experiment(run.train, out)
    except trainer.TrainingAborted as exc:
        print(f"genco: training aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    print(json.dumps({"out": str(out), "steps_completed": summary["steps_completed"],
                      "proxy_fid_tail": summary["proxy_fid_tail"],
                      "gap_tail": summary["gap_tail"]}, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        state = trainer.load_checkpoint(args.checkpoint)
    except (OSError, binio.FormatError, KeyError, ValueError) as exc:
        return _fail(f"cannot load checkpoint {args.checkpoint}: {exc}")
    row = trainer.evaluate(state)
    text = json.dumps({k: v for k, v in row.items() if not k.startswith("hist_")},
                      indent=2, sort_keys=True) + "\n"
    if args.out:
        binio.atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- sweep

def sweep_cells(axes: dict[str, list[Any]]) -> list[dict[str, Any]]:
    """Cartesian product of the axes in sorted-key order; no axes gives one empty cell."""
    keys = sorted(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]


def cell_name(cell: dict[str, Any]) -> str:
    if not cell:
        return "base"
    return "_".join(f"{k}={json.dumps(v)}" for k, v in sorted(cell.items())).replace('"', "")


def _run_cell(base: dict[str, Any], cell: dict[str, Any], out: str) -> dict[str, Any]:
    try:
        cfg = config.with_values(trainer.TrainConfig.from_dict(base), cell)
        summary = trainer.run_experiment(cfg, out)
        return {"ok": True, "proxy_fid_tail": summary["proxy_fid_tail"],
                "gap_tail": summary["gap_tail"]}
    except Exception as exc:  # recorded per cell; the sweep carries on
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def aggregate(cells: list[dict[str, Any]], results: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """Group cells over every axis except ``seed``; mean and sample std per group."""
    groups: dict[str, dict[str, Any]] = {}
    for cell, res in zip(cells, results):
        key_cell = {k: v for k, v in cell.items() if k != "seed"}
        g = groups.setdefault(json.dumps(key_cell, sort_keys=True),
                              {"cell": key_cell, "fid": [], "gap": [], "failed": 0})
        if res["ok"]:
            g["fid"].append(res["proxy_fid_tail"])
            g["gap"].append(res["gap_tail"])
        else:
            g["failed"] += 1

    def stats(vals):
        if not vals:
            return math.nan, math.nan
        return statistics.fmean(vals), (statistics.stdev(vals) if len(vals) > 1 else 0.0)

    rows = []
    for g in groups.values():
        fm, fs = stats(g["fid"])
        gm, gs = stats(g["gap"])
        rows.append({**g["cell"], "n": len(g["fid"]), "failed": g["failed"],
                     "proxy_fid_mean": fm, "proxy_fid_std": fs, "gap_mean": gm, "gap_std": gs})
    return rows


def _aggregate_csv(rows: list[dict[str, Any]], axis_keys: list[str]) -> str:
    cols = axis_keys + ["n", "failed", "proxy_fid_mean", "proxy_fid_std", "gap_mean", "gap_std"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([json.dumps(r[c]) if c in axis_keys else repr(r[c]) if isinstance(r[c], float)
                    else r[c] for c in cols])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    try:
        run = config.load(args.config, overrides=args.override)
        cells = sweep_cells(run.sweep)
        for cell in cells:
            config.with_values(run.train, cell)
    except (config.ConfigError, ValueError, TypeError) as exc:
        return _fail(str(exc))
    if args.jobs < 1:
        return _fail("--jobs must be >= 1")
    out = Path(args.out or run.out or Path("runs") / Path(args.config).stem)
    out.mkdir(parents=True, exist_ok=True)
    base = run.train.to_dict()
    dirs = [str(out / cell_name(c)) for c in cells]
    for d in dirs:
        Path(d).mkdir(parents=True, exist_ok=True)
    if args.jobs == 1 or len(cells) == 1:
        results = [_run_cell(base, c, d) for c, d in zip(cells, dirs)]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_cell, [base] * len(cells), cells, dirs))
    for cell, res in zip(cells, results):
        if not res["ok"]:
            print(f"genco: cell {cell_name(cell)} failed: {res['error']}", file=sys.stderr)
    axis_keys = sorted(k for k in run.sweep if k != "seed")
    binio.atomic_write(out / "aggregate.csv", _aggregate_csv(aggregate(cells, results), axis_keys))
    failed = sum(not r["ok"] for r in results)
    print(json.dumps({"out": str(out), "cells": len(cells), "failed": failed}))
    return EXIT_ABORT if failed else EXIT_OK


# ---------------------------------------------------------------- data gen

def cmd_data_gen(args) -> int:
    n_train = args.n_train or (64 if args.kind == "tinyimage" else 32)
    try:
        ds = data.make_dataset(args.kind, n_modes=args.n_modes, n_train=n_train,
                               n_holdout=args.n_holdout, size=args.size, family=args.family,
                               seed=args.seed, fraction=args.fraction)
    except ValueError as exc:
        return _fail(str(exc))
    data.save_dataset(args.out, ds)
    print(json.dumps({"out": str(args.out), "kind": ds.kind, "n_train": len(ds.train),
                      "n_holdout": len(ds.holdout), "sample_shape": list(ds.sample_shape)}))
    return EXIT_OK


# ---------------------------------------------------------------- reject

def read_pgm(raw: bytes) -> np.ndarray:
    """Binary (P5) 8-bit grayscale PGM to a uint8 ``H x W`` array."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ValueError("malformed PGM header") from None
    if maxval != 255 or width < 1 or height < 1:
        raise ValueError(f"unsupported PGM: {width}x{height} maxval {maxval}")
    body = raw[pos + 1:]
    if len(body) != width * height:
        raise ValueError(f"PGM payload is {len(body)} bytes, expected {width * height}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def write_pgm(img: np.ndarray) -> bytes:
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + img.astype(np.uint8).tobytes()


def to_signal(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float64) / 127.5 - 1.0


def to_pixels(x: np.ndarray) -> np.ndarray:
    """Inverse of ``to_signal`` with round-half-up, so 0.0 maps to 128."""
    return np.clip(np.floor((x + 1.0) * 127.5 + 0.5), 0, 255).astype(np.uint8)


def _reject_batch(x: np.ndarray, image_shape: tuple[int, int, int], p: float, n: int,
                  rng: np.random.Generator) -> np.ndarray:
    bank = spectral.build_filter_bank(image_shape[0], image_shape[1], n)
    bits = spectral.sample_rejection_masks(len(x), n, p, rng)
    imgs = x.reshape(len(x), *image_shape)
    return spectral.reject_and_reconstruct(imgs, bank, bits).reshape(x.shape)


def cmd_reject(args) -> int:
    if not 0.0 <= args.P <= 1.0 or args.N < 1:
        return _fail(f"need 0 <= P <= 1 and N >= 1, got P={args.P} N={args.N}")
    try:
        raw = Path(args.input).read_bytes()
    except OSError as exc:
        return _fail(f"cannot read {args.input}: {exc}")
    rng = np.random.default_rng(args.seed)
    if raw.startswith(binio.MAGIC):
        try:
            ds = data.load_dataset(args.input)
        except (binio.FormatError, KeyError) as exc:
            return _fail(f"{args.input}: {exc}")
        train = _reject_batch(ds.train, ds.image_shape, args.P, args.N, rng)
        holdout = _reject_batch(ds.holdout, ds.image_shape, args.P, args.N, rng)
        prov = dict(ds.provenance, rejection={"P": args.P, "N": args.N, "seed": args.seed})
        data.save_dataset(args.output, data.Dataset(ds.kind, train, holdout, prov))
        return EXIT_OK
    try:
        img = read_pgm(raw)
    except ValueError as exc:
        return _fail(f"{args.input}: {exc}")
    x = to_signal(img)[None, :, :, None]
    y = _reject_batch(x, (*img.shape, 1), args.P, args.N, rng)
    binio.atomic_write(args.output, write_pgm(to_pixels(y[0, :, :, 0])))
    return EXIT_OK


# ---------------------------------------------------------------- plot

PLOT_KINDS = ("losses", "gap", "fid", "histogram")


def _floats(rows: list[dict[str, str]], key: str) -> list[float]:
    return [float(r[key]) for r in rows]


def render_plots(rows: list[dict[str, str]]) -> dict[str, str]:
    """Map each plot kind to its SVG text."""
    steps = _floats(rows, "step")
    loss_keys = ["loss_d1", "loss_d2", "loss_d3", "loss_wd", "loss_g_total"]
    out = {
        "losses": svg.line_chart("Losses", "step", "loss", steps,
                                 [(k, _floats(rows, k)) for k in loss_keys]),
        "gap": svg.line_chart("Discriminator score gaps", "step", "mean logit difference", steps,
                              [(k, _floats(rows, k)) for k in
                               ("gap_real_holdout", "gap_real_fake", "gap_ensemble")]),
        "fid": svg.line_chart("Proxy-FID (EMA generator vs holdout)", "step", "proxy-FID", steps,
                              [("proxy_fid", _floats(rows, "proxy_fid"))]),
    }
    edges = np.linspace(*metrics.HIST_RANGE, metrics.HIST_BINS + 1).tolist()
    last = rows[-1]
    pops = []
    for pop in metrics.POPULATIONS:
        cells = [int(c) for c in last[f"hist_{pop}"].split()]
        if len(cells) != metrics.HIST_BINS + 3:
            raise ValueError(f"hist_{pop}: expected {metrics.HIST_BINS + 3} counts, got {len(cells)}")
        pops.append((pop, cells[1:1 + metrics.HIST_BINS]))
    out["histogram"] = svg.histogram_chart(f"D1 scores at step {last['step']}", edges, pops)
    return out


def cmd_plot(args) -> int:
    try:
        with open(args.metrics, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        return _fail(f"cannot read {args.metrics}: {exc}")
    missing = [c for c in trainer.CSV_COLUMNS if c not in header]
    if missing:
        return _fail(f"{args.metrics}: missing columns: {', '.join(missing)}")
    if not rows:
        return _fail(f"{args.metrics}: no data rows")
    try:
        plots = render_plots(rows)
    except ValueError as exc:
        return _fail(f"{args.metrics}: {exc}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in PLOT_KINDS:
        binio.atomic_write(out / f"{kind}.svg", plots[kind])
    print(json.dumps({"out": str(out), "files": [f"{k}.svg" for k in PLOT_KINDS]}))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genco", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="also write the metrics JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run the cartesian product of the config's sweep axes")
    p.add_argument("--config", required=True)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("data", help="dataset utilities")
    dsub = p.add_subparsers(dest="data_command", required=True)
    g = dsub.add_parser("gen", help="generate a synthetic dataset file")
    g.add_argument("--kind", choices=data.KINDS, default="points2d")
    g.add_argument("--n-modes", type=int, default=8)
    g.add_argument("--n-train", type=int, help="default 32 points or 64 images")
    g.add_argument("--n-holdout", type=int, default=256)
    g.add_argument("--size", type=int, default=8)
    g.add_argument("--family", default="mixed")
    g.add_argument("--fraction", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_data_gen)

    p = sub.add_parser("reject", help="apply random frequency-component rejection")
    p.add_argument("--input", required=True, help="binary PGM (P5) or dataset file")
    p.add_argument("--output", required=True)
    p.add_argument("--P", type=float, default=0.2)
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_reject)

    p = sub.add_parser("plot", help="render SVG figures from a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
