"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import formats
from .core import ScaleConfig, ScaleGrid, build_grids
from .fit import SynthSpec, fit_density, mae_mse, synth_scene
from .formats import FormatError
from .gaussian_moments import gt_density_map
from .loss import precompute, total_loss
from .verify import SUITES

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _read(reader, path):
    try:
        return reader(path)
    except FormatError as exc:
        raise CliError(EXIT_INPUT, f"{path}: {exc}") from None
    except UnicodeDecodeError:
        raise CliError(EXIT_INPUT, f"{path}: not a text document") from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"{path}: {exc.strerror or exc}") from None


def _write(path, data: bytes | str):
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        with open(path, mode) as fh:
            fh.write(data)
    except OSError as exc:
        raise CliError(EXIT_IO, f"{path}: {exc.strerror or exc}") from None


def _num(v: float) -> str:
    return repr(float(v))


def cmd_gen_density(args) -> int:
    scene = _read(formats.read_annotations, args.annotations)
    if args.scale < 1:
        raise CliError(EXIT_INPUT, "--scale must be at least 1")
    if not args.beta > 0:
        raise CliError(EXIT_INPUT, "--beta must be positive")
    f = 2 ** (args.scale - 1)
    grid = ScaleGrid(args.scale, f, -(-scene.width // f), -(-scene.height // f))
    dmap = gt_density_map(scene, grid, args.beta)
    _write(args.out, formats.density_bytes(dmap))
    if args.heatmap:
        _write(args.heatmap, formats.heatmap_pgm(dmap))
    print(f"sum={dmap.total():.6f}")
    return EXIT_OK


def _load_config(path) -> ScaleConfig:
    return _read(formats.read_config, path) if path else ScaleConfig()


def cmd_loss(args) -> int:
    scene = _read(formats.read_annotations, args.annotations)
    config = _load_config(args.config)
    preds = [_read(formats.read_density, p) for p in args.pred]
    grids = build_grids(scene, config)
    if len(preds) != len(grids):
        raise CliError(EXIT_INPUT, f"expected {len(grids)} prediction files, got {len(preds)}")
    for p, g in zip(preds, grids):
        if p.grid != g:
            raise CliError(EXIT_INPUT, f"prediction grid {p.grid.width}x{p.grid.height} (scale {p.grid.scale_index}, "
                                       f"factor {p.grid.factor}) does not match expected {g.width}x{g.height} "
                                       f"(scale {g.scale_index}, factor {g.factor})")
    out = total_loss(preds, scene, config, precompute(scene, config))
    for s, (q, r) in enumerate(zip(out.per_scale_quadratic, out.per_scale_regularizer), start=1):
        print(f"scale={s} quad={_num(q)} reg={_num(r)}")
    print(f"total={_num(out.total)}")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    failed = False
    for name in names:
        kwargs = {}
        if name == "moments":
            kwargs = {"n_scenes": args.scenes or 10, "n_samples": args.samples}
        elif args.scenes is not None:
            kwargs = {"n_instances": args.scenes}
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        for res in SUITES[name](args.seed, **kwargs):
            if args.corrupt_tolerance:
                res = type(res)(res.name, res.measured, 2.0 if res.at_least else 0.0, False, res.at_least)
            print(res.line())
            failed |= not res.passed
    return EXIT_VERIFY if failed else EXIT_OK


def _write_heatmaps(directory, maps):
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"{directory}: {exc.strerror or exc}") from None
    for m in maps:
        _write(os.path.join(directory, f"scale{m.grid.scale_index}.pgm"), formats.heatmap_pgm(m))


def _load_spec(path) -> SynthSpec:
    def reader(p):
        with open(p, "r", encoding="utf-8") as fh:
            text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not valid JSON ({exc.msg})") from None
        if not isinstance(doc, dict):
            raise FormatError("top level must be an object")
        known = set(SynthSpec.__dataclass_fields__)
        kw = {k: v for k, v in doc.items() if k in known}
        if isinstance(kw.get("head_count"), list):
            kw["head_count"] = tuple(kw["head_count"])
        try:
            return SynthSpec(**kw)
        except (TypeError, ValueError) as exc:
            raise FormatError(str(exc)) from None
    return _read(reader, path)


def cmd_fit(args) -> int:
    if args.spec:
        scene = synth_scene(_load_spec(args.spec))
    else:
        scene = _read(formats.read_annotations, args.annotations)
    config = _load_config(args.config)
    report = fit_density(scene, config, max_iters=args.max_iters, tol=args.tol)
    doc = report.as_dict()
    _write(args.report, json.dumps(doc, indent=2) + "\n")
    if args.heatmaps:
        _write_heatmaps(args.heatmaps, report.maps)
    for s, c in enumerate(report.counts, start=1):
        print(f"scale={s} count={c:.6f}")
    print(f"gt_count={report.gt_count} iterations={report.iterations} total={_num(report.breakdown.total)}")
    return EXIT_OK


def _parse_grid(text, flag):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(EXIT_INPUT, f"{flag}: expected comma-separated numbers") from None
    if not vals or any(not v > 0 for v in vals):
        raise CliError(EXIT_INPUT, f"{flag}: values must be positive")
    return vals


def sweep_table(alphas, betas, seeds, jitter=8.0, size=64, heads=(5, 20), margin=12.0, max_iters=40):
    """One (alpha, beta1, MAE, MSE) row per grid cell, over seeded jittered scenes."""
    scenes = [synth_scene(SynthSpec(size, size, heads, margin=margin, jitter_alpha=jitter, seed=seed))
              for seed in range(seeds)]
    rows = []
    for a in alphas:
        for b in betas:
            config = ScaleConfig(alpha=a, beta1=b)
            counts = [fit_density(sc, config, max_iters=max_iters).counts[0] for sc in scenes]
            mae, mse = mae_mse(counts, [sc.count for sc in scenes])
            rows.append((a, b, mae, mse))
    return rows


def cmd_sweep(args) -> int:
    alphas = _parse_grid(args.alpha_grid, "--alpha-grid")
    betas = _parse_grid(args.beta_grid, "--beta-grid")
    if args.seeds < 1:
        raise CliError(EXIT_INPUT, "--seeds must be at least 1")
    rows = sweep_table(alphas, betas, args.seeds, jitter=args.jitter, size=args.size, margin=args.margin)
    lines = ["alpha,beta1,mae,mse"] + [f"{a:g},{b:g},{mae:.9g},{mse:.9g}" for a, b, mae, mse in rows]
    _write(args.out, "\n".join(lines) + "\n")
    best = min(rows, key=lambda r: r[2])
    print(f"rows={len(rows)} best_alpha={best[0]:g} best_beta1={best[1]:g} best_mae={best[2]:.6g}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_INPUT, f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sadl", description="Scale-aware joint-likelihood density loss tools.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-density", help="ground-truth density map from annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--beta", type=float, default=8.0)
    p.add_argument("--out", required=True)
    p.add_argument("--heatmap")
    p.set_defaults(func=cmd_gen_density)

    p = sub.add_parser("loss", help="evaluate the multi-scale loss of predicted maps")
    p.add_argument("--annotations", required=True)
    p.add_argument("--pred", required=True, nargs="+", help="one density file per scale")
    p.add_argument("--config")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("verify", help="cross-check fast paths against brute-force oracles")
    p.add_argument("--suite", choices=["moments", "lowrank", "gradient", "all"], default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=200_000, help="Monte-Carlo draws per scene")
    p.add_argument("--scenes", type=int, default=None,
                   help="instances per suite (moments defaults to 10, others to their suite size)")
    p.add_argument("--corrupt-tolerance", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fit", help="fit density maps to a scene under the loss")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec")
    src.add_argument("--annotations")
    p.add_argument("--config")
    p.add_argument("--report", required=True)
    p.add_argument("--heatmaps")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="alpha/beta1 sensitivity sweep on jittered synthetic scenes")
    p.add_argument("--alpha-grid", default="2,8,32")
    p.add_argument("--beta-grid", default="2,8,32")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--jitter", type=float, default=8.0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--margin", type=float, default=12.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
