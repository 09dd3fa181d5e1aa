"""``curveret`` command-line interface."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import adapt, features, retrieval
from .curvelet import OUTER_MODES, TilingConfig, default_tiling, forward, inverse, tile_count
from .imageio import (
    add_gaussian_noise,
    load_image,
    noise_sigma,
    read_manifest,
    save_pgm,
    synth_texture_corpus,
)

METHOD_NAMES = {"default": "default_highpass", "periodic": "periodic", "adaptive": "adaptive"}
COST_NAMES = {"psnr": "denoising_psnr", "cv": "coefficient_of_variation"}


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("CURVERET_THREADS", "")
    if env.strip().lower() in ("", "auto"):
        return os.cpu_count() or 1
    return max(1, int(env))


def _tiling_arg(value: str, img, args) -> TilingConfig:
    if value != "auto":
        cfg = TilingConfig.load(value)
        if cfg.dims != img.shape:
            raise ValueError(f"tiling is for {cfg.dims}, image is {img.shape}")
        return cfg
    J = args.J if args.J is not None else adapt.usable_scales(img)
    return default_tiling(img.n1, img.n2, J, args.divisions, args.outer)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _cost_spec(args) -> adapt.CostSpec:
    return adapt.CostSpec(kind=COST_NAMES[args.cost], sigma=args.sigma,
                          n_trials=args.trials, base_seed=args.seed)


def _method(args) -> retrieval.MethodSpec:
    return retrieval.MethodSpec(
        mode=METHOD_NAMES[args.method], J=args.J, divisions=args.divisions,
        rotation_normalized=args.rotnorm, weights=args.weights, cost=_cost_spec(args))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_transform(args) -> int:
    from .plotting import plot_tiling

    img = load_image(args.image)
    cfg = _tiling_arg(args.tiling, img, args)
    coeffs = forward(img, cfg)
    err = float(np.abs(inverse(coeffs).pixels - img.pixels).max())
    out = Path(args.out)
    rows = ["tile_id,scale,quadrant,wedge,part,bins,energy,mean,std"]
    for g, c in coeffs.tiles:
        mag = np.abs(c)
        mean, std = (mag.mean(), mag.std()) if mag.size else (0.0, 0.0)
        rows.append(f"{g.tile_id},{g.scale},{g.quadrant},{g.wedge_index},{g.part},{g.bin_count},"
                    f"{float((c ** 2).sum()):.10g},{mean:.10g},{std:.10g}")
    _write_text(out / "tiles.csv", "\n".join(rows) + "\n")
    _write_text(out / "tiling.txt", cfg.to_text())
    plot_tiling(img, cfg, out / "tiling.png", title=f"J={cfg.J}, {cfg.outer_mode}")
    print(f"tiles={tile_count(cfg)} reconstruction_error={err:.3e}")
    return 0


def cmd_tune(args) -> int:
    img = load_image(args.image)
    spec = _cost_spec(args)
    if spec.kind == "denoising_psnr" and spec.sigma is None:
        spec = adapt.CostSpec(spec.kind, adapt.noise_sigma(img), spec.n_trials, spec.base_seed)
    ladder = tuple(float(x) for x in args.ladder.split(","))
    J = args.J if args.J is not None else adapt.usable_scales(img)
    initial = adapt.evaluate_cost(img, default_tiling(img.n1, img.n2, J, 4, "periodic"), spec)
    history: list = []
    cfg = adapt.optimize_global(img, spec, threads=_threads(args), ladder=ladder, J=J,
                                history=history)
    final = adapt.evaluate_cost(img, cfg, spec)
    lines = ["resolution,rows,cols,step,cost", f"1,{img.n1},{img.n2},initial,{initial:.10g}"]
    lines += [f"{r:g},{d[0]},{d[1]},{step},{cost:.10g}" for r, d, step, cost in history]
    lines.append(f"1,{img.n1},{img.n2},final,{final:.10g}")
    out = Path(args.out)
    _write_text(out, cfg.to_text())
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.csv")
    _write_text(log_path, "\n".join(lines) + "\n")
    print(f"initial={initial:.4f} final={final:.4f} J={cfg.J}")
    return 0


def cmd_denoise(args) -> int:
    clean = load_image(args.image)
    cfg = _tiling_arg(args.tiling, clean, args)
    sigma = args.sigma if args.sigma is not None else noise_sigma(clean)
    noisy = add_gaussian_noise(clean, sigma, args.seed)
    den = adapt.denoise(noisy, cfg, sigma)
    save_pgm(den, args.out, bits=16)
    print(f"sigma={sigma:.6f} psnr_noisy={adapt.psnr(noisy, clean):.4f} "
          f"psnr_denoised={adapt.psnr(den, clean):.4f}")
    return 0


def cmd_synth(args) -> int:
    m = synth_texture_corpus(args.classes, args.crops, args.size, args.seed, args.outdir)
    print(f"wrote {len(m.entries)} images ({len(m.queries)} queries) to {args.outdir}")
    return 0


def cmd_index(args) -> int:
    manifest = read_manifest(args.manifest)
    method = _method(args)
    first = manifest.load(manifest.tests[0]) if manifest.tests else None
    if args.tiling:
        tiling = TilingConfig.load(args.tiling)
    elif first is not None:
        method = replace(method, J=retrieval.resolve_J(method, first))
        tiling = retrieval.tiling_for(method, first.shape, method.J)
    else:
        raise ValueError("empty test set needs an explicit --tiling")
    index = retrieval.build_index(manifest, method, tiling, args.out, threads=_threads(args))
    print(f"indexed {len(index.rows)} images, fingerprint {index.fingerprint}")
    return 0


def cmd_query(args) -> int:
    index = retrieval.read_index(args.index)
    method = index.method
    if args.method:
        method = replace(method, mode=METHOD_NAMES[args.method], cost=_cost_spec(args))
    img = load_image(args.image)
    tiling = TilingConfig.load(args.tiling) if args.tiling else None
    res = retrieval.query(img, index, method, query_id=Path(args.image).name,
                          query_label=args.label or "", tiling=tiling, threads=_threads(args))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["rank", "id", "class", "distance"])
    for i, (rid, label, d) in enumerate(res.ranked[:args.k]):
        w.writerow([i + 1, rid, label, f"{d:.10g}"])
    return 0


def cmd_evaluate(args) -> int:
    manifest = read_manifest(args.manifest)
    method = _method(args)
    report = retrieval.evaluate(manifest, method, threads=_threads(args))
    retrieval.write_report(report, args.report, title=args.method)
    print("method,P@1,P@2,P@N,MRR,MAP")
    a = report.aggregates
    print(f"{args.method},{a['P@1']:.3f},{a['P@2']:.3f},{a['P@N']:.3f},{a['MRR']:.3f},{a['MAP']:.3f}")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_tiling_opts(p):
    p.add_argument("--tiling", default="auto", help="tiling file, or 'auto' for the dyadic default")
    p.add_argument("--outer", choices=OUTER_MODES, default="periodic")
    p.add_argument("--J", type=int, default=None, help="scale count (default: scale selection)")
    p.add_argument("--divisions", type=int, default=4)


def _add_cost_opts(p):
    p.add_argument("--cost", choices=sorted(COST_NAMES), default="psnr")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--sigma", type=float, default=None)


def _add_method_opts(p):
    p.add_argument("--method", choices=sorted(METHOD_NAMES), default="periodic")
    p.add_argument("--J", type=int, default=None)
    p.add_argument("--divisions", type=int, default=4)
    p.add_argument("--rotnorm", action="store_true", help="sort tiles per scale (4 divisions)")
    p.add_argument("--weights", choices=features.SEISMIC_PRESETS, default=None)
    _add_cost_opts(p)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $CURVERET_THREADS or all cores)")
    common.add_argument("--seed", type=int, default=0, help="the only source of randomness")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="curveret", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    add = lambda name, **kw: sub.add_parser(name, parents=[common], **kw)  # noqa: E731

    p = add("transform", help="tile statistics and round-trip error")
    p.add_argument("image")
    _add_tiling_opts(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_transform)

    p = add("tune", help="learn an adaptive tiling for one image")
    p.add_argument("image")
    _add_cost_opts(p)
    p.add_argument("--J", type=int, default=None)
    p.add_argument("--ladder", default=",".join(map(str, adapt.DEFAULT_LADDER)))
    p.add_argument("--out", required=True, help="tiling file to write")
    p.add_argument("--log", default=None, help="cost log CSV (default: <out>.log.csv)")
    p.set_defaults(func=cmd_tune)

    p = add("denoise", help="add seeded noise and denoise with curvelets")
    p.add_argument("image")
    _add_tiling_opts(p)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--out", required=True, help="denoised PGM")
    p.set_defaults(func=cmd_denoise)

    p = add("synth", help="write a synthetic grating corpus")
    p.add_argument("outdir")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--crops", type=int, default=3)
    p.add_argument("--size", type=int, default=128)
    p.set_defaults(func=cmd_synth)

    p = add("index", help="featurize the test images of a manifest")
    p.add_argument("manifest")
    _add_method_opts(p)
    p.add_argument("--tiling", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = add("query", help="rank an index against one image")
    p.add_argument("image")
    p.add_argument("index")
    p.add_argument("--method", choices=sorted(METHOD_NAMES), default=None)
    _add_cost_opts(p)
    p.add_argument("--tiling", default=None)
    p.add_argument("--label", default=None)
    p.add_argument("-k", "--k", type=int, default=10)
    p.set_defaults(func=cmd_query)

    p = add("evaluate", help="run all queries of a manifest and report metrics")
    p.add_argument("manifest")
    _add_method_opts(p)
    p.add_argument("--report", required=True, help="report directory")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"curveret {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
