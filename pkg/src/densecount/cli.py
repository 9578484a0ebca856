"""Command-line entry point: ``densecount <subcommand> ...``."""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .dataset import (
    DATASET_KINDS,
    dataset_stats,
    load_manifest,
    manifest_from_annotations,
    read_annotations,
    save_manifest,
    with_folds,
    write_annotations,
)
from .density import KernelSpec, PointAnnotationSet, generate_density_map, integrate
from .dgrd import quantize, read_dgrd, write_dgrd
from .errors import ConfigError, DensecountError
from .metrics import (
    evaluate,
    format_cv,
    format_grouped,
    format_report,
    grouped_report,
    pair_up,
    read_predictions,
    write_predictions,
)
from .pnm import overlay, read_pnm, to_gray, write_pnm
from .predictor import baseline_predict, emit_training_manifest, oracle_predict
from .rng import SplitMix64
from .synthetic import random_annotations
from .yields import (
    GRAMS_PER_KG,
    GRAMS_PER_QUINTAL,
    lookup_weight,
    yield_eq1,
    yield_eq2,
    yield_panoramic,
)


class CommandFailed(Exception):
    """Diagnostics were reported; exit non-zero."""


def worker_count() -> int:
    raw = os.environ.get("DENSECOUNT_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DENSECOUNT_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("DENSECOUNT_THREADS must be >= 1")
    return n


def _map_sorted(fn, items):
    # results come back in input order regardless of scheduling
    workers = worker_count()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _safe_id(image_id: str) -> str:
    if not image_id or "/" in image_id or "\\" in image_id or image_id in (".", ".."):
        raise ConfigError(f"image id {image_id!r} cannot be used as a file name")
    return image_id


def _load_annotation_source(path: str) -> list[PointAnnotationSet]:
    if path.endswith(".json"):
        manifest = load_manifest(path)
        if manifest.annotations is None:
            raise ConfigError(f"{path}: manifest has no 'annotations' file")
        return [manifest.annotations[i] for i in sorted(manifest.annotations)]
    return read_annotations(path)


# ---------------------------------------------------------------------------


def kernel_from_args(args) -> KernelSpec:
    adaptive_flags = [f for f in ("k", "beta", "fallback_sigma") if getattr(args, f) is not None]
    if args.sigma is not None and args.adaptive:
        raise ConfigError("--sigma (fixed kernel) and --adaptive are mutually exclusive")
    if args.sigma is not None:
        if adaptive_flags:
            raise ConfigError(f"--{adaptive_flags[0].replace('_', '-')} only applies to --adaptive kernels")
        return KernelSpec.fixed(args.sigma, args.truncation)
    return KernelSpec.adaptive(
        k=3 if args.k is None else args.k,
        beta=0.3 if args.beta is None else args.beta,
        fallback_sigma=15.0 if args.fallback_sigma is None else args.fallback_sigma,
        truncation_radius=args.truncation,
    )


def densify_sets(sets, spec: KernelSpec, out_dir: Path) -> list[tuple[str, int, float]]:
    out_dir.mkdir(parents=True, exist_ok=True)
    for ann in sets:
        _safe_id(ann.image_id)

    def work(ann):
        dmap = quantize(generate_density_map(ann, spec))
        write_dgrd(out_dir / f"{ann.image_id}.dgrd", dmap)
        return ann.image_id, len(ann), integrate(dmap)

    return sorted(_map_sorted(work, list(sets)))


def cmd_densify(args) -> int:
    spec = kernel_from_args(args)
    sets = _load_annotation_source(args.annotations)
    rows = densify_sets(sets, spec, Path(args.out_dir))
    lines = [f"{image_id} {n} {total:.6f}" for image_id, n, total in rows]
    if args.summary:
        Path(args.summary).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    for line in lines:
        print(line)
    return 0


def cmd_predict(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts: dict[str, float] = {}
    if args.oracle:
        if args.seed is None:
            raise ConfigError("--oracle needs --seed")
        rng = SplitMix64(args.seed)
        for grid in sorted(Path(args.oracle).glob("*.dgrd")):
            dmap = quantize(oracle_predict(read_dgrd(grid), args.noise, rng))
            write_dgrd(out_dir / grid.name, dmap)
            counts[grid.stem] = integrate(dmap)
    else:
        if not args.images:
            raise ConfigError("give image files to run the baseline on, or --oracle GRID_DIR")

        def work(path):
            image_id = _safe_id(Path(path).stem)
            gray = to_gray(read_pnm(path))
            dmap = quantize(
                baseline_predict(gray, args.template_sigma, args.threshold, args.polarity, image_id)
            )
            write_dgrd(out_dir / f"{image_id}.dgrd", dmap)
            return image_id, integrate(dmap)

        for image_id, total in _map_sorted(work, sorted(args.images)):
            if image_id in counts:
                raise ConfigError(f"two images map to id {image_id!r}")
            counts[image_id] = total
    write_predictions(args.predictions, counts)
    for image_id in sorted(counts):
        print(f"{image_id} {counts[image_id]:.6f}")
    return 0


def _truth_counts(path: str) -> tuple[dict[str, float], dict[str, str]]:
    p = Path(path)
    if p.is_dir():
        return {g.stem: integrate(read_dgrd(g)) for g in sorted(p.glob("*.dgrd"))}, {}
    if path.endswith(".json"):
        m = load_manifest(path)
        return (
            {r.image_id: float(r.annotation_count) for r in m.records},
            {r.image_id: r.variety for r in m.records},
        )
    sets = read_annotations(path)
    return {a.image_id: float(len(a)) for a in sets}, {a.image_id: a.variety for a in sets}


def cmd_evaluate(args) -> int:
    p = Path(args.predictions)
    if p.is_dir():
        preds = {g.stem: integrate(read_dgrd(g)) for g in sorted(p.glob("*.dgrd"))}
    else:
        preds = read_predictions(p)
    truths, varieties = _truth_counts(args.truth)
    folds = None
    if args.manifest:
        m = load_manifest(args.manifest)
        varieties = {**varieties, **{r.image_id: r.variety for r in m.records}}
        folds = dict(m.fold_assignment) if m.fold_assignment is not None else None
    if args.group_by == "fold" and folds is None:
        raise ConfigError("--group-by fold needs --manifest with a fold_assignment")
    pairs, missing = pair_up(preds, truths, varieties, folds)
    if missing:
        for image_id in missing:
            print(f"error: no ground truth for {image_id}", file=sys.stderr)
        raise CommandFailed(f"{len(missing)} prediction id(s) missing from ground truth")
    unpredicted = len(set(truths) - set(preds))
    if unpredicted:
        print(f"note: {unpredicted} ground-truth image(s) have no prediction", file=sys.stderr)

    if args.group_by:
        report = grouped_report(pairs, args.group_by)
        print(format_grouped(report))
        if report.cv is not None:
            print()
            print(format_cv(report.cv))
    else:
        report = evaluate(pairs)
        print(format_report(report))
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    return 0


def cmd_split(args) -> int:
    if args.source.endswith(".json"):
        manifest = load_manifest(args.source)
    else:
        ann_path = os.path.relpath(args.source, Path(args.out).resolve().parent)
        manifest = manifest_from_annotations(
            read_annotations(args.source), name=args.name, annotations_path=ann_path
        )
    split = with_folds(manifest, args.folds, args.seed)
    save_manifest(args.out, split)
    for fold, size in enumerate(split.fold_sizes()):
        print(f"fold {fold}: {size} images")
    return 0


def cmd_stats(args) -> int:
    if args.source.endswith(".json"):
        stats = dataset_stats(load_manifest(args.source))
    else:
        stats = dataset_stats(manifest_from_annotations(read_annotations(args.source)))
    print(stats.table())
    return 0


def cmd_yield(args) -> int:
    used = []

    def weight(explicit, flag, table):
        if explicit is not None:
            if args.variety:
                raise ConfigError(f"give either {flag} or --variety, not both")
            used.append(f"{flag} = {explicit:g} g (given)")
            return explicit
        if not args.variety:
            raise ConfigError(f"--mode {args.mode} needs {flag} or --variety [--year]")
        variety, year, w = lookup_weight(table, args.variety, args.year)
        used.append(f"{flag} = {w:g} g (bundled {table}: {variety} {year})")
        return w

    def need(value, flag):
        if value is None:
            raise ConfigError(f"--mode {args.mode} needs {flag}")
        used.append(f"{flag} = {value:g}")
        return value

    if args.mode == "eq1":
        nv, nb = need(args.Nv, "--Nv"), need(args.Nb, "--Nb")
        grams = yield_eq1(nv, nb, weight(args.Pb, "--Pb", "cluster_weight"))
    elif args.mode == "eq2":
        nv, nb, na = need(args.Nv, "--Nv"), need(args.Nb, "--Nb"), need(args.Na, "--Na")
        grams = yield_eq2(nv, nb, na, weight(args.Pa, "--Pa", "berry_weight"))
    else:
        total = need(args.total_berries, "--total-berries")
        grams = yield_panoramic(total, weight(args.Pa, "--Pa", "berry_weight"))
    for line in used:
        print(f"input  {line}")
    print(f"yield  {grams:,.2f} g")
    print(f"       {grams / GRAMS_PER_KG:,.3f} kg")
    print(f"       {grams / GRAMS_PER_QUINTAL:,.4f} q")
    return 0


def cmd_render(args) -> int:
    img = read_pnm(args.image)
    dmap = read_dgrd(args.grid)
    write_pnm(args.out, overlay(img, dmap, alpha=args.alpha))
    print(f"count: {integrate(dmap):.2f}")
    return 0


def cmd_manifest(args) -> int:
    text = emit_training_manifest(args.kind).to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_selftest(args) -> int:
    """Synthetic round trip: annotate, densify, oracle-predict, evaluate."""
    rng = SplitMix64(args.seed)
    sets = []
    for i in range(args.images):
        n = 20 + rng.below(180)
        sets.append(random_annotations(f"img{i:04d}", n, 160, 120, rng, variety=f"v{i % 3}"))
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        write_annotations(tmp / "truth.tsv", sets)
        densify_sets(read_annotations(tmp / "truth.tsv"), KernelSpec.adaptive(), tmp / "gt")
        truths = {g.stem: integrate(read_dgrd(g)) for g in sorted((tmp / "gt").glob("*.dgrd"))}
        ok = True
        for noise in (0.0, args.noise):
            noise_rng = rng.split()
            preds = {
                g.stem: integrate(oracle_predict(read_dgrd(g), noise, noise_rng))
                for g in sorted((tmp / "gt").glob("*.dgrd"))
            }
            pairs, _ = pair_up(preds, truths)
            report = evaluate(pairs)
            print(format_report(report, title=f"oracle predictor, noise {noise:g}"))
            print()
            if noise == 0.0:
                zero = report.mae == report.mse == report.overall_mae == 0.0
                ok = ok and zero
    print("selftest:", "PASS" if ok else "FAIL")
    if not ok:
        raise CommandFailed("noise-free oracle did not give an all-zero report")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densecount", description="Density-map berry counting and grape yield tools."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("densify", help="ground-truth density grids from point annotations")
    p.add_argument("annotations", help="annotation file, or a manifest .json that references one")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--adaptive", action="store_true", help="geometry-adaptive kernels (default)")
    p.add_argument("--sigma", type=float, help="fixed kernel width in pixels")
    p.add_argument("--k", type=int, help="neighbours for adaptive sigma (default 3)")
    p.add_argument("--beta", type=float, help="adaptive sigma multiplier (default 0.3)")
    p.add_argument("--fallback-sigma", type=float, help="sigma when too few neighbours (default 15)")
    p.add_argument("--truncation", type=float, default=4.0, help="kernel support in sigmas")
    p.add_argument("--summary", help="also write the summary lines here")
    p.set_defaults(func=cmd_densify)

    p = sub.add_parser("predict", help="run the baseline counter or the oracle predictor")
    p.add_argument("images", nargs="*", help="PGM/PPM images (baseline)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--predictions", required=True, help="image_id<TAB>count output file")
    p.add_argument("--template-sigma", type=float, default=2.0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--polarity", choices=("dark", "light"), default="dark")
    p.add_argument("--oracle", metavar="GRID_DIR", help="perturb ground-truth grids instead")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("split", help="seeded k-fold assignment")
    p.add_argument("source", help="manifest .json or annotation file")
    p.add_argument("--folds", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="manifest to write")
    p.add_argument("--name", choices=DATASET_KINDS, default="custom")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("evaluate", help="count error report")
    p.add_argument("predictions", help="predictions file or directory of .dgrd grids")
    p.add_argument("--truth", required=True, help="annotation file, manifest .json, or .dgrd directory")
    p.add_argument("--manifest", help="manifest supplying varieties and folds")
    p.add_argument("--group-by", choices=("variety", "fold"))
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="per-variety annotation statistics")
    p.add_argument("source", help="manifest .json or annotation file")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("yield", help="yield estimate from counts and weights")
    p.add_argument("--mode", choices=("eq1", "eq2", "panoramic"), required=True)
    p.add_argument("--Nv", type=float, help="vines per surface unit")
    p.add_argument("--Nb", type=float, help="bunches per vine")
    p.add_argument("--Pb", type=float, help="mean bunch weight, g")
    p.add_argument("--Na", type=float, help="mean berries per bunch")
    p.add_argument("--Pa", type=float, help="mean berry weight, g")
    p.add_argument("--total-berries", type=float)
    p.add_argument("--variety", help="take the weight from the bundled historical tables")
    p.add_argument("--year", type=int)
    p.set_defaults(func=cmd_yield)

    p = sub.add_parser("render", help="heat-map overlay of a density grid")
    p.add_argument("image")
    p.add_argument("grid")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.6)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("manifest", help="training manifest for an external learned counter")
    p.add_argument("--kind", choices=("CR1-like", "CR2-like"), required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("selftest", help="synthetic oracle round trip")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--images", type=int, default=60)
    p.add_argument("--noise", type=float, default=0.1)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (DensecountError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
