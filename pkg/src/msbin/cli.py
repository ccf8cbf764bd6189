"""Command-line workflow: synth -> optimize -> train -> run -> eval -> rank.

Each command is a pure function of its file inputs and flags; outputs are
byte-identical across reruns and thread counts.  A JSON config file can
override any module default; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from . import bandopt, cvs, ensemble, imgcore, metrics, report, synthgen
from .bandopt import BandTriple, OptimizerConfig, RankedTriples, TripleScore
from .ensemble import ExpertEnsemble
from .imgcore import LoadError, load_binary, load_dataset, load_ms, save_binary
from .kernels import KernelSpec
from .metrics import UndefinedMetricError
from .spectral import PreprocessConfig
from .synthgen import SynthConfig
from .wrapper import WrapperConfig


class CliError(Exception):
    pass


CONFIG_SECTIONS = ("preprocess", "kernel", "wrapper", "optimizer", "synth")

_KERNEL_NAMES = ("otsu", "niblack", "sauvola", "bg+otsu", "bg+niblack", "bg+sauvola")


def kernel_from_name(name: str) -> KernelSpec:
    base = {"otsu": KernelSpec.otsu, "niblack": KernelSpec.niblack,
            "sauvola": KernelSpec.sauvola}
    if name in base:
        return base[name]()
    if name.startswith("bg+") and name[3:] in base:
        return KernelSpec.bg_suppressed(inner=base[name[3:]]())
    raise CliError(f"unknown kernel {name!r} (choose from {', '.join(_KERNEL_NAMES)})")


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed JSON in {p}: {exc}") from exc
    unknown = set(cfg) - set(CONFIG_SECTIONS)
    if unknown:
        raise CliError(f"{p}: unknown config sections {sorted(unknown)} "
                       f"(known: {list(CONFIG_SECTIONS)})")
    return cfg


def _section(cfg: dict, name: str, cls, default):
    try:
        return cls.from_dict(cfg[name]) if name in cfg else default
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError(f"bad '{name}' config section: {exc}") from exc


def _load_images_with_gt(dataset_path: str) -> dict[str, tuple]:
    items = load_dataset(dataset_path)
    images = {}
    for name, u, gt in items:
        if gt is None:
            raise CliError(f"image {name!r} in {dataset_path} has no ground truth")
        images[name] = (u, gt)
    return images


def _progress(args, message: str) -> None:
    if args.verbose:
        print(message, file=sys.stderr)


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    synth_cfg = _section(cfg, "synth", SynthConfig, SynthConfig())
    manifest = synthgen.generate_dataset(args.n, args.seed, args.out, synth_cfg)
    print(f"wrote {len(manifest.items)} images to {args.out}")
    return 0


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    preprocess = _section(cfg, "preprocess", PreprocessConfig, PreprocessConfig())
    wrapper_cfg = _section(cfg, "wrapper", WrapperConfig, WrapperConfig())
    if args.kernel is not None:
        kernel = kernel_from_name(args.kernel)
    else:
        kernel = _section(cfg, "kernel", KernelSpec, KernelSpec.sauvola())
    opt_cfg = _section(cfg, "optimizer", OptimizerConfig, OptimizerConfig())
    opt_cfg = OptimizerConfig(**{**opt_cfg.to_dict(),
                                 "mode": args.mode or opt_cfg.mode,
                                 "tail_count": args.tail if args.tail is not None
                                 else opt_cfg.tail_count,
                                 "seed": args.seed})

    _progress(args, f"optimizing with kernel={kernel.kind} mode={opt_cfg.mode} "
                    f"threads={args.threads}")
    ranked, errors = bandopt.dataset_best(args.dataset, kernel, opt_cfg, wrapper_cfg,
                                          preprocess=preprocess, threads=args.threads)
    payload = {
        "kernel": kernel.to_dict(),
        "wrapper": wrapper_cfg.to_dict(),
        "preprocess": preprocess.to_dict(),
        "optimizer": opt_cfg.to_dict(),
        "images": [
            {"image": name,
             "best": list(ranked[name].best.triple),
             "fm": ranked[name].best.fm,
             "tail": [list(e.triple) for e in ranked[name].entries[1:]],
             "tail_fms": [e.fm for e in ranked[name].entries[1:]]}
            for name in sorted(ranked)
        ],
        "errors": errors,
    }
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"optimized {len(ranked)} images "
          f"({len(errors)} errors) -> {args.out}")
    return 0


def _read_ranked_json(path: str):
    p = Path(path)
    if not p.is_file():
        raise CliError(f"ranked-triples file not found: {p}")
    data = json.loads(p.read_text())
    ranked = {}
    for entry in data["images"]:
        scores = [TripleScore(BandTriple(*entry["best"]), float(entry["fm"]))]
        scores += [TripleScore(BandTriple(*t), float(fm))
                   for t, fm in zip(entry["tail"], entry["tail_fms"])]
        ranked[entry["image"]] = RankedTriples(entries=scores)
    setup_parts = (KernelSpec.from_dict(data["kernel"]),
                   WrapperConfig.from_dict(data["wrapper"]),
                   PreprocessConfig.from_dict(data["preprocess"]))
    return ranked, setup_parts


def cmd_train(args) -> int:
    ranked, (kernel, wrapper_cfg, preprocess) = _read_ranked_json(args.ranked)
    images = _load_images_with_gt(args.dataset)
    missing = sorted(set(images) - set(ranked))
    if missing:
        raise CliError(f"{args.ranked} lacks ranked triples for images: {missing}")
    images = {name: images[name] for name in images if name in ranked}
    setup = cvs.TrainSetup(kernel=kernel, wrapper=wrapper_cfg, preprocess=preprocess)

    out_model = Path(args.out_model)
    out_model.parent.mkdir(parents=True, exist_ok=True)
    records_path = out_model.with_name(out_model.stem + "_records.csv")
    summary_path = out_model.with_name(out_model.stem + "_summary.json")
    figure_path = out_model.with_name(out_model.stem + "_cvs.png")

    summary: dict = {"strategy": args.strategy, "p": args.p, "seed": args.seed}
    if args.strategy == "all3bs":
        model = cvs.build_ensemble(ranked, sorted(images), setup)
        report.write_cvs_records_csv([], records_path)
        summary["experts"] = [list(t) for t in model.experts]
    else:
        evaluator = cvs.Evaluator(images, setup)
        _progress(args, f"cross-validating {len(images)} images at p={args.p} "
                        f"(n_cv={args.n_cv})")
        records, stats = cvs.cv_iterate(images, ranked, setup, args.p,
                                        n_cv=args.n_cv, seed=args.seed,
                                        evaluator=evaluator)
        _progress(args, f"searching partitions (budget={args.budget}, "
                        f"criterion={args.strategy})")
        result = cvs.cvs_search(images, ranked, setup, args.p, budget=args.budget,
                                seed=args.seed, criterion=args.strategy,
                                evaluator=evaluator)
        model = result.ensemble
        report.write_cvs_records_csv(records, records_path)
        report.render_cvs_figure(records, figure_path)
        train_count, val_count = cvs.holdout_sizes(len(images), args.p)
        summary.update({
            "n_cv": args.n_cv, "budget": args.budget,
            "holdout": {"train_count": train_count, "val_count": val_count},
            "aggregates": stats,
            "k_star": {"training": list(result.partition.training),
                       "fm_typ": result.record.fm_typ,
                       "fm_bes": result.record.fm_bes,
                       "fm_mul": result.record.fm_mul,
                       "cvs": result.cvs_value,
                       "evaluations": result.evaluations},
            "experts": [list(t) for t in model.experts],
        })

    model.save(out_model)
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"trained {args.strategy} model with {len(model.experts)} experts -> {out_model}")
    return 0


def _resolve_run_inputs(input_path: str) -> list[Path]:
    """Per-image manifest paths from a manifest file, dataset, or directory."""
    p = Path(input_path)
    if p.is_dir():
        candidate = p / "manifest.json"
        if not candidate.is_file():
            raise CliError(f"{p} contains no manifest.json")
        p = candidate
    if not p.is_file():
        raise CliError(f"input not found: {p}")
    data = json.loads(p.read_text())
    if "bands" in data:
        return [p]
    if "items" in data:
        manifest = imgcore.load_dataset_manifest(p)
        return [item.ms_dir / "manifest.json" for item in manifest.items]
    raise CliError(f"{p} is neither a per-image nor a dataset manifest")


def cmd_run(args) -> int:
    model = ExpertEnsemble.load(args.model)
    inputs = _resolve_run_inputs(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(manifest_path: Path) -> str:
        u = load_ms(manifest_path)
        mask = ensemble.combine(u, model)
        save_binary(mask, out_dir / f"{u.name}.png")
        _progress(args, f"binarized {u.name}")
        return u.name

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            names = list(pool.map(run_one, inputs))
    else:
        names = [run_one(m) for m in inputs]
    print(f"binarized {len(names)} images -> {out_dir}")
    return 0


def _gt_lookup(gt_arg: str) -> dict[str, Path]:
    p = Path(gt_arg)
    if p.is_file():
        manifest = imgcore.load_dataset_manifest(p)
        out = {}
        for item in manifest.items:
            per_image = item.ms_dir / "manifest.json"
            name = json.loads(per_image.read_text())["name"]
            gt = item.gt_path or imgcore.ms_gt_path(per_image)
            if gt is not None:
                out[name] = gt
        return out
    if p.is_dir():
        out = {}
        for child in sorted(p.iterdir()):
            if child.suffix == ".png" and child.is_file():
                out[child.stem] = child
            elif child.is_dir() and (child / "gt.png").is_file():
                out[child.name] = child / "gt.png"
        return out
    raise CliError(f"GT source not found: {p}")


def cmd_eval(args) -> int:
    pred_dir = Path(args.pred)
    if not pred_dir.is_dir():
        raise CliError(f"prediction directory not found: {pred_dir}")
    preds = sorted(pred_dir.glob("*.png"))
    if not preds:
        raise CliError(f"no .png masks in {pred_dir}")
    gt_map = _gt_lookup(args.gt)

    scored = []
    excluded = {}
    for pred_path in preds:
        name = pred_path.stem
        if name not in gt_map:
            raise CliError(f"no ground truth found for {pred_path}")
        b = load_binary(pred_path)
        gt = load_binary(gt_map[name])
        try:
            scored.append(metrics.score_image(name, b, gt))
        except UndefinedMetricError as exc:
            excluded[name] = str(exc)
    if not scored:
        raise CliError("every image had undefined metrics; nothing to report")

    rep = metrics.build_report(scored)
    out_csv = Path(args.out)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    report.write_report_csv(rep, out_csv)
    report.write_report_json(rep, out_csv.with_suffix(".json"))
    report.render_report_figure(rep, out_csv.with_suffix(".png"))
    if excluded:
        out_csv.with_suffix(".json").write_text(json.dumps(
            {**report.load_report_json(out_csv.with_suffix(".json")),
             "excluded": excluded}, indent=2, sort_keys=True) + "\n")
        print(f"excluded {len(excluded)} images with undefined metrics",
              file=sys.stderr)
    print(f"evaluated {len(scored)} images -> {out_csv}")
    return 0


def cmd_rank(args) -> int:
    values = {}
    for path in args.reports:
        p = Path(path)
        if not p.is_file():
            raise CliError(f"report not found: {p}")
        data = report.load_report_json(p)
        values[p.stem] = {row["image"]: {m: row[m] for m in report.METRICS}
                          for row in data["per_image"]}
    try:
        scores, flagged = metrics.ranking_scores(values)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    out_csv = Path(args.out)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    report.write_ranking_csv(scores, out_csv)
    out_csv.with_suffix(".json").write_text(json.dumps(
        {"scores": scores, "flagged": [list(f) for f in flagged]},
        indent=2, sort_keys=True) + "\n")
    report.render_ranking_figure(scores, out_csv.with_suffix(".png"))
    for method in sorted(scores, key=lambda m: (-scores[m], m)):
        print(f"{method}: S = {scores[method]:.4f}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msbin",
        description="Multiple-expert band-subspace binarization workflow",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1,
                        help="parallel workers (never changes outputs)")
    common.add_argument("--seed", type=int, default=0, help="base random seed")
    common.add_argument("--config", default=None,
                        help="JSON file overriding module config defaults")
    common.add_argument("--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic multispectral dataset")
    p.add_argument("--n", type=int, required=True, help="number of images")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("optimize", parents=[common],
                       help="per-image best and tailing band triples")
    p.add_argument("--dataset", required=True, help="dataset manifest JSON")
    p.add_argument("--kernel", choices=_KERNEL_NAMES, default=None)
    p.add_argument("--mode", choices=["exhaustive", "evolutionary"], default=None)
    p.add_argument("--tail", type=int, default=None, help="tailing triples kept")
    p.add_argument("--out", required=True, help="ranked-triples JSON output")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("train", parents=[common],
                       help="build an expert ensemble from ranked triples")
    p.add_argument("--dataset", required=True, help="dataset manifest JSON")
    p.add_argument("--ranked", required=True,
                   help="optimize output JSON (also supplies the kernel, "
                        "wrapper, and preprocess configs for consistency)")
    p.add_argument("--p", type=float, default=0.2, help="holdout fraction")
    p.add_argument("--strategy", choices=["cvs", "minstd", "all3bs"], default="cvs")
    p.add_argument("--n-cv", type=int, default=50, help="random CV iterations")
    p.add_argument("--budget", type=int, default=100,
                   help="partition evaluations for the search")
    p.add_argument("--out-model", required=True, help="ensemble model JSON output")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", parents=[common],
                       help="binarize images with a trained ensemble")
    p.add_argument("--model", required=True, help="ensemble model JSON")
    p.add_argument("--input", required=True,
                   help="per-image manifest, dataset manifest, or image directory")
    p.add_argument("--out", required=True, help="output directory for masks")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", parents=[common],
                       help="score predicted masks against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted masks")
    p.add_argument("--gt", required=True,
                   help="GT directory or dataset manifest JSON")
    p.add_argument("--out", required=True, help="report CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rank", parents=[common],
                       help="ratio-to-best ranking across report JSONs")
    p.add_argument("reports", nargs="+", help="report JSON files, one per method")
    p.add_argument("--out", required=True, help="ranking CSV path")
    p.set_defaults(func=cmd_rank)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, LoadError, UndefinedMetricError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
