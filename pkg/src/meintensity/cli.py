"""Command-line entry point: ``meintensity <command> [options] [key=value ...]``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime or
numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as C
from .annotation import Manifest, ManifestError, adapt_directory, load_manifest, save_manifest
from .metrics import EvalReport, evaluate_trajectories, results_table
from .pipeline import (
    AblationSpec,
    TrainingDiverged,
    evaluate,
    generate_synthetic,
    make_dataset,
    predict_all,
    read_ground_truth,
    run_ablation_suite,
    split,
    train,
    truth_on_grid,
)
from .trajectory import clip_target

logger = logging.getLogger("meintensity")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _rebase(manifest: Manifest, src: Path, dst: Path) -> Manifest:
    """Rewrite relative frame paths from directory ``src`` to directory ``dst``."""
    if src.resolve() == dst.resolve():
        return manifest
    clips = []
    for clip in manifest.clips:
        paths = tuple(
            p if os.path.isabs(p) else Path(os.path.relpath(src / p, dst)).as_posix()
            for p in clip.frame_paths
        )
        clips.append(replace(clip, frame_paths=paths))
    return Manifest(clips, manifest.source_name, manifest.schema_version)


def _load_data_manifest(cfg: dict) -> tuple[Manifest, Path]:
    data = cfg["data"]
    if data["manifest"]:
        path = Path(data["manifest"])
        if not path.is_file():
            raise DataError(f"manifest not found: {path}")
        frames_root = Path(data["frames_root"]) if data["frames_root"] else path.parent
        return load_manifest(path), frames_root
    if data["root"]:
        root = Path(data["root"])
        # Adapters keep frame paths relative to the dataset root.
        return adapt_directory(root, data["layout"], C.adapter_config(cfg)), root
    raise UsageError("set data.manifest or data.root")


def _datasets(cfg: dict, manifest: Manifest, frames_root: Path, shapes):
    tc = C.train_config(cfg)
    sp = cfg["split"]
    train_m, val_m = split(manifest, sp["policy"], float(sp["ratio"]), int(sp["seed"]))
    p = cfg["pseudo"]
    mc = C.model_config(cfg)

    def build(m, shape):
        return make_dataset(
            m, tc.T, shape, tc.input_size, frames_root, float(p["epsilon"]), float(p["sigma"]), mc.in_channels
        )

    out = {shape: (build(train_m, shape), build(val_m, shape)) for shape in shapes}
    return out, (train_m, val_m)


def _truth(cfg: dict, samples) -> dict | None:
    path = cfg["data"]["ground_truth"]
    if not path:
        return None
    return truth_on_grid(samples, read_ground_truth(path))


def _write_predictions(preds: dict, samples, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["clip_id", "slot", "tau", "pred", "target"])
        for s in samples:
            T = len(s.target)
            for t in range(T):
                w.writerow([s.clip_id, t, repr(t / (T - 1)), repr(float(preds[s.clip_id][t])), repr(float(s.target.values[t]))])


def _out_dir(cfg: dict, sub: str) -> Path:
    out = Path(cfg["output_dir"]) / sub
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args, cfg) -> int:
    root = Path(args.root)
    if not root.is_dir():
        raise DataError(f"dataset root not found: {root}")
    cfg["data"]["layout"] = args.layout
    manifest = adapt_directory(root, args.layout, C.adapter_config(cfg))
    out = Path(args.out)
    manifest = _rebase(manifest, root, out.parent)
    save_manifest(manifest, out)
    print(f"wrote {len(manifest)} clips to {out}")
    return EXIT_OK


def cmd_pseudo(args, cfg) -> int:
    manifest = load_manifest(args.manifest)
    shape = args.shape or cfg["pseudo"]["shape"]
    T = args.T or int(cfg["train"]["T"])
    eps, sigma = float(cfg["pseudo"]["epsilon"]), float(cfg["pseudo"]["sigma"])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["clip_id", "slot", "tau", "y"])
        for clip in manifest.clips:
            _, traj = clip_target(clip.onset, clip.apex, clip.offset, T, shape, eps, sigma)
            for t, y in enumerate(traj.values):
                w.writerow([clip.clip_id, t, repr(t / (T - 1)), repr(float(y))])
    print(f"wrote {len(manifest) * T} rows to {out}")
    return EXIT_OK


def cmd_synth(args, cfg) -> int:
    out = Path(cfg["synthetic"]["out_dir"] or Path(cfg["output_dir"]) / "synthetic")
    C.save_config(cfg, out / "config.yaml")
    result = generate_synthetic(C.synthetic_spec(cfg), out, seed=int(cfg["synthetic"]["seed"]))
    print(f"wrote {len(result.manifest)} clips to {result.manifest_path} ({result.seconds:.1f} s)")
    print(f"ground truth: {result.ground_truth_path}")
    return EXIT_OK


def _report_dict(r: EvalReport | None):
    return None if r is None else r.to_dict()


def cmd_train(args, cfg) -> int:
    out = _out_dir(cfg, "train")
    C.save_config(cfg, out / "config.yaml")
    spec = AblationSpec(cfg["train"]["variant"])
    manifest, frames_root = _load_data_manifest(cfg)
    datasets, _ = _datasets(cfg, manifest, frames_root, [spec.shape])
    train_data, val_data = datasets[spec.shape]
    if not train_data:
        raise DataError("no readable training clips")
    result = train(C.train_config(cfg), spec, train_data, val_data, C.model_config(cfg), out)
    reports = {"train": evaluate(result.model, train_data)}
    if val_data:
        reports["val"] = evaluate(result.model, val_data)
        truth = _truth(cfg, val_data)
        if truth is not None:
            reports["val_ground_truth"] = evaluate(result.model, val_data, truth)
    (out / "report.json").write_text(json.dumps({k: _report_dict(v) for k, v in reports.items()}, indent=2) + "\n")
    samples = list(train_data) + list(val_data)
    _write_predictions(predict_all(result.model, samples), samples, out / "predictions.csv")
    for name, r in reports.items():
        print(f"{name}: mean Spearman {r.mean_spearman}, mean Kendall {r.mean_kendall}")
    print(f"checkpoint: {result.checkpoint}")
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    out = _out_dir(cfg, "eval")
    C.save_config(cfg, out / "config.yaml")
    manifest, frames_root = _load_data_manifest(cfg)
    datasets, _ = _datasets(cfg, manifest, frames_root, [cfg["pseudo"]["shape"]])
    train_data, val_data = datasets[cfg["pseudo"]["shape"]]
    reports = {}
    if args.self_labels:
        for name, data in (("train", train_data), ("val", val_data)):
            labels = {s.clip_id: s.target.values for s in data}
            reports[name] = evaluate_trajectories(labels, labels)
    else:
        if not args.checkpoint:
            raise UsageError("eval needs --checkpoint (or --self-labels)")
        from .model import load_checkpoint

        model, _ = load_checkpoint(args.checkpoint)
        for name, data in (("train", train_data), ("val", val_data)):
            reports[name] = evaluate(model, data)
        samples = list(train_data) + list(val_data)
        _write_predictions(predict_all(model, samples), samples, out / "predictions.csv")
    (out / "report.json").write_text(json.dumps({k: v.to_dict() for k, v in reports.items()}, indent=2) + "\n")
    label = "pseudo-labels (self)" if args.self_labels else Path(args.checkpoint).name
    table = results_table({f"{label} [{k}]": v for k, v in reports.items()})
    (out / "results.md").write_text(table)
    print(table, end="")
    return EXIT_OK


def cmd_ablate(args, cfg) -> int:
    out = _out_dir(cfg, "ablate")
    C.save_config(cfg, out / "config.yaml")
    variants = cfg["ablation"]["variants"]
    manifest, frames_root = _load_data_manifest(cfg)
    shapes = sorted({AblationSpec(v).shape for v in variants})
    datasets, _ = _datasets(cfg, manifest, frames_root, shapes)
    any_val = next(iter(datasets.values()))[1]
    truth = _truth(cfg, any_val)
    rows = run_ablation_suite(C.train_config(cfg), variants, datasets, C.model_config(cfg), truth, out)
    ok = {r.label: r.val for r in rows if r.val is not None}
    table = results_table(ok)
    (out / "results.md").write_text(table)
    (out / "results.csv").write_text(results_table(ok, "csv"))
    doc = [
        {
            "variant": r.variant,
            "label": r.label,
            "val": _report_dict(r.val),
            "train": _report_dict(r.train),
            "val_ground_truth": _report_dict(r.truth),
            "error": r.error,
            "seconds": r.seconds,
        }
        for r in rows
    ]
    (out / "results.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(table, end="")
    failed = [r.variant for r in rows if r.error]
    if failed:
        print(f"failed variants: {failed}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _read_curves(path: Path, candidates: tuple[str, ...]) -> dict[str, np.ndarray]:
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        col = next((c for c in candidates if c in cols), None)
        if col is None or "clip_id" not in cols or "slot" not in cols:
            raise DataError(f"{path}: needs clip_id, slot and one of {candidates}")
        rows: dict[str, list[tuple[int, float]]] = {}
        for rec in reader:
            rows.setdefault(rec["clip_id"], []).append((int(rec["slot"]), float(rec[col])))
    return {k: np.array([v for _, v in sorted(items)]) for k, items in rows.items()}


def cmd_plot(args, cfg) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    preds = _read_curves(Path(args.predictions), ("pred", "y_hat", "y"))
    targets = _read_curves(Path(args.targets), ("y", "target"))
    clips = args.clips or sorted(preds)[: args.max_clips]
    missing = [c for c in clips if c not in targets or c not in preds]
    if missing:
        raise DataError(f"clips missing from inputs: {missing}")
    n = len(clips)
    cols = min(n, 4)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.4 * rows), squeeze=False)
    for ax, clip in zip(axes.flat, clips):
        y, yhat = targets[clip], preds[clip]
        ax.plot(np.arange(len(y)), y, color="0.6", lw=2, label="pseudo-label")
        ax.plot(np.arange(len(yhat)), yhat, color="tab:blue", lw=1.5, label="predicted")
        ax.set_title(clip, fontsize=9)
        ax.set_xlabel("slot")
    for ax in list(axes.flat)[n:]:
        ax.axis("off")
    axes.flat[0].legend(fontsize=7)
    fig.tight_layout()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(args.out, dpi=100)
    plt.close(fig)
    print(f"wrote {n}-panel figure to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meintensity", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("overrides", nargs="*", metavar="key=value", help="dotted config overrides")
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "convert a dataset directory into a manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--layout", required=True, choices=["samm_like", "casme2_like", "flat_json"])
    p.add_argument("--out", required=True)

    p = add("pseudo", cmd_pseudo, "write pseudo-intensity targets as CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--T", type=int)
    p.add_argument("--shape", choices=["triangular", "gaussian"])
    p.add_argument("--out", required=True)

    add("synth", cmd_synth, "generate a synthetic benchmark")
    add("train", cmd_train, "train one variant")
    p = add("eval", cmd_eval, "evaluate a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--self-labels", action="store_true", help="score pseudo-labels against themselves")
    add("ablate", cmd_ablate, "train and compare ablation variants")

    p = add("plot", cmd_plot, "overlay predicted and target trajectories")
    p.add_argument("--predictions", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clips", nargs="*")
    p.add_argument("--max-clips", type=int, default=4)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # Own handler on the package logger, so warnings reach stderr even when
    # the host process already configured logging.
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    previous_level = logger.level
    logger.addHandler(handler)
    logger.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = C.load_config(args.config, args.overrides)
        return args.func(args, cfg)
    except (C.ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ManifestError, FileNotFoundError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, FloatingPointError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        logger.removeHandler(handler)
        logger.setLevel(previous_level)


if __name__ == "__main__":
    sys.exit(main())
