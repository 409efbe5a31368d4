"""Command-line entry point: ``histolime {split,evaluate,explain,report,curves}``.

Exit codes: 0 success, 2 input/data error, 3 model-backend error,
4 numerical/algorithmic error. Human-readable output goes to stdout, diagnostics
to stderr; ``--json`` replaces stdout with one JSON document.
"""

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .curves import read_epoch_log, plot_curves
from .dataset import (
    PARTITIONS, CorpusWarning, load_corpus, load_manifest, normalize_ratios, stratified_split,
)
from .errors import HistolimeError, InputError
from .gateway import load_model
from .imaging import encode_image, read_image, resize_to_input
from .lime import LimeConfig, explain, render_overlay
from .lime.render import label_map_image
from .metrics import (
    MetricsReport, confusion, decide, evaluate, report_from_dict, reports_to_csv,
)


class CommandError(InputError):
    pass


def _ratios(text):
    try:
        return normalize_ratios(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _baseline(text):
    if text == "mean":
        return "segment_mean"
    if text.startswith("rgb:"):
        parts = text[4:].split(",")
        try:
            rgb = tuple(int(p) for p in parts)
        except ValueError:
            rgb = ()
        if len(rgb) == 3 and all(0 <= v <= 255 for v in rgb):
            return rgb
    raise argparse.ArgumentTypeError("baseline must be 'mean' or 'rgb:R,G,B'")


def _partition(text):
    return "validation" if text == "val" else text


def build_parser():
    parser = argparse.ArgumentParser(prog="histolime", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"histolime {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (created if absent)")
    common.add_argument("--force", action="store_true", help="overwrite existing output files")
    common.add_argument("--json", action="store_true", help="print a single JSON document to stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", parents=[common], help="write a seeded stratified split manifest")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", type=_ratios, default=(0.70, 0.15, 0.15), help="train,test[,validation]")

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a model on one partition")
    p.add_argument("--dataset", type=Path)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--model", type=Path)
    p.add_argument("--partition", type=_partition, choices=PARTITIONS, default="test",
                   metavar="{train,test,val}")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--predictions", type=Path,
                   help="replay a stored CSV (id,label,p_oscc or id,label,prediction) instead of running a model")
    p.add_argument("--name", help="model name recorded in the report")

    p = sub.add_parser("explain", parents=[common], help="LIME explanation of one image")
    p.add_argument("image", help="image id from the dataset, or a path to an image file")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--dataset", type=Path)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--segments", type=int)
    p.add_argument("--compactness", type=float)
    p.add_argument("--kernel-width", type=float)
    p.add_argument("--lambda", dest="ridge_lambda", type=float)
    p.add_argument("--top-k", type=int)
    p.add_argument("--baseline", type=_baseline)
    p.add_argument("--target", choices=("predicted", "0", "1"), default="predicted")
    p.add_argument("--mode", choices=("positive", "signed"), default="positive")
    p.add_argument("--segments-png", action="store_true", help="also write the superpixel id map")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("report", parents=[common], help="tabulate report JSON files into one CSV")
    p.add_argument("reports", type=Path, nargs="+")

    p = sub.add_parser("curves", parents=[common], help="plot accuracy/loss curves from an epoch log")
    p.add_argument("log", type=Path)
    p.add_argument("--title", default="")
    return parser


def _write_outputs(out_dir, files, force):
    """Write ``{name: bytes}`` into ``out_dir`` via temp-file-then-rename."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if not force:
        clash = [name for name in files if (out_dir / name).exists()]
        if clash:
            raise CommandError(f"refusing to overwrite {', '.join(clash)} in {out_dir} (use --force)")
    written = []
    for name, blob in files.items():
        target = out_dir / name
        tmp = out_dir / f".{name}.tmp"
        tmp.write_bytes(blob)
        os.replace(tmp, target)
        written.append(str(target))
    return written


def _load_corpus_noisy(root, err):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CorpusWarning)
        corpus = load_corpus(root)
    for w in caught:
        print(f"warning: {w.message}", file=err)
    return corpus


def cmd_split(args, out, err):
    corpus = _load_corpus_noisy(args.dataset, err)
    manifest = stratified_split(corpus, args.ratios, args.seed)
    written = _write_outputs(args.out, {"manifest.json": manifest.dumps().encode("utf-8")}, args.force)
    counts = {name: dict(zip(("Normal", "OSCC"), manifest.class_counts(name))) for name in PARTITIONS}
    if args.json:
        return {"command": "split", "files": written, "seed": args.seed, "counts": counts}
    for name in PARTITIONS:
        c = counts[name]
        print(f"{name:<10} {c['Normal'] + c['OSCC']:>6}  Normal {c['Normal']:>6}  OSCC {c['OSCC']:>6}", file=out)
    print(f"manifest written to {written[0]}", file=out)
    return None


def _read_predictions(path):
    """Rows of (id, label, predicted label) from a replay CSV with a header row."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CommandError(f"cannot read predictions {path}: {exc}") from exc
    if not rows:
        raise CommandError(f"predictions file {path} is empty")
    return rows


def _replay(args):
    rows = _read_predictions(args.predictions)
    preds, labels = [], []
    for lineno, row in enumerate(rows, start=2):
        try:
            labels.append(int(row["label"]))
            if row.get("prediction") not in (None, ""):
                preds.append(int(row["prediction"]))
            else:
                p = float(row["p_oscc"])
                preds.append(int(decide([[1 - p, p]], args.threshold)[0]))
        except (KeyError, TypeError, ValueError) as exc:
            raise CommandError(f"{args.predictions} line {lineno}: bad row ({exc})") from None
    return MetricsReport.from_matrix(confusion(preds, labels), model=args.name or "replay",
                                     partition=args.partition, threshold=args.threshold)


def _fmt(v):
    return "n/a" if v is None else f"{v:.4f}"


def cmd_evaluate(args, out, err):
    if not (0.0 < args.threshold < 1.0):
        raise CommandError("--threshold must lie in (0, 1)")
    if args.predictions:
        report = _replay(args)
    else:
        missing = [flag for flag, v in (("--dataset", args.dataset), ("--manifest", args.manifest),
                                        ("--model", args.model)) if v is None]
        if missing:
            raise CommandError(f"evaluate needs {', '.join(missing)} (or --predictions)")
        manifest = load_manifest(args.manifest)
        corpus = {rec.id: rec for rec in _load_corpus_noisy(args.dataset, err)}
        entries = manifest.partition(args.partition)
        absent = [i for i, _ in entries if i not in corpus]
        if absent:
            raise CommandError(f"{len(absent)} manifest ids not found under {args.dataset}, e.g. {absent[0]}")
        records = [corpus[i] for i, _ in entries]
        with load_model(args.model) as clf:
            report = evaluate(clf, records, threshold=args.threshold, model_name=args.name,
                              partition_name=args.partition)
    written = _write_outputs(args.out, {"report.json": report.to_json().encode("utf-8"),
                                        "report.csv": report.to_csv().encode("utf-8")}, args.force)
    if args.json:
        return {"command": "evaluate", "files": written, "report": report.to_dict()}
    d = report.to_dict()
    m = d["matrix"]
    print(f"model {d['model']}  partition {d['partition']}  threshold {d['threshold']}", file=out)
    print(f"tp {m['tp']}  tn {m['tn']}  fp {m['fp']}  fn {m['fn']}", file=out)
    for name in ("precision", "recall", "f1", "accuracy"):
        print(f"{name:<10} {_fmt(d[name])}", file=out)
    return None


def _safe_stem(ident):
    stem = ident.rsplit(".", 1)[0] if "." in Path(ident).name else ident
    return stem.replace("\\", "/").strip("/").replace("/", "__")


def cmd_explain(args, out, err):
    image_id = args.image
    if args.dataset is not None:
        if args.manifest is not None:
            manifest = load_manifest(args.manifest)
            known = {i for name in PARTITIONS for i, _ in manifest.partition(name)}
            if image_id not in known:
                raise CommandError(f"image id {image_id!r} is not in manifest {args.manifest}")
        path = args.dataset / image_id
    else:
        path = Path(image_id)
    if not path.is_file():
        raise CommandError(f"image {path} does not exist")

    cfg = LimeConfig(seed=args.seed).with_overrides(
        n_samples=args.n_samples, n_segments=args.segments, compactness=args.compactness,
        kernel_width=args.kernel_width, ridge_lambda=args.ridge_lambda, top_k=args.top_k,
        baseline=args.baseline, target_class=None if args.target == "predicted" else int(args.target),
    )
    with load_model(args.model) as clf:
        img = read_image(path)
        if (img.width, img.height) != (clf.input_side, clf.input_side):
            img = resize_to_input(img, clf.input_side)
        result = explain(clf, img, cfg, workers=args.workers, image_id=image_id)
    top_k = min(cfg.top_k, result.k)
    overlay = render_overlay(img, result, top_k=top_k, mode="signed" if args.mode == "signed" else "positive_only")

    stem = _safe_stem(image_id) if args.dataset is not None else path.stem
    files = {f"{stem}.explanation.json": result.to_json().encode("utf-8"),
             f"{stem}.overlay.png": encode_image(overlay, "png")}
    if args.segments_png:
        files[f"{stem}.segments.png"] = encode_image(label_map_image(result.superpixels), "png")
    written = _write_outputs(args.out, files, args.force)

    top = [{"segment": int(j), "weight": float(result.segment_weights[j])} for j in result.top_segments(top_k)]
    if args.json:
        return {"command": "explain", "files": written, "image_id": image_id, "target_class": result.target_class,
                "k": result.k, "intercept": result.intercept, "local_r2": result.local_r2, "top_segments": top}
    print(f"image {image_id}  target class {result.target_class}  segments {result.k}  "
          f"local R^2 {result.local_r2:.4f}", file=out)
    for rank, t in enumerate(top, start=1):
        print(f"{rank:>3}. segment {t['segment']:>4}  weight {t['weight']:+.6f}", file=out)
    return None


def cmd_report(args, out, err):
    reports = []
    for path in args.reports:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            reports.append(report_from_dict(doc))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CommandError(f"cannot read report {path}: {exc}") from None
    table = reports_to_csv(reports)
    written = _write_outputs(args.out, {"table.csv": table.encode("utf-8")}, args.force)
    if args.json:
        return {"command": "report", "files": written, "rows": [r.to_dict() for r in reports]}
    print(f"{'model':<20} {'precision':>9} {'recall':>9} {'f1':>9} {'accuracy':>9}", file=out)
    for r in reports:
        d = r.to_dict()
        print(f"{d['model']:<20} {_fmt(d['precision']):>9} {_fmt(d['recall']):>9} {_fmt(d['f1']):>9} "
              f"{_fmt(d['accuracy']):>9}", file=out)
    return None


def cmd_curves(args, out, err):
    log = read_epoch_log(args.log)
    plots = plot_curves(log, title=args.title)
    written = _write_outputs(args.out, {"accuracy_curve.png": plots["accuracy"], "loss_curve.png": plots["loss"]},
                             args.force)
    best = log.best_epoch()
    if args.json:
        return {"command": "curves", "files": written, "epochs": len(log), "best_epoch": best}
    print(f"{len(log)} epochs, best epoch (lowest validation loss) = {best}", file=out)
    return None


COMMANDS = {"split": cmd_split, "evaluate": cmd_evaluate, "explain": cmd_explain, "report": cmd_report,
            "curves": cmd_curves}


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        doc = COMMANDS[args.command](args, out, err)
    except HistolimeError as exc:
        print(f"error: {exc}", file=err)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=err)
        return 2
    if doc is not None:
        print(json.dumps(doc, indent=2, sort_keys=True), file=out)
    return 0


def run():
    sys.exit(main())
