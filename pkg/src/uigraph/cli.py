"""Command-line surface: synthesize pages, build graphs, run metric
batches, verify kernels, and train/run the toy generation pipeline.

Exit codes: 0 success, 2 I/O failure, 3 parse/validation failure, 4 empty
input, 5 kernel verification failure, 6 checkpoint mismatch.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .components import annotations_from_dict, load_annotations, save_annotations
from .errors import CheckpointError, InvalidInputError, ParseError, StructureError, UigraphError
from .htmldom import parse_html
from .neural.model import (
    ModelConfig,
    TrainSample,
    encode_bytes,
    load_checkpoint,
    patch_means,
    run_inference_pipeline,
    save_checkpoint,
    train_toy,
)
from .neural.verify import run_kernel_checks
from .pagegraph import build_graph, graph_to_dict, graph_to_dot
from .raster import read_image, write_image
from .renderlab import extract_annotations, layout, rasterize, synth_page

EXIT_OK = 0
EXIT_IO = 2
EXIT_PARSE = 3
EXIT_EMPTY = 4
EXIT_VERIFY = 5
EXIT_CHECKPOINT = 6

SAMPLE_SEED_STRIDE = 1_000_003  # per-sample sub-stream; adding samples never perturbs earlier ones


METRIC_ALIASES = {
    "treebleu": "tree_bleu",
    "htmlbleu": "html_bleu",
    "blockmatch": "block_match",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uigraph", description=__doc__)
    parser.add_argument("--config", help="flat JSON or key=value file with flag defaults")
    parser.add_argument(
        "--format",
        choices=("json", "csv", "both"),
        default="both",
        help="report format for eval (default: both)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic pages")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--complexity", choices=("small", "medium"), default="medium")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--image-format", choices=("png", "ppm"), default="png")

    p = sub.add_parser("graph", help="build a page graph from annotation JSON")
    p.add_argument("--components", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.8)
    p.add_argument("--weight-mode", choices=("unit", "iou"), default="unit")
    p.add_argument("--out", help="graph JSON path (default: stdout)")
    p.add_argument("--dot", help="also write Graphviz DOT here")

    p = sub.add_parser("eval", help="run the metric suite over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--metrics", default=",".join(metrics_mod.METRIC_NAMES))
    p.add_argument("--report", required=True, help="report base path (.json/.csv added)")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("render", help="lay out and rasterize an HTML file")
    p.add_argument("--html", required=True)
    p.add_argument("--page-width", type=int, default=480)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--image-format", choices=("png", "ppm"), default="png")

    p = sub.add_parser("kernel-check", help="run the neural invariant suite")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--inject-broken-grad", help=argparse.SUPPRESS)

    p = sub.add_parser("train-toy", help="overfit the toy decoder on synthetic pages")
    p.add_argument("--data", required=True, help="directory produced by synth")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.25)
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-model", type=int, default=48)
    p.add_argument("--decoder-layers", type=int, default=1)
    p.add_argument("--fusion-layers", type=int, default=1)
    p.add_argument("--latents", type=int, default=16)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--loss-csv")

    p = sub.add_parser("generate", help="run the inference pipeline on one page")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--components", required=True)
    p.add_argument("--screenshot", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-len", type=int)
    return parser


def _apply_config_file(args: argparse.Namespace, argv: list[str]) -> None:
    if not args.config:
        return
    text = Path(args.config).read_text(encoding="utf-8")
    try:
        mapping = json.loads(text)
        if not isinstance(mapping, dict):
            raise ValueError("config JSON must be an object")
    except json.JSONDecodeError:
        mapping = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
    explicit = {tok.split("=", 1)[0] for tok in argv if tok.startswith("--")}
    for key, value in mapping.items():
        dest = key.replace("-", "_")
        if f"--{key}" in explicit or not hasattr(args, dest):
            continue
        current = getattr(args, dest)
        if isinstance(current, bool):
            value = str(value).lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            value = int(value)
        elif isinstance(current, float):
            value = float(value)
        setattr(args, dest, value)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        _apply_config_file(args, argv)
    except OSError as exc:
        print(f"error: cannot read config file: {exc}", file=sys.stderr)
        return EXIT_IO
    handler = {
        "synth": cmd_synth,
        "graph": cmd_graph,
        "eval": cmd_eval,
        "render": cmd_render,
        "kernel-check": cmd_kernel_check,
        "train-toy": cmd_train_toy,
        "generate": cmd_generate,
    }[args.command]
    try:
        return handler(args)
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (ParseError, StructureError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except UigraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for k in range(args.count):
            sample_seed = args.seed * SAMPLE_SEED_STRIDE + k
            html, comps, shot = synth_page(sample_seed, args.complexity)
            stem = f"page_{k}"
            html_path = out_dir / f"{stem}.html"
            comp_path = out_dir / f"{stem}.components.json"
            img_path = out_dir / f"{stem}.{args.image_format}"
            html_path.write_text(html, encoding="utf-8")
            save_annotations(comp_path, shot.width, shot.height, comps)
            write_image(shot, img_path)
            entries.append(
                {
                    "id": stem,
                    "seed": sample_seed,
                    "html": html_path.name,
                    "components": comp_path.name,
                    "screenshot": img_path.name,
                }
            )
        manifest = {
            "seed": args.seed,
            "complexity": args.complexity,
            "samples": entries,
        }
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(entries)} samples to {out_dir}")
    return EXIT_OK


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(
            f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def cmd_graph(args) -> int:
    doc = _load_json(args.components)
    _, _, components = annotations_from_dict(doc)
    graph = build_graph(components, iou_threshold=args.iou_threshold, weight_mode=args.weight_mode)
    payload = json.dumps(graph_to_dict(graph), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    if args.dot:
        Path(args.dot).write_text(graph_to_dot(graph), encoding="utf-8")
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = _load_json(manifest_path)
    if not isinstance(manifest, list) or not manifest:
        print("error: manifest holds no samples", file=sys.stderr)
        return EXIT_EMPTY
    metric_names = tuple(
        METRIC_ALIASES.get(m.strip().lower(), m.strip().lower())
        for m in args.metrics.split(",")
        if m.strip()
    )
    unknown = set(metric_names) - set(metrics_mod.METRIC_NAMES)
    if unknown:
        raise InvalidInputError(f"unknown metrics: {sorted(unknown)}")
    base = manifest_path.parent

    def resolve(entry: dict) -> dict:
        out = dict(entry)
        for key in ("ref_html", "cand_html", "ref_annotations", "ref_screenshot"):
            if out.get(key):
                out[key] = str((base / out[key]))
        return out

    ids = [str(e.get("id", i)) for i, e in enumerate(manifest)]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("duplicate sample ids in manifest")

    def evaluate(entry: dict):
        try:
            return metrics_mod.evaluate_manifest_entry(resolve(entry), metric_names)
        except Exception as exc:
            return f"{type(exc).__name__}: {exc}"

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            outcomes = list(pool.map(evaluate, manifest))
    else:
        outcomes = [evaluate(e) for e in manifest]
    results = dict(zip(ids, outcomes))

    evaluated = sum(1 for r in results.values() if not isinstance(r, str))
    rows = metrics_mod.report_rows(results, metric_names)
    if args.format in ("json", "both"):
        metrics_mod.write_report_json(f"{args.report}.json", rows, metric_names)
    if args.format in ("csv", "both"):
        metrics_mod.write_report_csv(f"{args.report}.csv", rows, metric_names)
    print(f"evaluated {evaluated}/{len(manifest)} samples")
    return EXIT_OK if evaluated >= 1 else EXIT_EMPTY


def cmd_render(args) -> int:
    src = Path(args.html).read_text(encoding="utf-8")
    tree = parse_html(src, recover=True)
    boxes = layout(tree, args.page_width)
    page_h = max(int(math.ceil(boxes[0].bbox.y2)) if boxes else 16, 16)
    shot = rasterize(boxes, args.page_width, page_h)
    comps = extract_annotations(boxes)
    write_image(shot, f"{args.out_prefix}.{args.image_format}")
    save_annotations(f"{args.out_prefix}.components.json", shot.width, shot.height, comps)
    print(f"rendered {args.html}: {len(comps)} components, {shot.width}x{shot.height}")
    return EXIT_OK


def cmd_kernel_check(args) -> int:
    results = run_kernel_checks(n_seeds=args.seeds, break_op=args.inject_broken_grad)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: {r.detail}")
    if failed:
        print(f"kernel-check FAILED: {', '.join(r.name for r in failed)}", file=sys.stderr)
        return EXIT_VERIFY
    print(f"kernel-check passed ({len(results)} checks, {args.seeds} seeds)")
    return EXIT_OK


def _load_training_samples(data_dir: Path, limit: int) -> list[TrainSample]:
    manifest_path = data_dir / "manifest.json"
    if not data_dir.is_dir() or not manifest_path.is_file():
        raise FileNotFoundError(f"no synth manifest under {data_dir}")
    manifest = _load_json(manifest_path)
    samples = []
    for entry in manifest["samples"][:limit]:
        width, height, comps = load_annotations(data_dir / entry["components"])
        shot = read_image(data_dir / entry["screenshot"])
        html = (data_dir / entry["html"]).read_text(encoding="utf-8")
        samples.append(
            TrainSample(
                components=comps,
                page_w=width,
                page_h=height,
                patch_features=patch_means(shot),
                target_tokens=encode_bytes(html),
            )
        )
    return samples


def cmd_train_toy(args) -> int:
    samples = _load_training_samples(Path(args.data), args.samples)
    if not samples:
        print("error: no training samples in manifest", file=sys.stderr)
        return EXIT_EMPTY
    config = ModelConfig(
        d_model=args.d_model,
        n_fusion_layers=args.fusion_layers,
        n_decoder_layers=args.decoder_layers,
        n_latents=args.latents,
        seed=args.seed,
    )
    model, losses = train_toy(samples, config, steps=args.steps, lr=args.lr)
    save_checkpoint(model, args.checkpoint)
    if args.loss_csv:
        lines = ["step,loss"] + [f"{i},{loss!r}" for i, loss in enumerate(losses)]
        Path(args.loss_csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(
        f"trained {args.steps} steps on {len(samples)} samples: "
        f"loss {losses[0]:.4f} -> {losses[-1]:.4f}"
    )
    return EXIT_OK


def cmd_generate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    width, height, comps = load_annotations(args.components)
    shot = read_image(args.screenshot)
    html = run_inference_pipeline(
        comps, width, height, shot, model, max_len=args.max_len
    )
    Path(args.out).write_text(html, encoding="utf-8")
    print(f"generated {len(html)} bytes of HTML to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
