"""Evaluation metric suite for page pairs.

High-level block metrics (block-match / text / position / color), code
metrics (BLEU, keyword-weighted htmlBLEU, height-1-subtree TreeBLEU),
pixel metrics (MSE, SSIM), and a generic embedding-cosine hook. Scores
are reported on a 0-100 scale; raw 0-1 values are kept in diagnostics.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .components import Component, Kind
from .errors import InvalidInputError, MetricError
from .geometry import iou
from .htmldom import (
    DomTree,
    attribute_triples,
    dom_paths,
    height1_subtrees,
    html_lexemes,
    is_markup_lexeme,
    parse_html,
)
from .raster import Raster
from . import renderlab

METRIC_NAMES = (
    "block_match",
    "text",
    "position",
    "color",
    "bleu",
    "html_bleu",
    "tree_bleu",
    "mse",
    "ssim",
)
LOWER_IS_BETTER = frozenset({"mse"})


# --- text similarity ---


def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert/delete/substitute, unit costs)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[len(b)]


def text_similarity(a: str, b: str) -> float:
    """Normalized Levenshtein similarity: 1 - dist / max(len). Empty-empty is 1."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


# --- color distance (CIE76 in CIELAB, D65 white point) ---

_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65 = np.array([0.95047, 1.0, 1.08883])


def srgb_to_lab(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    linear = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = _SRGB_TO_XYZ @ linear / _D65
    eps = (6 / 29) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3 * (6 / 29) ** 2) + 4 / 29)
    lightness = 116 * f[1] - 16
    a = 500 * (f[0] - f[1])
    b = 200 * (f[1] - f[2])
    return np.array([lightness, a, b])


def delta_e76(rgb_a, rgb_b) -> float:
    """Euclidean distance between the two colors in CIELAB."""
    return float(np.linalg.norm(srgb_to_lab(rgb_a) - srgb_to_lab(rgb_b)))


def color_similarity(rgb_a, rgb_b) -> float:
    return max(0.0, 1.0 - delta_e76(rgb_a, rgb_b) / 100.0)


# --- BLEU family ---


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    candidate_tokens: list[str],
    reference_tokens: list[str],
    max_n: int = 4,
    weight_fn=None,
) -> float:
    """Single-pair BLEU: clipped n-gram precision, geometric mean, no smoothing.

    weight_fn maps an n-gram tuple to a weight applied in both numerator
    and denominator of each precision (used for keyword weighting).
    Returns 0 whenever any order's precision is 0, including candidates
    shorter than max_n.
    """
    if max_n < 1:
        raise InvalidInputError(f"max_n must be >= 1, got {max_n}")
    if not candidate_tokens:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand = _ngram_counts(candidate_tokens, n)
        ref = _ngram_counts(reference_tokens, n)
        if weight_fn is None:
            total = sum(cand.values())
            matched = sum(min(c, ref[g]) for g, c in cand.items())
        else:
            total = sum(weight_fn(g) * c for g, c in cand.items())
            matched = sum(weight_fn(g) * min(c, ref[g]) for g, c in cand.items())
        if matched == 0 or total == 0:
            return 0.0
        log_sum += math.log(matched / total)
    score = math.exp(log_sum / max_n)
    if len(candidate_tokens) < len(reference_tokens):
        score *= math.exp(1.0 - len(reference_tokens) / len(candidate_tokens))
    return score


def tree_bleu(candidate: DomTree, reference: DomTree) -> float:
    """Fraction of the reference's height-1 subtrees present in the candidate.

    Multiset intersection over "parent(children...)" signatures. An empty
    reference scores 1.0 against an empty candidate and 0.0 otherwise.
    """
    s_cand = height1_subtrees(candidate)
    s_ref = height1_subtrees(reference)
    ref_total = sum(s_ref.values())
    if ref_total == 0:
        return 1.0 if sum(s_cand.values()) == 0 else 0.0
    matched = sum((s_cand & s_ref).values())
    return matched / ref_total


def _multiset_f1(cand: Counter, ref: Counter) -> float | None:
    """F1 over multisets; None when both are empty (no evidence)."""
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    if cand_total == 0 and ref_total == 0:
        return None
    matched = sum((cand & ref).values())
    if matched == 0:
        return 0.0
    precision = matched / cand_total
    recall = matched / ref_total
    return 2 * precision * recall / (precision + recall)


def html_bleu(candidate_src: str, reference_src: str) -> float:
    """Mean of four sub-scores: plain BLEU over the lexeme stream,
    keyword-weighted BLEU (markup n-grams count double), DOM-path F1,
    and attribute-triple F1.

    The attribute sub-score is dropped from the mean when neither document
    carries attributes, so attribute-free identical documents still score 1.
    """
    try:
        cand_tree = parse_html(candidate_src, recover=True)
        ref_tree = parse_html(reference_src, recover=True)
        cand_lex = html_lexemes(candidate_src)
        ref_lex = html_lexemes(reference_src)
    except Exception as exc:
        raise MetricError(f"html_bleu: unparseable source: {exc}") from exc

    def kw_weight(gram: tuple[str, ...]) -> float:
        return 2.0 if any(is_markup_lexeme(tok) for tok in gram) else 1.0

    subs = [
        bleu(cand_lex, ref_lex),
        bleu(cand_lex, ref_lex, weight_fn=kw_weight),
    ]
    dom_f1 = _multiset_f1(dom_paths(cand_tree), dom_paths(ref_tree))
    subs.append(dom_f1 if dom_f1 is not None else 0.0)
    attr_f1 = _multiset_f1(attribute_triples(cand_tree), attribute_triples(ref_tree))
    if attr_f1 is not None:
        subs.append(attr_f1)
    return sum(subs) / len(subs)


# --- block matching ---


@dataclass
class BlockMatchResult:
    pairs: list[tuple[int, int, float]]  # (ref id, cand id, similarity)
    unmatched_ref: list[int]
    unmatched_cand: list[int]


VISUAL_MIN_IOU = 0.1


def match_blocks(
    ref: list[Component], cand: list[Component], min_sim: float = 0.5
) -> BlockMatchResult:
    """Greedy maximum-similarity matching between two component lists.

    Text components pair by normalized Levenshtein similarity (threshold
    min_sim); visual components pair by IoU (threshold 0.1). Ties break on
    smaller center distance, then on the lower (ref id, cand id) pair, so
    results are fully deterministic.
    """
    if not 0 <= min_sim <= 1:
        raise InvalidInputError(f"min_sim must be in [0,1], got {min_sim}")
    candidates = []
    for r in ref:
        for c in cand:
            if r.kind is not c.kind:
                continue
            if r.kind is Kind.TEXT:
                sim = text_similarity(r.text or "", c.text or "")
                threshold = min_sim
            else:
                sim = iou(r.bbox, c.bbox)
                threshold = VISUAL_MIN_IOU
            if sim >= threshold:
                dist = math.hypot(r.bbox.cx - c.bbox.cx, r.bbox.cy - c.bbox.cy)
                candidates.append((-sim, dist, r.id, c.id, sim))
    candidates.sort()
    used_ref: set[int] = set()
    used_cand: set[int] = set()
    pairs = []
    for _, _, rid, cid, sim in candidates:
        if rid in used_ref or cid in used_cand:
            continue
        used_ref.add(rid)
        used_cand.add(cid)
        pairs.append((rid, cid, sim))
    return BlockMatchResult(
        pairs=pairs,
        unmatched_ref=[r.id for r in ref if r.id not in used_ref],
        unmatched_cand=[c.id for c in cand if c.id not in used_cand],
    )


def block_metrics(
    ref: list[Component],
    cand: list[Component],
    page_w: float,
    page_h: float,
    min_sim: float = 0.5,
) -> tuple[float, float, float, float]:
    """(block_match, text, position, color), each on 0-100.

    block_match is the matched area fraction over both pages. text is the
    area-weighted mean pair text similarity; position the area-weighted
    per-axis center-offset similarity; color the area-weighted CIE76
    similarity, with color-less pairs contributing 1.0. Two empty pages
    score 100 everywhere; one empty page scores 0.
    """
    if page_w <= 0 or page_h <= 0:
        raise InvalidInputError(f"page dims must be positive, got {page_w}x{page_h}")
    if not ref and not cand:
        return 100.0, 100.0, 100.0, 100.0
    if not ref or not cand:
        return 0.0, 0.0, 0.0, 0.0

    match = match_blocks(ref, cand, min_sim=min_sim)
    ref_by_id = {c.id: c for c in ref}
    cand_by_id = {c.id: c for c in cand}

    matched_area = 0.0
    for rid, cid, _ in match.pairs:
        matched_area += ref_by_id[rid].bbox.area + cand_by_id[cid].bbox.area
    total_area = sum(c.bbox.area for c in ref) + sum(c.bbox.area for c in cand)
    block_match = 100.0 * matched_area / total_area if total_area > 0 else 0.0

    def weighted_mean(items: list[tuple[float, float]]) -> float:
        total_w = sum(w for w, _ in items)
        if total_w == 0:
            return 0.0
        return sum(w * v for w, v in items) / total_w

    text_items = []
    pos_items = []
    color_items = []
    for rid, cid, sim in match.pairs:
        r, c = ref_by_id[rid], cand_by_id[cid]
        weight = r.bbox.area + c.bbox.area
        if r.kind is Kind.TEXT:
            text_items.append((weight, sim))
        off = (
            abs(r.bbox.cx - c.bbox.cx) / page_w + abs(r.bbox.cy - c.bbox.cy) / page_h
        ) / 2.0
        pos_items.append((weight, max(0.0, 1.0 - off)))
        if r.color is not None and c.color is not None:
            color_items.append((weight, color_similarity(r.color, c.color)))
        else:
            color_items.append((weight, 1.0))

    ref_has_text = any(c.kind is Kind.TEXT for c in ref)
    cand_has_text = any(c.kind is Kind.TEXT for c in cand)
    if text_items:
        text_score = 100.0 * weighted_mean(text_items)
    else:
        text_score = 100.0 if not ref_has_text and not cand_has_text else 0.0
    position = 100.0 * weighted_mean(pos_items) if pos_items else 0.0
    color = 100.0 * weighted_mean(color_items) if color_items else 0.0
    return block_match, text_score, position, color


# --- pixel metrics ---


def mse(a: Raster, b: Raster) -> float:
    """Mean squared error over [0,1] channels, reported x100."""
    if (a.width, a.height) != (b.width, b.height):
        raise InvalidInputError(
            f"raster dims differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    diff = a.pixels - b.pixels
    return float(np.mean(diff * diff)) * 100.0


SSIM_WINDOW = 8
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def _window_means(channel: np.ndarray, k: int) -> np.ndarray:
    """Mean of every kxk window (stride 1, fully inside), via integral image."""
    integral = np.zeros((channel.shape[0] + 1, channel.shape[1] + 1))
    integral[1:, 1:] = channel.cumsum(axis=0).cumsum(axis=1)
    sums = (
        integral[k:, k:] - integral[:-k, k:] - integral[k:, :-k] + integral[:-k, :-k]
    )
    return sums / (k * k)


def ssim(a: Raster, b: Raster) -> float:
    """Mean local structural similarity, uniform 8x8 windows, reported x100.

    Windows slide with stride 1 and stay fully inside the image; both
    rasters must be at least 8x8 and share dimensions.
    """
    if (a.width, a.height) != (b.width, b.height):
        raise InvalidInputError(
            f"raster dims differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    k = SSIM_WINDOW
    if a.width < k or a.height < k:
        raise InvalidInputError(f"ssim needs at least {k}x{k} pixels")
    per_channel = []
    for ch in range(3):
        x = a.pixels[:, :, ch]
        y = b.pixels[:, :, ch]
        mu_x = _window_means(x, k)
        mu_y = _window_means(y, k)
        sigma_x = _window_means(x * x, k) - mu_x * mu_x
        sigma_y = _window_means(y * y, k) - mu_y * mu_y
        sigma_xy = _window_means(x * y, k) - mu_x * mu_y
        num = (2 * mu_x * mu_y + _SSIM_C1) * (2 * sigma_xy + _SSIM_C2)
        den = (mu_x * mu_x + mu_y * mu_y + _SSIM_C1) * (sigma_x + sigma_y + _SSIM_C2)
        per_channel.append(float(np.mean(num / den)))
    return (sum(per_channel) / 3.0) * 100.0


def embedding_cosine(u, v) -> float:
    """Cosine similarity of two equal-dimension non-zero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or u.size == 0:
        raise InvalidInputError(f"vectors must share a nonzero dimension: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise MetricError("cosine similarity undefined for zero vectors")
    return float(np.dot(u, v)) / (nu * nv)


# --- pair evaluation ---


@dataclass
class EvalReport:
    scores: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, object] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    @staticmethod
    def higher_is_better(metric: str) -> bool:
        return metric not in LOWER_IS_BETTER

    def to_dict(self) -> dict:
        return {
            "scores": dict(self.scores),
            "diagnostics": self.diagnostics,
            "errors": dict(self.errors),
            "higher_is_better": {m: self.higher_is_better(m) for m in self.scores},
        }


def evaluate_pair(
    ref_html: str,
    cand_html: str,
    page_w: int,
    page_h: int | None = None,
    ref_annotations: list[Component] | None = None,
    ref_screenshot: Raster | None = None,
    metrics: tuple[str, ...] = METRIC_NAMES,
) -> EvalReport:
    """Render, match, and score a candidate page against a reference.

    Missing reference annotations / screenshot are produced by rendering
    the reference source. Individual metric failures are recorded in the
    report instead of aborting.
    """
    unknown = set(metrics) - set(METRIC_NAMES)
    if unknown:
        raise InvalidInputError(f"unknown metrics: {sorted(unknown)}")
    report = EvalReport()

    ref_tree = parse_html(ref_html, recover=True)
    cand_tree = parse_html(cand_html, recover=True)
    cand_boxes = renderlab.layout(cand_tree, page_w)

    if ref_annotations is None or ref_screenshot is None:
        ref_boxes = renderlab.layout(ref_tree, page_w)
        if page_h is None:
            page_h = max(
                int(math.ceil(ref_boxes[0].bbox.y2)) if ref_boxes else renderlab.LINE_H,
                renderlab.LINE_H,
            )
        if ref_annotations is None:
            ref_annotations = renderlab.extract_annotations(ref_boxes)
        if ref_screenshot is None:
            ref_screenshot = renderlab.rasterize(ref_boxes, page_w, page_h)
    elif page_h is None:
        page_h = ref_screenshot.height

    cand_annotations = renderlab.extract_annotations(cand_boxes)
    cand_screenshot = renderlab.rasterize(cand_boxes, page_w, page_h)

    if any(m in metrics for m in ("block_match", "text", "position", "color")):
        try:
            bm, tx, pos, col = block_metrics(ref_annotations, cand_annotations, page_w, page_h)
            values = {"block_match": bm, "text": tx, "position": pos, "color": col}
            for name in values:
                if name in metrics:
                    report.scores[name] = values[name]
        except Exception as exc:  # pragma: no cover - defensive
            for name in ("block_match", "text", "position", "color"):
                if name in metrics:
                    report.errors[name] = str(exc)

    def run(name: str, fn):
        if name not in metrics:
            return
        try:
            report.scores[name] = fn()
        except Exception as exc:
            report.errors[name] = str(exc)

    run("bleu", lambda: 100.0 * bleu(html_lexemes(cand_html), html_lexemes(ref_html)))
    run("html_bleu", lambda: 100.0 * html_bleu(cand_html, ref_html))
    run("tree_bleu", lambda: 100.0 * tree_bleu(cand_tree, ref_tree))
    run("mse", lambda: mse(cand_screenshot, ref_screenshot))
    run("ssim", lambda: ssim(cand_screenshot, ref_screenshot))
    report.diagnostics["raw"] = {
        name: (score / 100.0 if name != "mse" else score)
        for name, score in report.scores.items()
    }
    return report


# --- batch evaluation & report files ---


def evaluate_manifest_entry(entry: dict, metrics: tuple[str, ...]) -> EvalReport:
    """Evaluate one batch-manifest record (paths are resolved by caller)."""
    from .components import load_annotations
    from .raster import read_image

    ref_html = Path(entry["ref_html"]).read_text(encoding="utf-8")
    cand_html = Path(entry["cand_html"]).read_text(encoding="utf-8")
    ref_annotations = None
    ref_screenshot = None
    page_w = entry.get("page_width")
    page_h = entry.get("page_height")
    if entry.get("ref_annotations"):
        width, height, ref_annotations = load_annotations(entry["ref_annotations"])
        page_w = page_w or width
        page_h = page_h or height
    if entry.get("ref_screenshot"):
        ref_screenshot = read_image(entry["ref_screenshot"])
        page_w = page_w or ref_screenshot.width
        page_h = page_h or ref_screenshot.height
    if page_w is None:
        page_w = renderlab.PAGE_WIDTHS["medium"]
    return evaluate_pair(
        ref_html,
        cand_html,
        page_w=int(page_w),
        page_h=int(page_h) if page_h is not None else None,
        ref_annotations=ref_annotations,
        ref_screenshot=ref_screenshot,
        metrics=metrics,
    )


def report_rows(
    results: dict[str, EvalReport | str], metrics: tuple[str, ...]
) -> list[dict]:
    """Rows for the CSV/JSON report: one per sample plus a mean row."""
    rows = []
    sums = {m: 0.0 for m in metrics}
    counts = {m: 0 for m in metrics}
    for sample_id in sorted(results):
        res = results[sample_id]
        row: dict[str, object] = {"id": sample_id}
        if isinstance(res, str):
            row["error"] = res
        else:
            row["error"] = ""
            for m in metrics:
                if m in res.scores:
                    row[m] = res.scores[m]
                    sums[m] += res.scores[m]
                    counts[m] += 1
                elif m in res.errors:
                    row[f"{m}_error"] = res.errors[m]
        rows.append(row)
    mean_row: dict[str, object] = {"id": "mean", "error": ""}
    for m in metrics:
        if counts[m]:
            mean_row[m] = sums[m] / counts[m]
    rows.append(mean_row)
    return rows


def write_report_json(path, rows: list[dict], metrics: tuple[str, ...]) -> None:
    doc = {"metrics": list(metrics), "rows": rows}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def write_report_csv(path, rows: list[dict], metrics: tuple[str, ...]) -> None:
    fieldnames = ["id", *metrics, "error"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt_cell(v) for k, v in row.items()})


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
