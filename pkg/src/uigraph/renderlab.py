"""Deterministic box-layout renderer and seeded synthetic page generator.

The layout model is a small flow subset: block elements stack vertically
at full content width, inline-block elements flow left-to-right with
wrapping, and text is measured with a fixed 8x16 pseudo-font. Together
with the rasterizer this yields exact, platform-independent ground truth
(screenshot + component annotations) for any document in the subset.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace

from .components import Component, Kind
from .errors import InvalidInputError
from .geometry import BBox
from .htmldom import DomNode, DomTree, parse_html, serialize_html
from .raster import Raster

CHAR_W = 8
LINE_H = 16

NAMED_COLORS: dict[str, tuple[float, float, float]] = {
    "black": (0, 0, 0),
    "silver": (192, 192, 192),
    "gray": (128, 128, 128),
    "white": (255, 255, 255),
    "maroon": (128, 0, 0),
    "red": (255, 0, 0),
    "purple": (128, 0, 128),
    "fuchsia": (255, 0, 255),
    "green": (0, 128, 0),
    "lime": (0, 255, 0),
    "olive": (128, 128, 0),
    "yellow": (255, 255, 0),
    "navy": (0, 0, 128),
    "blue": (0, 0, 255),
    "teal": (0, 128, 128),
    "aqua": (0, 255, 255),
}
NAMED_COLORS = {k: (r / 255, g / 255, b / 255) for k, (r, g, b) in NAMED_COLORS.items()}

_INLINE_TAGS = frozenset({"span", "a", "button", "img", "input", "td"})


@dataclass
class StyleProps:
    background_color: tuple[float, float, float] | None = None
    color: tuple[float, float, float] = (0.0, 0.0, 0.0)
    width: tuple[str, float] | None = None  # ("px", v) or ("percent", v)
    height: float | None = None
    margin: float = 0.0
    padding: float = 0.0
    display: str = "block"


@dataclass
class LayoutBox:
    node: DomNode | None
    bbox: BBox
    style: StyleProps
    is_text: bool = False
    text: str | None = None


def parse_color(value: str) -> tuple[float, float, float] | None:
    value = value.strip().lower()
    if value in NAMED_COLORS:
        return NAMED_COLORS[value]
    if value.startswith("#") and len(value) == 7:
        try:
            return tuple(int(value[i : i + 2], 16) / 255 for i in (1, 3, 5))
        except ValueError:
            return None
    return None


def _parse_px(value: str) -> float | None:
    value = value.strip().lower().removesuffix("px")
    try:
        v = float(value)
    except ValueError:
        return None
    return v if v >= 0 else None


def parse_style_attr(style_text: str) -> dict[str, str]:
    decls = {}
    for part in style_text.split(";"):
        if ":" not in part:
            continue
        key, _, value = part.partition(":")
        decls[key.strip().lower()] = value.strip()
    return decls


def resolve_style(node: DomNode) -> StyleProps:
    st = StyleProps(display="inline-block" if node.tag in _INLINE_TAGS else "block")
    if node.tag == "hr":
        st.height = 2.0
    if node.tag == "img":
        st.width = ("px", 32.0)
        st.height = 32.0
    if node.tag == "input":
        st.width = ("px", 48.0)
        st.height = float(LINE_H)
    decls = parse_style_attr(node.attrs.get("style", ""))
    for key, value in decls.items():
        if key == "background-color":
            st.background_color = parse_color(value) or st.background_color
        elif key == "color":
            st.color = parse_color(value) or st.color
        elif key == "width":
            if value.endswith("%"):
                try:
                    pct = float(value[:-1])
                except ValueError:
                    continue
                if 0 <= pct <= 100:
                    st.width = ("percent", pct)
            else:
                px = _parse_px(value)
                if px is not None:
                    st.width = ("px", px)
        elif key == "height":
            px = _parse_px(value)
            if px is not None:
                st.height = px
        elif key in ("margin", "padding"):
            px = _parse_px(value)
            if px is not None:
                setattr(st, key, px)
        elif key == "display":
            if value in ("block", "inline-block"):
                st.display = value
    return st


def layout(t: DomTree, page_w: float) -> list[LayoutBox]:
    """Lay out a parsed document at the given page width.

    Returns boxes in document order; the first entry is the root (body)
    box whose height is the total content height. An empty document
    yields an empty list.
    """
    if page_w <= 0:
        raise InvalidInputError(f"page width must be positive, got {page_w}")
    body = next((c for c in t.root.children if c.tag == "body"), None)
    if body is None:
        return []
    boxes: list[LayoutBox] = []
    _layout_element(body, 0.0, 0.0, float(page_w), boxes)
    return boxes


def _layout_element(
    node: DomNode, x: float, y: float, avail_w: float, out: list[LayoutBox]
) -> tuple[float, float]:
    """Lay out one element; returns its outer (w, h) including margins."""
    st = resolve_style(node)
    m, p = st.margin, st.padding
    inner_avail = max(avail_w - 2 * m - 2 * p, 0.0)

    if st.width is not None:
        mode, v = st.width
        content_w = v if mode == "px" else avail_w * v / 100.0
    else:
        content_w = inner_avail  # block default; inline-block shrinks below

    flow_w = content_w if st.width is not None else inner_avail
    children_boxes: list[LayoutBox] = []
    used_w, used_h = _flow_children(node, flow_w, children_boxes)

    if st.width is None and st.display == "inline-block":
        content_w = min(used_w, inner_avail)
    content_h = st.height if st.height is not None else used_h

    bbox = BBox(x + m, y + m, content_w + 2 * p, content_h + 2 * p)
    out.append(LayoutBox(node=node, bbox=bbox, style=st))
    for cb in children_boxes:
        out.append(
            replace(
                cb,
                bbox=BBox(
                    cb.bbox.x + bbox.x + p, cb.bbox.y + bbox.y + p, cb.bbox.w, cb.bbox.h
                ),
            )
        )
    return content_w + 2 * p + 2 * m, content_h + 2 * p + 2 * m


def _flow_children(
    node: DomNode, content_w: float, out: list[LayoutBox]
) -> tuple[float, float]:
    """Flow the children of a container; boxes are placed relative to (0,0)."""
    cursor_y = 0.0
    line_x = 0.0
    line_h = 0.0
    used_w = 0.0

    def flush_line():
        nonlocal cursor_y, line_x, line_h
        if line_x > 0:
            cursor_y += line_h
        line_x = 0.0
        line_h = 0.0

    for child in node.children:
        if child.is_text():
            words = (child.text or "").split()
            while words:
                run, run_w = _take_words(words, content_w - line_x, line_x == 0)
                if not run:
                    flush_line()
                    continue
                out.append(
                    LayoutBox(
                        node=child,
                        bbox=BBox(line_x, cursor_y, run_w, float(LINE_H)),
                        style=resolve_style(node),
                        is_text=True,
                        text=" ".join(run),
                    )
                )
                line_x += run_w
                line_h = max(line_h, float(LINE_H))
                used_w = max(used_w, line_x)
                if words:
                    flush_line()
            continue
        if child.tag == "head":
            continue
        if child.tag == "br":
            if line_x > 0:
                flush_line()
            else:
                cursor_y += LINE_H
            continue
        st = resolve_style(child)
        if st.display == "inline-block":
            scratch: list[LayoutBox] = []
            w, h = _layout_element(child, 0.0, 0.0, content_w, scratch)
            if line_x > 0 and line_x + w > content_w:
                flush_line()
            for sb in scratch:
                out.append(
                    replace(
                        sb,
                        bbox=BBox(
                            sb.bbox.x + line_x, sb.bbox.y + cursor_y, sb.bbox.w, sb.bbox.h
                        ),
                    )
                )
            line_x += w
            line_h = max(line_h, h)
            used_w = max(used_w, line_x)
        else:
            flush_line()
            w, h = _layout_element(child, 0.0, cursor_y, content_w, out)
            cursor_y += h
            used_w = max(used_w, w)
    flush_line()
    return used_w, cursor_y


def _take_words(words: list[str], avail: float, force: bool) -> tuple[list[str], float]:
    """Greedily pop words that fit in avail; force guarantees progress."""
    run: list[str] = []
    run_w = 0.0
    while words:
        w = len(words[0]) * CHAR_W
        step = w if not run else w + CHAR_W  # joining space
        if run_w + step <= avail or (force and not run):
            run.append(words.pop(0))
            run_w += step
        else:
            break
    return run, run_w


def _fill_rect(px, box: BBox, color, page_w: int, page_h: int) -> None:
    x0 = max(0, math.ceil(box.x - 0.5))
    y0 = max(0, math.ceil(box.y - 0.5))
    x1 = min(page_w, math.ceil(box.x2 - 0.5))
    y1 = min(page_h, math.ceil(box.y2 - 0.5))
    if x1 > x0 and y1 > y0:
        px[y0:y1, x0:x1] = color


def rasterize(boxes: list[LayoutBox], page_w: int, page_h: int) -> Raster:
    """Paint boxes over white in document order (painter's algorithm).

    Elements fill their box with background_color when set; text runs
    paint one solid 8x16 cell per character in the text color, which for
    a run amounts to filling the run box.
    """
    if page_w <= 0 or page_h <= 0:
        raise InvalidInputError(f"page dims must be positive, got {page_w}x{page_h}")
    img = Raster.filled(page_w, page_h)
    for box in boxes:
        if box.is_text:
            _fill_rect(img.pixels, box.bbox, box.style.color, page_w, page_h)
        elif box.style.background_color is not None:
            _fill_rect(img.pixels, box.bbox, box.style.background_color, page_w, page_h)
    return img


def extract_annotations(boxes: list[LayoutBox]) -> list[Component]:
    """Ground-truth components: text runs plus background-colored elements."""
    comps: list[Component] = []
    for box in boxes:
        if box.bbox.is_degenerate():
            continue
        if box.is_text:
            comps.append(
                Component(
                    id=len(comps),
                    kind=Kind.TEXT,
                    bbox=box.bbox,
                    text=box.text or "",
                    color=box.style.color,
                )
            )
        elif box.style.background_color is not None:
            comps.append(
                Component(
                    id=len(comps),
                    kind=Kind.VISUAL,
                    bbox=box.bbox,
                    color=box.style.background_color,
                )
            )
    return comps


# --- synthetic page generation ---

WORDS = (
    "alpha bolt cedar delta ember flint grove hazel iris juno kite lumen "
    "mint nova oak pine quartz ridge sable tonic umber vale wisp xenon "
    "yield zephyr arc brim cliff dune"
).split()

_SMALL_COLORS = ("red", "blue", "gray", "navy", "teal", "lime", "aqua")
_MEDIUM_COLORS = tuple(c for c in NAMED_COLORS if c not in ("white", "black"))
_SMALL_HEIGHTS = (16, 24, 32, 48, 64, 96)

PAGE_WIDTHS = {"small": 256, "medium": 480}


def synth_page(seed: int, complexity: str = "small"):
    """Generate (html, annotations, screenshot) for a synthetic page.

    The page always has a header / content / footer structure with 3-12
    colored blocks and 2-10 text snippets drawn from a fixed word list.
    Identical seeds yield byte-identical outputs. Small pages are kept
    under 252 bytes of HTML so they tokenize into short sequences.
    """
    if complexity not in PAGE_WIDTHS:
        raise InvalidInputError(f"unknown complexity {complexity!r}")
    rng = random.Random(f"synth:{seed}:{complexity}")
    if complexity == "small":
        body = _gen_small(rng)
    else:
        body = _gen_medium(rng)
    html = serialize_html(DomNode(tag="html", children=[body]))

    tree = parse_html(html, recover=False)
    page_w = PAGE_WIDTHS[complexity]
    boxes = layout(tree, page_w)
    page_h = max(int(math.ceil(boxes[0].bbox.y2)), LINE_H) if boxes else LINE_H
    screenshot = rasterize(boxes, page_w, page_h)
    annotations = extract_annotations(boxes)
    return html, annotations, screenshot


def _colored_div(color: str, height: int | None = None, children=None) -> DomNode:
    style = f"background-color:{color}"
    if height is not None:
        style += f";height:{height}px"
    return DomNode(tag="div", attrs={"style": style}, children=children or [])


def _text_el(tag: str, text: str) -> DomNode:
    return DomNode(tag=tag, children=[DomNode.text_node(text)])


def _gen_small(rng: random.Random) -> DomNode:
    # strict byte budget: seq must stay under 252 html bytes
    words = [w for w in WORDS if len(w) <= 6]
    children = [
        _colored_div(rng.choice(_SMALL_COLORS), children=[_text_el("h1", rng.choice(words))])
    ]
    for _ in range(rng.randint(1, 2)):
        children.append(
            _colored_div(rng.choice(_SMALL_COLORS), height=rng.choice(_SMALL_HEIGHTS))
        )
    footer_text = f"{rng.choice(words)} {rng.choice(words)}"
    children.append(
        _colored_div(rng.choice(_SMALL_COLORS), children=[_text_el("p", footer_text)])
    )
    return DomNode(tag="body", children=children)


def _gen_medium(rng: random.Random) -> DomNode:
    n_texts = 2  # header h1 + footer p, always present
    n_blocks = 2  # header + footer divs

    header = DomNode(
        tag="div",
        attrs={"style": f"background-color:{rng.choice(_MEDIUM_COLORS)};padding:8px"},
        children=[_text_el("h1", _phrase(rng, 1, 3))],
    )

    content: list[DomNode] = []
    for _ in range(rng.randint(2, 7)):
        if n_blocks >= 10:
            break
        kind = rng.choice(("block", "block", "para", "para", "row"))
        if kind == "row" and n_blocks <= 8 and n_texts <= 8:
            spans = []
            for _ in range(rng.randint(2, min(3, 10 - n_blocks, 10 - n_texts))):
                spans.append(
                    DomNode(
                        tag="span",
                        attrs={
                            "style": (
                                f"background-color:{rng.choice(_MEDIUM_COLORS)};"
                                f"display:inline-block;width:{rng.choice((64, 80, 96))}px;"
                                f"height:24px;padding:4px"
                            )
                        },
                        children=[DomNode.text_node(rng.choice(WORDS))],
                    )
                )
                n_blocks += 1
                n_texts += 1
            content.append(DomNode(tag="div", attrs={"style": "margin:4px"}, children=spans))
        elif kind == "para" and n_texts < 10:
            div = _colored_div(rng.choice(_MEDIUM_COLORS), children=[_text_el("p", _phrase(rng, 2, 6))])
            if rng.random() < 0.5:
                div.attrs["style"] += f";padding:{rng.choice((4, 8))}px"
            content.append(div)
            n_blocks += 1
            n_texts += 1
        else:
            div = _colored_div(rng.choice(_MEDIUM_COLORS), height=rng.choice((24, 40, 64, 96, 120)))
            if rng.random() < 0.3:
                div.attrs["style"] += ";width:50%"
            if rng.random() < 0.3:
                div.attrs["style"] += ";margin:4px"
            content.append(div)
            n_blocks += 1

    footer = _colored_div(
        rng.choice(_MEDIUM_COLORS), children=[_text_el("p", _phrase(rng, 1, 4))]
    )
    return DomNode(tag="body", children=[header, *content, footer])


def _phrase(rng: random.Random, lo: int, hi: int) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(lo, hi)))
