"""Tokenizer and recovering tree builder for a small HTML subset.

The subset covers the structural tags common in simple generated pages;
unknown tags are parsed generically. Documents are normalized to an
``html`` root with a ``body`` wrapping any stray content, so structural
metrics see comparable trees regardless of how much boilerplate the
source spelled out.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import ParseError, StructureError

SUPPORTED_TAGS = frozenset(
    {
        "html", "head", "body", "div", "span", "p",
        "h1", "h2", "h3", "h4", "h5", "h6",
        "a", "button", "img", "ul", "ol", "li",
        "header", "footer", "nav", "section",
        "table", "tr", "td", "br", "hr", "input",
    }
)
VOID_TAGS = frozenset({"img", "br", "hr", "input"})

TEXT_TAG = "#text"

_NAME_RE = re.compile(r"[a-zA-Z][a-zA-Z0-9-]*")
_ENTITY_RE = re.compile(r"&(amp|lt|gt|quot|#[0-9]+);")
_ENTITY_MAP = {"amp": "&", "lt": "<", "gt": ">", "quot": '"'}


def _decode_entities(s: str) -> str:
    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name.startswith("#"):
            return chr(int(name[1:]))
        return _ENTITY_MAP[name]

    return _ENTITY_RE.sub(sub, s)


def _escape_text(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _escape_attr(s: str) -> str:
    return _escape_text(s).replace('"', "&quot;")


@dataclass(frozen=True)
class OpenTag:
    name: str
    attrs: tuple[tuple[str, str], ...]
    offset: int
    self_closing: bool = False


@dataclass(frozen=True)
class CloseTag:
    name: str
    offset: int


@dataclass(frozen=True)
class TextToken:
    text: str
    offset: int


Token = OpenTag | CloseTag | TextToken


def _byte_offset(src: str, pos: int) -> int:
    return len(src[:pos].encode("utf-8"))


def tokenize_html(src: str) -> list[Token]:
    """Deterministic longest-match tokenization of an HTML source string.

    Comments and doctypes are dropped, as is whitespace-only text between
    tags. Tag and attribute names are lowercased. Unterminated tags and
    unterminated quoted attribute values raise ParseError with the byte
    offset of the construct.
    """
    tokens: list[Token] = []
    i = 0
    n = len(src)
    while i < n:
        if src.startswith("<!--", i):
            end = src.find("-->", i + 4)
            if end < 0:
                raise ParseError("unterminated comment", _byte_offset(src, i))
            i = end + 3
            continue
        if src.startswith("<!", i):
            end = src.find(">", i + 2)
            if end < 0:
                raise ParseError("unterminated declaration", _byte_offset(src, i))
            i = end + 1
            continue
        if src.startswith("</", i):
            m = _NAME_RE.match(src, i + 2)
            if m is None:
                raise ParseError("malformed close tag", _byte_offset(src, i))
            end = src.find(">", m.end())
            if end < 0:
                raise ParseError("unterminated close tag", _byte_offset(src, i))
            tokens.append(CloseTag(m.group().lower(), _byte_offset(src, i)))
            i = end + 1
            continue
        if src[i] == "<" and _NAME_RE.match(src, i + 1):
            tok, i = _scan_open_tag(src, i)
            tokens.append(tok)
            continue
        # text run: everything up to the next construct that looks like a tag
        start = i
        i += 1
        while i < n:
            if src[i] == "<" and (
                _NAME_RE.match(src, i + 1)
                or src.startswith("</", i)
                or src.startswith("<!", i)
            ):
                break
            i += 1
        text = _decode_entities(src[start:i])
        if text.strip():
            tokens.append(TextToken(text, _byte_offset(src, start)))
    return tokens


def _scan_open_tag(src: str, start: int) -> tuple[OpenTag, int]:
    n = len(src)
    m = _NAME_RE.match(src, start + 1)
    name = m.group().lower()
    i = m.end()
    attrs: list[tuple[str, str]] = []
    while True:
        while i < n and src[i].isspace():
            i += 1
        if i >= n:
            raise ParseError("unterminated tag", _byte_offset(src, start))
        if src[i] == ">":
            return OpenTag(name, tuple(attrs), _byte_offset(src, start)), i + 1
        if src.startswith("/>", i):
            return (
                OpenTag(name, tuple(attrs), _byte_offset(src, start), self_closing=True),
                i + 2,
            )
        am = _NAME_RE.match(src, i)
        if am is None:
            raise ParseError(
                f"unexpected character {src[i]!r} in tag", _byte_offset(src, i)
            )
        attr_name = am.group().lower()
        i = am.end()
        if i < n and src[i] == "=":
            i += 1
            if i < n and src[i] in "\"'":
                quote = src[i]
                end = src.find(quote, i + 1)
                if end < 0:
                    raise ParseError(
                        "unterminated quoted attribute", _byte_offset(src, i)
                    )
                value = _decode_entities(src[i + 1 : end])
                i = end + 1
            else:
                vm = re.match(r"[^\s>]*", src[i:])
                value = _decode_entities(vm.group())
                i += vm.end()
        else:
            value = ""
        attrs.append((attr_name, value))


@dataclass
class DomNode:
    tag: str
    attrs: dict[str, str] = field(default_factory=dict)
    children: list[DomNode] = field(default_factory=list)
    text: str | None = None

    def is_text(self) -> bool:
        return self.tag == TEXT_TAG

    @classmethod
    def text_node(cls, text: str) -> DomNode:
        return cls(tag=TEXT_TAG, text=text)

    def element_children(self) -> list[DomNode]:
        return [c for c in self.children if not c.is_text()]

    def inner_text(self) -> str:
        if self.is_text():
            return self.text or ""
        return "".join(c.inner_text() for c in self.children)


@dataclass
class DomTree:
    root: DomNode
    source_tokens: list[Token]


def parse_html(src: str, recover: bool = True) -> DomTree:
    """Build a DomTree from source.

    With recover=True, unclosed elements are auto-closed and stray close
    tags ignored; with recover=False any mismatch raises StructureError.
    Void elements never take children. The result is normalized to an
    html root; loose content is wrapped in a body element.
    """
    tokens = tokenize_html(src)
    top = DomNode(tag="#fragment")
    stack = [top]
    for tok in tokens:
        if isinstance(tok, OpenTag):
            node = DomNode(tag=tok.name, attrs=dict(tok.attrs))
            stack[-1].children.append(node)
            if tok.name not in VOID_TAGS and not tok.self_closing:
                stack.append(node)
        elif isinstance(tok, CloseTag):
            open_tags = [n.tag for n in stack[1:]]
            if tok.name not in open_tags:
                if recover:
                    continue  # stray close tag
                raise StructureError("unmatched close tag", tok.name, tok.offset)
            if not recover and stack[-1].tag != tok.name:
                raise StructureError(
                    f"close tag does not match open <{stack[-1].tag}>",
                    tok.name,
                    tok.offset,
                )
            while stack[-1].tag != tok.name:
                stack.pop()  # auto-close intervening elements
            stack.pop()
        else:
            stack[-1].children.append(DomNode.text_node(tok.text))
    if len(stack) > 1 and not recover:
        raise StructureError("unclosed element at end of input", stack[-1].tag, len(src))
    return DomTree(root=_normalize_document(top), source_tokens=tokens)


def _normalize_document(top: DomNode) -> DomNode:
    """Settle the parsed forest under an html root with an explicit body."""
    children = top.children
    if len(children) == 1 and children[0].tag == "html":
        root = children[0]
    else:
        root = DomNode(tag="html", children=children)

    heads = [c for c in root.children if c.tag == "head"]
    explicit_body = any(c.tag == "body" for c in root.children)
    body_children: list[DomNode] = []
    for c in root.children:
        if c.tag == "body":
            body_children.extend(c.children)
        elif c.tag != "head":
            body_children.append(c)
    new_children = list(heads)
    if explicit_body or body_children:
        new_children.append(DomNode(tag="body", children=body_children))
    root.children = new_children
    return root


def serialize_html(node: DomNode | DomTree) -> str:
    """Normalized serialization: lowercase tags, double-quoted attributes."""
    if isinstance(node, DomTree):
        node = node.root
    parts: list[str] = []
    _serialize_into(node, parts)
    return "".join(parts)


def _serialize_into(node: DomNode, parts: list[str]) -> None:
    if node.is_text():
        parts.append(_escape_text(node.text or ""))
        return
    attrs = "".join(f' {k}="{_escape_attr(v)}"' for k, v in node.attrs.items())
    if node.tag in VOID_TAGS:
        parts.append(f"<{node.tag}{attrs}/>")
        return
    parts.append(f"<{node.tag}{attrs}>")
    for child in node.children:
        _serialize_into(child, parts)
    parts.append(f"</{node.tag}>")


def height1_subtrees(t: DomTree | DomNode, ordered: bool = True) -> Counter[str]:
    """Multiset of parent(child,...) signatures over element nodes.

    One entry per element node with at least one element child; text
    leaves are ignored. ordered=False sorts the child tag list, for the
    order-insensitive variant.
    """
    root = t.root if isinstance(t, DomTree) else t
    out: Counter[str] = Counter()
    _collect_subtrees(root, ordered, out)
    return out


def _collect_subtrees(node: DomNode, ordered: bool, out: Counter[str]) -> None:
    if node.is_text():
        return
    kids = [c.tag for c in node.element_children()]
    if kids:
        if not ordered:
            kids = sorted(kids)
        out[f"{node.tag}({','.join(kids)})"] += 1
    for child in node.children:
        _collect_subtrees(child, ordered, out)


def dom_paths(t: DomTree | DomNode) -> Counter[str]:
    """Multiset of root-to-node tag paths ("html/body/div") over elements."""
    root = t.root if isinstance(t, DomTree) else t
    out: Counter[str] = Counter()
    _collect_paths(root, "", out)
    return out


def _collect_paths(node: DomNode, prefix: str, out: Counter[str]) -> None:
    if node.is_text():
        return
    path = f"{prefix}/{node.tag}" if prefix else node.tag
    out[path] += 1
    for child in node.children:
        _collect_paths(child, path, out)


def attribute_triples(t: DomTree | DomNode) -> Counter[tuple[str, str, str]]:
    """Multiset of (path, attr name, attr value) over all element nodes."""
    root = t.root if isinstance(t, DomTree) else t
    out: Counter[tuple[str, str, str]] = Counter()
    _collect_attrs(root, "", out)
    return out


def _collect_attrs(node: DomNode, prefix: str, out: Counter) -> None:
    if node.is_text():
        return
    path = f"{prefix}/{node.tag}" if prefix else node.tag
    for k, v in node.attrs.items():
        out[(path, k, v)] += 1
    for child in node.children:
        _collect_attrs(child, path, out)


def html_lexemes(src: str) -> list[str]:
    """Flat lexeme stream for BLEU-style code metrics.

    Open tags contribute "<name", one 'attr="value"' lexeme per attribute
    and a closing ">"; close tags contribute "</name>"; text contributes
    its whitespace-split words.
    """
    out: list[str] = []
    for tok in tokenize_html(src):
        if isinstance(tok, OpenTag):
            out.append(f"<{tok.name}")
            for k, v in tok.attrs:
                out.append(f'{k}="{v}"')
            out.append(">")
        elif isinstance(tok, CloseTag):
            out.append(f"</{tok.name}>")
        else:
            out.extend(tok.text.split())
    return out


def is_markup_lexeme(lexeme: str) -> bool:
    """True for lexemes carrying a tag or attribute name."""
    return lexeme.startswith("<") or "=" in lexeme
