from collections import Counter

import pytest

from uigraph.errors import ParseError, StructureError
from uigraph.htmldom import (
    CloseTag,
    DomNode,
    DomTree,
    OpenTag,
    TextToken,
    attribute_triples,
    dom_paths,
    height1_subtrees,
    html_lexemes,
    parse_html,
    serialize_html,
    tokenize_html,
)


class TestTokenizer:
    def test_simple_document(self):
        toks = tokenize_html("<div><p>hi</p></div>")
        assert [type(t) for t in toks] == [OpenTag, OpenTag, TextToken, CloseTag, CloseTag]
        assert toks[0].name == "div"
        assert toks[2].text == "hi"
        assert toks[3].name == "p"

    def test_empty_source(self):
        assert tokenize_html("") == []

    def test_unterminated_tag_offset(self):
        with pytest.raises(ParseError) as err:
            tokenize_html("<div")
        assert err.value.offset == 0

    def test_unterminated_tag_mid_document(self):
        with pytest.raises(ParseError) as err:
            tokenize_html("<p>x</p><div")
        assert err.value.offset == 8

    def test_unterminated_quoted_attribute(self):
        with pytest.raises(ParseError):
            tokenize_html('<div style="color:red>')

    def test_names_lowercased(self):
        toks = tokenize_html('<DIV STYLE="x"></DIV>')
        assert toks[0].name == "div"
        assert toks[0].attrs == (("style", "x"),)
        assert toks[1].name == "div"

    def test_single_and_double_quotes(self):
        toks = tokenize_html("<a href='u' title=\"t\">x</a>")
        assert toks[0].attrs == (("href", "u"), ("title", "t"))

    def test_unquoted_and_bare_attributes(self):
        toks = tokenize_html("<input type=text disabled>")
        assert toks[0].attrs == (("type", "text"), ("disabled", ""))

    def test_comments_and_doctype_dropped(self):
        toks = tokenize_html("<!DOCTYPE html><!-- note --><p>x</p>")
        assert [type(t) for t in toks] == [OpenTag, TextToken, CloseTag]

    def test_whitespace_only_text_dropped(self):
        toks = tokenize_html("<div>\n  <p>x</p>\n</div>")
        assert sum(isinstance(t, TextToken) for t in toks) == 1

    def test_entities_decoded(self):
        toks = tokenize_html("<p>a &lt; b &amp; c &#65;</p>")
        assert toks[1].text == "a < b & c A"

    def test_stray_lt_is_text(self):
        toks = tokenize_html("<p>a < b</p>")
        assert toks[1].text == "a < b"

    def test_self_closing(self):
        toks = tokenize_html("<div/>")
        assert toks[0].self_closing


class TestParser:
    def test_simple_tree(self):
        tree = parse_html("<div><p>hi</p></div>")
        body = tree.root.children[0]
        assert body.tag == "body"
        div = body.children[0]
        assert div.tag == "div"
        assert div.children[0].tag == "p"
        assert div.children[0].children[0].text == "hi"

    def test_recovery_auto_closes(self):
        tree = parse_html("<div><p>hi</div>", recover=True)
        div = tree.root.children[0].children[0]
        assert div.tag == "div"
        assert [c.tag for c in div.children] == ["p"]

    def test_strict_mode_rejects_mismatch(self):
        with pytest.raises(StructureError) as err:
            parse_html("<div><p>hi</div>", recover=False)
        assert err.value.tag == "div"

    def test_strict_mode_rejects_unclosed(self):
        with pytest.raises(StructureError):
            parse_html("<div>", recover=False)

    def test_stray_close_ignored_in_recovery(self):
        tree = parse_html("<div></p></div>", recover=True)
        assert tree.root.children[0].children[0].tag == "div"

    def test_void_elements_take_no_children(self):
        tree = parse_html("<div><img><p>x</p></div>")
        div = tree.root.children[0].children[0]
        assert [c.tag for c in div.children] == ["img", "p"]
        assert div.children[0].children == []

    def test_html_body_synthesized(self):
        tree = parse_html("<p>a</p>")
        assert tree.root.tag == "html"
        assert [c.tag for c in tree.root.children] == ["body"]

    def test_explicit_structure_preserved(self):
        tree = parse_html("<html><head></head><body><div></div></body></html>")
        assert [c.tag for c in tree.root.children] == ["head", "body"]

    def test_single_element_document_has_no_body(self):
        tree = parse_html("<html></html>")
        assert tree.root.children == []


class TestSerializer:
    def test_normalized_output(self):
        tree = parse_html("<DIV STYLE='a\"b'>x</DIV>")
        assert (
            serialize_html(tree)
            == '<html><body><div style="a&quot;b">x</div></body></html>'
        )

    def test_round_trip_stability(self):
        sources = [
            "<div><p>hi</p></div>",
            "<html><body><ul><li>a</li><li>b</li></ul></body></html>",
            "<div style='color:red'>x<span>y</span>z</div>",
            "<div><p>unclosed<div>sibling</div>",
            "<p>a &lt; b &amp; c</p>",
            "<table><tr><td>z</td></tr></table>",
        ]
        for src in sources:
            once = parse_html(src, recover=True)
            twice = parse_html(serialize_html(once), recover=True)
            assert twice.root == once.root, src

    def test_void_serialization_reparses(self):
        tree = parse_html("<div><br><hr><img src='x'></div>")
        again = parse_html(serialize_html(tree))
        assert again.root == tree.root


def build_tree(node: DomNode) -> DomTree:
    return DomTree(root=node, source_tokens=[])


class TestHeight1Subtrees:
    def test_hand_example(self):
        # body -> [div, p], div -> [span]
        tree = build_tree(
            DomNode(
                tag="body",
                children=[
                    DomNode(tag="div", children=[DomNode(tag="span")]),
                    DomNode(tag="p"),
                ],
            )
        )
        assert height1_subtrees(tree) == Counter({"body(div,p)": 1, "div(span)": 1})

    def test_single_element_document_empty(self):
        assert height1_subtrees(parse_html("<html></html>")) == Counter()

    def test_text_leaves_excluded(self):
        tree = parse_html("<div><p>words here</p></div>")
        sigs = height1_subtrees(tree)
        assert sigs == Counter({"html(body)": 1, "body(div)": 1, "div(p)": 1})

    def test_deep_copy_identical(self):
        import copy

        tree = parse_html("<div><p>x</p><p>y</p></div>")
        assert height1_subtrees(tree) == height1_subtrees(copy.deepcopy(tree))

    def test_ordered_vs_unordered(self):
        t1 = build_tree(DomNode(tag="div", children=[DomNode(tag="a"), DomNode(tag="b")]))
        t2 = build_tree(DomNode(tag="div", children=[DomNode(tag="b"), DomNode(tag="a")]))
        assert height1_subtrees(t1) != height1_subtrees(t2)
        assert height1_subtrees(t1, ordered=False) == height1_subtrees(t2, ordered=False)

    def test_structural_recursion(self):
        # root entry plus the union over children must equal the full multiset
        tree = parse_html("<div><section><p>a</p><p>b</p></section><div><span>c</span></div></div>")
        root = tree.root
        total = height1_subtrees(root)
        expected = Counter({f"{root.tag}({','.join(c.tag for c in root.element_children())})": 1})
        for child in root.element_children():
            expected += height1_subtrees(child)
        assert total == expected


class TestDomPaths:
    def test_nested_document(self):
        got = dom_paths(parse_html("<html><body><div/></body></html>"))
        assert got == Counter({"html": 1, "html/body": 1, "html/body/div": 1})

    def test_empty_body_paths_stop_at_body(self):
        got = dom_paths(parse_html("<html><body></body></html>"))
        assert got == Counter({"html": 1, "html/body": 1})

    def test_duplicate_siblings_count_twice(self):
        got = dom_paths(parse_html("<div></div><div></div>"))
        assert got["html/body/div"] == 2

    def test_attribute_triples(self):
        got = attribute_triples(parse_html('<div style="x"><a href="u">y</a></div>'))
        assert got == Counter(
            {
                ("html/body/div", "style", "x"): 1,
                ("html/body/div/a", "href", "u"): 1,
            }
        )


class TestLexemes:
    def test_stream_contents(self):
        lex = html_lexemes('<div style="a">x y</div>')
        assert lex == ["<div", 'style="a"', ">", "x", "y", "</div>"]

    def test_markup_classification(self):
        from uigraph.htmldom import is_markup_lexeme

        assert is_markup_lexeme("<div")
        assert is_markup_lexeme('style="a"')
        assert not is_markup_lexeme("word")
