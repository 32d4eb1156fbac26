import json
import math

import numpy as np
import pytest

from uigraph.components import (
    Component,
    Kind,
    annotations_from_dict,
    annotations_to_dict,
    featurize,
    feature_matrix,
    load_annotations,
    mask_text_regions,
    merge_components,
    save_annotations,
)
from uigraph.errors import InvalidInputError
from uigraph.geometry import BBox
from uigraph.raster import Raster


def text_comp(cid, x, y, w, h, text="hi"):
    return Component(id=cid, kind=Kind.TEXT, bbox=BBox(x, y, w, h), text=text)


def visual_comp(cid, x, y, w, h, color=None):
    return Component(id=cid, kind=Kind.VISUAL, bbox=BBox(x, y, w, h), color=color)


class TestComponentInvariants:
    def test_text_requires_text(self):
        with pytest.raises(InvalidInputError):
            Component(id=0, kind=Kind.TEXT, bbox=BBox(0, 0, 1, 1))

    def test_visual_must_not_carry_text(self):
        with pytest.raises(InvalidInputError):
            Component(id=0, kind=Kind.VISUAL, bbox=BBox(0, 0, 1, 1), text="x")

    def test_empty_string_text_is_fine(self):
        c = text_comp(0, 0, 0, 1, 1, text="")
        assert c.text == ""

    def test_degenerate_bbox_rejected(self):
        with pytest.raises(InvalidInputError):
            visual_comp(0, 0, 0, 0, 5)


class TestMaskTextRegions:
    def test_enumerated_pixels(self):
        img = Raster.filled(4, 4)
        out = mask_text_regions(img, [BBox(1, 1, 2, 2)])
        black = {(x, y) for y in range(4) for x in range(4) if tuple(out.pixels[y, x]) == (0, 0, 0)}
        assert black == {(1, 1), (1, 2), (2, 1), (2, 2)}
        # everything else untouched
        assert np.all(out.pixels[0, :] == 1.0)
        assert np.all(img.pixels == 1.0), "input must not be mutated"

    def test_empty_box_list_is_identity(self):
        img = Raster.filled(3, 3, (0.25, 0.5, 0.75))
        out = mask_text_regions(img, [])
        assert np.array_equal(out.pixels, img.pixels)

    def test_full_cover_blackens_all(self):
        img = Raster.filled(5, 4, (0.9, 0.1, 0.3))
        out = mask_text_regions(img, [BBox(0, 0, 5, 4)])
        assert np.all(out.pixels == 0.0)

    def test_boxes_clipped_to_image(self):
        img = Raster.filled(3, 3)
        out = mask_text_regions(img, [BBox(2, 2, 50, 50)])
        assert tuple(out.pixels[2, 2]) == (0, 0, 0)
        assert tuple(out.pixels[0, 0]) == (1, 1, 1)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        img = Raster(8, 8, rng.uniform(0, 1, (8, 8, 3)))
        boxes = [BBox(0.5, 1.2, 3.3, 2.8), BBox(4, 4, 10, 10)]
        once = mask_text_regions(img, boxes)
        twice = mask_text_regions(once, boxes)
        assert np.array_equal(once.pixels, twice.pixels)

    def test_fractional_box_uses_pixel_centers(self):
        img = Raster.filled(4, 1)
        # covers centers 1.5 and 2.5 only
        out = mask_text_regions(img, [BBox(1.2, 0, 1.9, 1)])
        row = [tuple(out.pixels[0, x]) for x in range(4)]
        assert row == [(1, 1, 1), (0, 0, 0), (0, 0, 0), (1, 1, 1)]


class TestMergeComponents:
    def test_duplicate_visual_dropped(self):
        t1 = text_comp(0, 0, 0, 10, 2)
        v1 = visual_comp(0, 0, 0, 10, 2)  # IoU 1.0 with t1
        v2 = visual_comp(1, 20, 20, 5, 5)
        merged = merge_components([t1], [v1, v2])
        assert [(c.kind, c.bbox) for c in merged] == [
            (Kind.TEXT, t1.bbox),
            (Kind.VISUAL, v2.bbox),
        ]
        assert [c.id for c in merged] == [0, 1]

    def test_no_text_passthrough(self):
        vs = [visual_comp(3, 0, 0, 2, 2), visual_comp(7, 5, 5, 2, 2)]
        merged = merge_components([], vs)
        assert [c.bbox for c in merged] == [v.bbox for v in vs]
        assert [c.id for c in merged] == [0, 1]

    def test_no_visual_passthrough(self):
        ts = [text_comp(4, 0, 0, 2, 2)]
        merged = merge_components(ts, [])
        assert [c.bbox for c in merged] == [ts[0].bbox]

    def test_threshold_boundary_drops_at_exactly_dup_threshold(self):
        t = text_comp(0, 0, 0, 10, 8)
        v = visual_comp(0, 0, 0, 10, 10)  # IoU = 80/100 = 0.8 exactly
        merged = merge_components([t], [v], dup_threshold=0.8)
        assert [c.kind for c in merged] == [Kind.TEXT]

    def test_duplicate_ids_rejected(self):
        with pytest.raises(InvalidInputError):
            merge_components([text_comp(1, 0, 0, 2, 2), text_comp(1, 5, 5, 2, 2)], [])

    def test_output_never_keeps_text_visual_duplicates(self):
        rng = np.random.default_rng(11)
        from uigraph.geometry import iou

        for _ in range(50):
            ts = [
                text_comp(i, rng.integers(0, 20), rng.integers(0, 20), rng.integers(1, 9), rng.integers(1, 9))
                for i in range(rng.integers(0, 5))
            ]
            vs = [
                visual_comp(i, rng.integers(0, 20), rng.integers(0, 20), rng.integers(1, 9), rng.integers(1, 9))
                for i in range(rng.integers(0, 5))
            ]
            merged = merge_components(ts, vs, dup_threshold=0.8)
            for a in merged:
                for b in merged:
                    if a.kind is Kind.TEXT and b.kind is Kind.VISUAL:
                        assert iou(a.bbox, b.bbox) < 0.8


class TestFeaturize:
    def test_visual_example(self):
        c = visual_comp(0, 0, 0, 100, 50, color=(1, 0, 0))
        vec = featurize(c, 100, 50)
        assert vec.tolist() == [0.5, 0.5, 1, 1, 0, 1, 1, 0, 0, 0]

    def test_text_example(self):
        c = text_comp(0, 0, 0, 10, 10, text="ab")
        vec = featurize(c, 100, 100)
        assert vec.tolist() == pytest.approx(
            [0.05, 0.05, 0.1, 0.1, 1, 0, 0, 0, 0, math.log(3)], abs=1e-15
        )

    def test_deterministic(self):
        c = text_comp(0, 3, 4, 10, 10, text="hello")
        assert np.array_equal(featurize(c, 64, 48), featurize(c, 64, 48))

    def test_ranges(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            kind = rng.choice(["t", "v"])
            bbox = BBox(rng.uniform(0, 90), rng.uniform(0, 90), rng.uniform(1, 60), rng.uniform(1, 60))
            if kind == "t":
                c = Component(id=0, kind=Kind.TEXT, bbox=bbox, text="x" * rng.integers(0, 30))
            else:
                c = Component(id=0, kind=Kind.VISUAL, bbox=bbox, color=tuple(rng.uniform(0, 1, 3)))
            vec = featurize(c, 100, 100)
            assert np.all(vec[:9] >= 0) and np.all(vec[:9] <= 1)
            assert vec[9] >= 0

    def test_bbox_clipped_to_page(self):
        c = visual_comp(0, 90, 90, 20, 20)
        vec = featurize(c, 100, 100)
        assert vec[0] <= 1 and vec[1] <= 1

    def test_external_features_override(self):
        c1 = visual_comp(0, 0, 0, 2, 2)
        c1.features = np.array([1.0, 2.0])
        c2 = text_comp(1, 0, 0, 2, 2)
        c2.features = np.array([3.0, 4.0])
        mat = feature_matrix([c1, c2], 10, 10)
        assert mat.shape == (2, 2)
        with pytest.raises(InvalidInputError):
            feature_matrix([c1, visual_comp(2, 0, 0, 2, 2)], 10, 10)


class TestAnnotationJson:
    def test_round_trip(self, tmp_path):
        comps = [
            text_comp(0, 1, 2, 3, 4, text="hi"),
            visual_comp(1, 5, 6, 7, 8, color=(0.5, 0.25, 1.0)),
        ]
        path = tmp_path / "ann.json"
        save_annotations(path, 100, 200, comps)
        w, h, loaded = load_annotations(path)
        assert (w, h) == (100, 200)
        assert [c.bbox for c in loaded] == [c.bbox for c in comps]
        assert loaded[0].text == "hi"
        assert loaded[1].color == (0.5, 0.25, 1.0)

    def test_schema_shape(self):
        doc = annotations_to_dict(10, 20, [text_comp(0, 0, 0, 1, 1)])
        assert doc["page"] == {"width": 10, "height": 20}
        assert doc["components"][0]["kind"] == "text"
        assert doc["components"][0]["bbox"] == [0, 0, 1, 1]

    def test_duplicate_ids_rejected(self):
        doc = annotations_to_dict(10, 10, [])
        doc["components"] = [
            {"id": 1, "kind": "text", "bbox": [0, 0, 1, 1], "text": "a"},
            {"id": 1, "kind": "text", "bbox": [2, 2, 1, 1], "text": "b"},
        ]
        with pytest.raises(InvalidInputError):
            annotations_from_dict(doc)

    def test_malformed_document(self):
        with pytest.raises(InvalidInputError):
            annotations_from_dict({"components": []})
