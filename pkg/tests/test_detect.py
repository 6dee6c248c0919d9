from collections import deque

import numpy as np
import pytest

from flim.detect import (
    BoundingBox,
    binarize,
    boxes_from_components,
    connected_components,
    detect_objects,
    otsu_threshold,
    quantize_256,
)


def otsu_oracle(saliency):
    """Per-threshold python-loop scan with exact integer accumulators."""
    q = quantize_256(saliency).ravel().tolist()
    hist = [0] * 256
    for v in q:
        hist[v] += 1
    if sum(1 for h in hist if h) <= 1:
        return None  # degenerate: implementation returns the map maximum
    n = len(q)
    total = sum(level * h for level, h in enumerate(hist))
    best_t, best_var = 0, -1.0
    w0 = s0 = 0
    for t in range(256):
        w0 += hist[t]
        s0 += t * hist[t]
        w1 = n - w0
        if w0 == 0 or w1 == 0:
            var = 0.0
        else:
            mu0 = s0 / w0
            mu1 = (total - s0) / w1
            var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var:
            best_var, best_t = var, t
    return best_t


def flood_fill_components(mask):
    """Independent BFS 8-connectivity labelling."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for i in range(h):
        for j in range(w):
            if not mask[i, j] or seen[i, j]:
                continue
            comp = []
            queue = deque([(i, j)])
            seen[i, j] = True
            while queue:
                r, c = queue.popleft()
                comp.append((r, c))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if (0 <= rr < h and 0 <= cc < w and mask[rr, cc]
                                and not seen[rr, cc]):
                            seen[rr, cc] = True
                            queue.append((rr, cc))
            comps.append(frozenset(comp))
    return comps


class TestOtsu:
    def test_bimodal_tie_breaks_low(self):
        saliency = np.array([0.0] * 50 + [1.0] * 50, dtype=np.float32).reshape(10, 10)
        t = otsu_threshold(saliency)
        # every split between the two levels is optimal; lowest bin wins
        assert t == pytest.approx(0.5 / 255)
        assert binarize(saliency, t).sum() == 50

    def test_constant_map_has_empty_foreground(self):
        saliency = np.full((8, 8), 0.503, dtype=np.float32)
        t = otsu_threshold(saliency)
        assert t == pytest.approx(0.503, abs=1e-6)
        assert not binarize(saliency, t).any()

    def test_matches_exhaustive_scan(self, rng):
        for _ in range(20):
            saliency = rng.uniform(0, 1, size=(16, 16)).astype(np.float32)
            want = otsu_oracle(saliency)
            got_bin = int(round(otsu_threshold(saliency) * 255 - 0.5))
            assert got_bin == want

    def test_blobby_map_separates(self, rng):
        saliency = rng.uniform(0, 0.2, size=(20, 20)).astype(np.float32)
        saliency[5:9, 5:9] = rng.uniform(0.8, 1.0, size=(4, 4))
        mask = binarize(saliency, otsu_threshold(saliency))
        assert mask[5:9, 5:9].all()
        assert mask.sum() == 16


class TestConnectedComponents:
    def test_diagonal_pixels_join(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[1, 1] = mask[2, 2] = True
        comps = connected_components(mask)
        assert len(comps) == 1
        assert sorted(map(tuple, comps[0])) == [(1, 1), (2, 2)]

    def test_empty_mask(self):
        assert connected_components(np.zeros((5, 5), dtype=bool)) == []

    def test_matches_flood_fill(self, rng):
        for _ in range(10):
            mask = rng.random((32, 32)) < 0.35
            got = {frozenset(map(tuple, c)) for c in connected_components(mask)}
            want = set(flood_fill_components(mask))
            assert got == want


class TestBoxesFromComponents:
    def test_expansion_with_clamping(self):
        saliency = np.ones((40, 40), dtype=np.float32)
        comp = np.array([(r, c) for r in range(10) for c in range(10)])
        boxes = boxes_from_components([comp], saliency, expand_fraction=0.10,
                                      min_area_px=50)
        box = boxes[0]
        assert (box.x1, box.y1, box.x2, box.y2) == (0, 0, 11, 11)

    def test_expansion_centered_away_from_edges(self):
        saliency = np.ones((60, 60), dtype=np.float32)
        comp = np.array([(r, c) for r in range(20, 30) for c in range(20, 40)])
        boxes = boxes_from_components([comp], saliency, expand_fraction=0.10,
                                      min_area_px=50)
        box = boxes[0]
        assert box.x2 - box.x1 == 22
        assert box.y2 - box.y1 == 11
        assert box.x1 == 19 and box.y1 == 20

    def test_small_component_dropped(self):
        saliency = np.ones((20, 20), dtype=np.float32)
        comp = np.array([(r, c) for r in range(9) for c in range(11)])  # 99 px
        assert boxes_from_components([comp], saliency, 0.10, 100) == []
        comp = np.array([(r, c) for r in range(10) for c in range(10)])  # 100 px
        assert len(boxes_from_components([comp], saliency, 0.10, 100)) == 1

    def test_zero_expansion_recovers_rectangles(self, rng):
        saliency = rng.uniform(0, 1, size=(30, 30)).astype(np.float32)
        rects = [(2, 3, 8, 9), (15, 12, 22, 28)]
        comps = [np.array([(r, c) for r in range(y1, y2) for c in range(x1, x2)])
                 for (y1, x1, y2, x2) in rects]
        boxes = boxes_from_components(comps, saliency, 0.0, 1)
        got = sorted((b.y1, b.x1, b.y2, b.x2) for b in boxes)
        assert got == sorted(rects)

    def test_box_contains_component_and_scores_in_unit_range(self, rng):
        saliency = rng.uniform(0, 1, size=(50, 50)).astype(np.float32)
        mask = rng.random((50, 50)) < 0.3
        comps = connected_components(mask)
        boxes = boxes_from_components(comps, saliency, 0.10, 4)
        kept = [c for c in comps if len(c) >= 4]
        assert len(boxes) <= len(kept)
        for box in boxes:
            assert 0.0 <= box.score <= 1.0
        for comp in kept:
            y1, x1 = comp.min(axis=0)
            y2, x2 = comp.max(axis=0) + 1
            assert any(b.x1 <= x1 and b.y1 <= y1 and b.x2 >= x2 and b.y2 >= y2
                       for b in boxes)

    def test_sorted_by_score_with_position_tie_break(self):
        saliency = np.zeros((30, 30), dtype=np.float32)
        saliency[0:5, 0:5] = 0.5
        saliency[10:15, 10:15] = 0.5
        saliency[20:25, 20:25] = 0.9
        comps = [np.array([(r, c) for r in range(a, a + 5) for c in range(a, a + 5)])
                 for a in (10, 0, 20)]
        boxes = boxes_from_components(comps, saliency, 0.0, 1)
        assert [b.y1 for b in boxes] == [20, 0, 10]

    def test_negative_expansion_rejected(self):
        with pytest.raises(ValueError):
            boxes_from_components([], np.zeros((4, 4)), -0.1, 1)


class TestDetectObjects:
    def test_round_trip_json(self, rng):
        saliency = np.zeros((40, 40), dtype=np.float32)
        saliency[5:20, 5:20] = 1.0
        det = detect_objects(saliency, "img1", expand_fraction=0.0, min_area_px=10)
        assert det.image_id == "img1"
        assert len(det.boxes) == 1
        from flim.detect import DetectionSet

        again = DetectionSet.from_json(det.to_json())
        assert again.to_json() == det.to_json()

    def test_degenerate_box_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(5, 5, 5, 9)
