import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photocal.correspondence import (
    Match,
    MatcherConfig,
    MatchSet,
    block_orientation_filter,
    detect_and_match,
    load_matches,
    radial_displacement,
)
from photocal.dataset_io import FrameRecord
from photocal.models import normalized_radius
from photocal.simulator import radiance_field


def frame(img, fid=0, exposure=5.0):
    return FrameRecord(fid, 0.0, exposure, np.asarray(img, dtype=np.uint8))


def vectors_set(x1, y1, x2, y2, width=100, height=100):
    x1, y1, x2, y2 = (np.asarray(v, float) for v in (x1, y1, x2, y2))
    z = np.zeros_like(x1)
    return MatchSet((0, 1), 1.0, width, height, x1, y1, x2, y2, z, z, z, z)


def test_load_matches_radius(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("10 10 12 10\n")
    img = np.arange(100 * 100).reshape(100, 100) % 256
    ms = load_matches(p, frame(img, 0, 5.0), frame(img, 1, 10.0))
    assert len(ms) == 1 and not ms.empty
    assert ms.R1[0] == pytest.approx(math.dist((10, 10), (50, 50)) / (50 * math.sqrt(2)), abs=1e-15)
    assert ms.M1[0] == img[10, 10] / 255 and ms.M2[0] == img[10, 12] / 255
    assert ms.k == 0.5


def test_load_matches_empty_and_out_of_bounds(tmp_path):
    img = np.zeros((100, 100))
    empty = tmp_path / "e.txt"
    empty.write_text("")
    assert load_matches(empty, frame(img), frame(img)).empty
    assert load_matches(tmp_path / "missing.txt", frame(img), frame(img)).empty
    mixed = tmp_path / "m.txt"
    mixed.write_text("1 1 2 2\n5 5 150 5\n3 3 4 4\n")
    ms = load_matches(mixed, frame(img), frame(img))
    assert len(ms) == 2 and ms.skipped == 1


def test_bilinear_sampling(tmp_path):
    img = np.tile(np.arange(0, 200, 10), (5, 1))
    p = tmp_path / "m.txt"
    p.write_text("2.5 1 3 1\n")
    ms = load_matches(p, frame(img), frame(img))
    assert ms.M1[0] == pytest.approx(25 / 255) and ms.M2[0] == pytest.approx(30 / 255)


def brute_force_modal_bin(angles, bins):
    counts = [0] * bins
    for a in angles:
        counts[int(math.floor((a + math.pi) / (2 * math.pi) * bins)) % bins] += 1
    return counts.index(max(counts))


def test_filter_keeps_dominant_direction():
    rng = np.random.default_rng(0)
    # centred inside the [0, 10) degree bin so the noise cannot straddle a bin edge
    ang = np.r_[np.deg2rad(5) + rng.normal(0, 0.02, 8), np.pi - 0.01, -np.pi + 0.01]
    x1 = rng.uniform(10, 40, 10)
    y1 = rng.uniform(10, 40, 10)
    ms = vectors_set(x1, y1, x1 + 3 * np.cos(ang), y1 + 3 * np.sin(ang))
    out = block_orientation_filter(ms, (1, 1), 36)
    modal = brute_force_modal_bin(np.arctan2(out.y2 - out.y1, out.x2 - out.x1), 36)
    assert modal == brute_force_modal_bin(ang, 36)
    assert len(out) == 8
    np.testing.assert_array_equal(out.x1, x1[:8])


def test_filter_identity_cases():
    ms = vectors_set([1, 20, 30], [1, 20, 30], [3, 22, 32], [2, 21, 31])
    assert block_orientation_filter(ms, (1, 1), 36).same_as(ms)
    single = vectors_set([10], [10], [5], [40])
    assert block_orientation_filter(single, (4, 4), 36).same_as(single)
    still = vectors_set([10, 10, 11], [10, 10, 11], [10, 13, 11], [10, 10, 14])
    out = block_orientation_filter(still, (1, 1), 36)
    assert 0 in out.x1 - out.x2 + out.y1 - out.y2


def test_filter_tie_prefers_smaller_motion():
    ms = vectors_set([10, 11, 12, 13], [10, 11, 12, 13], [11, 12, 12, 13], [10, 11, 22, 23])
    out = block_orientation_filter(ms, (1, 1), 36)
    np.testing.assert_array_equal(out.x1, [10, 11])


def test_filter_rejects_bad_params():
    with pytest.raises(ValueError):
        block_orientation_filter(vectors_set([1], [1], [2], [2]), (0, 1), 36)
    with pytest.raises(ValueError):
        block_orientation_filter(vectors_set([1], [1], [2], [2]), (1, 1), 1)


random_sets = st.integers(0, 100_000).map(lambda s: _random_set(s))


def _random_set(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 80))
    x1, y1 = rng.uniform(0, 99, (2, n))
    d = rng.normal(0, 5, (2, n)) + rng.normal(0, 5, (2, 1))
    d[:, rng.random(n) < 0.1] = 0.0
    return vectors_set(x1, y1, x1 + d[0], y1 + d[1])


@given(random_sets, st.integers(1, 5), st.integers(1, 5), st.integers(2, 48))
@settings(max_examples=100, deadline=None, derandomize=True)
def test_filter_idempotent_subset(ms, gx, gy, bins):
    once = block_orientation_filter(ms, (gx, gy), bins)
    twice = block_orientation_filter(once, (gx, gy), bins)
    assert twice.same_as(once)
    assert len(once) <= len(ms)
    rows = set(zip(ms.x1, ms.y1, ms.x2, ms.y2))
    assert set(zip(once.x1, once.y1, once.x2, once.y2)) <= rows


@given(st.floats(0, 99), st.floats(0, 99), st.floats(-math.pi, math.pi))
@settings(max_examples=100, derandomize=True)
def test_radius_rotation_invariant(x, y, theta):
    cx = cy = 50.0
    xr = cx + (x - cx) * math.cos(theta) - (y - cy) * math.sin(theta)
    yr = cy + (x - cx) * math.sin(theta) + (y - cy) * math.cos(theta)
    assert normalized_radius(xr, yr, 100, 100) == pytest.approx(normalized_radius(x, y, 100, 100), abs=1e-12)


def test_radial_displacement():
    assert radial_displacement(Match(0, 0, 0, 0, 0, 0, 0.4, 0.4)) == 0
    assert radial_displacement(Match(0, 0, 0, 0, 0, 0, 0.1, 0.5)) == pytest.approx(0.4)
    r_corner = normalized_radius(0, 0, 100, 100)
    r_center = normalized_radius(50, 50, 100, 100)
    assert radial_displacement(Match(50, 50, 0, 0, 0, 0, r_center, r_corner)) == pytest.approx(1.0, abs=1e-15)


def texture(h=120, w=160, seed=0):
    return np.round(255 * radiance_field(h, w + 10, np.random.default_rng(seed))).astype(np.uint8)


def test_self_matching():
    img = texture()[:, :160]
    ms = detect_and_match(frame(img, 0), frame(img, 1))
    assert len(ms) > 50 and not ms.empty
    np.testing.assert_array_equal(ms.x1, ms.x2)
    np.testing.assert_array_equal(ms.y1, ms.y2)
    np.testing.assert_array_equal(ms.M1, ms.M2)
    np.testing.assert_array_equal(ms.R1, ms.R2)


def test_translation_recovered():
    big = texture()
    a, b = big[:, 10:170], big[:, 0:160]  # b shows the scene shifted 10 px right
    ms = detect_and_match(frame(a, 0), frame(b, 1))
    assert len(ms) > 30
    ok = np.hypot(ms.x2 - ms.x1 - 10, ms.y2 - ms.y1) <= 1.0
    assert ok.mean() >= 0.8


def test_textureless_frames_flagged():
    img = np.full((60, 80), 128, dtype=np.uint8)
    ms = detect_and_match(frame(img, 0), frame(img, 1))
    assert ms.empty and len(ms) == 0


def test_min_matches_flag():
    img = texture()[:, :160]
    ms = detect_and_match(frame(img, 0), frame(img, 1), MatcherConfig(min_matches=10_000))
    assert ms.empty and len(ms) > 0


def test_match_set_validation():
    with pytest.raises(ValueError):
        MatchSet((0, 1), 0.0, 10, 10)
    with pytest.raises(ValueError):
        MatchSet((0, 1), 1.0, 10, 10, x1=[1.0, 2.0])
