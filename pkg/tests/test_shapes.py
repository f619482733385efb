from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weaklift import synth
from weaklift.plyio import write_points
from weaklift.shapes import (CategoryConfig, ShapeClass, TemplateBankError, build_template_bank,
                             compute_css, compute_mer, compute_ssh, make_template,
                             normalize_template, surface_height_slice, template_report)


def stacked_patches(counts_by_height: dict[float, int]) -> np.ndarray:
    """Flat square patches at the given heights; every point has a vertical normal."""
    out = []
    for z, side in counts_by_height.items():
        out.append(synth.grid(0, 0.05 * (side - 1), 0, 0.05 * (side - 1), side, side, z=z))
    return np.concatenate(out)


# -- normalization -------------------------------------------------------------------

def test_normalize_halves_radius_two_cloud():
    pts = np.array([[2.0, 0, 0], [-2.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]])
    assert np.allclose(normalize_template(pts), pts / 2)


def test_normalize_single_point_goes_to_origin():
    assert normalize_template(np.array([[3.0, 0, 0]])).tolist() == [[0.0, 0.0, 0.0]]


def test_normalize_rejects_empty():
    with pytest.raises(ValueError):
        normalize_template(np.zeros((0, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 300))
def test_normalize_postconditions(seed, n):
    pts = np.random.default_rng(seed).normal(loc=5, scale=3, size=(n, 3))
    out = normalize_template(pts)
    assert np.linalg.norm(out.mean(axis=0)) <= 1e-9
    assert np.linalg.norm(out, axis=1).max() == pytest.approx(1.0, abs=1e-9)


# -- MER of templates ----------------------------------------------------------------

def test_mer_of_solid_box():
    r = compute_mer(synth.box_surface((0, 0, 0), (0.8, 0.4, 0.5), 0.05))
    assert (r.length, r.width, r.theta) == pytest.approx((0.8, 0.4, 0.0), abs=1e-9)


def test_mer_of_rotated_box():
    pts = synth.box_surface((0, 0, 0), (0.8, 0.4, 0.5), 0.05)
    t = math.radians(45)
    rot = np.array([[math.cos(t), -math.sin(t), 0], [math.sin(t), math.cos(t), 0], [0, 0, 1]])
    r = compute_mer(pts @ rot.T)
    assert r.theta == pytest.approx(45, abs=0.01)
    assert (r.length, r.width) == pytest.approx((0.8, 0.4), abs=1e-9)


def test_mer_of_disk_is_square():
    radius = 0.5
    rng = np.random.default_rng(0)
    ang = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    rim = np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(720)])
    inner = rng.uniform(-0.3, 0.3, size=(200, 3)) * [1, 1, 0]
    r = compute_mer(np.concatenate([rim, inner]))
    assert r.length == pytest.approx(2 * radius, rel=0.01)
    assert r.width == pytest.approx(2 * radius, rel=0.01)


# -- supporting-surface height ------------------------------------------------------

def test_ssh_of_table_fixture():
    # 800 vertical-normal heights: 200 zeros then 600 x 0.7; slice [640, 720) is all 0.7
    pts = synth.table_fixture()
    assert len(pts) == 800
    assert compute_ssh(pts) == pytest.approx(0.7, abs=1e-12)


def test_ssh_of_box_with_equal_faces():
    pts = stacked_patches({0.0: 6, 0.9: 6})  # 36 bottom + 36 top, slice [57, 64) is top
    assert compute_ssh(pts) == pytest.approx(0.9, abs=1e-12)


@pytest.mark.parametrize("ledge_share, expected", [
    (0.10, 0.70),   # slice [80, 90) sits wholly on the main surface
    (0.12, 0.72),   # 8 main + 2 ledge values in the slice: (8*0.7 + 2*0.8) / 10
    (0.20, 0.80),   # slice lies wholly on the ledge
])
def test_ssh_ledge_tolerance(ledge_share, expected):
    n = 100
    ledge = int(round(ledge_share * n))
    z = [0.7] * (n - ledge) + [0.8] * ledge
    assert surface_height_slice(z) == pytest.approx(expected, abs=1e-12)


def test_ssh_slice_falls_back_for_tiny_lists():
    # n=5: floor(4) and floor(4.5) coincide; fall back to the element at index 4
    assert surface_height_slice([0.1, 0.2, 0.3, 0.4, 0.5]) == 0.5
    assert surface_height_slice([0.3]) == 0.3


def test_ssh_without_vertical_normals_fails():
    wall = np.column_stack([np.zeros(100), np.repeat(np.linspace(0, 1, 10), 10),
                            np.tile(np.linspace(0, 1, 10), 10)])
    with pytest.raises(ValueError, match="no supporting surface found"):
        compute_ssh(wall)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(-2, 2), st.integers(5, 9)), min_size=1, max_size=4,
                unique_by=lambda t: round(t[0], 0)))
def test_ssh_equals_known_slice_mean(patches):
    heights = {round(z, 0): side for z, side in patches}  # at least 1 m apart
    pts = stacked_patches(heights)
    z_list = sorted(z for z, side in heights.items() for _ in range(side * side))
    n = len(z_list)
    lo, hi = (4 * n) // 5, (9 * n) // 10
    expected = sum(z_list[lo:hi]) / (hi - lo) if hi > lo else z_list[lo]
    ssh = compute_ssh(pts)
    assert ssh == pytest.approx(expected, abs=1e-12)
    assert pts[:, 2].min() <= ssh <= pts[:, 2].max()


# -- surface compactness ---------------------------------------------------------------

def test_css_of_table_fixture_is_true():
    # band (0.63, 0.77) holds the 600 top points; two half-hulls lose only one column gap:
    # 0.72 - 0.6 * 1.2/29 = 0.695 > 0.9 * 0.72 = 0.648
    pts = synth.table_fixture()
    assert compute_css(pts, compute_ssh(pts)) is True


def test_css_of_pillar_fixture_is_false():
    # SSH = 0.7 (198 heights, slice [158, 178) in the top block); tops 0.04 + 0.04 < 0.9 * 1
    pts = synth.pillar_fixture()
    ssh = compute_ssh(pts)
    assert ssh == pytest.approx(0.7)
    assert compute_css(pts, ssh) is False


def test_css_empty_band_is_false():
    pts = synth.table_fixture()
    assert compute_css(pts, 5.0) is False


def test_css_is_deterministic():
    pts = synth.table_fixture()
    assert {compute_css(pts, 0.7) for _ in range(3)} == {True}


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("fixture", [synth.table_fixture, synth.pillar_fixture])
def test_properties_scale_equivariant(fixture, s):
    base = fixture()
    pts = base * s
    r0, r = compute_mer(base), compute_mer(pts)
    assert (r.cx, r.cy, r.length, r.width) == pytest.approx(
        (s * r0.cx, s * r0.cy, s * r0.length, s * r0.width), abs=1e-9)
    ssh0 = compute_ssh(base)
    assert compute_ssh(pts) == pytest.approx(s * ssh0, abs=1e-9)
    assert compute_css(pts, s * ssh0) == compute_css(base, ssh0)


# -- templates and the bank -----------------------------------------------------------

def test_make_template_supporter(categories):
    tpl = make_template("t0", "table", synth.table_fixture(), categories["table"])
    assert (tpl.l, tpl.w, tpl.h) == pytest.approx(categories["table"].mean_size)
    assert tpl.mer is not None and tpl.css is True
    assert 0 <= tpl.ssh <= tpl.h
    assert tpl.ssh == pytest.approx(tpl.h, abs=1e-9)  # the fixture top is its highest surface


def test_make_template_stander_has_no_properties(categories):
    tpl = make_template("c0", "chair", synth.synth_template("chair"), categories["chair"])
    assert tpl.shape_class is ShapeClass.STANDER
    assert (tpl.mer, tpl.ssh, tpl.css) == (None, None, None)


def test_bank_with_two_chairs(tmp_path, categories):
    for i in range(2):
        write_points(tmp_path / "chair" / f"c{i}.ply", synth.synth_template("chair", i))
    bank = build_template_bank(tmp_path, categories)
    assert list(bank) == ["chair"] and len(bank["chair"]) == 2
    assert all(t.mer is None and t.ssh is None and t.css is None for t in bank["chair"])


def test_bank_table_has_properties(tmp_path, categories):
    write_points(tmp_path / "table" / "fixture.ply", synth.table_fixture())
    tpl = build_template_bank(tmp_path, categories)["table"][0]
    assert tpl.mer is not None and tpl.ssh is not None and tpl.css is True


def test_bank_of_empty_directory(tmp_path, categories):
    assert build_template_bank(tmp_path, categories) == {}


def test_bank_names_bad_file_and_keeps_the_rest(tmp_path, categories):
    write_points(tmp_path / "chair" / "good.ply", synth.synth_template("chair"))
    (tmp_path / "chair" / "bad.ply").write_text("not a ply\n")
    with pytest.raises(TemplateBankError) as err:
        build_template_bank(tmp_path, categories)
    assert "bad.ply" in str(err.value)
    assert [t.id for t in err.value.bank["chair"]] == ["good"]


def test_bank_rejects_unknown_category(tmp_path, categories):
    write_points(tmp_path / "spaceship" / "x.ply", synth.synth_template("chair"))
    with pytest.raises(TemplateBankError, match="spaceship"):
        build_template_bank(tmp_path, categories)


def test_bundled_bank_properties(bank, categories):
    for name, templates in bank.items():
        for tpl in templates:
            assert (tpl.l, tpl.w, tpl.h) == pytest.approx(categories[name].mean_size, rel=1e-9)
            assert (tpl.mer is not None) == tpl.is_supporter
            if tpl.is_supporter:
                assert 0 <= tpl.ssh <= tpl.h + 1e-12
    assert all(t.css for t in bank["table"])


def test_report_lists_supporter_fields(bank):
    report = template_report(bank)
    assert set(report["table/table_0"]) >= {"l", "w", "h", "class", "mer", "ssh", "css"}
    assert "ssh" not in report["chair/chair_0"]


def test_default_category_config():
    cfg = CategoryConfig.load()
    assert len(cfg.names) == 22
    assert cfg.small == {"bottle", "cup", "keyboard"}
    assert cfg.scarce == {"bathtub", "bench", "dresser", "laptop", "wardrobe"}
    supporters = {n for n in cfg.names if cfg[n].shape_class is ShapeClass.SUPPORTER}
    assert supporters == {"bed", "bookshelf", "desk", "dresser", "night_stand", "sofa", "table",
                          "stool", "bench"}
    supportees = {n for n in cfg.names if cfg[n].shape_class is ShapeClass.SUPPORTEE}
    assert supportees == {"bottle", "cup", "keyboard", "lamp", "laptop", "monitor", "plant"}


def test_category_config_rejects_bad_sizes():
    with pytest.raises(ValueError):
        CategoryConfig.from_dict({"x": {"class": "stander", "mean_size": [1, 0, 1]}})
