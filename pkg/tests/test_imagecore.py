import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from latentmatch.exceptions import ImageFormatError, InvalidArgument, UnsupportedDepthError
from latentmatch.imagecore import (
    GrayImage,
    PatchGrid,
    PatchVector,
    extract_patches,
    load_image,
    load_pgm,
    normalize_patch,
    parse_pgm,
    patches_matrix,
    pgm_bytes,
    save_pgm,
)


def _ramp(width, height):
    return GrayImage.from_array((np.arange(width * height) % 256).reshape(height, width).astype(np.uint8))


def test_load_p5_bytes(tmp_path):
    f = tmp_path / "tiny.pgm"
    f.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = load_pgm(f)
    assert (img.width, img.height) == (2, 2)
    assert img.pixels.ravel().tolist() == [0, 255, 128, 64]
    assert img.name == "tiny"


def test_load_p2_single_pixel():
    img = parse_pgm(b"P2 1 1 255 42")
    assert img.pixels.ravel().tolist() == [42]


def test_p2_comments_are_skipped():
    img = parse_pgm(b"P2\n# made by hand\n2 1\n255\n1 # first\n2\n")
    assert img.pixels.ravel().tolist() == [1, 2]


def test_p5_round_trip_is_byte_exact(tmp_path):
    img = _ramp(7, 5)
    f = tmp_path / "ramp.pgm"
    save_pgm(img, f)
    assert f.read_bytes() == pgm_bytes(img)
    assert load_pgm(f) == img
    save_pgm(load_pgm(f), tmp_path / "again.pgm")
    assert (tmp_path / "again.pgm").read_bytes() == f.read_bytes()


def test_p2_round_trip(tmp_path):
    img = _ramp(4, 3)
    f = tmp_path / "ascii.pgm"
    save_pgm(img, f, ascii=True)
    assert f.read_bytes().startswith(b"P2")
    assert load_image(f) == img


def test_sixteen_bit_pgm_is_rejected():
    with pytest.raises(UnsupportedDepthError):
        parse_pgm(b"P5\n1 1\n65535\n\x00\x01")


@pytest.mark.parametrize(
    "data",
    [b"P6\n1 1\n255\n\x00", b"P5\n1\n", b"P5\nx 1\n255\n\x00", b"P5\n2 2\n255\n\x00\x01"],
    ids=["magic", "truncated-header", "bad-width", "short-raster"],
)
def test_malformed_pgm(data):
    with pytest.raises(ImageFormatError):
        parse_pgm(data)


def test_png_loader(tmp_path):
    arr = (np.arange(12).reshape(3, 4) * 20).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(tmp_path / "g.png")
    img = load_image(tmp_path / "g.png")
    assert np.array_equal(img.pixels, arr)


def test_rgb_png_is_rejected(tmp_path):
    Image.new("RGB", (4, 4)).save(tmp_path / "c.png")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "c.png")


def test_unknown_format(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"GIF89a....")
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "x.bin")


def test_image_invariants():
    with pytest.raises(InvalidArgument):
        GrayImage(width=2, height=2, pixels=np.zeros(3))
    with pytest.raises(InvalidArgument):
        GrayImage(width=1, height=1, pixels=np.array([256]))
    with pytest.raises(InvalidArgument):
        GrayImage(width=0, height=1, pixels=np.zeros(0))


@pytest.mark.parametrize("width,height,count", [(32, 32, 1), (40, 32, 2), (64, 64, 25)])
def test_patch_counts(width, height, count):
    patches = extract_patches(_ramp(width, height), 32, 8)
    assert len(patches) == count
    assert all(p.dim == 32 * 32 for p in patches)


def test_patch_origins_row_major():
    patches = extract_patches(_ramp(40, 40), 32, 8)
    assert [p.origin for p in patches] == [(0, 0), (8, 0), (0, 8), (8, 8)]


def test_patch_values_are_row_major_raster():
    img = _ramp(6, 6)
    p = extract_patches(img, 2, 2)[4]  # origin (2, 2)
    assert p.origin == (2, 2)
    assert p.values.tolist() == img.pixels[2:4, 2:4].astype(float).ravel().tolist()


def test_patch_larger_than_image():
    with pytest.raises(InvalidArgument):
        extract_patches(_ramp(16, 40), 32, 8)


def test_non_overlapping_patches_tile_the_top_left_region():
    grid = PatchGrid.build(70, 50, 16, 16)
    cov = grid.coverage()
    assert np.all(cov[:48, :64] == 1)
    assert np.all(cov[48:, :] == 0) and np.all(cov[:, 64:] == 0)


def test_extraction_is_deterministic():
    img = _ramp(50, 45)
    a, b = extract_patches(img, 16, 5), extract_patches(img, 16, 5)
    assert [p.origin for p in a] == [p.origin for p in b]


def test_coverage_interior_count():
    cov = PatchGrid.build(128, 128, 32, 8).coverage()
    assert cov[64, 64] == 16


def test_patches_matrix_columns():
    patches = extract_patches(_ramp(40, 32), 32, 8)
    m = patches_matrix(patches)
    assert m.shape == (1024, 2)
    assert np.array_equal(m[:, 1], patches[1].values)


def test_normalize_constant_patch():
    assert normalize_patch(PatchVector(values=[1, 1, 1, 1])).values.tolist() == [0, 0, 0, 0]


def test_normalize_two_elements():
    v = normalize_patch(PatchVector(values=[0, 2])).values
    assert v == pytest.approx([-1 / np.sqrt(2), 1 / np.sqrt(2)], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=-1000, max_value=1000), min_size=1, max_size=64))
def test_normalized_patch_is_zero_mean(values):
    v = normalize_patch(PatchVector(values=values)).values
    assert abs(v.mean()) < 1e-12
    norm = np.linalg.norm(v)
    assert norm == pytest.approx(1.0, abs=1e-9) or norm == 0.0
