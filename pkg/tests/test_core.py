import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnppost.core import (
    BlockGrid,
    ImageBuffer,
    extract_block,
    insert_block,
    read_matrix,
    read_pgm,
    write_matrix,
    write_pgm,
)


def test_image_buffer_basics():
    img = ImageBuffer.from_samples(2, 3, [1, 2, 3, 4, 5, 6])
    assert img.shape == (2, 3)
    assert (img.height, img.width) == (2, 3)
    np.testing.assert_array_equal(img.samples, [1, 2, 3, 4, 5, 6])
    assert img.pixels[1, 0] == 4
    assert img.pixels.dtype == np.float64
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 7


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_image_buffer_rejects_non_finite(bad):
    arr = np.zeros((3, 3))
    arr[1, 1] = bad
    with pytest.raises(ValueError, match="finite"):
        ImageBuffer(arr)


def test_image_buffer_rejects_bad_shapes():
    with pytest.raises(ValueError):
        ImageBuffer(np.zeros(4))
    with pytest.raises(ValueError):
        ImageBuffer(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        ImageBuffer.from_samples(2, 2, [1, 2, 3])


def test_image_buffer_copies_input():
    arr = np.ones((2, 2))
    img = ImageBuffer(arr)
    arr[0, 0] = 5
    assert img.pixels[0, 0] == 1


def test_grid_enumeration_row_major_with_partial_blocks():
    grid = BlockGrid((5, 7), (2, 3))
    assert grid.blocks == ((0, 0), (0, 3), (0, 6), (2, 0), (2, 3), (2, 6), (4, 0), (4, 3), (4, 6))
    assert grid.block_dims(0) == (2, 3)
    assert grid.block_dims(2) == (2, 1)
    assert grid.block_dims(6) == (1, 3)
    assert grid.block_dims(8) == (1, 1)
    assert sum(h * w for h, w in map(grid.block_dims, range(len(grid)))) == 35


def test_grid_tiles_without_overlap():
    grid = BlockGrid((13, 10), (4, 4))
    cover = np.zeros((13, 10), dtype=int)
    for i in range(len(grid)):
        rs, cs = grid.block_slices(i)
        cover[rs, cs] += 1
    np.testing.assert_array_equal(cover, 1)


def test_extract_block_examples():
    img = ImageBuffer([[1, 2], [3, 4]])
    np.testing.assert_array_equal(extract_block(img, BlockGrid((2, 2), (1, 1)), 0), [1])
    np.testing.assert_array_equal(extract_block(img, BlockGrid((2, 2), (2, 2)), 0), [1, 3, 2, 4])


def test_extract_block_index_errors():
    img = ImageBuffer(np.zeros((4, 4)))
    grid = BlockGrid((4, 4), (2, 2))
    for bad in (-1, 4):
        with pytest.raises(IndexError):
            extract_block(img, grid, bad)
        with pytest.raises(IndexError):
            insert_block(img, grid, bad, np.zeros(4))


def test_insert_block_length_mismatch():
    grid = BlockGrid((4, 4), (2, 2))
    with pytest.raises(ValueError):
        insert_block(ImageBuffer(np.zeros((4, 4))), grid, 0, np.zeros(3))


def test_insert_zero_block_into_ones():
    img = ImageBuffer(np.ones((8, 8)))
    out = insert_block(img, BlockGrid((8, 8), (4, 4)), 0, np.zeros(16))
    assert np.count_nonzero(out.pixels == 0) == 16
    np.testing.assert_array_equal(out.pixels[:4, :4], 0)
    np.testing.assert_array_equal(out.pixels[4:, :], 1)
    np.testing.assert_array_equal(img.pixels, 1)


@pytest.mark.parametrize("size", [16, 24])
def test_round_trip_every_block(rng, size):
    img = ImageBuffer(rng.uniform(0, 255, (size, size)))
    grid = BlockGrid(img.shape, (8, 8))
    for i in range(len(grid)):
        assert insert_block(img, grid, i, extract_block(img, grid, i)) == img


@settings(max_examples=60, deadline=None)
@given(
    h=st.integers(1, 12),
    w=st.integers(1, 12),
    bh=st.integers(1, 5),
    bw=st.integers(1, 5),
    seed=st.integers(0, 2**32 - 1),
)
def test_round_trip_property(h, w, bh, bw, seed):
    img = ImageBuffer(np.random.default_rng(seed).normal(size=(h, w)))
    grid = BlockGrid((h, w), (bh, bw))
    for i in range(len(grid)):
        v = extract_block(img, grid, i)
        dh, dw = grid.block_dims(i)
        assert v.size == dh * dw
        assert insert_block(img, grid, i, v) == img


@settings(max_examples=40, deadline=None)
@given(h=st.integers(1, 10), w=st.integers(1, 10), bh=st.integers(1, 4), bw=st.integers(1, 4))
def test_gather_matches_extract_and_scatter_inverts(h, w, bh, bw):
    img = ImageBuffer(np.arange(h * w, dtype=float).reshape(h, w))
    grid = BlockGrid((h, w), (bh, bw))
    groups = grid.gather(img)
    for (_, idx, _), g in zip(grid.groups, groups):
        for j, i in enumerate(idx):
            np.testing.assert_array_equal(g[j], extract_block(img, grid, i))
    np.testing.assert_array_equal(grid.scatter(groups), img.pixels)


def test_pgm_round_trip(tmp_path, rng):
    pixels = rng.integers(0, 256, (7, 5)).astype(float)
    write_pgm(tmp_path / "a.pgm", pixels)
    assert read_pgm(tmp_path / "a.pgm") == ImageBuffer(pixels)


def test_pgm_rounds_and_clips(tmp_path):
    write_pgm(tmp_path / "a.pgm", [[-3.0, 12.4], [12.6, 300.0]])
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm").pixels, [[0, 12], [13, 255]])


def test_pgm_header_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n# another\n255\n" + bytes([7, 200]))
    np.testing.assert_array_equal(read_pgm(path).pixels, [[7, 200]])


@pytest.mark.parametrize(
    "payload",
    [b"P2\n2 1\n255\n1 2", b"P5\n2 1\n65535\n\x00\x00\x00\x00", b"P5\n2 2\n255\n\x00", b"P5\n2"],
)
def test_pgm_rejects_bad_files(tmp_path, payload):
    path = tmp_path / "bad.pgm"
    path.write_bytes(payload)
    with pytest.raises(ValueError):
        read_pgm(path)


def test_matrix_round_trip_is_exact(tmp_path, rng):
    m = rng.normal(size=(3, 4)) * 1e-7
    write_matrix(tmp_path / "m.txt", m)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.txt"), m)


def test_matrix_rejects_non_finite(tmp_path):
    with pytest.raises(ValueError):
        write_matrix(tmp_path / "m.txt", [[1.0, np.nan]])
    (tmp_path / "n.txt").write_text("1 2\n1.0 inf\n")
    with pytest.raises(ValueError):
        read_matrix(tmp_path / "n.txt")
