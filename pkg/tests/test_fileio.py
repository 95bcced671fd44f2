import numpy as np
import pytest

from picardstop.fileio import (
    centered_mask_image,
    read_array,
    read_csv_matrix,
    read_pgm,
    write_array,
    write_csv_matrix,
    write_pgm,
)


@pytest.mark.parametrize("maxval", [255, 65535])
@pytest.mark.parametrize("plain", [False, True])
def test_pgm_round_trip(tmp_path, maxval, plain):
    rng = np.random.default_rng(maxval)
    q = rng.integers(0, maxval + 1, size=(7, 5))
    img = q / maxval
    path = tmp_path / "x.pgm"
    write_pgm(path, img, maxval=maxval, plain=plain)
    np.testing.assert_array_equal(read_pgm(path) * maxval, q)
    assert path.read_bytes()[:2] == (b"P2" if plain else b"P5")


def test_pgm_header_with_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P2\n# a comment\n3 2 # inline\n4\n0 1 2\n3 4 0\n")
    np.testing.assert_allclose(read_pgm(path), [[0, 0.25, 0.5], [0.75, 1, 0]])


def test_pgm_binary_16_bit_is_big_endian(tmp_path):
    path = tmp_path / "b.pgm"
    path.write_bytes(b"P5\n2 1\n65535\n" + bytes([0x01, 0x00, 0xFF, 0xFF]))
    np.testing.assert_allclose(read_pgm(path) * 65535, [[256, 65535]])


@pytest.mark.parametrize("content", [b"P6\n1 1\n255\n\x00", b"P5\n2 2\n255\n\x00",
                                     b"P2\n2 2\n", b"P2\n0 2\n255\n"])
def test_pgm_rejects_bad_files(tmp_path, content):
    path = tmp_path / "bad.pgm"
    path.write_bytes(content)
    with pytest.raises(ValueError):
        read_pgm(path)


def test_pgm_scaling_and_clipping(tmp_path):
    path = tmp_path / "s.pgm"
    write_pgm(path, np.array([[-1.0, 0.5, 3.0]]), maxval=255)
    np.testing.assert_allclose(read_pgm(path) * 255, [[0, 128, 255]])
    write_pgm(path, np.array([[-1.0, 1.0]]), maxval=255, scale=(-1.0, 1.0))
    np.testing.assert_allclose(read_pgm(path), [[0, 1]])
    with pytest.raises(ValueError):
        write_pgm(path, np.zeros((2, 2, 2)))


def test_csv_round_trip_is_exact(tmp_path):
    a = np.random.default_rng(0).standard_normal((6, 4)) * 10.0 ** np.arange(-3, 3)[:, None]
    write_csv_matrix(tmp_path / "a.csv", a)
    np.testing.assert_array_equal(read_csv_matrix(tmp_path / "a.csv"), a)
    write_csv_matrix(tmp_path / "v.csv", np.arange(3.0))
    assert read_csv_matrix(tmp_path / "v.csv").shape == (3, 1)


def test_dispatch_by_extension(tmp_path):
    img = np.array([[0.0, 1.0], [1.0, 0.0]])
    write_array(str(tmp_path / "i.PGM"), img)
    write_array(str(tmp_path / "i.csv"), img)
    np.testing.assert_array_equal(read_array(str(tmp_path / "i.PGM")), img)
    np.testing.assert_array_equal(read_array(str(tmp_path / "i.csv")), img)
    with pytest.raises(FileNotFoundError):
        read_array(str(tmp_path / "none.csv"))


def test_centered_mask():
    mask = np.zeros((4, 6), dtype=bool)
    mask[0, 0] = True
    out = centered_mask_image(mask)
    assert out[2, 3] == 1.0 and out.sum() == 1.0
