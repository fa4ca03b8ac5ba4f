import numpy as np
import pytest

from dmatch.errors import ImageFormatError
from dmatch.io import (colorize_disparity, colorize_flow, read_flo, read_image, read_pfm,
                       write_color, write_flo, write_pfm, write_pnm)


def test_pfm_round_trip(tmp_path, rng):
    f = rng.standard_normal((5, 7)).astype(np.float32)
    f[1, 2] = -np.inf
    write_pfm(tmp_path / "a.pfm", f)
    data = (tmp_path / "a.pfm").read_bytes()
    assert data.startswith(b"Pf\n7 5\n-1.0\n")
    # bottom row first, little-endian
    assert data[12:16] == f[-1, 0].astype("<f4").tobytes()
    g = read_pfm(tmp_path / "a.pfm")
    assert g.dtype == np.float32 and np.array_equal(g, f)


def test_pfm_big_endian(tmp_path):
    f = np.arange(6, dtype=np.float32).reshape(2, 3)
    (tmp_path / "b.pfm").write_bytes(b"Pf\n3 2\n1.0\n" + f[::-1].astype(">f4").tobytes())
    assert np.array_equal(read_pfm(tmp_path / "b.pfm"), f)


def test_flo_round_trip(tmp_path, rng):
    f = rng.standard_normal((4, 6, 2)).astype(np.float32)
    write_flo(tmp_path / "a.flo", f)
    data = (tmp_path / "a.flo").read_bytes()
    assert np.frombuffer(data[:4], "<f4")[0] == np.float32(202021.25)
    assert np.array_equal(read_flo(tmp_path / "a.flo"), f)
    with pytest.raises(ValueError):
        write_flo(tmp_path / "c.flo", np.zeros((3, 3)))


@pytest.mark.parametrize("maxval", [255, 65535])
@pytest.mark.parametrize("color", [False, True])
def test_pnm_round_trip(tmp_path, rng, maxval, color):
    shape = (5, 4, 3) if color else (5, 4)
    ints = rng.integers(0, maxval + 1, shape)
    write_pnm(tmp_path / "a.pnm", ints / maxval, maxval=maxval)
    img = read_image(tmp_path / "a.pnm")
    assert img.shape == shape
    assert np.allclose(img * maxval, ints)


def test_16_bit_is_big_endian(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P5\n2 1\n65535\n\x01\x00\xff\xff")
    assert np.allclose(read_image(tmp_path / "a.pgm"), [[256 / 65535, 1.0]])


def test_header_comments(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P5 # magic\n# size next\n2 1\n# depth\n255\n\x00\xff")
    assert np.array_equal(read_image(tmp_path / "a.pgm"), [[0.0, 1.0]])


@pytest.mark.parametrize("data,offset", [
    (b"P3\n2 1\n255\n\x00\xff", 0),
    (b"P5\n2 x\n255\n\x00\xff", 5),
    (b"P5\n2 1\n70000\n\x00\xff", 7),
    (b"P5\n2 1\n255\n\x00", 12),
    (b"P5\n2", 4),
])
def test_malformed_header_reports_offset(tmp_path, data, offset):
    (tmp_path / "bad.pgm").write_bytes(data)
    with pytest.raises(ImageFormatError) as info:
        read_image(tmp_path / "bad.pgm")
    assert info.value.offset == offset
    assert str(offset) in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        read_image(tmp_path / "none.pgm")


def test_disparity_colors():
    d = np.array([[0.0, 5.0, 10.0, -np.inf]])
    c = colorize_disparity(d, 0, 10)
    assert c.dtype == np.uint8 and c.shape == (1, 4, 3)
    assert c[0, :, 0].tolist() == [0, 128, 255, 0]
    assert np.all(c[..., 0] == c[..., 2])


def test_flow_colors():
    flow = np.zeros((2, 2, 2))
    assert np.all(colorize_flow(flow) == 255)
    flow[0, 0] = [1.0, 0.0]
    flow[0, 1] = [-1.0, 0.0]
    flow[1, 0] = [np.nan, 0.0]
    c = colorize_flow(flow)
    assert np.all(c[1, 1] == 255)
    assert np.all(c[1, 0] == 0)
    assert not np.array_equal(c[0, 0], c[0, 1])
    # saturation grows with magnitude
    half = colorize_flow(flow * 0.5, max_magnitude=1.0)
    assert np.all(half[0, 0].astype(int) >= c[0, 0].astype(int))


def test_write_color(tmp_path):
    rgb = np.zeros((3, 4, 3), dtype=np.uint8)
    rgb[0, 0] = [255, 0, 0]
    write_color(tmp_path / "a.ppm", rgb)
    assert np.array_equal(read_image(tmp_path / "a.ppm") * 255, rgb)
    write_color(tmp_path / "a.png", rgb)
    assert (tmp_path / "a.png").read_bytes()[:4] == b"\x89PNG"
