import numpy as np
import pytest

from stereokit.errors import FormatError, InvalidArgumentError, RangeError
from stereokit.io_formats import (
    read_image_png,
    read_kitti_png,
    read_pfm,
    write_image_png,
    write_kitti_png,
    write_pfm,
)
from stereokit.tensor import Tensor


def test_pfm_round_trip(tmp_path, rng):
    disp = rng.uniform(0, 48, size=(1, 1, 8, 12))
    path = tmp_path / "d.pfm"
    write_pfm(path, Tensor(disp))
    back = read_pfm(path)
    # stored as 32-bit floats
    assert np.abs(back.data - disp).max() <= np.abs(disp).max() * 1e-6


def test_pfm_header_layout(tmp_path):
    path = tmp_path / "d.pfm"
    write_pfm(path, np.ones((3, 5)))
    raw = path.read_bytes()
    assert raw.startswith(b"Pf\n5 3\n-1.0\n")
    assert len(raw) == len(b"Pf\n5 3\n-1.0\n") + 4 * 15


def test_pfm_rejects_bad_inputs(tmp_path):
    with pytest.raises(InvalidArgumentError):
        write_pfm(tmp_path / "nan.pfm", np.array([[np.nan]]))
    color = tmp_path / "color.pfm"
    color.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
    with pytest.raises(FormatError):
        read_pfm(color)
    bad = tmp_path / "bad.pfm"
    bad.write_bytes(b"P6\n2 2\n-1.0\n")
    with pytest.raises(FormatError):
        read_pfm(bad)
    short = tmp_path / "short.pfm"
    short.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 10)
    with pytest.raises(FormatError):
        read_pfm(short)


def test_kitti_png_round_trip(tmp_path, rng):
    disp = rng.uniform(0.5, 100, size=(1, 1, 6, 9))
    path = tmp_path / "d.png"
    write_kitti_png(path, Tensor(disp))
    back, mask = read_kitti_png(path)
    assert np.abs(back.data - disp).max() <= 1 / 512
    assert np.all(mask.data == 1.0)


def test_kitti_png_encoding_rules(tmp_path):
    path = tmp_path / "d.png"
    write_kitti_png(path, np.array([[1.0, 0.0], [2.5, 0.25]]))
    back, mask = read_kitti_png(path)
    # 1.0 px stores as 256; exact multiples of 1/256 round-trip losslessly
    assert back.data[0, 0, 0, 0] == 1.0
    assert back.data[0, 0, 1, 0] == 2.5
    # a stored zero means "invalid", not "zero disparity"
    assert mask.data[0, 0, 0, 1] == 0.0
    assert mask.data[0, 0, 0, 0] == 1.0


def test_kitti_png_range_errors(tmp_path):
    with pytest.raises(RangeError):
        write_kitti_png(tmp_path / "big.png", np.array([[300.0]]))
    with pytest.raises(InvalidArgumentError):
        write_kitti_png(tmp_path / "neg.png", np.array([[-1.0]]))


def test_image_png_round_trip(tmp_path, rng):
    img = rng.uniform(size=(1, 3, 8, 10))
    path = tmp_path / "im.png"
    write_image_png(path, Tensor(img))
    back = read_image_png(path)
    assert back.shape == (1, 3, 8, 10)
    assert np.abs(back.data - img).max() <= 1 / 255 + 1e-9
