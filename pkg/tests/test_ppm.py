import numpy as np
import pytest

from lanetow.ppm import decode_ppm, encode_ppm, read_ppm, write_ppm


def test_header_layout():
    img = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    data = encode_ppm(img)
    assert data.startswith(b"P6\n3 2\n255\n")
    assert data[len(b"P6\n3 2\n255\n"):] == img.tobytes()


def test_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (7, 5, 3), dtype=np.uint8)
    write_ppm(tmp_path / "a.ppm", img)
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), img)


def test_mask_written_as_gray():
    mask = np.array([[True, False]])
    assert np.array_equal(decode_ppm(encode_ppm(mask)), [[[255] * 3, [0] * 3]])


def test_comments_are_skipped():
    body = bytes(range(6))
    assert decode_ppm(b"P6\n# made by hand\n2 1\n255\n" + body).tobytes() == body


@pytest.mark.parametrize("data", [b"P3\n1 1\n255\n000", b"P6\n2 2\n255\n\x00\x00", b"P6\n1 1\n65535\n"])
def test_bad_files(data):
    with pytest.raises(ValueError):
        decode_ppm(data)


def test_rejects_bad_arrays():
    with pytest.raises(ValueError):
        encode_ppm(np.zeros((2, 2, 3), np.float32))
