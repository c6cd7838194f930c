import numpy as np
import pytest

from dpan.container import ContainerError, decode_container, encode_container


def test_round_trip():
    arrays = [
        ("a", np.arange(6, dtype=np.float64).reshape(2, 3)),
        ("b", np.array([1.5])),
    ]
    blob = encode_container(b"MAGIC1", {"x": 1}, arrays)
    header, sections = decode_container(blob, b"MAGIC1")
    assert header["x"] == 1
    assert sections["a"].shape == (2, 3)
    assert (sections["a"] == arrays[0][1]).all()


def test_deterministic_encoding():
    arrays = [("w", np.ones((3, 3)))]
    assert encode_container(b"M1", {"b": 2, "a": 1}, arrays) == encode_container(
        b"M1", {"a": 1, "b": 2}, arrays
    )


def test_bad_magic():
    blob = encode_container(b"GOOD01", {}, [])
    with pytest.raises(ContainerError, match="magic"):
        decode_container(blob, b"EVIL01")


def test_truncated_payload():
    blob = encode_container(b"M1", {}, [("a", np.ones(10))])
    with pytest.raises(ContainerError, match="truncated"):
        decode_container(blob[:-8], b"M1")


def test_trailing_garbage():
    blob = encode_container(b"M1", {}, [("a", np.ones(2))])
    with pytest.raises(ContainerError, match="trailing"):
        decode_container(blob + b"zz", b"M1")


def test_float32_quantization():
    value = np.array([1 / 3], dtype=np.float64)
    blob = encode_container(b"M1", {}, [("v", value)])
    _, sections = decode_container(blob, b"M1")
    assert sections["v"].dtype == np.dtype("<f4")
    assert sections["v"][0] == np.float32(1 / 3)
