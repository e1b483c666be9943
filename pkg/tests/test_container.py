import struct

import numpy as np
import pytest

from asrqe import container
from asrqe.container import ContainerError


def test_round_trip_and_determinism(tmp_path):
    tensors = {"a": np.arange(6.0).reshape(2, 3), "empty": np.zeros((0, 4)), "s": np.array([1.5])}
    container.write(tmp_path / "x.bin", "thing", {"note": "é", "n": 3}, tensors)
    kind, header, got = container.read(tmp_path / "x.bin")
    assert kind == "thing" and header["note"] == "é" and header["n"] == 3
    for k, v in tensors.items():
        assert got[k].shape == v.shape and np.array_equal(got[k], v)
    container.write(tmp_path / "y.bin", "thing", {"n": 3, "note": "é"}, tensors)
    assert (tmp_path / "x.bin").read_bytes() == (tmp_path / "y.bin").read_bytes()


def test_layout_is_little_endian_float64(tmp_path):
    container.write(tmp_path / "x.bin", "k", {}, {"v": np.array([1.0])})
    data = (tmp_path / "x.bin").read_bytes()
    assert data[:8] == container.MAGIC
    version, hlen = struct.unpack_from("<IQ", data, 8)
    assert version == container.FORMAT_VERSION == 1
    assert data[20 + hlen:] == struct.pack("<d", 1.0)


def test_version_mismatch_names_both_versions(tmp_path):
    container.write(tmp_path / "x.bin", "k", {}, {})
    data = bytearray((tmp_path / "x.bin").read_bytes())
    data[8:12] = struct.pack("<I", 7)
    (tmp_path / "x.bin").write_bytes(bytes(data))
    with pytest.raises(ContainerError, match=r"version 7.*version 1"):
        container.read(tmp_path / "x.bin")


def test_corruption_is_detected(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"NOTMAGIC" + bytes(20))
    with pytest.raises(ContainerError, match="magic"):
        container.read(tmp_path / "bad.bin")
    container.write(tmp_path / "x.bin", "k", {}, {"v": np.ones(4)})
    data = (tmp_path / "x.bin").read_bytes()
    (tmp_path / "short.bin").write_bytes(data[:-8])
    with pytest.raises(ContainerError, match="truncated"):
        container.read(tmp_path / "short.bin")
    (tmp_path / "long.bin").write_bytes(data + b"\0")
    with pytest.raises(ContainerError, match="trailing"):
        container.read(tmp_path / "long.bin")
