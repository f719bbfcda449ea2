"""Byte-level helpers for inspecting exported containers.

Deliberately parses the file format by hand rather than importing the
core package: these tests pin the bytes the exporter promises to write.
"""

import json
import pathlib
import zlib

import numpy as np


def parse_container(path):
    """(version, header dict, payload bytes) from a container file."""
    blob = pathlib.Path(path).read_bytes()
    assert blob[:4] == b"SPLC", "bad magic"
    version = int.from_bytes(blob[4:8], "little")
    hlen = int.from_bytes(blob[8:16], "little")
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    payload = blob[16 + hlen :]
    assert len(payload) == header["payload_length"]
    assert zlib.crc32(payload) & 0xFFFFFFFF == header["payload_crc32"]
    return version, header, payload


def tensor_of(ref: dict, payload: bytes) -> np.ndarray:
    raw = payload[ref["offset"] : ref["offset"] + ref["length"]]
    return np.frombuffer(raw, dtype="<f8").reshape(ref["shape"])
