"""Named parameter store and the single-file checkpoint format.

Checkpoint layout (all integers little endian):

    bytes 0..7    magic ``b"SCTNCKP1"``
    bytes 8..15   uint64 length of the JSON header
    header        UTF-8 JSON: {"version": 1, "meta": {...},
                   "tensors": [{"name", "kind", "dtype", "shape",
                                "offset", "nbytes"}, ...]}
    payload       raw little-endian tensor bytes at the stated offsets

The format is seekable, language neutral, and roundtrips bitwise.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from typing import Optional

import numpy as np

from ..errors import CheckpointError
from .modules import Module, Parameter

MAGIC = b"SCTNCKP1"
VERSION = 1


class ParamStore:
    """Ordered name -> tensor mapping for one model: parameters (with
    gradient slots) plus persistent non-trainable buffers."""

    def __init__(self):
        self.params: "OrderedDict[str, Parameter]" = OrderedDict()
        self.buffers: "OrderedDict[str, np.ndarray]" = OrderedDict()

    @classmethod
    def from_module(cls, module: Module) -> "ParamStore":
        store = cls()
        for name, p in module.named_parameters():
            if name in store.params:
                raise CheckpointError(f"duplicate parameter name {name}")
            store.params[name] = p
        for name, b in module.named_buffers():
            store.buffers[name] = b
        return store

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None

    def ensure_grads(self) -> None:
        """Give unreached parameters a zero gradient after backward."""
        for p in self.params.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)

    def count_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def items(self):
        yield from self.params.items()

    def save(self, path, meta: Optional[dict] = None) -> None:
        records = []
        payload = bytearray()
        for kind, coll in (("param", self.params), ("buffer", self.buffers)):
            for name, t in coll.items():
                arr = t.data if isinstance(t, Parameter) else t
                le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
                raw = le.tobytes(order="C")
                records.append({
                    "name": name, "kind": kind,
                    "dtype": arr.dtype.str.lstrip("=<>|"),
                    "shape": list(arr.shape),
                    "offset": len(payload), "nbytes": len(raw),
                })
                payload.extend(raw)
        header = json.dumps({"version": VERSION, "meta": meta or {},
                             "tensors": records}).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(len(header).to_bytes(8, "little"))
            fh.write(header)
            fh.write(bytes(payload))


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint file into {name: array} plus its meta dict."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    hlen = int.from_bytes(blob[8:16], "little")
    if len(blob) < 16 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    if header.get("version") != VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {header.get('version')} "
            f"not supported (expected {VERSION})")
    payload = blob[16 + hlen:]
    tensors: dict[str, np.ndarray] = {}
    for rec in header["tensors"]:
        end = rec["offset"] + rec["nbytes"]
        if end > len(payload):
            raise CheckpointError(
                f"{path}: truncated payload (tensor {rec['name']})")
        raw = payload[rec["offset"]:end]
        arr = np.frombuffer(raw, dtype=np.dtype("<" + rec["dtype"]))
        tensors[rec["name"]] = arr.reshape(rec["shape"]).astype(
            rec["dtype"], copy=True)
    return tensors, header.get("meta", {})


def load_into(store: ParamStore, path) -> dict:
    """Restore every named tensor bitwise; all-or-nothing."""
    tensors, meta = read_checkpoint(path)
    expected = set(store.params) | set(store.buffers)
    got = set(tensors)
    if expected != got:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise CheckpointError(
            f"{path}: checkpoint incompatible with model; "
            f"missing={missing} extra={extra}")
    for name, p in store.params.items():
        arr = tensors[name]
        if arr.shape != p.data.shape or arr.dtype != p.data.dtype:
            raise CheckpointError(
                f"{path}: tensor {name} has shape {arr.shape}/{arr.dtype}, "
                f"model expects {p.data.shape}/{p.data.dtype}")
    for name, b in store.buffers.items():
        arr = tensors[name]
        if arr.shape != b.shape or arr.dtype != b.dtype:
            raise CheckpointError(
                f"{path}: buffer {name} has shape {arr.shape}/{arr.dtype}, "
                f"model expects {b.shape}/{b.dtype}")
    for name, p in store.params.items():
        p.data = tensors[name]
        p.grad = None
    for name, b in store.buffers.items():
        b[...] = tensors[name]
    return meta
