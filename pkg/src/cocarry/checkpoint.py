"""Versioned policy checkpoints.

Layout: 8-byte magic ``COLACKPT`` | uint32 LE version | uint32 LE header
length | UTF-8 JSON header | raw little-endian float32 arrays concatenated in
header order. The header fully describes the body; loading validates magic,
version and sizes and never silently reinterprets a layout.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"COLACKPT"
VERSION = 1

STAGES = ("wbc", "teacher", "student", "baseline_vanilla", "baseline_explicit")


class CheckpointError(Exception):
    """Raised on malformed checkpoint files; .code is one of
    bad_format | bad_version | truncated | layout_mismatch."""

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class Checkpoint:
    stage: str
    mode: str = "leader"
    seed: int = 0
    train_steps: int = 0
    history_len: int = 25
    hidden: list = field(default_factory=lambda: [128, 128, 128])
    action_dim: int = 12
    extra: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)   # name -> float32 ndarray, ordered

    def __post_init__(self):
        if self.stage not in STAGES:
            raise CheckpointError("layout_mismatch", f"unknown stage {self.stage!r}")
        self.arrays = {k: np.ascontiguousarray(v, dtype=np.float32)
                       for k, v in self.arrays.items()}


def save_checkpoint(ckpt, path):
    header = {
        "stage": ckpt.stage,
        "mode": ckpt.mode,
        "seed": int(ckpt.seed),
        "train_steps": int(ckpt.train_steps),
        "history_len": int(ckpt.history_len),
        "hidden": [int(h) for h in ckpt.hidden],
        "action_dim": int(ckpt.action_dim),
        "extra": ckpt.extra,
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in ckpt.arrays.items()],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for v in ckpt.arrays.values():
            f.write(v.astype("<f4", copy=False).tobytes())
    return path


def load_checkpoint(path):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError("bad_format", "magic mismatch")
    version = struct.unpack("<I", data[8:12])[0]
    if version != VERSION:
        raise CheckpointError("bad_version", f"version {version}, expected {VERSION}")
    hlen = struct.unpack("<I", data[12:16])[0]
    if len(data) < 16 + hlen:
        raise CheckpointError("truncated", "header extends past end of file")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError("bad_format", f"header is not valid JSON: {e}")
    offset = 16 + hlen
    arrays = {}
    for entry in header.get("arrays", []):
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        nbytes = n * 4
        if offset + nbytes > len(data):
            raise CheckpointError("truncated", f"array {entry['name']} extends past end")
        arrays[entry["name"]] = np.frombuffer(
            data[offset:offset + nbytes], dtype="<f4").reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise CheckpointError("layout_mismatch",
                              f"{len(data) - offset} trailing bytes not described by header")
    if header.get("stage") not in STAGES:
        raise CheckpointError("layout_mismatch", f"unknown stage {header.get('stage')!r}")
    return Checkpoint(
        stage=header["stage"], mode=header.get("mode", "leader"),
        seed=header.get("seed", 0), train_steps=header.get("train_steps", 0),
        history_len=header.get("history_len", 25), hidden=header.get("hidden", []),
        action_dim=header.get("action_dim", 12), extra=header.get("extra", {}),
        arrays=arrays)


# ------------------------------------------------- MLP <-> array helpers

def mlp_to_arrays(prefix, net, out):
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        out[f"{prefix}.{i}.W"] = W
        out[f"{prefix}.{i}.b"] = b
    return out


def mlp_from_arrays(prefix, arrays, expect_layers=None):
    from .learn import MlpParams
    weights, biases = [], []
    i = 0
    while f"{prefix}.{i}.W" in arrays:
        weights.append(np.asarray(arrays[f"{prefix}.{i}.W"], dtype=float))
        biases.append(np.asarray(arrays[f"{prefix}.{i}.b"], dtype=float))
        i += 1
    if not weights:
        raise CheckpointError("layout_mismatch", f"no arrays under prefix {prefix!r}")
    if expect_layers is not None and len(weights) != expect_layers:
        raise CheckpointError("layout_mismatch",
                              f"{prefix}: {len(weights)} layers, expected {expect_layers}")
    for a, b in zip(weights[:-1], weights[1:]):
        if b.shape[1] != a.shape[0]:
            raise CheckpointError("layout_mismatch", f"{prefix}: layer dims do not chain")
    return MlpParams(weights=weights, biases=biases)


def norm_to_arrays(prefix, rn, out):
    out[f"{prefix}.mean"] = rn.mean
    out[f"{prefix}.var"] = rn.var
    out[f"{prefix}.count"] = np.array([rn.count])
    return out


def norm_from_arrays(prefix, arrays, frozen=True):
    from .learn import RunningNorm
    try:
        return RunningNorm(mean=np.asarray(arrays[f"{prefix}.mean"], dtype=float),
                           var=np.asarray(arrays[f"{prefix}.var"], dtype=float),
                           count=float(arrays[f"{prefix}.count"][0]), frozen=frozen)
    except KeyError as e:
        raise CheckpointError("layout_mismatch", f"missing normalizer array {e}")
