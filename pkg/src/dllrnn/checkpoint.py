"""Binary checkpoint format for parameters and optimizer state.

Layout, all integers little-endian:

    magic            8 bytes  b"DLLRNNCK"
    version          u32      currently 1
    config           7 x u32  channels, hidden, spatial, blocks, l_in, l_out, hop
    step             u64      training steps completed
    n_records        u32
    record           [name_len u16][name utf-8][rank u8][extent u32 x rank]
                     [float32-LE payload]
    opt_flag         u8       1 when optimizer state follows
    opt_step         u64      (flag only)
    n_opt_records    u32      records named "<param>.m", ".v", ".vmax"

Loading validates the magic, version, and that the parameter payload's total
scalar count matches what the config says the model should have, so a
truncated or mismatched file fails loudly instead of poisoning a run.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .framing import FrameSpec
from .model import ModelConfig, count_params

MAGIC = b"DLLRNNCK"
VERSION = 1


def _pack_record(name: str, arr) -> bytes:
    # ascontiguousarray would promote rank-0 arrays to rank 1 and break the
    # roundtrip for scalar parameters (the PReLU slopes)
    payload = np.asarray(arr, dtype="<f4")
    if payload.ndim:
        payload = np.ascontiguousarray(payload)
    encoded = name.encode("utf-8")
    head = struct.pack("<H", len(encoded)) + encoded
    head += struct.pack("<B", payload.ndim)
    head += struct.pack(f"<{payload.ndim}I", *payload.shape)
    return head + payload.tobytes()


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise DataError(f"{self.path}: truncated at byte {self.pos} (wanted {n} more)")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_record(r: _Reader):
    (name_len,) = r.unpack("<H")
    name = r.take(name_len).decode("utf-8")
    (rank,) = r.unpack("<B")
    shape = r.unpack(f"<{rank}I") if rank else ()
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
    return name, arr.astype(np.float32)


@dataclass
class CheckpointData:
    config: ModelConfig
    step: int
    arrays: dict
    opt_step: int = 0
    opt_arrays: dict = None


def save_checkpoint(path, config: ModelConfig, store, step: int, opt_state=None):
    """Write params (and optionally AMSGrad moments) for later resumption."""
    parts = [MAGIC, struct.pack("<I", VERSION)]
    parts.append(struct.pack(
        "<7I", config.channels, config.hidden, config.spatial, config.blocks,
        config.frame.l_in, config.frame.l_out, config.frame.hop,
    ))
    parts.append(struct.pack("<Q", step))
    items = list(store.items())
    parts.append(struct.pack("<I", len(items)))
    for name, tensor in items:
        parts.append(_pack_record(name, tensor.data))
    if opt_state is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<B", 1))
        parts.append(struct.pack("<Q", opt_state.step))
        records = []
        for name, _ in items:
            records.append((f"{name}.m", opt_state.m[name]))
            records.append((f"{name}.v", opt_state.v[name]))
            records.append((f"{name}.vmax", opt_state.v_max[name]))
        parts.append(struct.pack("<I", len(records)))
        for rec_name, arr in records:
            parts.append(_pack_record(rec_name, arr))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.take(len(MAGIC)) != MAGIC:
        raise DataError(f"{path}: bad magic at byte 0, not a checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    c, f, s, b, l_in, l_out, hop = r.unpack("<7I")
    config = ModelConfig(channels=c, hidden=f, spatial=s, blocks=b,
                         frame=FrameSpec(l_in=l_in, l_out=l_out, hop=hop))
    (step,) = r.unpack("<Q")
    (n_records,) = r.unpack("<I")
    arrays = {}
    for _ in range(n_records):
        name, arr = _read_record(r)
        if name in arrays:
            raise DataError(f"{path}: duplicate parameter record '{name}'")
        arrays[name] = arr
    total = sum(a.size for a in arrays.values())
    expected = count_params(config)
    if total != expected:
        raise DataError(
            f"{path}: parameter payload holds {total} scalars, "
            f"config {config.name} requires {expected}"
        )
    (opt_flag,) = r.unpack("<B")
    opt_step, opt_arrays = 0, None
    if opt_flag:
        (opt_step,) = r.unpack("<Q")
        (n_opt,) = r.unpack("<I")
        opt_arrays = {}
        for _ in range(n_opt):
            name, arr = _read_record(r)
            opt_arrays[name] = arr
    return CheckpointData(config=config, step=step, arrays=arrays,
                          opt_step=opt_step, opt_arrays=opt_arrays)
