"""Binary checkpoint codec.

Layout (all integers little-endian, all floats little-endian float64)::

    b"EMR1"
    u32 version
    u32 n_nets
    n_nets x { str name, u32 n_layers, n_layers x { u32 in, u32 out, str activation } }
    for every net, for every layer: weight block (in*out, row-major), bias block (out)
    u8 has_optimizer
    [ f64 lr, beta1, beta2, eps, weight_decay, u64 step, u32 n_params,
      n_params x { str name, u32 ndim, ndim x u32, first moment block, second moment block } ]
    str metadata (JSON, sorted keys)

where ``str`` is a u32 byte length followed by UTF-8 bytes.
"""
from dataclasses import dataclass, field
from os import PathLike
from typing import Dict, Optional, Tuple, Union
import io
import json
import struct
import numpy as np

from emoretrieval.exceptions import CheckpointError
from emoretrieval.nn.base import Layer, ProjectionNet
from emoretrieval.nn.optimizer import AdamW

__all__ = [
    "MAGIC",
    "VERSION",
    "Checkpoint",
    "encode_checkpoint",
    "decode_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]

MAGIC = b"EMR1"
VERSION = 1


@dataclass
class Checkpoint:
    nets: Dict[str, ProjectionNet]
    optimizer: Optional[AdamW] = None
    metadata: dict = field(default_factory=dict)


def _write_str(buffer, value: str):
    data = value.encode("utf-8")
    buffer.write(struct.pack("<I", len(data)))
    buffer.write(data)


def _write_block(buffer, array: np.ndarray):
    buffer.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._offset = 0

    def take(self, n: int) -> bytes:
        if self._offset + n > len(self._data):
            raise CheckpointError("Checkpoint is truncated")
        chunk = self._data[self._offset : self._offset + n]
        self._offset += n
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def read_str(self) -> str:
        (length,) = self.unpack("<I")
        return self.take(length).decode("utf-8")

    def read_block(self, shape) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        array = np.frombuffer(self.take(count * 8), dtype="<f8")
        return array.astype(np.float64).reshape(shape)

    @property
    def exhausted(self) -> bool:
        return self._offset == len(self._data)


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    buffer = io.BytesIO()
    buffer.write(MAGIC)
    buffer.write(struct.pack("<II", VERSION, len(checkpoint.nets)))
    for name, net in checkpoint.nets.items():
        _write_str(buffer, name)
        buffer.write(struct.pack("<I", len(net.layers)))
        for in_dim, out_dim, activation in net.layer_spec:
            buffer.write(struct.pack("<II", in_dim, out_dim))
            _write_str(buffer, activation)
    for net in checkpoint.nets.values():
        for layer in net.layers:
            _write_block(buffer, layer.weight)
            _write_block(buffer, layer.bias)

    optimizer = checkpoint.optimizer
    buffer.write(struct.pack("<B", optimizer is not None))
    if optimizer is not None:
        buffer.write(
            struct.pack(
                "<dddddQI",
                optimizer.lr,
                optimizer.beta1,
                optimizer.beta2,
                optimizer.eps,
                optimizer.weight_decay,
                optimizer.step_count,
                len(optimizer.exp_avg),
            )
        )
        for name, m in optimizer.exp_avg.items():
            _write_str(buffer, name)
            buffer.write(struct.pack("<I", m.ndim))
            buffer.write(struct.pack(f"<{m.ndim}I", *m.shape))
            _write_block(buffer, m)
            _write_block(buffer, optimizer.exp_avg_sq[name])

    _write_str(buffer, json.dumps(checkpoint.metadata, sort_keys=True))
    return buffer.getvalue()


def decode_checkpoint(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    if reader.take(4) != MAGIC:
        raise CheckpointError("Not an EMR1 checkpoint (bad magic bytes)")
    version, n_nets = reader.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}")

    specs = []
    for _ in range(n_nets):
        name = reader.read_str()
        (n_layers,) = reader.unpack("<I")
        layer_spec = []
        for _ in range(n_layers):
            in_dim, out_dim = reader.unpack("<II")
            layer_spec.append((in_dim, out_dim, reader.read_str()))
        specs.append((name, layer_spec))

    nets = {}
    for name, layer_spec in specs:
        layers = []
        for in_dim, out_dim, activation in layer_spec:
            weight = reader.read_block((in_dim, out_dim))
            bias = reader.read_block((out_dim,))
            layers.append(Layer(weight, bias, activation))
        try:
            nets[name] = ProjectionNet(layers)
        except ValueError as err:
            raise CheckpointError(f"Invalid network {name}: {err}") from err

    optimizer = None
    (has_optimizer,) = reader.unpack("<B")
    if has_optimizer:
        lr, beta1, beta2, eps, weight_decay, step, n_params = reader.unpack("<dddddQI")
        exp_avg, exp_avg_sq = {}, {}
        for _ in range(n_params):
            name = reader.read_str()
            (ndim,) = reader.unpack("<I")
            shape = reader.unpack(f"<{ndim}I")
            exp_avg[name] = reader.read_block(shape)
            exp_avg_sq[name] = reader.read_block(shape)
        optimizer = AdamW.from_state_dict(
            dict(
                lr=lr,
                beta1=beta1,
                beta2=beta2,
                eps=eps,
                weight_decay=weight_decay,
                step_count=step,
                exp_avg=exp_avg,
                exp_avg_sq=exp_avg_sq,
            )
        )

    metadata = json.loads(reader.read_str())
    if not reader.exhausted:
        raise CheckpointError("Trailing bytes after checkpoint metadata")
    return Checkpoint(nets, optimizer, metadata)


def save_checkpoint(path: Union[str, PathLike], checkpoint: Checkpoint):
    with open(path, "wb") as f:
        f.write(encode_checkpoint(checkpoint))


def load_checkpoint(path: Union[str, PathLike]) -> Checkpoint:
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())
