"""Embedding backbones and the parameter checkpoint format.

Registered architectures:

``mlp-2`` / ``mlp-3``
    2 or 3 affine+activation blocks on the flattened input; flat output.
``tinyconv-2``
    two conv blocks (3x3, stride 2, padding 1) on a ``(c, H, W)`` input;
    spatial ``(f, H/4, W/4)`` output, or its global average when
    ``output = "flat"``.

Checkpoint layout (version 1, all integers little-endian)::

    magic    8 bytes  b"FSCKPT\\x00\\x01"
    version  u32      1
    count    u32      number of records
    record   name_len u32, name (utf-8), rank u32, extents u64 x rank,
             float64 x prod(extents)
    crc32    u32      over every preceding byte
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import DimensionError, RegistryError, StateError

ARCHITECTURES = ("mlp-2", "mlp-3", "tinyconv-2")
ACTIVATIONS = {"relu": ag.relu, "tanh": ag.tanh}

CKPT_MAGIC = b"FSCKPT\x00\x01"
CKPT_VERSION = 1


class EmbeddingModel:
    """A small feed-forward embedding ``f_theta`` with functional parameters.

    ``forward`` accepts an explicit parameter dict so adapted copies (MAML)
    can be evaluated without touching ``self.params``.
    """

    def __init__(self, arch, input_shape, blocks, params, activation="relu",
                 final_activation=True, output="flat"):
        self.arch = arch
        self.input_shape = tuple(input_shape)
        self.blocks = blocks
        self.params = params
        self.activation = activation
        self.final_activation = final_activation
        self.output = output

    @property
    def output_mode(self) -> str:
        return self.output

    def parameters(self) -> list:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def output_shape(self) -> tuple:
        if self.arch.startswith("mlp"):
            return (self.blocks[-1]["out"],)
        h, w = self.input_shape[1:]
        for _ in self.blocks:
            h, w = (h + 1) // 2, (w + 1) // 2
        f = self.blocks[-1]["out"]
        return (f,) if self.output == "flat" else (f, h, w)

    def forward(self, x, params=None) -> Tensor:
        params = self.params if params is None else params
        x = x if isinstance(x, Tensor) else Tensor._wrap(np.asarray(x, dtype=np.float64))
        if tuple(x.shape[1:]) != self.input_shape:
            raise DimensionError(
                f"{self.arch} expects samples of shape {self.input_shape}, got {tuple(x.shape[1:])}"
            )
        act = ACTIVATIONS[self.activation]
        last = len(self.blocks) - 1
        if self.arch.startswith("mlp"):
            h = ag.reshape(x, (x.shape[0], -1))
            for i, blk in enumerate(self.blocks):
                h = ag.linear(h, params[blk["weight"]], params[blk["bias"]])
                if i < last or self.final_activation:
                    h = act(h)
            return h
        h = x
        for i, blk in enumerate(self.blocks):
            h = ag.conv2d(h, params[blk["weight"]], None, stride=2, padding=1)
            h = ag.add(h, ag.reshape(params[blk["bias"]], (1, -1, 1, 1)))
            if i < last or self.final_activation:
                h = act(h)
        if self.output == "flat":
            h = ag.mean(h, axis=(2, 3))
        return h

    __call__ = forward

    def state(self) -> dict:
        return {k: v.data.copy() for k, v in self.params.items()}


def embed(model: EmbeddingModel, batch, params=None) -> Tensor:
    return model.forward(batch, params)


def to_descriptors(spatial: Tensor) -> Tensor:
    """(n, d, h, w) -> (n, d, h*w): each image as a d x n_desc descriptor matrix."""
    if spatial.ndim != 4:
        raise DimensionError(f"expected (n, d, h, w), got {spatial.shape}")
    n, d, h, w = spatial.shape
    return ag.reshape(spatial, (n, d, h * w))


def from_descriptors(desc: Tensor, h: int, w: int) -> Tensor:
    n, d, m = desc.shape
    if m != h * w:
        raise DimensionError(f"{m} descriptors cannot form a {h}x{w} grid")
    return ag.reshape(desc, (n, d, h, w))


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape)


def init_model(arch_config: dict, input_shape, seed: int = 0) -> EmbeddingModel:
    """Build a registered architecture with fan-in scaled uniform initialisation."""
    arch = arch_config.get("arch")
    if arch not in ARCHITECTURES:
        raise RegistryError(f"unknown architecture {arch!r}; registered: {', '.join(ARCHITECTURES)}",
                            key="backbone.arch")
    activation = arch_config.get("activation", "relu")
    if activation not in ACTIVATIONS:
        raise RegistryError(f"unknown activation {activation!r}", key="backbone.activation")
    output = arch_config.get("output", "flat" if arch.startswith("mlp") else "spatial")
    if output not in ("flat", "spatial") or (arch.startswith("mlp") and output == "spatial"):
        raise RegistryError(f"{arch} cannot produce {output!r} output", key="backbone.output")
    gain = 6.0 if activation == "relu" else 3.0
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(7,)))
    input_shape = tuple(int(s) for s in input_shape)
    params, blocks = {}, []

    if arch.startswith("mlp"):
        widths = list(arch_config.get("widths", [64, 64]))
        depth = int(arch[-1])
        if len(widths) != depth:
            raise RegistryError(f"{arch} needs {depth} widths, got {widths}", key="backbone.widths")
        fan_in = int(np.prod(input_shape))
        for i, width in enumerate(widths):
            wname, bname = f"backbone.l{i}.weight", f"backbone.l{i}.bias"
            params[wname] = Tensor(_uniform(rng, np.sqrt(gain / fan_in), (fan_in, width)),
                                   requires_grad=True, name=wname)
            params[bname] = Tensor(_uniform(rng, 1.0 / np.sqrt(fan_in), (width,)),
                                   requires_grad=True, name=bname)
            blocks.append({"weight": wname, "bias": bname, "in": fan_in, "out": width})
            fan_in = width
    else:
        if len(input_shape) != 3:
            raise DimensionError(f"tinyconv-2 needs (c, H, W) inputs, got {input_shape}")
        filters = list(arch_config.get("filters", [16, 16]))
        if len(filters) != 2:
            raise RegistryError(f"tinyconv-2 needs 2 filter counts, got {filters}",
                                key="backbone.filters")
        channels = input_shape[0]
        for i, f in enumerate(filters):
            fan_in = channels * 9
            wname, bname = f"backbone.c{i}.weight", f"backbone.c{i}.bias"
            params[wname] = Tensor(_uniform(rng, np.sqrt(gain / fan_in), (f, channels, 3, 3)),
                                   requires_grad=True, name=wname)
            params[bname] = Tensor(_uniform(rng, 1.0 / np.sqrt(fan_in), (f,)),
                                   requires_grad=True, name=bname)
            blocks.append({"weight": wname, "bias": bname, "in": channels, "out": f})
            channels = f

    return EmbeddingModel(arch, input_shape, blocks, params, activation,
                          bool(arch_config.get("final_activation", True)), output)


# -- checkpoints --------------------------------------------------------------

def encode_checkpoint(params: dict) -> bytes:
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(params))]
    for name, value in params.items():
        arr = np.asarray(value.data if isinstance(value, Tensor) else value, dtype="<f8", order="C")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack(f"<I{arr.ndim}Q", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(raw: bytes) -> dict:
    if len(raw) < len(CKPT_MAGIC) + 12 or raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise StateError("not a checkpoint (bad magic)")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise StateError("checkpoint checksum mismatch (corrupted file)")
    pos = len(CKPT_MAGIC)
    version, count = struct.unpack_from("<II", body, pos)
    if version != CKPT_VERSION:
        raise StateError(f"unsupported checkpoint version {version}")
    pos += 8
    out = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", body, pos)
            pos += 4
            name = body[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", body, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", body, pos)
            pos += 8 * rank
            n = int(np.prod(shape)) if rank else 1
            out[name] = np.frombuffer(body, dtype="<f8", count=n, offset=pos).reshape(shape).copy()
            pos += 8 * n
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise StateError(f"malformed checkpoint: {exc}") from None
    if pos != len(body):
        raise StateError("trailing bytes in checkpoint")
    return out


def save_checkpoint(path, params: dict) -> None:
    """Atomically write ``params`` (name -> array or Tensor)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(params))
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise StateError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
