"""Layer descriptions, the text model format, and output-shape inference.

A model is a UTF-8 text file of per-layer blocks plus one raw weight blob.
Block grammar (order of keys inside a block is free, `#` starts a comment):

    layer conv1
    kind = conv2d            # conv2d | dense
    kernel = 1 1 128 128     # K_Y K_X K_Z K_NUM
    input = 56 56 128        # I_Y I_X I_Z
    stride = 1 1             # S_Y S_X
    padding = same           # valid | same
    activation = relu        # none | relu | leaky_relu
    weight_offset = 0        # byte offset into the blob
    bias_offset = 16384

Weights are little-endian int8 in (K_Y, K_X, K_Z, K_NUM) order with K_NUM
innermost; biases are little-endian int32, one per output kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("conv2d", "dense")
PADDINGS = ("valid", "same")
ACTIVATIONS = ("none", "relu", "leaky_relu")


class ModelError(Exception):
    """Base class for model-level failures."""


class ModelParseError(ModelError):
    def __init__(self, msg, line=None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


class UnsupportedOpError(ModelError):
    pass


class ModelSizeError(ModelError):
    """Weight blob does not cover a declared tensor."""


class ShapeError(ModelError):
    pass


class EmptyOutputError(ShapeError):
    """Valid padding with a kernel larger than the input."""


@dataclass(eq=False)
class LayerSpec:
    """One conv2d/dense layer. dense is conv2d with K_Y=K_X=I_Y=I_X=1."""

    name: str
    kind: str
    kernel_shape: tuple  # (K_Y, K_X, K_Z, K_NUM)
    input_shape: tuple   # (I_Y, I_X, I_Z)
    stride: tuple = (1, 1)
    padding: str = "valid"
    activation: str = "none"
    weights: np.ndarray = field(default=None, repr=False)  # int8 (KY,KX,KZ,KNUM)
    biases: np.ndarray = field(default=None, repr=False)   # int32 (KNUM,)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise UnsupportedOpError(f"{self.name}: unsupported layer kind {self.kind!r}")
        if self.padding not in PADDINGS:
            raise ModelError(f"{self.name}: bad padding {self.padding!r}")
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"{self.name}: bad activation {self.activation!r}")
        ky, kx, kz, knum = self.kernel_shape
        iy, ix, iz = self.input_shape
        if min(ky, kx, kz, knum, iy, ix, iz) < 1:
            raise ShapeError(f"{self.name}: non-positive dimension")
        if min(self.stride) < 1:
            raise ShapeError(f"{self.name}: non-positive stride")
        if kz != iz:
            raise ShapeError(
                f"{self.name}: kernel depth K_Z={kz} does not match input depth I_Z={iz}")
        if self.kind == "dense" and (ky, kx, iy, ix) != (1, 1, 1, 1):
            raise ShapeError(f"{self.name}: dense layers require 1x1 kernel and 1x1 input")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.int8)
            if self.weights.shape != self.kernel_shape:
                raise ShapeError(f"{self.name}: weight tensor shape {self.weights.shape} "
                                 f"!= kernel {self.kernel_shape}")
        if self.biases is not None:
            self.biases = np.asarray(self.biases, dtype=np.int32)
            if self.biases.shape != (knum,):
                raise ShapeError(f"{self.name}: bias length {self.biases.shape} != {knum}")

    # unrolled kernel-matrix width
    @property
    def k_total(self) -> int:
        ky, kx, kz, _ = self.kernel_shape
        return ky * kx * kz

    def __eq__(self, other):
        if not isinstance(other, LayerSpec):
            return NotImplemented
        return (self.name == other.name and self.kind == other.kind
                and self.kernel_shape == other.kernel_shape
                and self.input_shape == other.input_shape
                and self.stride == other.stride and self.padding == other.padding
                and self.activation == other.activation
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.biases, other.biases))


@dataclass(frozen=True)
class OfmShape:
    o_y: int
    o_x: int
    o_z: int  # == K_NUM

    @property
    def out_vectors(self) -> int:
        """Number of unrolled output vectors (one per spatial position)."""
        return self.o_y * self.o_x


def same_padding(i: int, k: int, s: int, o: int) -> tuple:
    """(pad_before, pad_after) for 'same': total split floor-left/ceil-right."""
    total = max((o - 1) * s + k - i, 0)
    return total // 2, total - total // 2


def infer_ofm_shape(layer: LayerSpec) -> OfmShape:
    ky, kx, kz, knum = layer.kernel_shape
    iy, ix, _ = layer.input_shape
    sy, sx = layer.stride
    if layer.padding == "valid":
        if ky > iy or kx > ix:
            raise EmptyOutputError(
                f"{layer.name}: kernel {ky}x{kx} exceeds input {iy}x{ix} with valid padding")
        oy = (iy - ky) // sy + 1
        ox = (ix - kx) // sx + 1
    else:  # same: output covers every input position
        oy = -(-iy // sy)
        ox = -(-ix // sx)
    return OfmShape(oy, ox, knum)


def input_padding(layer: LayerSpec, ofm: OfmShape) -> tuple:
    """((pad_top, pad_bottom), (pad_left, pad_right)) actually applied."""
    if layer.padding == "valid":
        return (0, 0), (0, 0)
    ky, kx, _, _ = layer.kernel_shape
    iy, ix, _ = layer.input_shape
    return (same_padding(iy, ky, layer.stride[0], ofm.o_y),
            same_padding(ix, kx, layer.stride[1], ofm.o_x))


# ---------------------------------------------------------------- text format

_INT_FIELDS = {"kernel": 4, "input": 3, "stride": 2}


def parse_model(text: str, weight_blob: bytes) -> list:
    """Parse the model text plus weight blob into LayerSpec objects."""
    layers = []
    block = None       # (name, {key: value}, line_of_block_start)
    pending = []

    def finish(block):
        name, kv, start = block
        for req in ("kind", "kernel", "input", "weight_offset", "bias_offset"):
            if req not in kv:
                raise ModelParseError(f"layer {name!r}: missing field {req!r}", start)
        ky, kx, kz, knum = kv["kernel"]
        wlen = ky * kx * kz * knum
        woff = kv["weight_offset"]
        boff = kv["bias_offset"]
        if woff + wlen > len(weight_blob):
            raise ModelSizeError(f"layer {name!r}: weights [{woff}:{woff + wlen}] "
                                 f"exceed blob of {len(weight_blob)} bytes")
        if boff + 4 * knum > len(weight_blob):
            raise ModelSizeError(f"layer {name!r}: biases [{boff}:{boff + 4 * knum}] "
                                 f"exceed blob of {len(weight_blob)} bytes")
        weights = np.frombuffer(weight_blob, dtype=np.int8, count=wlen,
                                offset=woff).reshape(ky, kx, kz, knum)
        biases = np.frombuffer(weight_blob, dtype="<i4", count=knum, offset=boff)
        return LayerSpec(
            name=name, kind=kv["kind"], kernel_shape=(ky, kx, kz, knum),
            input_shape=tuple(kv["input"]), stride=tuple(kv.get("stride", (1, 1))),
            padding=kv.get("padding", "valid"), activation=kv.get("activation", "none"),
            weights=weights.copy(), biases=biases.astype(np.int32))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("layer"):
            parts = line.split()
            if len(parts) != 2:
                raise ModelParseError("expected 'layer <name>'", lineno)
            if block is not None:
                pending.append(block)
            block = (parts[1], {}, lineno)
            continue
        if block is None:
            raise ModelParseError(f"field outside a layer block: {line!r}", lineno)
        if "=" not in line:
            raise ModelParseError(f"expected 'key = value', got {line!r}", lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _INT_FIELDS:
            toks = value.split()
            if len(toks) != _INT_FIELDS[key]:
                raise ModelParseError(
                    f"{key} wants {_INT_FIELDS[key]} integers, got {len(toks)}", lineno)
            try:
                block[1][key] = tuple(int(t) for t in toks)
            except ValueError:
                raise ModelParseError(f"bad integer in {key!r}", lineno) from None
        elif key in ("weight_offset", "bias_offset"):
            try:
                block[1][key] = int(value)
            except ValueError:
                raise ModelParseError(f"bad integer for {key!r}", lineno) from None
        elif key in ("kind", "padding", "activation"):
            block[1][key] = value
        else:
            raise ModelParseError(f"unknown field {key!r}", lineno)
    if block is not None:
        pending.append(block)
    for b in pending:
        layers.append(finish(b))
    return layers


def serialize_model(layers) -> tuple:
    """Inverse of parse_model: returns (text, weight_blob)."""
    lines = []
    blob = bytearray()
    for layer in layers:
        if layer.weights is None or layer.biases is None:
            raise ModelError(f"{layer.name}: cannot serialize without weights/biases")
        woff = len(blob)
        blob += layer.weights.astype(np.int8).tobytes()
        boff = len(blob)
        blob += layer.biases.astype("<i4").tobytes()
        lines += [
            f"layer {layer.name}",
            f"kind = {layer.kind}",
            "kernel = {} {} {} {}".format(*layer.kernel_shape),
            "input = {} {} {}".format(*layer.input_shape),
            "stride = {} {}".format(*layer.stride),
            f"padding = {layer.padding}",
            f"activation = {layer.activation}",
            f"weight_offset = {woff}",
            f"bias_offset = {boff}",
            "",
        ]
    return "\n".join(lines), bytes(blob)
