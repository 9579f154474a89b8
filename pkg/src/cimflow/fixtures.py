"""Bundled layer stacks and random-input helpers.

Weights/biases are generated from a fixed seed so every fixture is fully
reproducible without shipping multi-megabyte blobs.
"""

from __future__ import annotations

import os

import numpy as np

from .model import LayerSpec, serialize_model

DEFAULT_SEED = 20240811

# (name, kernel (KY KX KZ KNUM), input (IY IX IZ)) — the pointwise stack used
# by the reference count table.
MOBILENET_POINTWISE = (
    ("pw1", (1, 1, 128, 128), (56, 56, 128)),
    ("pw2", (1, 1, 128, 256), (28, 28, 128)),
    ("pw3", (1, 1, 256, 256), (28, 28, 256)),
    ("pw4", (1, 1, 256, 512), (14, 14, 256)),
    ("pw5", (1, 1, 512, 512), (14, 14, 512)),
    ("pw6", (1, 1, 512, 1024), (7, 7, 512)),
    ("pw7", (1, 1, 1024, 1024), (7, 7, 1024)),
)

# One 3x3 body conv per residual stage, stride 1 / same padding.
RESNET18_CONV3X3 = (
    ("rb1", (3, 3, 64, 64), (56, 56, 64)),
    ("rb2", (3, 3, 128, 128), (28, 28, 128)),
    ("rb3", (3, 3, 256, 256), (14, 14, 256)),
    ("rb4", (3, 3, 512, 512), (7, 7, 512)),
)


def make_layer(name, kernel_shape, input_shape, rng, *, kind="conv2d",
               stride=(1, 1), padding="same", activation="relu") -> LayerSpec:
    k_y, k_x, k_z, k_num = kernel_shape
    weights = rng.integers(-128, 128, size=(k_y, k_x, k_z, k_num), dtype=np.int64)
    biases = rng.integers(-(1 << 15), 1 << 15, size=k_num, dtype=np.int64)
    return LayerSpec(name=name, kind=kind, kernel_shape=tuple(kernel_shape),
                     input_shape=tuple(input_shape), stride=tuple(stride),
                     padding=padding, activation=activation,
                     weights=weights.astype(np.int8),
                     biases=biases.astype(np.int32))


def _stack(shapes, seed, **kw) -> list:
    rng = np.random.default_rng(seed)
    return [make_layer(name, kern, inp, rng, **kw) for name, kern, inp in shapes]


def mobilenet_pointwise_layers(seed: int = DEFAULT_SEED) -> list:
    return _stack(MOBILENET_POINTWISE, seed)


def resnet18_conv3x3_layers(seed: int = DEFAULT_SEED) -> list:
    return _stack(RESNET18_CONV3X3, seed)


def random_ifm(layer: LayerSpec, rng) -> np.ndarray:
    return rng.integers(-128, 128, size=layer.input_shape, dtype=np.int64).astype(np.int8)


def random_layer(rng, *, index: int = 0, max_spatial: int = 12,
                 max_depth: int = 16, max_kernels: int = 16) -> LayerSpec:
    """A small random layer exercising every kind/padding/stride/activation
    combination. Sized so a full compile+simulate stays fast."""
    kind = rng.choice(["conv2d", "conv2d", "conv2d", "dense"])
    activation = rng.choice(["none", "relu", "leaky_relu"])
    k_num = int(rng.integers(1, max_kernels + 1))
    if kind == "dense":
        k_z = int(rng.integers(1, max_depth + 1))
        return make_layer(f"rnd{index}", (1, 1, k_z, k_num), (1, 1, k_z), rng,
                          kind="dense", padding="valid", activation=activation)
    k_y = int(rng.integers(1, 4))
    k_x = int(rng.integers(1, 4))
    k_z = int(rng.integers(1, max_depth + 1))
    padding = rng.choice(["same", "valid"])
    stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
    if padding == "valid":
        i_y = int(rng.integers(k_y, max_spatial + 1))
        i_x = int(rng.integers(k_x, max_spatial + 1))
    else:
        i_y = int(rng.integers(1, max_spatial + 1))
        i_x = int(rng.integers(1, max_spatial + 1))
    return make_layer(f"rnd{index}", (k_y, k_x, k_z, k_num), (i_y, i_x, k_z),
                      rng, kind="conv2d", stride=stride, padding=padding,
                      activation=activation)


def write_fixture_files(dirpath, which: str = "mobilenet",
                        seed: int = DEFAULT_SEED) -> dict:
    """Materialise a stack as model.txt + weights.bin + per-layer .ifm files.
    Returns {role: path}."""
    layers = (mobilenet_pointwise_layers(seed) if which == "mobilenet"
              else resnet18_conv3x3_layers(seed))
    os.makedirs(dirpath, exist_ok=True)
    text, blob = serialize_model(layers)
    paths = {}
    paths["model"] = os.path.join(dirpath, f"{which}.model")
    paths["weights"] = os.path.join(dirpath, f"{which}.weights")
    with open(paths["model"], "w") as fh:
        fh.write(text)
    with open(paths["weights"], "wb") as fh:
        fh.write(blob)
    rng = np.random.default_rng(seed)
    for layer in layers:
        p = os.path.join(dirpath, f"{layer.name}.ifm")
        random_ifm(layer, rng).tofile(p)
        paths[f"ifm:{layer.name}"] = p
    return paths
