import numpy as np
import pytest

from cimflow.model import (EmptyOutputError, LayerSpec, ModelParseError,
                           ModelSizeError, ShapeError, UnsupportedOpError,
                           infer_ofm_shape, input_padding, parse_model,
                           same_padding, serialize_model)


def make_layer(name="l0", kernel=(2, 2, 3, 4), inp=(5, 5, 3), **kw):
    rng = np.random.default_rng(0)
    ky, kx, kz, kn = kernel
    kw.setdefault("weights", rng.integers(-128, 128, size=kernel).astype(np.int8))
    kw.setdefault("biases", rng.integers(-100, 100, size=kn).astype(np.int32))
    return LayerSpec(name=name, kind=kw.pop("kind", "conv2d"),
                     kernel_shape=kernel, input_shape=inp, **kw)


def test_round_trip():
    layers = [
        make_layer("a", (3, 3, 8, 16), (10, 10, 8), stride=(2, 1),
                   padding="same", activation="leaky_relu"),
        make_layer("b", (1, 1, 32, 8), (7, 7, 32)),
        make_layer("fc", (1, 1, 64, 10), (1, 1, 64), kind="dense"),
    ]
    text, blob = serialize_model(layers)
    back = parse_model(text, blob)
    assert back == layers


def test_parse_comments_and_order():
    layer = make_layer()
    text, blob = serialize_model([layer])
    # shuffle lines inside the block, sprinkle comments
    lines = text.splitlines()
    head, fields = lines[0], sorted(l for l in lines[1:] if l)
    noisy = [head + "  # trailing words are not allowed after the name"]
    # ^ comment goes through the stripper first, so the header stays legal
    noisy += ["# full-line comment", ""] + fields
    assert parse_model("\n".join(noisy), blob) == [layer]


@pytest.mark.parametrize("bad,lineno", [
    ("kernel = 1 1 1", 1),            # wrong arity
    ("layer a b", 1),
    ("kind = conv2d", 1),             # field before any block
    ("layer a\nkernel = x 1 1 1", 2),
    ("layer a\nwhat = 3", 2),
])
def test_parse_errors_carry_line_numbers(bad, lineno):
    with pytest.raises(ModelParseError) as exc:
        parse_model(bad, b"")
    assert exc.value.line == lineno


def test_missing_field_reported():
    with pytest.raises(ModelParseError, match="missing field 'kernel'"):
        parse_model("layer a\nkind = conv2d\ninput = 1 1 1\n"
                    "weight_offset = 0\nbias_offset = 0", b"\0" * 64)


def test_blob_bounds_checked():
    layer = make_layer()
    text, blob = serialize_model([layer])
    with pytest.raises(ModelSizeError):
        parse_model(text, blob[:-1])


def test_validation():
    with pytest.raises(UnsupportedOpError):
        make_layer(kind="pool")
    with pytest.raises(ShapeError):  # kernel depth vs input depth
        make_layer(kernel=(1, 1, 4, 4), inp=(5, 5, 3),
                   weights=None, biases=None)
    with pytest.raises(ShapeError):  # dense wants 1x1 spatial
        make_layer(kind="dense", weights=None, biases=None)
    with pytest.raises(ShapeError):
        make_layer(stride=(0, 1), weights=None, biases=None)


# ---------------------------------------------------------------- shapes

def test_valid_output_shape():
    layer = make_layer(kernel=(3, 3, 3, 4), inp=(10, 8, 3), stride=(2, 3))
    ofm = infer_ofm_shape(layer)
    assert (ofm.o_y, ofm.o_x, ofm.o_z) == (4, 2, 4)
    assert ofm.out_vectors == 8
    assert input_padding(layer, ofm) == ((0, 0), (0, 0))


def test_valid_kernel_too_big():
    layer = make_layer(kernel=(6, 6, 3, 4), inp=(5, 8, 3))
    with pytest.raises(EmptyOutputError):
        infer_ofm_shape(layer)


def test_same_output_covers_input():
    # O = ceil(I / s) regardless of kernel size
    layer = make_layer(kernel=(3, 3, 3, 4), inp=(7, 7, 3), stride=(2, 2),
                       padding="same")
    ofm = infer_ofm_shape(layer)
    assert (ofm.o_y, ofm.o_x) == (4, 4)
    layer = make_layer(kernel=(1, 1, 3, 8), inp=(56, 56, 3), padding="same")
    assert infer_ofm_shape(layer).out_vectors == 3136


def test_same_padding_split():
    # total = (O-1)*s + K - I, smaller half before
    assert same_padding(5, 3, 1, 5) == (1, 1)
    assert same_padding(3, 2, 2, 2) == (0, 1)    # odd total: extra goes after
    assert same_padding(4, 1, 1, 4) == (0, 0)    # 1x1 never pads
    assert same_padding(2, 3, 1, 2) == (1, 1)


def test_asymmetric_padding_applied():
    layer = make_layer(kernel=(2, 2, 3, 4), inp=(3, 3, 3), stride=(2, 2),
                       padding="same")
    ofm = infer_ofm_shape(layer)
    assert (ofm.o_y, ofm.o_x) == (2, 2)
    assert input_padding(layer, ofm) == ((0, 1), (0, 1))
