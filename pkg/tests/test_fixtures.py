import numpy as np

from cimflow import fixtures
from cimflow.model import infer_ofm_shape, parse_model


def test_pointwise_stack_shapes():
    layers = fixtures.mobilenet_pointwise_layers()
    assert [l.name for l in layers] == [f"pw{i}" for i in range(1, 8)]
    for layer in layers:
        assert layer.kernel_shape[:2] == (1, 1)
        assert layer.padding == "same" and layer.stride == (1, 1)
    # spatial sizes follow the backbone: 56 -> 28 -> 14 -> 7
    assert [l.input_shape[0] for l in layers] == [56, 28, 28, 14, 14, 7, 7]
    assert infer_ofm_shape(layers[0]).out_vectors == 3136


def test_resnet_stack_shapes():
    layers = fixtures.resnet18_conv3x3_layers()
    assert len(layers) == 4
    for layer in layers:
        assert layer.kernel_shape[:2] == (3, 3)
        assert layer.kernel_shape[2] == layer.kernel_shape[3]


def test_fixed_seed_reproducible():
    a = fixtures.mobilenet_pointwise_layers(seed=1)
    b = fixtures.mobilenet_pointwise_layers(seed=1)
    c = fixtures.mobilenet_pointwise_layers(seed=2)
    assert a == b
    assert not np.array_equal(a[0].weights, c[0].weights)


def test_random_layers_stay_in_property_envelope():
    rng = np.random.default_rng(123)
    for i in range(100):
        layer = fixtures.random_layer(rng, index=i)
        ky, kx, kz, kn = layer.kernel_shape
        assert ky <= 3 and kx <= 3 and kz <= 16 and kn <= 16
        assert layer.input_shape[0] <= 12 and layer.input_shape[1] <= 12
        infer_ofm_shape(layer)  # never an empty output


def test_write_fixture_files_round_trip(tmp_path):
    paths = fixtures.write_fixture_files(tmp_path, which="resnet18", seed=3)
    with open(paths["model"]) as fh:
        text = fh.read()
    with open(paths["weights"], "rb") as fh:
        blob = fh.read()
    assert parse_model(text, blob) == fixtures.resnet18_conv3x3_layers(seed=3)
    ifm = np.fromfile(paths["ifm:rb2"], dtype=np.int8)
    assert ifm.size == 28 * 28 * 128
