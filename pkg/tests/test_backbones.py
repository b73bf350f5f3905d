import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fewshot import autograd as ag
from fewshot.autograd import Tensor
from fewshot.autograd.gradcheck import check_grad
from fewshot.backbones import (
    decode_checkpoint,
    embed,
    encode_checkpoint,
    from_descriptors,
    init_model,
    load_checkpoint,
    save_checkpoint,
    to_descriptors,
)
from fewshot.errors import DimensionError, RegistryError, StateError

MLP = {"arch": "mlp-2", "widths": [32, 64]}
CONV = {"arch": "tinyconv-2", "filters": [4, 8]}


def _zero(model):
    for p in model.parameters():
        p.data = np.zeros_like(p.data)


def test_mlp2_parameter_count():
    model = init_model(MLP, (16,), seed=0)
    # 544 for the first block, 2112 for the second
    assert model.num_parameters() == 16 * 32 + 32 + 32 * 64 + 64 == 2656


def test_mlp3_shapes():
    model = init_model({"arch": "mlp-3", "widths": [8, 8, 4]}, (5,))
    assert embed(model, np.ones((3, 5))).shape == (3, 4)
    with pytest.raises(RegistryError):
        init_model({"arch": "mlp-3", "widths": [8, 8]}, (5,))


def test_same_seed_same_parameters():
    a, b = init_model(MLP, (16,), seed=3), init_model(MLP, (16,), seed=3)
    c = init_model(MLP, (16,), seed=4)
    for k in a.params:
        assert a.params[k].data.tobytes() == b.params[k].data.tobytes()
    assert any(not np.array_equal(a.params[k].data, c.params[k].data) for k in a.params)


def test_fan_in_scaled_uniform_bounds():
    model = init_model({"arch": "mlp-2", "widths": [500, 10]}, (200,))
    w = model.params["backbone.l0.weight"].data
    assert np.max(np.abs(w)) <= np.sqrt(6.0 / 200)
    assert np.max(np.abs(w)) > 0.9 * np.sqrt(6.0 / 200)


def test_tinyconv_spatial_output_shape():
    model = init_model({"arch": "tinyconv-2", "filters": [8, 8]}, (1, 8, 8), seed=0)
    out = embed(model, np.random.default_rng(0).standard_normal((3, 1, 8, 8)))
    assert out.shape == (3, 8, 2, 2)
    assert model.output_shape() == (8, 2, 2)


def test_tinyconv_flat_output_pools():
    model = init_model({**CONV, "output": "flat"}, (2, 8, 8))
    assert embed(model, np.ones((2, 2, 8, 8))).shape == (2, 8)


def test_registry_errors():
    with pytest.raises(RegistryError):
        init_model({"arch": "resnet12"}, (16,))
    with pytest.raises(RegistryError):
        init_model({"arch": "mlp-2", "activation": "gelu"}, (16,))
    with pytest.raises(RegistryError):
        init_model({"arch": "mlp-2", "output": "spatial"}, (16,))


def test_input_shape_checked():
    model = init_model(MLP, (16,))
    with pytest.raises(DimensionError):
        embed(model, np.ones((2, 15)))


@pytest.mark.parametrize("cfg, shape", [(MLP, (16,)), (CONV, (2, 8, 8))])
def test_zero_model_gives_zero_embeddings(cfg, shape):
    model = init_model(cfg, shape)
    _zero(model)
    x = np.random.default_rng(1).standard_normal((4, *shape))
    assert np.all(embed(model, x).data == 0.0)


@pytest.mark.parametrize("cfg, shape", [(MLP, (16,)), (CONV, (2, 8, 8))])
def test_batch_of_one_matches_duplicated_batch(cfg, shape):
    model = init_model(cfg, shape, seed=2)
    x = np.random.default_rng(2).standard_normal((1, *shape))
    one = embed(model, x).data
    two = embed(model, np.concatenate([x, x])).data
    np.testing.assert_allclose(two[0], one[0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(two[1], one[0], rtol=0, atol=1e-12)


@given(st.permutations(range(6)))
def test_batch_permutation_equivariance(perm):
    model = init_model(CONV, (2, 8, 8), seed=5)
    x = np.random.default_rng(5).standard_normal((6, 2, 8, 8))
    out = embed(model, x).data
    np.testing.assert_allclose(embed(model, x[list(perm)]).data, out[list(perm)], rtol=0, atol=1e-12)


@pytest.mark.parametrize("cfg, shape", [({**MLP, "activation": "tanh"}, (6,)),
                                        ({**CONV, "activation": "tanh"}, (2, 5, 5))])
def test_backbone_gradients_match_finite_differences(cfg, shape):
    model = init_model(cfg, shape, seed=1)
    names = list(model.params)
    x = np.random.default_rng(1).standard_normal((3, *shape))

    def f(*ps):
        return ag.sum(model.forward(x, dict(zip(names, ps))))

    assert check_grad(f, [model.params[n].data for n in names]) <= 1e-6


@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_descriptor_reshape_is_a_bijection(n, d, h, w):
    x = Tensor(np.random.default_rng(n * 64 + d).standard_normal((n, d, h, w)))
    desc = to_descriptors(x)
    assert desc.shape == (n, d, h * w)
    np.testing.assert_array_equal(from_descriptors(desc, h, w).data, x.data)
    # descriptor j is grid cell (j // w, j % w)
    np.testing.assert_array_equal(desc.data[:, :, -1], x.data[:, :, h - 1, w - 1])


def test_descriptor_errors():
    with pytest.raises(DimensionError):
        to_descriptors(Tensor(np.ones((2, 3))))
    with pytest.raises(DimensionError):
        from_descriptors(Tensor(np.ones((1, 2, 5))), 2, 2)


# -- checkpoints -------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    model = init_model(CONV, (2, 8, 8), seed=9)
    state = {**model.state(), "scalar": np.array(2.5)}
    save_checkpoint(tmp_path / "ck", state)
    back = load_checkpoint(tmp_path / "ck")
    assert list(back) == list(state)
    for k in state:
        assert back[k].shape == state[k].shape
        assert back[k].tobytes() == state[k].tobytes()


def test_checkpoint_encoding_is_deterministic():
    state = init_model(MLP, (16,), seed=1).state()
    assert encode_checkpoint(state) == encode_checkpoint(state)


@pytest.mark.parametrize("mutate", [
    lambda b: b[:-1],
    lambda b: b[:10] + bytes([b[10] ^ 1]) + b[11:],
    lambda b: b"XXXXXXXX" + b[8:],
    lambda b: b"",
])
def test_corrupted_checkpoint_rejected(mutate):
    raw = encode_checkpoint(init_model(MLP, (16,), seed=1).state())
    with pytest.raises(StateError):
        decode_checkpoint(mutate(raw))


def test_missing_checkpoint(tmp_path):
    with pytest.raises(StateError):
        load_checkpoint(tmp_path / "nope")
