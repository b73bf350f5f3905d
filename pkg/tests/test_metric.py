import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fewshot import autograd as ag
from fewshot.autograd import Tensor
from fewshot.backbones import init_model
from fewshot.data import SyntheticSpec, episode_rng, generate_synthetic, sample_episode
from fewshot.errors import CoverageError, MethodConfigError, ParameterError
from fewshot.methods.base import accuracy
from fewshot.methods.metric import (
    DN4,
    ProtoNet,
    compute_prototypes,
    dn4_i2c,
    dn4_scores,
    metric_episode_loss,
    proto_posterior,
)
from fewshot.optim import SGD

from gradient_suite import METHOD_LOSSES, _episode, run_case
from oracles import i2c_bruteforce, prototypes_loop, softmax_rows, sqdist_loops

vec = st.floats(-10, 10, allow_nan=False)


# -- prototypes ---------------------------------------------------------------------

def test_one_shot_prototype_is_the_support_embedding():
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    np.testing.assert_array_equal(compute_prototypes(Tensor(x), [0, 1]).prototypes.data, x)


def test_mean_of_two_points():
    p = compute_prototypes(Tensor([[0.0, 0.0], [2.0, 2.0]]), [0, 0])
    np.testing.assert_array_equal(p.prototypes.data, [[1.0, 1.0]])


def test_prototypes_match_loop_oracle():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((15, 7))
    y = np.repeat(np.arange(3), 5)
    rng.shuffle(y)
    got = compute_prototypes(Tensor(x), y, 3).prototypes.data
    np.testing.assert_allclose(got, prototypes_loop(x, y, 3), rtol=0, atol=1e-12)


@given(st.permutations(range(4)))
def test_prototypes_permutation_invariant_within_class(perm):
    x = np.random.default_rng(1).standard_normal((8, 3))
    y = np.repeat([0, 1], 4)
    base = compute_prototypes(Tensor(x), y).prototypes.data
    x2 = x.copy()
    x2[:4] = x[list(perm)]
    np.testing.assert_allclose(compute_prototypes(Tensor(x2), y).prototypes.data, base, atol=1e-14)


@pytest.mark.parametrize("labels", [[0, 0, 1], [0, 2, 2, 0], [1, 1]])
def test_unbalanced_or_missing_support(labels):
    x = Tensor(np.ones((len(labels), 2)))
    with pytest.raises(CoverageError):
        compute_prototypes(x, labels, 3 if 2 in labels else 2)


# -- posterior ------------------------------------------------------------------------

def test_equidistant_query_is_uniform():
    protos = compute_prototypes(Tensor(np.eye(4)), [0, 1, 2, 3])
    post = proto_posterior(Tensor(np.full((1, 4), 0.25)), protos).data
    np.testing.assert_allclose(post, 0.25, atol=1e-15)


def test_far_prototype_posterior():
    protos = compute_prototypes(Tensor([[0.0, 0.0], [10.0, 0.0]]), [0, 1])
    post = proto_posterior(Tensor([[0.0, 0.0]]), protos).data
    assert post[0, 0] == pytest.approx(1.0 / (1.0 + math.exp(-100.0)), rel=1e-15)
    assert post[0, 1] == pytest.approx(math.exp(-100.0), rel=1e-10)


def test_posterior_matches_naive_softmax():
    rng = np.random.default_rng(2)
    s, q = rng.standard_normal((6, 4)), rng.standard_normal((5, 4))
    y = np.repeat(np.arange(3), 2)
    protos = compute_prototypes(Tensor(s), y)
    oracle = softmax_rows(-sqdist_loops(q, prototypes_loop(s, y, 3)))
    np.testing.assert_allclose(proto_posterior(Tensor(q), protos).data, oracle, rtol=0, atol=1e-12)


@given(st.integers(0, 2**31), st.sampled_from(["sqeuclidean", "cosine"]), st.floats(0.01, 30))
def test_posterior_rows_sum_to_one(seed, distance, scale):
    rng = np.random.default_rng(seed)
    protos = compute_prototypes(Tensor(scale * rng.standard_normal((4, 5))), [0, 1, 2, 3],
                                distance=distance, temperature=0.1)
    post = proto_posterior(Tensor(scale * rng.standard_normal((3, 5))), protos).data
    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)


# -- image-to-class ------------------------------------------------------------------------

def test_self_similarity_is_descriptor_count():
    q = np.random.default_rng(3).standard_normal((4, 9))
    assert dn4_i2c(q, q, 1).item() == pytest.approx(9.0, abs=1e-12)


def test_orthogonal_descriptors_score_zero():
    q = np.eye(6)[:, :3]
    s = np.eye(6)[:, 3:]
    assert dn4_i2c(q, s, 2).item() == 0.0


def test_i2c_matches_sort_oracle():
    rng = np.random.default_rng(4)
    q, s = rng.standard_normal((4, 9)), rng.standard_normal((4, 18))  # d=4, n=9, K=2
    assert dn4_i2c(q, s, 3).item() == pytest.approx(i2c_bruteforce(q, s, 3), abs=1e-10)


@given(st.integers(0, 2**31), st.permutations(range(8)), st.permutations(range(5)))
def test_i2c_permutation_invariance(seed, sperm, qperm):
    rng = np.random.default_rng(seed)
    q, s = rng.standard_normal((3, 5)), rng.standard_normal((3, 8))
    base = dn4_i2c(q, s, 3).item()
    assert dn4_i2c(q[:, list(qperm)], s[:, list(sperm)], 3).item() == pytest.approx(base, abs=1e-12)


@given(st.integers(0, 2**31))
def test_i2c_monotone_in_k_for_non_negative_similarities(seed):
    rng = np.random.default_rng(seed)
    q, s = np.abs(rng.standard_normal((3, 4))), np.abs(rng.standard_normal((3, 6)))
    vals = [dn4_i2c(q, s, k).item() for k in range(1, 7)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_i2c_can_drop_with_k_when_cosines_are_negative():
    q = np.array([[1.0], [0.0]])
    s = np.array([[1.0, -1.0], [0.0, 0.0]])
    assert dn4_i2c(q, s, 1).item() == 1.0
    assert dn4_i2c(q, s, 2).item() == 0.0


@pytest.mark.parametrize("k", [0, 19])
def test_i2c_k_out_of_range(k):
    with pytest.raises(ParameterError):
        dn4_i2c(np.ones((4, 9)), np.ones((4, 18)), k)


@pytest.mark.parametrize("normalization", ["descriptor", "frobenius"])
def test_batched_scores_equal_pairwise_i2c(normalization):
    rng = np.random.default_rng(5)
    way, shot, M, d, n = 3, 2, 4, 5, 6
    support = rng.standard_normal((way * shot, d, n))
    labels = np.tile(np.arange(way), shot)  # interleaved on purpose
    query = rng.standard_normal((M, d, n))
    got = dn4_scores(Tensor(query), Tensor(support), labels, way, 3, normalization).data
    for i in range(M):
        for c in range(way):
            pool = np.concatenate([support[j] for j in np.flatnonzero(labels == c)], axis=1)
            want = dn4_i2c(query[i], pool, 3, normalization).item()
            assert got[i, c] == pytest.approx(want, abs=1e-12)


def test_frobenius_variant_is_literal():
    rng = np.random.default_rng(6)
    q, s = rng.standard_normal((3, 4)), rng.standard_normal((3, 5))
    sim = (q.T @ s) / (np.linalg.norm(q) * np.linalg.norm(s))
    want = np.sort(sim, axis=1)[:, -2:].sum()
    assert dn4_i2c(q, s, 2, "frobenius").item() == pytest.approx(want, abs=1e-14)


def test_dn4_on_flat_backbone_is_a_config_error():
    with pytest.raises(MethodConfigError):
        DN4(init_model({"arch": "mlp-2", "widths": [4, 4]}, (3,)))
    with pytest.raises(MethodConfigError):
        DN4(init_model({"arch": "tinyconv-2", "filters": [2, 2]}, (1, 4, 4)), normalization="l1")


# -- episode losses -------------------------------------------------------------------------

def _zero_protonet(distance):
    model = init_model({"arch": "mlp-2", "widths": [4, 3]}, (4,))
    for p in model.parameters():
        p.data = np.zeros_like(p.data)
    return ProtoNet(model, distance)


@pytest.mark.parametrize("distance", ["sqeuclidean", "cosine"])
def test_equal_scores_give_log_way(distance):
    ep = _episode(np.random.default_rng(7), 5, 2, 3, (4,))
    loss, logits = metric_episode_loss(_zero_protonet(distance), ep)
    assert loss.item() == pytest.approx(math.log(5), abs=1e-14)


def test_dn4_equal_scores_give_log_way():
    model = init_model({"arch": "tinyconv-2", "filters": [2, 3]}, (1, 4, 4))
    for p in model.parameters():
        p.data = np.ones_like(p.data)
    ep = _episode(np.random.default_rng(8), 4, 1, 2, (1, 4, 4))
    ep = type(ep)(**{**ep.__dict__, "support_x": np.ones_like(ep.support_x),
                     "query_x": np.ones_like(ep.query_x)})
    loss, _ = metric_episode_loss(DN4(model), ep)
    assert loss.item() == pytest.approx(math.log(4), abs=1e-12)


@pytest.mark.parametrize("name", ["protonet_sqeuclidean", "protonet_cosine", "dn4"])
def test_metric_loss_gradients(name):
    rng = np.random.default_rng(9)
    for _ in range(3):
        assert run_case(METHOD_LOSSES[name], rng) <= 1e-6


def test_trained_protonet_on_separated_clusters(tmp_path):
    spec = SyntheticSpec(classes={"train": 20, "test": 10}, samples_per_class=20, feature_dim=8,
                         center_scale=2.0, noise=0.3)
    data = generate_synthetic(spec, tmp_path)
    model = init_model({"arch": "mlp-2", "widths": [16, 16], "final_activation": False}, (8,), 0)
    method = ProtoNet(model)
    opt = SGD(method.trainable(), 0.01, momentum=0.9, total_steps=500)
    for t in range(500):
        ep = sample_episode(data["train"], 5, 1, 5, episode_rng(0, 0, t))
        loss, _ = method.set_forward_loss(ep)
        opt.step(ag.grad(loss, method.trainable()))
    accs = [accuracy(method.set_forward(ep), ep.query_y)
            for ep in (sample_episode(data["test"], 5, 1, 15, episode_rng(0, 2, 0, t)) for t in range(100))]
    assert np.mean(accs) >= 0.9


def test_episodes_leave_no_state_behind():
    rng = np.random.default_rng(10)
    model = init_model({"arch": "tinyconv-2", "filters": [2, 3]}, (1, 4, 4), 1)
    method = DN4(model, k=2)
    keys = set(vars(method))
    before = {k: v.tobytes() for k, v in method.state().items()}
    for _ in range(3):
        method.set_forward(_episode(rng, 3, 2, 2, (1, 4, 4)))
        method.set_forward_loss(_episode(rng, 3, 2, 2, (1, 4, 4)))
    assert set(vars(method)) == keys
    assert {k: v.tobytes() for k, v in method.state().items()} == before
