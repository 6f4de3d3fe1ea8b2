import numpy as np
import pytest

from lumen import autodiff as ad
from lumen.gradcheck import check_gradients


def t(data, grad=True):
    return ad.Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad)


def test_softmax_uniform():
    out = ad.softmax(t([0.0, 0.0, 0.0], grad=False))
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    x = ad.softmax(t(rng.standard_normal((6, 9)) * 7, grad=False), axis=-1)
    np.testing.assert_allclose(x.data.sum(axis=-1), np.ones(6), atol=1e-12)


def test_matmul_identity():
    a = np.arange(12, dtype=np.float64).reshape(3, 4)
    out = ad.matmul(t(np.eye(3), grad=False), t(a, grad=False))
    np.testing.assert_array_equal(out.data, a)


def test_matmul_shape_mismatch_reports_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(t(np.zeros((2, 3))), t(np.zeros((2, 3))))


def test_mean_pool_over_rows():
    out = ad.mean_pool(t([[1.0, 3.0], [3.0, 5.0]], grad=False), axis=0)
    np.testing.assert_array_equal(out.data, [2.0, 4.0])


def test_layer_norm_moments():
    rng = np.random.default_rng(1)
    x = t(rng.standard_normal((5, 32)) * 3 + 1, grad=False)
    out = ad.layer_norm(x, t(np.ones(32), grad=False), t(np.zeros(32), grad=False))
    assert np.abs(out.data.mean(axis=-1)).max() < 1e-10
    assert np.abs(out.data.var(axis=-1) - 1.0).max() < 1e-8


def test_cross_entropy_uniform_is_log3():
    loss = ad.cross_entropy(t(np.zeros((1, 3))), [0])
    assert loss.item() == pytest.approx(np.log(3.0), abs=1e-12)


def test_cross_entropy_confident_small_and_monotone():
    gaps = [2.0, 5.0, 10.0]
    losses = [ad.cross_entropy(t(np.array([[g, 0.0, 0.0]])), [0]).item() for g in gaps]
    assert losses == sorted(losses, reverse=True)
    assert losses[-1] < 1e-4


def test_cross_entropy_mean_invariance_over_identical_rows():
    row = np.array([0.3, -1.2, 0.8])
    one = ad.cross_entropy(t(row[None, :]), [2]).item()
    two = ad.cross_entropy(t(np.stack([row, row])), [2, 2]).item()
    assert one == pytest.approx(two, abs=1e-15)


def test_cross_entropy_target_out_of_range():
    with pytest.raises(ValueError, match="out of range"):
        ad.cross_entropy(t(np.zeros((1, 3))), [3])


def test_backward_sum_gives_ones():
    x = t([1.0, -2.0, 5.0])
    ad.backward(ad.sum_(x))
    np.testing.assert_array_equal(x.grad, np.ones(3))


def test_backward_elementwise_square():
    x = t([1.0, 2.0, 3.0])
    ad.backward(ad.sum_(ad.mul(x, x)))
    np.testing.assert_allclose(x.grad, 2 * x.data)


def test_backward_requires_scalar():
    x = t([1.0, 2.0])
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(ad.mul(x, x))


def test_backward_twice_rederives_identical_grads():
    x = t([[0.5, -1.0], [2.0, 0.1]])
    y = ad.sum_(ad.gelu(ad.matmul(x, x)))
    ad.backward(y)
    first = x.grad.copy()
    ad.backward(y)
    np.testing.assert_array_equal(x.grad, first)


def test_tape_visits_each_node_once():
    x = t([2.0])
    y = ad.mul(x, x)
    z = ad.add(y, y)  # diamond: y reachable twice
    tape = ad.Tape(ad.sum_(z))
    assert len(tape.nodes) == len({id(n) for n in tape.nodes})


def test_non_participating_leaf_keeps_no_grad():
    x = t([1.0])
    unused = t([5.0])
    ad.backward(ad.sum_(ad.mul(x, x)))
    assert unused.grad is None


def test_embedding_lookup_scatters_gradients():
    table = t(np.arange(12, dtype=np.float64).reshape(4, 3))
    out = ad.embedding_lookup(table, np.array([1, 1, 3]))
    ad.backward(ad.sum_(out))
    expected = np.zeros((4, 3))
    expected[1] = 2.0
    expected[3] = 1.0
    np.testing.assert_array_equal(table.grad, expected)


def test_embedding_lookup_rejects_bad_ids():
    table = t(np.zeros((4, 3)))
    with pytest.raises(ValueError, match="out of range"):
        ad.embedding_lookup(table, np.array([4]))


def test_concat_splits_gradient():
    a, b = t([1.0, 2.0]), t([3.0])
    out = ad.concat([a, b], axis=0)
    ad.backward(ad.sum_(ad.mul(out, out)))
    np.testing.assert_allclose(a.grad, 2 * a.data)
    np.testing.assert_allclose(b.grad, 2 * b.data)


def test_no_grad_disables_recording():
    x = t([1.0, 2.0])
    with ad.no_grad():
        y = ad.sum_(ad.mul(x, x))
    assert not y.requires_grad


@pytest.mark.parametrize("seed", range(3))
def test_gradcheck_each_op(seed):
    """Finite differences across every differentiable op in one composition."""
    rng = np.random.default_rng(seed)
    params = {
        "a": t(rng.standard_normal((4, 5))),
        "b": t(rng.standard_normal((4, 5))),
        "w": t(rng.standard_normal((5, 4))),
        "gain": t(rng.standard_normal(5) * 0.2 + 1.0),
        "bias": t(rng.standard_normal(5) * 0.1),
        "table": t(rng.standard_normal((7, 5))),
    }
    ids = rng.integers(0, 7, size=4)
    targets = rng.integers(0, 4, size=12)

    def loss():
        x = ad.mul(ad.add(params["a"], params["b"]), params["a"])
        x = ad.layer_norm(x, params["gain"], params["bias"])
        emb = ad.embedding_lookup(params["table"], ids)
        stacked = ad.concat([x, emb, ad.gelu(params["b"])], axis=0)  # (12, 5)
        soft = ad.softmax(ad.scale(stacked, 0.7), axis=-1)
        logits = ad.matmul(soft, params["w"])  # (12, 4)
        pooled = ad.mean_pool(ad.transpose(logits, (1, 0)), axis=1)
        return ad.add(ad.cross_entropy(logits, targets),
                      ad.sum_(ad.mul(pooled, pooled)))

    result = check_gradients(loss, params, rng, max_coords_per_param=5)
    assert result.max_rel_err < 1e-4, result


@pytest.mark.parametrize("seed", range(2))
def test_gradcheck_three_layer_net(seed):
    """Analytic vs central finite differences on a random 3-layer net."""
    rng = np.random.default_rng(100 + seed)
    dims = [6, 8, 7, 4]
    params = {}
    for i in range(3):
        params[f"w{i}"] = t(rng.standard_normal((dims[i], dims[i + 1])) * 0.5)
        params[f"b{i}"] = t(rng.standard_normal(dims[i + 1]) * 0.1)
    x = np.asarray(rng.standard_normal((3, 6)))
    targets = rng.integers(0, 4, size=3)

    def loss():
        h = ad.constant(x)
        for i in range(3):
            h = ad.add(ad.matmul(h, params[f"w{i}"]), params[f"b{i}"])
            if i < 2:
                h = ad.gelu(h)
        return ad.cross_entropy(h, targets)

    result = check_gradients(loss, params, rng, max_coords_per_param=8, h=1e-3)
    assert result.max_rel_err < 1e-4, result


def test_relu_values_and_grad():
    x = t([[3.0, -3.0]])
    out = ad.relu(x)
    np.testing.assert_array_equal(out.data, [[3.0, 0.0]])
    ad.backward(ad.sum_(out))
    np.testing.assert_array_equal(x.grad, [[1.0, 0.0]])
