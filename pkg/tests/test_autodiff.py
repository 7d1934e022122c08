import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mfgcn import autodiff as ad
from mfgcn.autodiff import ShapeError, Tape, Tensor
from oracles import central_diff, matmul_loops, rel_error


def grad_of(build, *arrays_):
    """Analytic gradients of scalar build(*tensors) w.r.t. every input."""
    ts = [Tensor(a, requires_grad=True) for a in arrays_]
    with Tape() as tape:
        loss = build(*ts)
    g = tape.backward(loss, ts)
    return [g[t.id] for t in ts]


def numeric_of(build, *arrays_):
    out = []
    for i in range(len(arrays_)):
        def f(x, i=i):
            args = [Tensor(a) for a in arrays_]
            args[i] = Tensor(x)
            return build(*args).item()
        out.append(central_diff(f, arrays_[i]))
    return out


class TestMatmul:
    def test_identity(self):
        m = np.random.default_rng(0).normal(size=(3, 3))
        np.testing.assert_array_equal(ad.matmul(Tensor(np.eye(3)), Tensor(m)).data, m)

    def test_annihilator(self):
        m = np.random.default_rng(1).normal(size=(3, 3))
        np.testing.assert_array_equal(ad.matmul(Tensor(np.zeros((3, 3))), Tensor(m)).data, np.zeros((3, 3)))

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(2)
        a, b = rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, (3, 2))
        assert np.max(np.abs(ad.matmul(Tensor(a), Tensor(b)).data - matmul_loops(a, b))) < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_triple_loop_property(self, m, k, n, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(-1, 1, (m, k)), rng.uniform(-1, 1, (k, n))
        assert np.max(np.abs(ad.matmul(Tensor(a), Tensor(b)).data - matmul_loops(a, b))) < 1e-12

    def test_mismatch_reports_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_backward_rule(self):
        rng = np.random.default_rng(3)
        a, b = rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, (3, 2))
        ga, gb = grad_of(lambda x, y: ad.sum(ad.matmul(x, y)), a, b)
        g = np.ones((4, 2))
        np.testing.assert_allclose(ga, g @ b.T, atol=1e-15)
        np.testing.assert_allclose(gb, a.T @ g, atol=1e-15)


class TestRelu:
    def test_values(self):
        np.testing.assert_array_equal(ad.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_nonnegative_unchanged(self):
        x = np.abs(np.random.default_rng(0).normal(size=7))
        np.testing.assert_array_equal(ad.relu(Tensor(x)).data, x)

    def test_gradient_vs_finite_difference(self):
        x = np.array([-1.0, 2.0])
        (g,) = grad_of(lambda t: ad.sum(ad.relu(t)), x)
        (n,) = numeric_of(lambda t: ad.sum(ad.relu(t)), x)
        np.testing.assert_allclose(g, [0.0, 1.0])
        np.testing.assert_allclose(n, [0.0, 1.0], atol=1e-8)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(ad.softmax(Tensor([[0.0, 0.0, 0.0]])).data, [[1 / 3] * 3], atol=1e-15)

    def test_shift_invariance(self):
        z = np.random.default_rng(0).normal(size=(4, 3))
        np.testing.assert_allclose(ad.softmax(Tensor(z)).data, ad.softmax(Tensor(z + 5)).data, atol=1e-15)

    def test_known_values(self):
        e = np.exp([1.0, 2.0, 3.0])
        oracle = e / e.sum()
        out = ad.softmax(Tensor([[1.0, 2.0, 3.0]])).data[0]
        np.testing.assert_allclose(out, oracle, atol=1e-15)
        np.testing.assert_allclose(out, [0.09003, 0.24473, 0.66524], atol=1e-5)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 6)),
                  elements=st.floats(-50, 50, allow_nan=False)))
    def test_rows_are_distributions(self, z):
        s = ad.softmax(Tensor(z)).data
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
        assert np.all((s > 0) | (np.abs(z - z.max(axis=1, keepdims=True)) > 30))
        assert np.all(s <= 1)

    def test_needs_two_columns(self):
        with pytest.raises(ShapeError):
            ad.softmax(Tensor([[1.0]]))


class TestConcat:
    def test_single_part_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(ad.concat_channelwise([Tensor(x)]).data, x)

    def test_four_64_wide_parts(self):
        parts = [Tensor(np.full((5, 64), i)) for i in range(4)]
        out = ad.concat_channelwise(parts)
        assert out.shape == (5, 256)
        assert np.all(out.data[:, 64:128] == 1)

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            ad.concat_channelwise([])

    def test_leading_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            ad.concat_channelwise([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))])

    def test_backward_splits_gradient(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(3, 2)), rng.normal(size=(3, 4))
        w = rng.normal(size=(3, 6))
        ga, gb = grad_of(lambda x, y: ad.sum(ad.mul(ad.concat_channelwise([x, y]), Tensor(w))), a, b)
        np.testing.assert_array_equal(ga, w[:, :2])
        np.testing.assert_array_equal(gb, w[:, 2:])


class TestBackward:
    def test_sum_gives_ones(self):
        x = np.random.default_rng(0).normal(size=(2, 3, 4))
        (g,) = grad_of(ad.sum, x)
        np.testing.assert_array_equal(g, np.ones_like(x))

    def test_relu_matmul_vs_finite_difference(self):
        rng = np.random.default_rng(1)
        w, x = rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, (3, 2))
        build = lambda a, b: ad.sum(ad.relu(ad.matmul(a, b)))
        for got, want in zip(grad_of(build, w, x), numeric_of(build, w, x)):
            assert rel_error(got, want) < 1e-4

    def test_unused_parameter_zero(self):
        used = Tensor(np.ones(3), requires_grad=True)
        unused = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape() as tape:
            loss = ad.sum(used)
        g = tape.backward(loss, [used, unused])
        np.testing.assert_array_equal(g[unused.id], np.zeros((2, 2)))

    def test_non_scalar_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            y = ad.relu(x)
        with pytest.raises(ShapeError):
            tape.backward(y)

    def test_tape_topological_and_single_visit(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape() as tape:
            y = ad.relu(x)
            z = ad.add(y, y)
            loss = ad.sum(z)
        produced = set()
        for rec in tape.records:
            for t in rec.inputs:
                assert t.id not in produced or any(r.output.id == t.id for r in tape.records)
            produced.add(rec.output.id)
        ids = [r.output.id for r in tape.records]
        assert len(ids) == len(set(ids)) == 3
        g = tape.backward(loss, [x])
        np.testing.assert_array_equal(g[x.id], 2 * np.ones((2, 2)))

    def test_no_tape_no_record(self):
        x = Tensor(np.ones(2), requires_grad=True)
        y = ad.relu(x)
        assert y.requires_grad


class TestComposites:
    """Finite-difference checks of every differentiable primitive."""

    @pytest.mark.parametrize("seed", range(5))
    def test_conv_pool_chain(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, (2, 9, 3))
        w = rng.uniform(-1, 1, (3, 3, 4))
        b = rng.uniform(-1, 1, 4)
        build = lambda x, w, b: ad.sum(ad.mul(ad.maxpool1d(ad.conv1d(x, w, b), 2),
                                              Tensor(np.linspace(-1, 1, 2 * 3 * 4).reshape(2, 3, 4))))
        for got, want in zip(grad_of(build, x, w, b), numeric_of(build, x, w, b)):
            assert rel_error(got, want) < 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_graph_ops(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.uniform(0, 1, (3, 3))
        h = rng.uniform(-1, 1, (2, 3, 4))
        w = rng.uniform(-1, 1, (4, 5))
        bias = rng.uniform(-1, 1, 5)
        target = Tensor(rng.uniform(-1, 1, (2, 5)))
        build = lambda h, w, bias: ad.sum(ad.mul(ad.mean(ad.add_bias(ad.linear(ad.propagate(s, h), w), bias), axis=1), target))
        for got, want in zip(grad_of(build, h, w, bias), numeric_of(build, h, w, bias)):
            assert rel_error(got, want) < 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_softmax_log(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.uniform(-1, 1, (4, 3))
        onehot = Tensor(np.eye(3)[rng.integers(0, 3, 4)])
        build = lambda z: ad.scale(ad.mean(ad.log(ad.sum(ad.mul(ad.softmax(z), onehot), axis=1), 1e-12)), -1.0)
        (got,), (want,) = grad_of(build, z), numeric_of(build, z)
        assert rel_error(got, want) < 1e-4

    def test_elementwise(self):
        rng = np.random.default_rng(9)
        a, b = rng.uniform(-1, 1, (3, 2)), rng.uniform(-1, 1, (3, 2))
        build = lambda a, b: ad.sum(ad.mul(ad.sub(a, b), ad.add(a, ad.scale(b, 0.3))))
        for got, want in zip(grad_of(build, a, b), numeric_of(build, a, b)):
            assert rel_error(got, want) < 1e-4


def test_forward_deterministic():
    rng = np.random.default_rng(0)
    x, w = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    a = ad.softmax(ad.relu(ad.matmul(Tensor(x), Tensor(w)))).data
    b = ad.softmax(ad.relu(ad.matmul(Tensor(x), Tensor(w)))).data
    assert a.tobytes() == b.tobytes()


def test_no_broadcasting():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))


def test_tensor_immutable():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0
