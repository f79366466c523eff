import numpy as np
import pytest

from minr import autodiff as ad
from minr import gradcheck


def test_matmul_identity():
    a = ad.constant([[1.0, 2.0], [3.0, 4.0]])
    eye = ad.constant([[1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(ad.matmul(a, eye).data, [[1.0, 2.0], [3.0, 4.0]])


def test_softmax_symmetry():
    y = ad.softmax_lastdim(ad.constant([0.0, 0.0, 0.0]))
    assert np.allclose(y.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_mse_zero_residual():
    assert float(ad.mse(ad.constant([1.0, 2.0]), ad.constant([1.0, 2.0])).data) == 0.0


def test_apply_dispatch():
    out = ad.apply("add", ad.constant([1.0]), ad.constant([2.0]))
    assert out.data[0] == 3.0
    with pytest.raises(KeyError):
        ad.apply("conv2d", ad.constant([1.0]))


def test_shape_errors_name_op_and_shapes():
    a, b = ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((2, 3)))
    with pytest.raises(ad.ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        ad.matmul(a, b)
    with pytest.raises(ad.ShapeError, match="add"):
        ad.add(a, ad.constant(np.zeros((3, 2))))


def test_backward_linear_mse():
    # loss = mse(w * x, y), w=1, x=2, y=0: d/dw (2w)^2 = 8w = 8
    w = ad.parameter([1.0])
    x = ad.constant([2.0])
    y = ad.constant([0.0])
    loss = ad.mse(ad.mul(w, x), y)
    ad.backward(loss)
    assert np.allclose(w.grad, [8.0])


def test_backward_sum_sin():
    x = ad.parameter([0.0])
    ad.backward(ad.tsum(ad.sin(x)))
    assert np.allclose(x.grad, [1.0])  # cos(0)


def test_backward_requires_scalar():
    x = ad.parameter([[1.0, 2.0]])
    with pytest.raises(ad.ShapeError, match="scalar"):
        ad.backward(ad.relu(x))


def test_backward_twice_errors():
    x = ad.parameter([3.0])
    loss = ad.tsum(ad.mul(x, x))
    ad.backward(loss)
    with pytest.raises(RuntimeError, match="consumed"):
        ad.backward(loss)


def test_fanout_accumulates_both_branches():
    def both(ps):
        return ad.add(ad.tsum(ad.mul(ps["x"], ps["x"])), ad.tsum(ad.sin(ps["x"])))

    x0 = np.array([0.3, -1.2, 2.0])
    x = ad.parameter(x0.copy())
    ad.backward(both({"x": x}))
    joint = x.grad.copy()

    xa = ad.parameter(x0.copy())
    ad.backward(ad.tsum(ad.mul(xa, xa)))
    xb = ad.parameter(x0.copy())
    ad.backward(ad.tsum(ad.sin(xb)))
    assert np.allclose(joint, xa.grad + xb.grad, atol=1e-15)


def test_random_graph_vs_finite_differences():
    rng = np.random.default_rng(42)

    def build(ps):
        # 6-op graph: matmul, gelu, add, transpose, matmul, mean
        h = ad.gelu(ad.matmul(ps["a"], ps["b"]))
        h = ad.add(h, ps["c"])
        out = ad.matmul(ad.transpose_last2(h), ps["a"])
        return ad.tmean(out)

    params = {"a": ad.parameter(rng.standard_normal((3, 3))),
              "b": ad.parameter(rng.standard_normal((3, 3))),
              "c": ad.parameter(rng.standard_normal((3, 3)))}
    report = ad.grad_check(build, params, tolerance=1e-4)
    assert report["passed"], report


def test_grad_check_matmul_mse_passes():
    rng = np.random.default_rng(0)
    target = ad.constant(rng.standard_normal((4, 2)))
    x = ad.constant(rng.standard_normal((4, 3)))

    def build(ps):
        return ad.mse(ad.matmul(x, ps["w"]), target)

    report = ad.grad_check(build, {"w": ad.parameter(rng.standard_normal((3, 2)))})
    assert report["passed"]


def test_grad_check_layernorm_passes():
    rng = np.random.default_rng(1)

    def build(ps):
        return ad.tmean(ad.mul(ad.layernorm_lastdim(ps["x"]),
                               ad.constant(rng_w)))

    rng_w = rng.standard_normal((3, 5))
    report = ad.grad_check(build, {"x": ad.parameter(rng.standard_normal((3, 5)))})
    assert report["passed"]


def test_grad_check_detects_corrupted_rule(monkeypatch):
    # negative control: a wrong relu derivative must be reported as a failure
    def bad_relu(a):
        y = np.maximum(a.data, 0.0)

        def back(g):
            ad._accum(a, g * 2.0 * (a.data > 0.0), own=True)

        return ad._make("relu", (a,), y, back)

    monkeypatch.setattr(ad, "relu", bad_relu)
    x0 = np.array([0.5, -0.7, 1.3])

    def build(ps):
        return ad.tsum(ad.relu(ps["x"]))

    report = ad.grad_check(build, {"x": ad.parameter(x0)})
    assert not report["passed"]


def test_every_op_gradient_matches_finite_differences():
    for name, (build, params) in gradcheck.op_suites().items():
        report = ad.grad_check(build, params, tolerance=1e-4)
        assert report["passed"], (name, report["max_relative_error"])


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(7)
    y = ad.softmax_lastdim(ad.constant(rng.standard_normal((6, 9)) * 4)).data
    assert np.all(np.abs(y.sum(axis=-1) - 1.0) < 1e-12)


def test_layernorm_rows_zero_mean():
    rng = np.random.default_rng(8)
    y = ad.layernorm_lastdim(ad.constant(rng.standard_normal((6, 9)) * 3)).data
    assert np.all(np.abs(y.mean(axis=-1)) < 1e-9)


def test_debug_flag_rejects_non_finite():
    x = ad.constant([np.nan, 1.0])
    ad.DEBUG_CHECK_FINITE = True
    try:
        with pytest.raises(FloatingPointError):
            ad.relu(x)
    finally:
        ad.DEBUG_CHECK_FINITE = False


def test_bias_broadcast_gradient_sums_leading_axes():
    b = ad.parameter(np.zeros(3))
    x = ad.constant(np.ones((4, 3)))
    ad.backward(ad.tsum(ad.add(x, b)))
    assert np.allclose(b.grad, [4.0, 4.0, 4.0])


def test_embedding_lookup_scatter_adds_repeats():
    table = ad.parameter(np.zeros((3, 2)))
    out = ad.embedding_lookup(table, [1, 1, 0])
    ad.backward(ad.tsum(out))
    assert np.allclose(table.grad, [[1, 1], [2, 2], [0, 0]])
