import numpy as np
import pytest
from scipy.special import expit

from hedgeblend import autodiff as ad
from hedgeblend.autodiff import Adam, Tensor


def numerical_grad(fn, arrays, index, h=1e-6):
    """Central finite differences of scalar fn w.r.t. arrays[index]."""
    grad = np.zeros_like(arrays[index])
    flat = arrays[index].reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        up = fn(arrays)
        flat[i] = original - h
        down = fn(arrays)
        flat[i] = original
        out[i] = (up - down) / (2 * h)
    return grad


def check_op(build, shapes, seed=0, tol=1e-6):
    """Compare reverse-mode grads of a scalarised op against FD for each input."""
    gen = np.random.default_rng(seed)
    arrays = [gen.normal(0.5, 1.0, size=s) for s in shapes]
    weights = None

    def scalar_fn(arrs):
        tensors = [Tensor(a) for a in arrs]
        out = build(*tensors)
        nonlocal weights
        if weights is None:
            weights = gen.normal(size=out.data.shape)
        return float((out.data * weights).sum())

    value = scalar_fn(arrays)  # fixes the projection weights
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    ad.backward(ad.tsum(out * weights))
    for i, t in enumerate(tensors):
        fd = numerical_grad(scalar_fn, arrays, i)
        assert np.allclose(t.grad, fd, atol=tol), f"input {i}: {t.grad} vs {fd}"
    return value


class TestElementwiseOps:
    def test_add_with_broadcast(self):
        check_op(lambda a, b: a + b, [(3, 4), (1, 4)])
        check_op(lambda a, b: a + b, [(3, 4), ()])

    def test_sub(self):
        check_op(lambda a, b: a - b, [(2, 5), (2, 5)])
        check_op(lambda a: 1.5 - a, [(4,)])

    def test_mul_with_broadcast(self):
        check_op(lambda a, b: a * b, [(3, 4), (3, 1)])
        check_op(lambda a: a * 2.5, [(6,)])

    def test_neg_div(self):
        check_op(lambda a: (-a) / 4.0, [(3, 3)])

    def test_matmul(self):
        check_op(lambda a, b: a @ b, [(4, 3), (3, 5)])

    def test_tanh_sigmoid_exp_log(self):
        check_op(lambda a: ad.tanh(a), [(3, 4)])
        check_op(lambda a: ad.sigmoid(a), [(3, 4)])
        check_op(lambda a: ad.exp(a), [(3, 4)])
        check_op(lambda a: ad.log(ad.exp(a) + 1.0), [(3, 4)])

    def test_abs_and_subgradient_at_zero(self):
        check_op(lambda a: ad.absolute(a), [(3, 4)], seed=3)
        t = Tensor(np.array([0.0, -2.0, 3.0]), requires_grad=True)
        ad.backward(ad.tsum(ad.absolute(t)))
        assert np.array_equal(t.grad, [0.0, -1.0, 1.0])


class TestShapeOps:
    def test_sum_mean_axes(self):
        check_op(lambda a: ad.tsum(a), [(3, 4)])
        check_op(lambda a: ad.tsum(a, axis=1), [(3, 4)])
        check_op(lambda a: ad.tmean(a, axis=0), [(3, 4)])
        check_op(lambda a: ad.tmean(a), [(5,)])

    def test_concat_axis0_and_axis1(self):
        check_op(lambda a, b: ad.concat([a, b], axis=1), [(3, 2), (3, 4)])
        check_op(lambda a, b: ad.concat([a, b], axis=0), [(2, 3), (4, 3)])

    def test_getitem(self):
        check_op(lambda a: a[:, 1:3], [(3, 5)])
        check_op(lambda a: a[1], [(3, 5)])

    def test_gather_rows(self):
        idx = np.array([0, 2, 2, 4])

        def build(a):
            return ad.gather_rows(a, idx)

        check_op(build, [(6,)])
        # duplicated index accumulates
        t = Tensor(np.arange(5.0), requires_grad=True)
        ad.backward(ad.tsum(ad.gather_rows(t, idx)))
        assert np.array_equal(t.grad, [1.0, 0.0, 2.0, 0.0, 1.0])


class TestLstmCell:
    def test_gradients_match_finite_differences(self):
        B, inp, H = 5, 3, 4

        def build(xh, c_prev, w, b):
            h_new, c_new = ad.lstm_cell(xh, c_prev, w, b)
            return ad.concat([h_new, c_new], axis=1)

        check_op(build, [(B, inp + H), (B, H), (inp + H, 4 * H), (4 * H,)], tol=1e-5)

    def test_forward_matches_reference_equations(self):
        gen = np.random.default_rng(1)
        B, inp, H = 4, 3, 5
        xh = gen.normal(size=(B, inp + H))
        c_prev = gen.normal(size=(B, H))
        w = gen.normal(size=(inp + H, 4 * H))
        b = gen.normal(size=4 * H)
        h_new, c_new = ad.lstm_cell(Tensor(xh), Tensor(c_prev), Tensor(w), Tensor(b))
        pre = xh @ w + b
        i, f, o = expit(pre[:, :H]), expit(pre[:, H : 2 * H]), expit(pre[:, 2 * H : 3 * H])
        g = np.tanh(pre[:, 3 * H :])
        c_ref = f * c_prev + i * g
        assert np.allclose(c_new.data, c_ref, atol=1e-12)
        assert np.allclose(h_new.data, o * np.tanh(c_ref), atol=1e-12)

    def test_no_grad_inputs_build_no_graph(self):
        gen = np.random.default_rng(2)
        h_new, c_new = ad.lstm_cell(
            Tensor(gen.normal(size=(2, 7))),
            Tensor(gen.normal(size=(2, 4))),
            Tensor(gen.normal(size=(7, 16))),
            Tensor(gen.normal(size=16)),
        )
        assert not h_new.requires_grad and not c_new.requires_grad
        assert h_new._parents == ()


class TestEngine:
    def test_multi_consumer_accumulation(self):
        x = Tensor(np.array([1.0, 2.0, -1.0]), requires_grad=True)
        y = x * x + x
        ad.backward(ad.tsum(y))
        assert np.allclose(x.grad, 2 * x.data + 1)

    def test_constant_graph_requires_no_grad(self):
        a = Tensor(np.ones((2, 2)))
        out = ad.tanh(a @ a + 1.0)
        assert not out.requires_grad and out._parents == ()

    def test_backward_requires_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            ad.backward(x * 2.0)

    def test_float32_graph_stays_float32(self):
        x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
        y = ad.tanh(x * np.float32(2.0))
        assert y.data.dtype == np.float32
        ad.backward(ad.tsum(y))
        assert x.grad.dtype == np.float32

    def test_integer_input_promoted_to_float64(self):
        assert Tensor(np.arange(3)).data.dtype == np.float64

    def test_sigmoid_matches_scipy(self):
        x = np.linspace(-30, 30, 1001)
        assert np.allclose(ad.sigmoid(Tensor(x)).data, expit(x), atol=1e-12)


class TestAdam:
    def test_quadratic_convergence(self):
        p = Tensor(np.array(0.0), requires_grad=True)
        opt = Adam([p], lr=0.1)
        for _ in range(400):
            loss = (p - 3.0) * (p - 3.0)
            ad.backward(loss)
            opt.step()
            opt.zero_grad()
        assert abs(float(p.data) - 3.0) < 1e-3

    def test_deterministic(self):
        def run():
            p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
            opt = Adam([p], lr=0.05)
            for _ in range(50):
                ad.backward(ad.tsum(p * p))
                opt.step()
                opt.zero_grad()
            return p.data.copy()

        assert np.array_equal(run(), run())
