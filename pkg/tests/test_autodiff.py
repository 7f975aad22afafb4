import numpy as np
import pytest

from graspworld.autodiff import Adam, AdamState, ShapeError, Tape, Tensor, adam_step, checkpoint, ops
from oracles import gaussian_kl_quadrature, numeric_grad, rel_err, naive_conv2d, conv_matrix

RNG = np.random.default_rng(20240817)


def tape_grads(build, arrays):
    """Run build(*tensors) under a tape, backprop, return grads per input."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = build(*tensors)
        tape.backward(loss)
    return [t.grad for t in tensors]


def check_grads(build, arrays, tol=1e-6):
    analytic = tape_grads(build, [a.copy() for a in arrays])

    def scalar(*arrs):
        return build(*[Tensor(a) for a in arrs]).item()

    numeric = numeric_grad(scalar, [a.copy() for a in arrays])
    for a, n in zip(analytic, numeric):
        assert a is not None
        assert rel_err(a, n) <= tol, f"gradient mismatch: {rel_err(a, n)}"


# ---------------------------------------------------------------------------
# dense


def test_dense_identity():
    x = Tensor([[1.0, 2.0]])
    out = ops.dense(x, Tensor(np.eye(2)), Tensor(np.zeros(2)))
    np.testing.assert_array_equal(out.data, [[1.0, 2.0]])


def test_dense_hand_computed():
    out = ops.dense(Tensor([[1.0, 1.0]]), Tensor([[2.0], [3.0]]), Tensor([1.0]))
    np.testing.assert_array_equal(out.data, [[6.0]])


def test_dense_shape_mismatch_rejected():
    with pytest.raises(ShapeError):
        ops.dense(Tensor([[1.0, 2.0, 3.0]]), Tensor(np.eye(2)), Tensor(np.zeros(2)))


def test_dense_weight_grad_is_columnwise_input_sums():
    x = RNG.normal(size=(4, 3))
    w = RNG.normal(size=(3, 2))
    b = RNG.normal(size=2)

    grads = tape_grads(lambda xx, ww, bb: ops.sum_(ops.dense(xx, ww, bb)), [x, w, b])
    # d(sum(out))/dW[i,o] = sum_b x[b,i]
    expected = np.tile(x.sum(axis=0)[:, None], (1, 2))
    np.testing.assert_allclose(grads[1], expected, rtol=1e-12)
    check_grads(lambda xx, ww, bb: ops.sum_(ops.dense(xx, ww, bb)), [x, w, b], tol=1e-6)


# ---------------------------------------------------------------------------
# conv2d / deconv2d


def test_conv2d_identity_kernel():
    x = RNG.normal(size=(1, 1, 4, 4))
    out = ops.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), stride=1, padding=0)
    np.testing.assert_array_equal(out.data, x)


def test_conv2d_all_ones_sum():
    out = ops.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    assert out.shape == (1, 1, 1, 1)
    assert out.item() == 9.0


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_matches_naive(stride, padding):
    x = RNG.normal(size=(2, 3, 6, 5))
    k = RNG.normal(size=(4, 3, 3, 3))
    out = ops.conv2d(Tensor(x), Tensor(k), stride=stride, padding=padding)
    np.testing.assert_allclose(out.data, naive_conv2d(x, k, stride, padding), atol=1e-12)


def test_conv2d_oversized_kernel_rejected():
    with pytest.raises(ShapeError):
        ops.conv2d(Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros((1, 1, 5, 5))))


def test_conv2d_gradients_match_finite_differences():
    x = RNG.normal(size=(1, 2, 5, 5))
    k = RNG.normal(size=(2, 2, 3, 3))
    check_grads(
        lambda xx, kk: ops.sum_(ops.tanh(ops.conv2d(xx, kk, stride=2, padding=1))),
        [x, k],
        tol=1e-5,
    )


def test_deconv2d_identity():
    x = RNG.normal(size=(1, 1, 3, 3))
    out = ops.deconv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), stride=1, padding=0)
    np.testing.assert_array_equal(out.data, x)


def test_deconv2d_adjoint_identity():
    # <conv(x,k), y> == <x, deconv(y,k)> for conforming random operands
    for stride, padding, k in [(2, 1, 3), (1, 0, 1), (2, 0, 2), (3, 1, 3)]:
        hy, wy = 3, 4
        x = RNG.normal(size=(2, 3, stride * hy, stride * wy))
        kern = RNG.normal(size=(4, 3, k, k))
        y = RNG.normal(size=(2, 4, hy, wy))
        lhs = float(np.sum(ops.conv2d(Tensor(x), Tensor(kern), stride, padding).data * y))
        rhs = float(np.sum(x * ops.deconv2d(Tensor(y), Tensor(kern), stride, padding).data))
        assert rel_err(lhs, rhs) <= 1e-10


def test_deconv2d_stride2_output_size_and_transpose_values():
    # 1x1x2x2 input -> 4x4 output; values must match the hand-built
    # transpose of the conv operator matrix.
    y = RNG.normal(size=(1, 1, 2, 2))
    k = RNG.normal(size=(1, 1, 3, 3))
    out = ops.deconv2d(Tensor(y), Tensor(k), stride=2, padding=1)
    assert out.shape == (1, 1, 4, 4)
    mat = conv_matrix(k, (4, 4), stride=2, padding=1)
    np.testing.assert_allclose(out.data.reshape(-1), mat.T @ y.reshape(-1), atol=1e-12)


def test_deconv2d_invalid_size_convention_rejected():
    with pytest.raises(ShapeError):
        ops.deconv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))), 1, 0)


def test_deconv2d_gradients_match_finite_differences():
    y = RNG.normal(size=(1, 2, 3, 3))
    k = RNG.normal(size=(2, 1, 3, 3))
    check_grads(
        lambda yy, kk: ops.sum_(ops.tanh(ops.deconv2d(yy, kk, stride=2, padding=1))),
        [y, k],
        tol=1e-5,
    )


# ---------------------------------------------------------------------------
# activations


def test_relu_values():
    out = ops.relu(Tensor([-1.0, 2.0]))
    np.testing.assert_array_equal(out.data, [0.0, 2.0])


def test_leaky_relu_values():
    assert ops.leaky_relu(Tensor([-2.0]), 0.1).data[0] == pytest.approx(-0.2)


def test_softmax_symmetry_and_normalization():
    out = ops.softmax(Tensor([[0.0, 0.0]]), axis=1)
    np.testing.assert_allclose(out.data, [[0.5, 0.5]])
    z = RNG.normal(size=(3, 7)) * 20
    p = ops.softmax(Tensor(z), axis=1).data
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert (p >= 0).all()


@pytest.mark.parametrize(
    "name,build",
    [
        ("relu", lambda x: ops.sum_(ops.relu(x))),
        ("leaky_relu", lambda x: ops.sum_(ops.leaky_relu(x, 0.1))),
        ("tanh", lambda x: ops.sum_(ops.tanh(x))),
        ("exp", lambda x: ops.sum_(ops.exp(x))),
        ("softmax", lambda x: ops.sum_(ops.square(ops.softmax(x, axis=1)))),
        ("log_softmax", lambda x: ops.sum_(ops.square(ops.log_softmax(x, axis=1)))),
        ("mean", lambda x: ops.mean(ops.square(x))),
        ("clip", lambda x: ops.sum_(ops.square(ops.clip(x, -0.8, 0.8)))),
    ],
)
def test_elementwise_gradients(name, build):
    x = RNG.normal(size=(3, 4))
    if name == "relu" or name == "leaky_relu" or name == "clip":
        # keep test points away from the kinks
        x = x + 0.05 * np.sign(x)
    check_grads(build, [x], tol=1e-6)


def test_concat_and_reshape_gradients():
    a = RNG.normal(size=(2, 3))
    b = RNG.normal(size=(2, 2))

    def build(aa, bb):
        joined = ops.concat([aa, bb], axis=1)
        return ops.sum_(ops.square(ops.reshape(joined, (10,))))

    check_grads(build, [a, b], tol=1e-6)


# ---------------------------------------------------------------------------
# spatial softmax


def test_spatial_softmax_dominant_logit():
    r = np.zeros((1, 1, 5, 7))
    r[0, 0, 1, 4] = 100.0
    fp = ops.spatial_softmax_expectation(Tensor(r)).data
    expect_x = (2 * 4 + 1) / 7 - 1
    expect_y = (2 * 1 + 1) / 5 - 1
    assert abs(fp[0, 0, 0] - expect_x) <= 1e-3
    assert abs(fp[0, 0, 1] - expect_y) <= 1e-3


def test_spatial_softmax_uniform_is_centered():
    fp = ops.spatial_softmax_expectation(Tensor(np.zeros((2, 3, 4, 4)))).data
    np.testing.assert_allclose(fp, 0.0, atol=1e-12)


def test_spatial_softmax_range_and_normalization():
    r = RNG.normal(size=(2, 3, 6, 5)) * 5
    fp = ops.spatial_softmax_expectation(Tensor(r)).data
    assert fp.shape == (2, 3, 2)
    assert (fp >= -1.0).all() and (fp <= 1.0).all()


def test_spatial_softmax_gradients():
    r = RNG.normal(size=(1, 2, 3, 4))
    check_grads(
        lambda rr: ops.sum_(ops.square(ops.spatial_softmax_expectation(rr))), [r], tol=1e-5
    )


# ---------------------------------------------------------------------------
# losses


def test_mse_loss_values():
    t = Tensor(RNG.normal(size=(3, 3)))
    assert ops.mse_loss(t, Tensor(t.data.copy())).item() == 0.0
    assert ops.mse_loss(Tensor([2.0]), Tensor([0.0])).item() == 4.0


def test_mse_loss_gradient_formula():
    p = RNG.normal(size=(2, 5))
    t = RNG.normal(size=(2, 5))
    grads = tape_grads(lambda pp: ops.mse_loss(pp, Tensor(t)), [p])
    np.testing.assert_allclose(grads[0], 2.0 * (p - t) / p.size, rtol=1e-12)
    check_grads(lambda pp: ops.mse_loss(pp, Tensor(t)), [p], tol=1e-6)


def test_gaussian_kl_standard_normal_is_zero():
    assert ops.gaussian_kl(Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 4)))).item() == 0.0


def test_gaussian_kl_unit_mean_half_per_dim():
    val = ops.gaussian_kl(Tensor(np.ones((3, 5))), Tensor(np.zeros((3, 5)))).item()
    assert val == pytest.approx(0.5 * 5)


def test_gaussian_kl_matches_quadrature():
    mu, ls = 0.7, 0.3
    closed = ops.gaussian_kl(Tensor([[mu]]), Tensor([[ls]])).item()
    assert abs(closed - gaussian_kl_quadrature(mu, ls)) <= 1e-6


def test_gaussian_kl_gradients():
    mu = RNG.normal(size=(2, 3))
    ls = RNG.normal(size=(2, 3)) * 0.5
    check_grads(lambda m, s: ops.gaussian_kl(m, s), [mu, ls], tol=1e-6)


def test_reparameterize_zero_noise_is_mean():
    mu = RNG.normal(size=(2, 3))
    out = ops.reparameterize(Tensor(mu), Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    np.testing.assert_array_equal(out.data, mu)


def test_reparameterize_log_sigma_clamped():
    out = ops.reparameterize(
        Tensor(np.zeros((1, 2))), Tensor(np.full((1, 2), -1e9)), Tensor(np.ones((1, 2)))
    )
    np.testing.assert_allclose(out.data, np.exp(-6.0), rtol=1e-12)


def test_reparameterize_monte_carlo_variance():
    rng = np.random.default_rng(7)
    noise = rng.standard_normal((100_000, 1))
    out = ops.reparameterize(
        Tensor(np.zeros((100_000, 1))), Tensor(np.zeros((100_000, 1))), Tensor(noise)
    )
    assert abs(out.data.var() - 1.0) <= 0.02


def test_reparameterize_gradient_flow():
    mu = RNG.normal(size=(2, 3))
    ls = RNG.normal(size=(2, 3)) * 0.3
    noise = RNG.normal(size=(2, 3))
    noise_t = Tensor(noise, requires_grad=True)
    grads = tape_grads(
        lambda m, s: ops.sum_(ops.square(ops.reparameterize(m, s, noise_t))), [mu, ls]
    )
    assert grads[0] is not None and grads[1] is not None
    assert noise_t.grad is None
    check_grads(
        lambda m, s: ops.sum_(ops.square(ops.reparameterize(m, s, Tensor(noise)))),
        [mu, ls],
        tol=1e-6,
    )


# ---------------------------------------------------------------------------
# tape mechanics


def test_tape_handles_reused_tensors():
    x = Tensor([3.0], requires_grad=True)
    with Tape() as tape:
        y = ops.add(ops.mul(x, x), x)  # x^2 + x
        tape.backward(ops.sum_(y))
    np.testing.assert_allclose(x.grad, [7.0])


def test_tape_does_not_nest():
    with Tape():
        with pytest.raises(RuntimeError):
            with Tape():
                pass


def test_tape_single_use():
    x = Tensor([1.0], requires_grad=True)
    with Tape() as tape:
        y = ops.sum_(ops.mul(x, x))
        tape.backward(y)
    with pytest.raises(RuntimeError):
        tape.backward(y)


def test_no_tape_means_no_recording():
    x = Tensor([1.0], requires_grad=True)
    y = ops.mul(x, x)
    assert not y.requires_grad


def test_determinism_bitwise():
    def run():
        rng = np.random.default_rng(99)
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        with Tape() as tape:
            out = ops.mean(ops.square(ops.tanh(ops.dense(x, w, Tensor(np.zeros(2))))))
            tape.backward(out)
        return out.data.copy(), x.grad.copy(), w.grad.copy()

    a, b, c = run()
    a2, b2, c2 = run()
    assert a.tobytes() == a2.tobytes()
    assert b.tobytes() == b2.tobytes()
    assert c.tobytes() == c2.tobytes()


def test_finite_values_preserved():
    x = Tensor(RNG.normal(size=(8, 8)) * 10)
    out = ops.softmax(ops.tanh(x), axis=1)
    out.assert_finite()


# ---------------------------------------------------------------------------
# adam


def test_adam_zero_grad_leaves_param():
    p = np.array([1.0, -2.0])
    st = AdamState.for_param(p, lr=0.1)
    new = adam_step(p, np.zeros_like(p), st)
    np.testing.assert_array_equal(new, p)


def test_adam_first_step_magnitude():
    # with grad=1: m_hat=1, v_hat=1 -> step = -lr / (1 + eps)
    p = np.array([0.0])
    st = AdamState.for_param(p, lr=0.1)
    new = adam_step(p, np.array([1.0]), st)
    assert new[0] == pytest.approx(-0.1 / (1.0 + 1e-8), abs=1e-15)


def test_adam_deterministic():
    def run():
        p = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        opt = Adam([p], lr=0.05)
        for i in range(5):
            p.grad = np.array([0.1, -0.2, 0.3]) * (i + 1)
            opt.step()
        return p.data.copy()

    np.testing.assert_array_equal(run(), run())


def test_adam_state_invariants():
    p = np.zeros(3)
    st = AdamState.for_param(p, lr=0.01)
    for i in range(4):
        adam_step(p, RNG.normal(size=3), st)
        assert st.t == i + 1
        assert (st.v >= 0).all()


# ---------------------------------------------------------------------------
# checkpoint format


def test_checkpoint_roundtrip(tmp_path):
    tensors = {
        "enc/w1": RNG.normal(size=(3, 4, 3, 3)),
        "enc/b1": RNG.normal(size=4),
        "scalar": np.array(2.5),
    }
    path = tmp_path / "model.gwtd"
    checkpoint.save(path, tensors)
    loaded = checkpoint.load(path)
    assert list(loaded) == list(tensors)
    for name in tensors:
        np.testing.assert_array_equal(loaded[name], tensors[name])


def test_checkpoint_layout():
    blob = checkpoint.serialize({"ab": np.array([1.0, 2.0])})
    assert blob[:4] == b"GWTD"
    # version=1, count=1, name_len=2, "ab", rank=1, extent=2, payload 2*f8
    assert len(blob) == 4 + 4 + 4 + 4 + 2 + 4 + 8 + 16


def test_checkpoint_rejects_garbage():
    with pytest.raises(ValueError):
        checkpoint.deserialize(b"NOPE" + b"\x00" * 16)


def test_checksum_detects_changes():
    a = {"w": np.array([1.0, 2.0])}
    b = {"w": np.array([1.0, 2.0 + 1e-12])}
    assert checkpoint.checksum(a) == checkpoint.checksum({"w": np.array([1.0, 2.0])})
    assert checkpoint.checksum(a) != checkpoint.checksum(b)
