import numpy as np
import pytest

from dsac_h.autodiff import NumericalError, Tape, backward, tanh, vmean, vsum
from dsac_h.nets import (
    MlpSpec,
    ParamVector,
    finite_diff_check,
    grad_scalar,
    init_params,
    leaf_views,
    mlp_apply,
    mlp_forward,
    zero_output_head,
)


def _loss_from_forward(x):
    """loss(params) = mean of squared outputs on a fixed input batch."""

    def loss_fn(tape, leaves):
        h = mlp_apply(leaves, tape.const(x))
        return vmean(h * h)

    return loss_fn


def test_zero_network_maps_anything_to_zero():
    spec = MlpSpec(4, (8,), 3)
    params = ParamVector(np.zeros(spec.param_count), spec)
    out = mlp_forward(params, np.array([1.0, -2.0, 3.0, 4.0]))
    assert out.shape == (3,)
    assert np.all(out == 0.0)


def test_identity_single_linear_layer():
    spec = MlpSpec(3, (), 3)
    params = ParamVector(np.zeros(spec.param_count), spec)
    w, b = params.views()[0]
    w[:] = np.eye(3)
    x = np.array([0.3, -1.7, 2.2])
    assert np.allclose(mlp_forward(params, x), x, atol=0)


def test_forward_matches_hand_rolled_matrix_oracle():
    rng = np.random.default_rng(7)
    spec = MlpSpec(5, (11, 7), 2)
    params = init_params(spec, rng)
    x = rng.standard_normal((6, 5))

    h = x
    for i, (w, b) in enumerate(params.views()):
        h = h @ w.T + b
        if i < 2:
            h = np.tanh(h)
    assert np.max(np.abs(mlp_forward(params, x) - h)) < 1e-12


def test_forward_rejects_wrong_input_width():
    spec = MlpSpec(4, (8,), 1)
    params = init_params(spec, np.random.default_rng(0))
    with pytest.raises(ValueError):
        mlp_forward(params, np.zeros(5))


def test_forward_is_bitwise_deterministic():
    rng = np.random.default_rng(3)
    spec = MlpSpec(9, (16, 16), 4)
    params = init_params(spec, rng)
    x = rng.standard_normal((32, 9))
    a = mlp_forward(params, x)
    b = mlp_forward(params, x)
    assert np.array_equal(a, b)


def test_grad_of_quadratic_is_params():
    spec = MlpSpec(2, (3,), 1)
    rng = np.random.default_rng(11)
    params = init_params(spec, rng)

    def loss_fn(tape, leaves):
        total = None
        for w, b in leaves:
            for v in (w, b):
                term = vsum(v * v)
                total = term if total is None else total + term
        return total * 0.5

    g = grad_scalar(loss_fn, params)
    assert np.allclose(g, params.values, atol=1e-15)


def test_grad_of_constant_is_zero():
    spec = MlpSpec(2, (3,), 1)
    params = init_params(spec, np.random.default_rng(1))

    def loss_fn(tape, leaves):
        return tape.const(4.2) * 1.0

    g = grad_scalar(loss_fn, params)
    assert np.all(g == 0.0)


def test_grad_is_bitwise_repeatable():
    rng = np.random.default_rng(5)
    spec = MlpSpec(6, (12, 12), 1)
    params = init_params(spec, rng)
    loss_fn = _loss_from_forward(rng.standard_normal((10, 6)))
    g1 = grad_scalar(loss_fn, params)
    g2 = grad_scalar(loss_fn, params)
    assert np.array_equal(g1, g2)


def test_grad_matches_finite_differences_on_three_layer_net():
    rng = np.random.default_rng(13)
    spec = MlpSpec(4, (10, 10), 3)
    params = init_params(spec, rng)
    loss_fn = _loss_from_forward(rng.standard_normal((8, 4)))
    err = finite_diff_check(loss_fn, params, epsilon=1e-5)
    assert err < 1e-4


def test_finite_diff_check_quadratic_tight():
    spec = MlpSpec(3, (), 2)
    params = init_params(spec, np.random.default_rng(2))

    def loss_fn(tape, leaves):
        total = None
        for w, b in leaves:
            for v in (w, b):
                term = vsum(v * v)
                total = term if total is None else total + term
        return total * 0.5

    assert finite_diff_check(loss_fn, params, epsilon=1e-5) < 1e-9


def test_finite_diff_check_detects_planted_fault():
    rng = np.random.default_rng(17)
    spec = MlpSpec(3, (6,), 1)
    params = init_params(spec, rng)
    x = rng.standard_normal((5, 3))

    real_loss = _loss_from_forward(x)
    honest = grad_scalar(real_loss, params)
    bad_coord = int(np.argmax(np.abs(honest)))

    class Corrupted:
        """Wraps the loss but doubles one reported gradient coordinate."""

        def __call__(self, tape, leaves):
            return real_loss(tape, leaves)

    import dsac_h.nets as nets

    orig = nets.grad_scalar

    def corrupted_grad(loss_fn, p):
        g = orig(loss_fn, p)
        g = g.copy()
        g[bad_coord] *= 2.0
        return g

    nets.grad_scalar = corrupted_grad
    try:
        err = nets.finite_diff_check(Corrupted(), params, epsilon=1e-5)
    finally:
        nets.grad_scalar = orig
    assert err > 0.5


def test_grad_scalar_raises_on_nonfinite_loss():
    spec = MlpSpec(2, (), 1)
    params = init_params(spec, np.random.default_rng(4))

    def loss_fn(tape, leaves):
        from dsac_h.autodiff import log

        return vsum(log(tape.const(np.array([-1.0])))) + vsum(leaves[0][0])

    with np.errstate(invalid="ignore"):
        with pytest.raises(NumericalError):
            grad_scalar(loss_fn, params)


def test_param_vector_rejects_nonfinite_and_wrong_length():
    spec = MlpSpec(2, (), 1)
    with pytest.raises(NumericalError):
        ParamVector(np.full(spec.param_count, np.nan), spec)
    with pytest.raises(ValueError):
        ParamVector(np.zeros(spec.param_count + 1), spec)


def test_zero_output_head_zeroes_function():
    rng = np.random.default_rng(8)
    spec = MlpSpec(3, (7,), 2)
    params = zero_output_head(init_params(spec, rng))
    out = mlp_forward(params, rng.standard_normal((4, 3)))
    assert np.all(out == 0.0)


def test_two_backwards_on_one_tape_are_independent():
    rng = np.random.default_rng(21)
    spec = MlpSpec(3, (5,), 2)
    params = init_params(spec, rng)
    x = rng.standard_normal((4, 3))

    tape = Tape()
    leaves = leaf_views(tape, params)
    out = mlp_apply(leaves, tape.const(x))
    flat = [v for pair in leaves for v in pair]
    from dsac_h.autodiff import col_slice

    loss_a = vmean(col_slice(out, 0, 1))
    loss_b = vmean(col_slice(out, 1, 2))
    ga = backward(loss_a, flat)
    gb = backward(loss_b, flat)

    def single(col):
        def loss_fn(t, lv):
            return vmean(col_slice(mlp_apply(lv, t.const(x)), col, col + 1))

        return grad_scalar(loss_fn, params)

    ga_flat = np.concatenate([g.ravel() for g in ga])
    gb_flat = np.concatenate([g.ravel() for g in gb])
    assert np.array_equal(ga_flat, single(0))
    assert np.array_equal(gb_flat, single(1))
