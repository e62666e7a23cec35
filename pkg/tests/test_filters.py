import numpy as np
import pytest

from oracles import central_diff, rel_error
from privfilter.errors import DataError, ShapeError
from privfilter.filters import (FilterKind, FilterState, apply_filter,
                                filter_param_grad, identity_filter,
                                init_filter, linear_filter, load_filter,
                                pretrain_autoencoder, save_filter,
                                _unpack_mlp)


def _grad_objective(state, X, upstream):
    """Scalar objective whose parameter gradient filter_param_grad claims."""
    def fn(params):
        return float(np.sum(upstream * apply_filter(state.with_params(params), X)))
    return fn


def test_linear_apply_is_projection():
    rng = np.random.default_rng(0)
    U = rng.standard_normal((6, 3))
    X = rng.standard_normal((11, 6))
    out = apply_filter(linear_filter(U), X)
    np.testing.assert_allclose(out, X @ U, rtol=0, atol=0)


def test_identity_filter_passes_through():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((4, 5))
    np.testing.assert_array_equal(apply_filter(identity_filter(5), X), X)


def test_apply_is_deterministic_bitwise():
    rng = np.random.default_rng(2)
    state = init_filter(FilterKind.TWO_LAYER_SIGMOID, 7, 3, (5, 4), seed=3)
    X = rng.standard_normal((9, 7))
    first = apply_filter(state, X)
    second = apply_filter(state, X)
    np.testing.assert_array_equal(first, second)
    clone = FilterState(state.kind, state.params.copy(), 7, 3, (5, 4))
    np.testing.assert_array_equal(apply_filter(clone, X), first)


def test_linear_gradient_matches_finite_differences():
    rng = np.random.default_rng(10)
    for _ in range(20):
        D = int(rng.integers(2, 13))
        d = int(rng.integers(1, min(D, 4) + 1))
        n = int(rng.integers(1, 9))
        state = init_filter(FilterKind.LINEAR, D, d, seed=rng)
        X = rng.standard_normal((n, D))
        upstream = rng.standard_normal((n, d))
        grad = filter_param_grad(state, X, upstream)
        fd = central_diff(_grad_objective(state, X, upstream), state.params)
        assert rel_error(grad, fd) <= 1e-5


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(20):
        D = int(rng.integers(2, 13))
        d = int(rng.integers(1, 5))
        hidden = (int(rng.integers(2, 7)), int(rng.integers(2, 6)))
        n = int(rng.integers(1, 7))
        state = init_filter(FilterKind.TWO_LAYER_SIGMOID, D, d, hidden, seed=rng)
        X = rng.standard_normal((n, D))
        upstream = rng.standard_normal((n, d))
        grad = filter_param_grad(state, X, upstream)
        fd = central_diff(_grad_objective(state, X, upstream), state.params)
        assert rel_error(grad, fd) <= 1e-5


def test_init_respects_fan_in_bounds():
    state = init_filter(FilterKind.LINEAR, 16, 4, seed=0)
    assert np.abs(state.params).max() <= 1.0 / 4.0
    mlp = init_filter(FilterKind.TWO_LAYER_SIGMOID, 9, 2, (5, 4), seed=0)
    for (w, b), fan_in in zip(_unpack_mlp(mlp), (9, 5, 4)):
        bound = 1.0 / np.sqrt(fan_in)
        assert np.abs(w).max() <= bound
        assert np.abs(b).max() <= bound


def test_init_is_seeded():
    a = init_filter(FilterKind.TWO_LAYER_SIGMOID, 6, 2, (4, 3), seed=42)
    b = init_filter(FilterKind.TWO_LAYER_SIGMOID, 6, 2, (4, 3), seed=42)
    np.testing.assert_array_equal(a.params, b.params)
    c = init_filter(FilterKind.TWO_LAYER_SIGMOID, 6, 2, (4, 3), seed=43)
    assert not np.array_equal(a.params, c.params)


def test_state_validation():
    with pytest.raises(ShapeError):
        FilterState(FilterKind.LINEAR, np.zeros(5), 3, 2)  # wrong count
    with pytest.raises(ShapeError):
        FilterState(FilterKind.LINEAR, np.full(6, np.nan), 3, 2)
    with pytest.raises(ShapeError):
        FilterState(FilterKind.LINEAR, np.zeros(12), 3, 4)  # d > D
    with pytest.raises(ShapeError):
        FilterState(FilterKind.TWO_LAYER_SIGMOID, np.zeros(10), 3, 2, (4,))
    with pytest.raises(ShapeError):
        init_filter(FilterKind.TWO_LAYER_SIGMOID, 3, 2, (4, 3), seed=0).as_matrix()


def test_params_are_read_only():
    state = linear_filter(np.eye(3))
    with pytest.raises(ValueError):
        state.params[0] = 5.0


def test_apply_rejects_wrong_width():
    state = linear_filter(np.eye(3))
    with pytest.raises(ShapeError):
        apply_filter(state, np.zeros((4, 5)))
    with pytest.raises(ShapeError):
        filter_param_grad(state, np.zeros((4, 3)), np.zeros((4, 2)))


def test_pretrain_zero_epochs_returns_seeded_init():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((30, 8))
    state = pretrain_autoencoder(X, 3, (6, 4), noise_level=0.0, epochs=0, seed=17)
    reference = init_filter(FilterKind.TWO_LAYER_SIGMOID, 8, 3, (6, 4), seed=17)
    np.testing.assert_array_equal(state.params, reference.params)


def test_pretrain_reduces_layer_losses():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((60, 10)) @ np.diag(np.linspace(0.2, 2.0, 10))
    state, histories = pretrain_autoencoder(X, 3, (7, 5), noise_level=0.1,
                                            epochs=40, step=0.01, seed=1,
                                            return_losses=True)
    assert state.layer_dims == (10, 7, 5, 3)
    assert len(histories) == 3
    for losses in histories:
        assert losses.shape == (41,)
        assert losses[-1] <= losses[0]


def test_pretrain_is_deterministic():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((25, 6))
    a = pretrain_autoencoder(X, 2, (5, 4), epochs=5, seed=9)
    b = pretrain_autoencoder(X, 2, (5, 4), epochs=5, seed=9)
    np.testing.assert_array_equal(a.params, b.params)


def test_pretrain_input_validation():
    with pytest.raises(DataError):
        pretrain_autoencoder(np.zeros((4, 3)), 2, (3, 2), noise_level=-1.0)
    with pytest.raises(DataError):
        pretrain_autoencoder(np.zeros((4, 3)), 2, (3, 2), epochs=-1)
    with pytest.raises(DataError):
        pretrain_autoencoder(np.zeros(3), 2, (3, 2))


def test_save_load_round_trip(tmp_path):
    for state in (init_filter(FilterKind.LINEAR, 6, 2, seed=0),
                  init_filter(FilterKind.TWO_LAYER_SIGMOID, 6, 2, (4, 3), seed=0)):
        path = tmp_path / f"{state.kind.value}.filter"
        save_filter(state, path)
        loaded = load_filter(path)
        assert loaded.kind == state.kind
        assert loaded.layer_dims == state.layer_dims
        np.testing.assert_array_equal(loaded.params, state.params)


def test_load_rejects_wrong_record(tmp_path):
    from privfilter.records import write_record
    path = tmp_path / "other.rec"
    write_record(path, {"record": "something_else"}, np.zeros(3))
    with pytest.raises(DataError):
        load_filter(path)
