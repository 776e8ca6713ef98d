import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ltrfs.functional import (
    concrete_relaxation,
    entropy,
    gumbel_from_uniform,
    log_softmax,
    sample_gumbel,
    softmax,
    sparsemax,
    sparsemax_margin,
)
from ltrfs.gradcheck import grad_check
from ltrfs.nn import MLP, BatchNorm, Linear, Ranker, load_checkpoint, save_checkpoint
from ltrfs.optim import Adam, AdamState, adam_step
from ltrfs.tensor import Tensor, batch_norm, concatenate, linear, no_grad, stack

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def simplex_projection_bisection(z):
    """Projection onto the simplex by bisection on the threshold, then an exact support solve."""
    z = np.asarray(z, dtype=np.float64)
    lo, hi = z.min() - 1.0, z.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(z - mid, 0).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    support = z > 0.5 * (lo + hi)
    tau = (z[support].sum() - 1.0) / support.sum()
    return np.maximum(z - tau, 0.0)


# -- softmax -------------------------------------------------------------------


def test_softmax_examples():
    np.testing.assert_allclose(softmax(np.array([0.0, 0.0])).data, [0.5, 0.5], atol=0)
    for c in (-1e4, 0.0, 3.7, 1e4):
        assert softmax(np.array([c])).data.tolist() == [1.0]
    # 1 / (1 + e^-1)
    np.testing.assert_allclose(softmax(np.array([1.0, 0.0])).data, [0.7310585786300049, 0.2689414213699951], atol=1e-15)


def test_softmax_rejects_empty():
    with pytest.raises(ValueError):
        softmax(np.array([]))


@given(arrays(np.float64, st.integers(1, 20), elements=finite), finite)
def test_softmax_normalized_and_shift_invariant(z, c):
    p = softmax(z).data
    assert np.all(p >= 0) and np.all(p <= 1)
    assert abs(p.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(softmax(z + c).data, p, atol=1e-12)


def test_log_softmax_matches_log_of_softmax():
    z = np.random.default_rng(0).normal(size=(4, 7)) * 5
    np.testing.assert_allclose(log_softmax(z).data, np.log(softmax(z).data), atol=1e-12)


# -- sparsemax -----------------------------------------------------------------


def test_sparsemax_examples():
    assert sparsemax(np.array([1.0, 0.0])).data.tolist() == [1.0, 0.0]
    np.testing.assert_allclose(sparsemax(np.array([0.1, 0.1, 0.1])).data, [1 / 3] * 3, atol=1e-15)
    assert sparsemax(np.array([2.0, 0.0])).data.tolist() == [1.0, 0.0]


def test_sparsemax_rejects_empty():
    with pytest.raises(ValueError):
        sparsemax(np.array([]))


def test_sparsemax_matches_bisection_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        d = int(rng.integers(2, 33))
        z = rng.normal(size=d) * rng.uniform(0.1, 5)
        np.testing.assert_allclose(sparsemax(z).data, simplex_projection_bisection(z), atol=1e-10)


def test_sparsemax_rows_independent():
    z = np.random.default_rng(2).normal(size=(5, 9))
    batched = sparsemax(z).data
    for i in range(5):
        np.testing.assert_array_equal(batched[i], sparsemax(z[i]).data)


@given(arrays(np.float64, st.integers(1, 16), elements=st.floats(-8, 8)), st.integers(-64, 64))
def test_sparsemax_shift_invariance_exact_for_dyadic_shift(z, k):
    # Integer and dyadic-grid inputs keep every shifted value representable.
    z = np.round(z * 8) / 8
    np.testing.assert_array_equal(sparsemax(z + k / 4).data, sparsemax(z).data)


@given(arrays(np.float64, st.integers(1, 16), elements=finite), finite)
def test_sparsemax_shift_invariance_general(z, c):
    np.testing.assert_allclose(sparsemax(z + c).data, sparsemax(z).data, atol=1e-12)


@given(arrays(np.float64, st.integers(1, 32), elements=finite))
def test_sparsemax_on_simplex(z):
    p = sparsemax(z).data
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-10


def test_sparsemax_backward_is_support_projection():
    z = np.array([1.0, 0.8, -2.0, 0.5])
    x = Tensor(z, requires_grad=True)
    g = np.array([1.0, 2.0, 3.0, 4.0])
    (sparsemax(x) * g).sum().backward()
    support = sparsemax(z).data > 0
    expected = np.where(support, g - g[support].mean(), 0.0)
    np.testing.assert_allclose(x.grad, expected, atol=1e-15)


# -- Gumbel / concrete -----------------------------------------------------------


def test_gumbel_from_uniform_examples():
    assert gumbel_from_uniform(1 / math.e) == pytest.approx(0.0, abs=1e-15)
    assert gumbel_from_uniform(math.exp(-math.e)) == pytest.approx(-1.0, abs=1e-15)


def test_gumbel_clamps_endpoints():
    g = gumbel_from_uniform(np.array([0.0, 1.0]))
    assert np.all(np.isfinite(g))


def test_gumbel_mean_is_euler_mascheroni():
    g = sample_gumbel(np.random.default_rng(3), 10**6)
    assert abs(g.mean() - 0.5772156649) < 0.01


def test_concrete_examples():
    half = np.log([0.5, 0.5])
    for tau in (0.01, 1.0, 100.0):
        np.testing.assert_allclose(concrete_relaxation(half, np.zeros(2), tau).data, [0.5, 0.5], atol=1e-15)
    c = concrete_relaxation(np.array([1.0, 0.0]), np.zeros(2), 1.0).data
    np.testing.assert_allclose(c, softmax(np.array([1.0, 0.0])).data, atol=1e-15)


def test_concrete_errors():
    with pytest.raises(ValueError):
        concrete_relaxation(np.zeros(3), np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        concrete_relaxation(np.zeros(3), np.zeros(3), -1.0)
    with pytest.raises(ValueError):
        concrete_relaxation(np.zeros(3), np.zeros(2), 1.0)


def test_concrete_low_temperature_is_one_hot():
    rng = np.random.default_rng(4)
    for _ in range(200):
        d = int(rng.integers(2, 12))
        logp = log_softmax(rng.normal(size=d)).data
        g = sample_gumbel(rng, d)
        top = np.sort(logp + g)[-2:]
        if top[1] - top[0] < 0.2:
            continue  # 1e-6 closeness needs a margin of ~0.14 at tau=0.01
        c = concrete_relaxation(logp, g, 0.01).data
        onehot = np.eye(d)[np.argmax(logp + g)]
        np.testing.assert_allclose(c, onehot, atol=1e-6)


@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-20, 0)),
       st.floats(0.01, 50))
def test_concrete_is_distribution(logp, tau):
    g = sample_gumbel(np.random.default_rng(0), logp.shape)
    c = concrete_relaxation(logp, g, tau).data
    assert np.all((c >= 0) & (c <= 1))
    assert abs(c.sum() - 1.0) <= 1e-12


def test_entropy_zero_for_one_hot_and_log_d_for_uniform():
    assert entropy(np.array([0.0, 1.0, 0.0])).data == 0.0
    assert entropy(np.full(4, 0.25)).data == pytest.approx(math.log(4), abs=1e-15)


# -- autodiff ------------------------------------------------------------------


def _rng_points(seed, *shapes):
    rng = np.random.default_rng(seed)
    return [rng.normal(size=s) for s in shapes]


@pytest.mark.parametrize(
    "fn,shapes",
    [
        (lambda a, b: a + b, [(3, 4), (4,)]),
        (lambda a, b: a - b, [(3, 4), (3, 1)]),
        (lambda a, b: a * b, [(3, 4), (1, 4)]),
        (lambda a, b: a / (b * b + 1.0), [(3, 4), (3, 4)]),
        (lambda a: (a * a + 1.0) ** 1.5, [(5,)]),
        (lambda a, b: a @ b, [(3, 4), (4, 2)]),
        (lambda a, b: a @ b, [(4,), (4, 2)]),
        (lambda a: a[1:, ::2], [(3, 4)]),
        (lambda a: a[:, np.array([0, 2, 2])], [(3, 4)]),
        (lambda a: a.sum(axis=0), [(3, 4)]),
        (lambda a: a.mean(axis=1, keepdims=True), [(3, 4)]),
        (lambda a: a.max(axis=0), [(3, 4)]),
        (lambda a: a.reshape(2, 6).T, [(3, 4)]),
        (lambda a: a.exp(), [(6,)]),
        (lambda a: (a * a + 0.5).log(), [(6,)]),
        (lambda a: a.tanh(), [(6,)]),
        (lambda a: a.sigmoid(), [(6,)]),
        (lambda a: 2.0 - a, [(6,)]),
        (lambda a: 1.0 / (a * a + 1.0), [(6,)]),
        (lambda a, b: stack([a, b], axis=0), [(3,), (3,)]),
        (lambda a, b: concatenate([a, b], axis=-1), [(2, 3), (2, 2)]),
        (lambda x, w, b: linear(x, w, b), [(5, 3), (3, 2), (2,)]),
    ],
)
def test_elementary_ops_match_finite_differences(fn, shapes):
    report = grad_check(fn, _rng_points(len(shapes), *shapes))
    assert report.passed, report.max_rel_error


def test_relu_and_clip_away_from_kinks():
    x = np.array([-1.5, -0.3, 0.4, 2.0])
    assert grad_check(lambda a: a.relu(), x).passed
    assert grad_check(lambda a: a.clip(-1.0, 1.0), x).passed


def test_batch_norm_gradients_both_modes():
    x, g, b = _rng_points(7, (6, 3), (3,), (3,))
    train = lambda x, g, b: batch_norm(x, g, b)[0]
    assert grad_check(train, [x, g, b]).passed
    mean, var = np.array([0.1, -0.2, 0.3]), np.array([1.5, 0.5, 2.0])
    frozen = lambda x, g, b: batch_norm(x, g, b, mean=mean, var=var)[0]
    assert grad_check(frozen, [x, g, b]).passed


def test_grad_check_linear_map_is_exact():
    w = np.random.default_rng(8).normal(size=(4, 3))
    report = grad_check(lambda x: x @ Tensor(w), np.ones((2, 4)), tolerance=1e-9)
    assert report.passed, report.max_rel_error


def test_grad_check_softmax_cross_entropy():
    y = np.array([2.0, 0.0, 1.0, 0.0])
    fn = lambda s: -(log_softmax(s) * y).mean()
    assert grad_check(fn, np.random.default_rng(9).normal(size=4)).passed


def test_grad_check_sparsemax_stable_support():
    rng = np.random.default_rng(10)
    z = rng.normal(size=6)
    assert sparsemax_margin(z) > 1e-3
    assert grad_check(lambda a: sparsemax(a), z).passed


def test_grad_check_detects_wrong_gradient():
    def broken(a):
        return Tensor._from_op(a.data**2, (a,), lambda g: (g * a.data,))  # should be 2a

    assert not grad_check(broken, np.array([1.0, 2.0])).passed


def test_gradients_accumulate_across_uses():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (a * a + a).sum().backward()
    np.testing.assert_array_equal(a.grad, [3.0, 5.0])


def test_no_grad_builds_no_graph():
    a = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        b = (a * 2).sum()
    assert not b.requires_grad


def test_backward_requires_scalar_or_grad():
    a = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (a * 2).backward()


# -- Adam ----------------------------------------------------------------------


def test_adam_zero_gradient_leaves_params():
    p = np.array([1.0, -2.0])
    state = AdamState()
    for _ in range(3):
        adam_step([p], [np.zeros(2)], state)
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_adam_first_step_closed_form():
    # Bias-corrected moments equal g and g^2 after one step.
    for g in (0.3, -2.0, 1e-3):
        p = np.array([1.0])
        adam_step([p], [np.array([g])], AdamState(lr=1e-3))
        assert p[0] == pytest.approx(1.0 - 1e-3 * g / (abs(g) + 1e-8), rel=0, abs=1e-15)


def test_adam_second_step_closed_form():
    g1, g2, lr, b1, b2, eps = 0.5, -0.25, 1e-2, 0.9, 0.999, 1e-8
    p = np.array([0.0])
    state = AdamState(lr=lr)
    adam_step([p], [np.array([g1])], state)
    adam_step([p], [np.array([g2])], state)
    m = (1 - b1) * (b1 * g1 + g2) / (1 - b1**2)
    v = (1 - b2) * (b2 * g1**2 + g2**2) / (1 - b2**2)
    first = -lr * g1 / (abs(g1) + eps)
    assert p[0] == pytest.approx(first - lr * m / (math.sqrt(v) + eps), abs=1e-15)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step([np.zeros(3)], [np.zeros(2)], AdamState())
    with pytest.raises(ValueError):
        adam_step([np.zeros(3)], [], AdamState())


def test_adam_replay_is_bit_identical():
    def run():
        rng = np.random.default_rng(11)
        model = MLP(4, (8,), 1, rng)
        opt = Adam(model.parameters())
        for _ in range(5):
            x = rng.normal(size=(6, 4))
            loss = (model(x) * model(x)).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
        return [p.data.copy() for p in model.parameters()]

    for a, b in zip(run(), run()):
        np.testing.assert_array_equal(a, b)


# -- layers and checkpoints ----------------------------------------------------


def test_batchnorm_running_statistics():
    bn = BatchNorm(2)
    x = np.array([[1.0, 2.0], [3.0, 6.0]])
    bn(Tensor(x))
    np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=0))
    np.testing.assert_allclose(bn.running_var, 0.9 + 0.1 * x.var(axis=0))
    bn.eval()
    out = bn(Tensor(x)).data
    np.testing.assert_allclose(out, (x - bn.running_mean) / np.sqrt(bn.running_var + 1e-5))


def test_mlp_rejects_wrong_width():
    model = MLP(3, (4,), 1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        model(np.zeros((2, 5)))


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    a = Ranker(5, (7, 3), rng)
    a(rng.normal(size=(4, 5)))  # move BN running statistics
    json_path, bin_path = save_checkpoint(a, tmp_path / "ranker")
    manifest = json_path.read_text()
    assert '"float64"' in manifest and '"little"' in manifest
    n_values = sum(v.size for v in a.state_dict().values())
    assert bin_path.stat().st_size == 8 * n_values

    b = Ranker(5, (7, 3), np.random.default_rng(99))
    load_checkpoint(b, tmp_path / "ranker")
    for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert ka == kb
        np.testing.assert_array_equal(va, vb)


def test_checkpoint_blob_size_checked(tmp_path):
    a = Linear(2, 2, np.random.default_rng(0))
    save_checkpoint(a, tmp_path / "lin")
    (tmp_path / "lin.bin").write_bytes((tmp_path / "lin.bin").read_bytes() + b"\0" * 8)
    with pytest.raises(ValueError):
        load_checkpoint(a, tmp_path / "lin")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**16))
def test_linear_forward_matches_numpy(n, d, seed):
    rng = np.random.default_rng(seed)
    layer = Linear(d, 3, rng)
    x = rng.normal(size=(n, d))
    np.testing.assert_allclose(layer(Tensor(x)).data, x @ layer.weight.data + layer.bias.data, atol=1e-14)
