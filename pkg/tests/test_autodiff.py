"""Finite-difference checks for every autodiff primitive the model uses."""

import numpy as np
import pytest

from rotapath import autodiff as ad


def fd_grad(fn, x, eps=1e-6):
    """Central finite differences of a scalar function of one array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.shape[0]):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(x)
        flat[i] = orig - eps
        lo = fn(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def check_op(build, x0, rtol=1e-6, atol=1e-8):
    """build(tensor) must return a scalar tensor; compares backward against
    central differences."""
    x0 = np.asarray(x0, dtype=np.float64)

    def value(x):
        return float(build(ad.Tensor(x.copy())).data)

    t = ad.Tensor(x0.copy(), requires_grad=True)
    out = build(t)
    out.backward()
    np.testing.assert_allclose(t.grad, fd_grad(value, x0), rtol=rtol, atol=atol)


RNG = np.random.default_rng(0)


def test_add_mul_broadcast():
    b = RNG.normal(size=(3,))
    check_op(lambda x: ad.total(ad.mul(ad.add(x, b), x)), RNG.normal(size=(4, 3)))


def test_sub_scale():
    check_op(lambda x: ad.total(ad.scale(ad.sub(x, 2.0), -1.5)), RNG.normal(size=5))


def test_matmul_both_sides():
    w = RNG.normal(size=(4, 3))
    check_op(lambda x: ad.total(ad.matmul(x, w)), RNG.normal(size=(2, 4)))
    x = RNG.normal(size=(2, 4))

    def via_weight(wt):
        return ad.total(ad.matmul(ad.Tensor(x), wt))

    check_op(via_weight, w)


def test_vector_matmul():
    w = RNG.normal(size=(4, 3))
    check_op(lambda x: ad.total(ad.matmul(x, w)), RNG.normal(size=4))


def test_relu_sin_cos():
    check_op(lambda x: ad.total(ad.relu(x)), RNG.normal(size=7) + 0.05)
    check_op(lambda x: ad.total(ad.sin(x)), RNG.normal(size=7))
    check_op(lambda x: ad.total(ad.cos(x)), RNG.normal(size=7))


def test_mean_axes():
    check_op(lambda x: ad.mean(x), RNG.normal(size=(3, 4)))
    check_op(lambda x: ad.total(ad.mean(x, axis=0)), RNG.normal(size=(3, 4)))


def test_reshape_narrow_concat():
    check_op(lambda x: ad.total(ad.reshape(x, (6,))), RNG.normal(size=(2, 3)))
    check_op(lambda x: ad.total(ad.narrow(x, 1, 3)), RNG.normal(size=(2, 4)))
    other = RNG.normal(size=(2, 2))
    check_op(lambda x: ad.total(ad.concat([x, other], axis=1)), RNG.normal(size=(2, 3)))


def test_gather_rows_accumulates_duplicates():
    idx = np.array([0, 2, 0, 1])
    check_op(lambda x: ad.total(ad.gather_rows(x, idx)), RNG.normal(size=(3, 4)))


def test_logsigmoid():
    check_op(lambda x: ad.total(ad.logsigmoid(x)), RNG.normal(size=9) * 3)


def test_softmax_cross_entropy_grad_is_probs_minus_onehot():
    logits = RNG.normal(size=6)
    t = ad.Tensor(logits.copy(), requires_grad=True)
    loss = ad.softmax_cross_entropy(t, 2)
    loss.backward()
    e = np.exp(logits - logits.max())
    probs = e / e.sum()
    probs[2] -= 1.0
    np.testing.assert_allclose(t.grad, probs, rtol=1e-12)
    check_op(lambda x: ad.softmax_cross_entropy(x, 2), logits)


def test_segment_softmax_grad():
    offsets = np.array([0, 2, 5, 5, 8], dtype=np.int64)
    v = RNG.normal(size=(8, 3))

    def build(x):
        w = ad.segment_softmax(x, offsets)
        return ad.total(ad.mul(ad.segment_weighted_sum(ad.Tensor(v), w, offsets),
                               np.arange(1.0, 4.0)))

    check_op(build, RNG.normal(size=8))


def test_segment_weighted_sum_grads():
    offsets = np.array([0, 3, 7], dtype=np.int64)
    w = RNG.normal(size=7)
    check_op(
        lambda x: ad.total(ad.segment_weighted_sum(x, ad.Tensor(w), offsets)),
        RNG.normal(size=(7, 2)),
    )
    v = RNG.normal(size=(7, 2))
    check_op(
        lambda x: ad.total(ad.segment_weighted_sum(ad.Tensor(v), x, offsets)),
        w,
    )


@pytest.mark.parametrize("norm", [1, 2])
def test_score_candidates_grads(norm):
    d, n = 5, 4
    hr_im = RNG.normal(size=d)
    c_re, c_im = RNG.normal(size=(n, d)), RNG.normal(size=(n, d))
    g = RNG.normal(size=n)

    def via_hr_re(x):
        return ad.total(ad.mul(ad.score_candidates(x, hr_im, c_re, c_im, norm), g))

    check_op(via_hr_re, RNG.normal(size=d), rtol=1e-5)

    hr_re = RNG.normal(size=d)

    def via_c_im(x):
        return ad.total(ad.mul(ad.score_candidates(hr_re, hr_im, c_re, x, norm), g))

    check_op(via_c_im, c_im, rtol=1e-5)


@pytest.mark.parametrize("norm", [1, 2])
def test_score_pairs_grads(norm):
    n, d = 4, 3
    a_im, b_re, b_im = (RNG.normal(size=(n, d)) for _ in range(3))
    g = RNG.normal(size=n)

    def build(x):
        return ad.total(ad.mul(ad.score_pairs(x, a_im, b_re, b_im, norm), g))

    check_op(build, RNG.normal(size=(n, d)), rtol=1e-5)


def test_complex_mul_matches_numpy_complex():
    a = RNG.normal(size=6) + 1j * RNG.normal(size=6)
    b = RNG.normal(size=6) + 1j * RNG.normal(size=6)
    re, im = ad.complex_mul(
        ad.Tensor(a.real), ad.Tensor(a.imag), ad.Tensor(b.real), ad.Tensor(b.imag)
    )
    np.testing.assert_allclose(re.data + 1j * im.data, a * b, atol=1e-12)


def test_no_grad_skips_graph():
    t = ad.Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        out = ad.mul(t, t)
    assert out._backward is None and not out.requires_grad


def test_backward_requires_scalar():
    t = ad.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        ad.mul(t, t).backward()


def test_ffn_gradients():
    rng = np.random.default_rng(5)
    ffn = ad.Ffn(4, 8, 3, rng)
    x0 = rng.normal(size=4)

    def via_input(x):
        return ad.total(ffn(x))

    check_op(via_input, x0, rtol=1e-5)

    x = ad.Tensor(x0)

    def via_w1(w):
        saved = ffn.lin1.w
        ffn.lin1.w = w if isinstance(w, ad.Tensor) else ad.Tensor(w)
        out = ad.total(ffn(x))
        ffn.lin1.w = saved
        return out

    check_op(via_w1, ffn.lin1.w.data.copy(), rtol=1e-5)
