"""Pure-numpy implementations of the hot numeric kernels.

Mirrors the compiled extension `rotapath._kernels` exactly; `rotapath.kernels`
picks whichever is available at import time. Every function takes and returns
C-contiguous float64 arrays. `norm` is 1 for the per-component complex-modulus
sum (L1) and 2 for the Euclidean norm over the stacked real/imaginary parts.
"""

import numpy as np

_EPS = 1e-30  # guards the non-differentiable point of the norms


def score_candidates(hr_re, hr_im, c_re, c_im, norm):
    """Negated distance between one complex vector and N candidates.

    hr_re, hr_im: (d,); c_re, c_im: (N, d). Returns (N,).
    """
    dre = hr_re[None, :] - c_re
    dim = hr_im[None, :] - c_im
    if norm == 1:
        return -np.sqrt(dre * dre + dim * dim).sum(axis=1)
    return -np.sqrt((dre * dre + dim * dim).sum(axis=1))


def score_candidates_backward(hr_re, hr_im, c_re, c_im, norm, gout):
    """Gradients of score_candidates given upstream gout (N,).

    Returns (g_hr_re, g_hr_im, g_c_re, g_c_im).
    """
    dre = hr_re[None, :] - c_re
    dim = hr_im[None, :] - c_im
    if norm == 1:
        mod = np.sqrt(dre * dre + dim * dim)
        scale = -gout[:, None] / np.maximum(mod, _EPS)
    else:
        dist = np.sqrt((dre * dre + dim * dim).sum(axis=1))
        scale = (-gout / np.maximum(dist, _EPS))[:, None]
    g_re = scale * dre
    g_im = scale * dim
    return g_re.sum(axis=0), g_im.sum(axis=0), -g_re, -g_im


def score_pairs(hr_re, hr_im, t_re, t_im, norm):
    """Row-wise negated distance between paired complex vectors.

    All inputs (B, d). Returns (B,).
    """
    dre = hr_re - t_re
    dim = hr_im - t_im
    if norm == 1:
        return -np.sqrt(dre * dre + dim * dim).sum(axis=1)
    return -np.sqrt((dre * dre + dim * dim).sum(axis=1))


def score_pairs_backward(hr_re, hr_im, t_re, t_im, norm, gout):
    """Gradients of score_pairs. Returns (g_hr_re, g_hr_im, g_t_re, g_t_im)."""
    dre = hr_re - t_re
    dim = hr_im - t_im
    if norm == 1:
        mod = np.sqrt(dre * dre + dim * dim)
        scale = -gout[:, None] / np.maximum(mod, _EPS)
    else:
        dist = np.sqrt((dre * dre + dim * dim).sum(axis=1))
        scale = (-gout / np.maximum(dist, _EPS))[:, None]
    g_re = scale * dre
    g_im = scale * dim
    return g_re, g_im, -g_re, -g_im


def segment_softmax(logits, offsets):
    """Softmax within each [offsets[s], offsets[s+1]) slice of logits."""
    out = np.empty_like(logits)
    for s in range(offsets.shape[0] - 1):
        lo, hi = offsets[s], offsets[s + 1]
        if hi == lo:
            continue
        seg = logits[lo:hi]
        e = np.exp(seg - seg.max())
        out[lo:hi] = e / e.sum()
    return out


def segment_softmax_backward(weights, offsets, gout):
    """Jacobian-vector product of segment_softmax: w * (g - sum(w*g))."""
    glogits = np.empty_like(weights)
    for s in range(offsets.shape[0] - 1):
        lo, hi = offsets[s], offsets[s + 1]
        if hi == lo:
            continue
        w = weights[lo:hi]
        g = gout[lo:hi]
        glogits[lo:hi] = w * (g - np.dot(w, g))
    return glogits


def segment_weighted_sum(values, weights, offsets):
    """Per-segment weighted sum of rows. values (M, D), weights (M,) -> (S, D)."""
    n_seg = offsets.shape[0] - 1
    out = np.zeros((n_seg, values.shape[1]))
    weighted = values * weights[:, None]
    nonempty = offsets[:-1] < offsets[1:]
    if nonempty.any():
        sums = np.add.reduceat(weighted, offsets[:-1][nonempty], axis=0)
        out[nonempty] = sums
    return out


def segment_weighted_sum_backward(values, weights, offsets, gout):
    """Gradients of segment_weighted_sum. Returns (g_values, g_weights)."""
    seg_ids = np.repeat(
        np.arange(offsets.shape[0] - 1), np.diff(offsets).astype(np.int64)
    )
    g_rows = gout[seg_ids]
    g_values = g_rows * weights[:, None]
    g_weights = (g_rows * values).sum(axis=1)
    return g_values, g_weights
