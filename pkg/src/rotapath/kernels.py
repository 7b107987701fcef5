"""Kernel dispatch: compiled extension when present, numpy fallback otherwise.

Set ROTAPATH_PURE_PYTHON=1 to force the fallback (used by the parity tests and
the benchmark). `COMPILED` reports which implementation is active.
"""

import os

from rotapath import _kernels_py

if os.environ.get("ROTAPATH_PURE_PYTHON"):
    _impl = _kernels_py
    COMPILED = False
else:
    try:
        from rotapath import _kernels as _impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        _impl = _kernels_py
        COMPILED = False

score_candidates = _impl.score_candidates
score_candidates_backward = _impl.score_candidates_backward
score_pairs = _impl.score_pairs
score_pairs_backward = _impl.score_pairs_backward
segment_softmax = _impl.segment_softmax
segment_softmax_backward = _impl.segment_softmax_backward
segment_weighted_sum = _impl.segment_weighted_sum
segment_weighted_sum_backward = _impl.segment_weighted_sum_backward
