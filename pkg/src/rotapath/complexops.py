"""Dense complex-vector arithmetic: the representation space of entities,
relations, and the rotate-and-scale outputs.

A ComplexVec stores the real and imaginary parts as two equal-length float64
arrays. d always means the complex dimension; real storage is 2d.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

L1 = "l1"
L2 = "l2"
_NORMS = (L1, L2)


def norm_code(norm: str) -> int:
    """Map a norm name to the integer flag the kernels use."""
    if norm not in _NORMS:
        raise ValueError(f"unknown norm {norm!r}, expected one of {_NORMS}")
    return 1 if norm == L1 else 2


@dataclass(frozen=True)
class ComplexVec:
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.ascontiguousarray(self.re, dtype=np.float64)
        im = np.ascontiguousarray(self.im, dtype=np.float64)
        if re.ndim != 1 or im.ndim != 1:
            raise ValueError("ComplexVec parts must be 1-D")
        if re.shape != im.shape:
            raise ValueError(f"re/im length mismatch: {re.shape} vs {im.shape}")
        if not (np.isfinite(re).all() and np.isfinite(im).all()):
            raise ValueError("ComplexVec components must be finite")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @property
    def dim(self) -> int:
        return self.re.shape[0]

    def conj(self) -> ComplexVec:
        return ComplexVec(self.re, -self.im)


def _check_dims(a: ComplexVec, b: ComplexVec):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def ones(d: int) -> ComplexVec:
    """Multiplicative identity (1 + 0i per component)."""
    return ComplexVec(np.ones(d), np.zeros(d))


def hadamard(a: ComplexVec, b: ComplexVec) -> ComplexVec:
    """Component-wise complex product."""
    _check_dims(a, b)
    return ComplexVec(
        a.re * b.re - a.im * b.im,
        a.re * b.im + a.im * b.re,
    )


def from_polar(m: np.ndarray, theta: np.ndarray) -> ComplexVec:
    """Assemble m*cos(theta) + i*m*sin(theta).

    Negative m is allowed (a sign flip is a pi phase shift); no clamping.
    """
    m = np.asarray(m, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if m.shape != theta.shape:
        raise ValueError(f"dimension mismatch: {m.shape} vs {theta.shape}")
    return ComplexVec(m * np.cos(theta), m * np.sin(theta))


def modulus(a: ComplexVec) -> np.ndarray:
    """Component-wise modulus sqrt(re^2 + im^2)."""
    return np.sqrt(a.re * a.re + a.im * a.im)


def phase(a: ComplexVec) -> np.ndarray:
    """Component-wise phase in (-pi, pi]; zero components map to phase 0."""
    out = np.arctan2(a.im, a.re)
    # arctan2(-0.0, x<0) gives -pi; fold onto the (-pi, pi] convention
    out[out == -np.pi] = np.pi
    return out


def distance(a: ComplexVec, b: ComplexVec, norm: str = L1) -> float:
    """L1: sum of component moduli of a-b. L2: Euclidean norm over (re, im)."""
    _check_dims(a, b)
    dre = a.re - b.re
    dim = a.im - b.im
    sq = dre * dre + dim * dim
    if norm_code(norm) == 1:
        return float(np.sqrt(sq).sum())
    return float(np.sqrt(sq.sum()))
