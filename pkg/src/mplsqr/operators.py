"""Linear operators that can be applied in any :class:`PrecisionSpec`.

An operator stores its data once in double and lazily builds a copy rounded
to each working format it is asked for (rounding ``A`` itself is part of
computing in lower precision).  Operators are immutable after construction;
the per-precision caches are filled on demand and the race between two
threads filling the same slot is benign.
"""
from __future__ import annotations

import numpy as np

from .precision import (
    F64,
    Kind,
    PrecisionSpec,
    dense_matvec,
    dense_tmatvec,
    round_array,
    to_working,
)

__all__ = ["DenseOperator", "BlurOperator", "as_operator"]


class DenseOperator:
    """Explicit ``m x n`` matrix."""

    def __init__(self, A):
        A = np.array(A, dtype=np.float64, order="C")
        if A.ndim != 2:
            raise ValueError("DenseOperator needs a 2-d array")
        self.matrix = A
        self.matrix.setflags(write=False)
        self._cache = {}

    @property
    def shape(self):
        return self.matrix.shape

    def __repr__(self):
        return f"DenseOperator(shape={self.shape})"

    def _working(self, spec: PrecisionSpec):
        key = spec.label
        hit = self._cache.get(key)
        if hit is None:
            if spec.kind is Kind.NATIVE64:
                hit = (self.matrix, None)
            elif spec.kind is Kind.NATIVE32:
                hit = (self.matrix.astype(np.float32), None)
            else:
                C = round_array(self.matrix, spec.t)
                hit = (C, np.asfortranarray(C))
            self._cache[key] = hit
        return hit

    def matvec(self, x, spec: PrecisionSpec = F64) -> np.ndarray:
        C, F = self._working(spec)
        return dense_matvec(C, x, spec, fortran=F)

    def rmatvec(self, y, spec: PrecisionSpec = F64) -> np.ndarray:
        C, _ = self._working(spec)
        return dense_tmatvec(C, y, spec)

    def to_dense(self) -> np.ndarray:
        return self.matrix


class BlurOperator:
    """Spatially invariant 2-D blur with zero boundary conditions.

    Acts on images of size ``N x N`` flattened in row-major order.  The
    point-spread function ``psf`` has odd side lengths and is centred; the
    forward map is the convolution ``y[i, j] = sum psf[a, b] x[i - a + r,
    j - b + s]`` with pixels outside the image taken as zero, and the adjoint
    is the corresponding correlation.

    The product is evaluated tap by tap (one shifted image per PSF entry),
    which gives every precision the same fixed accumulation order.
    """

    def __init__(self, psf, N: int):
        psf = np.array(psf, dtype=np.float64)
        if psf.ndim != 2 or psf.shape[0] % 2 == 0 or psf.shape[1] % 2 == 0:
            raise ValueError("psf must be 2-d with odd side lengths")
        if N < 1:
            raise ValueError("image size must be positive")
        self.psf = psf
        self.psf.setflags(write=False)
        self.N = int(N)
        r, s = psf.shape[0] // 2, psf.shape[1] // 2
        self._taps = [
            (a - r, b - s, psf[a, b])
            for a in range(psf.shape[0])
            for b in range(psf.shape[1])
            if psf[a, b] != 0.0
        ]
        self._cache = {}

    @property
    def shape(self):
        n = self.N * self.N
        return (n, n)

    def __repr__(self):
        return f"BlurOperator(N={self.N}, psf={self.psf.shape})"

    def _weights(self, spec: PrecisionSpec):
        key = spec.label
        hit = self._cache.get(key)
        if hit is None:
            w = to_working(np.array([v for _, _, v in self._taps]), spec)
            hit = [(di, dj, w[i]) for i, (di, dj, _) in enumerate(self._taps)]
            self._cache[key] = hit
        return hit

    def _apply(self, x, spec: PrecisionSpec, sign: int) -> np.ndarray:
        N = self.N
        x = np.asarray(x)
        if x.shape != (N * N,):
            raise ValueError(f"dimension mismatch: expected ({N * N},), got {x.shape}")
        X = x.astype(spec.dtype, copy=False).reshape(N, N)
        out = np.zeros((N, N), dtype=spec.dtype)
        emu = spec.kind is Kind.EMULATED
        for di, dj, w in self._weights(spec):
            # forward: out[i, j] += w * X[i - di, j - dj]; adjoint flips the shift
            di, dj = sign * di, sign * dj
            oi = slice(max(di, 0), N + min(di, 0))
            oj = slice(max(dj, 0), N + min(dj, 0))
            xi = slice(max(-di, 0), N + min(-di, 0))
            xj = slice(max(-dj, 0), N + min(-dj, 0))
            if emu:
                t = spec.t
                out[oi, oj] = round_array(out[oi, oj] + round_array(w * X[xi, xj], t), t)
            else:
                out[oi, oj] += w * X[xi, xj]
        return out.reshape(-1)

    def matvec(self, x, spec: PrecisionSpec = F64) -> np.ndarray:
        return self._apply(x, spec, +1)

    def rmatvec(self, y, spec: PrecisionSpec = F64) -> np.ndarray:
        return self._apply(y, spec, -1)

    def to_dense(self) -> np.ndarray:
        """Explicit matrix; only sensible for small ``N``."""
        n = self.N * self.N
        A = np.empty((n, n))
        e = np.zeros(n)
        for j in range(n):
            e[j] = 1.0
            A[:, j] = self.matvec(e)
            e[j] = 0.0
        return A


def as_operator(A):
    if hasattr(A, "matvec") and hasattr(A, "rmatvec"):
        return A
    return DenseOperator(A)
