"""Precision-parameterized scalar and vector arithmetic.

Three kinds of arithmetic are supported:

* ``f64`` -- native IEEE double, the host format.
* ``f32`` -- native IEEE single, using numpy ``float32`` arrays.
* ``emu<t>`` -- software emulation of a binary format with a ``t``-bit
  significand.  Every scalar operation is carried out in double and the
  result is rounded to ``t`` bits (round-half-to-even).  The exponent range of
  double is kept, so overflow and underflow of the emulated format are not
  modeled.

All roundings obey ``fl(a op b) = (a op b)(1 + eps)`` with ``|eps| <= u``
where ``u = 2**-t`` is the roundoff unit.  For reference, the roundoff units
of the IEEE formats are::

    half     2**-11  ~ 4.88e-4
    single   2**-24  ~ 5.96e-8
    double   2**-53  ~ 1.11e-16

Dot products and matrix-vector products in emulated arithmetic accumulate
strictly left to right, so runs are deterministic.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Kind",
    "PrecisionSpec",
    "F64",
    "F32",
    "emulated",
    "round_array",
    "round_scalar",
    "rounded_op",
    "to_working",
    "vec_axpy",
    "vec_scale",
    "vec_div",
    "vec_dot",
    "vec_norm",
    "mat_vec",
    "mat_tvec",
    "dense_matvec",
    "dense_tmatvec",
]


class Kind(enum.Enum):
    NATIVE64 = "f64"
    NATIVE32 = "f32"
    EMULATED = "emu"


_LABEL_RE = re.compile(r"^emu(\d+)$")


@dataclass(frozen=True)
class PrecisionSpec:
    """Floating-point behaviour of one stage of the solver.

    Parameters
    ----------
    kind : Kind
        Native double, native single or emulated.
    t : int, optional
        Significand length (including the hidden bit) for emulated
        arithmetic, ``2 <= t <= 52``.  Ignored for the native kinds.
    """

    kind: Kind
    t: int | None = None

    def __post_init__(self):
        if self.kind is Kind.EMULATED:
            if self.t is None or int(self.t) != self.t:
                raise ValueError("emulated precision needs an integer t")
            if not 2 <= self.t <= 52:
                raise ValueError(f"emulated t must be in [2, 52], got {self.t}")
        elif self.t is not None:
            object.__setattr__(self, "t", None)

    @property
    def bits(self) -> int:
        if self.kind is Kind.NATIVE64:
            return 53
        if self.kind is Kind.NATIVE32:
            return 24
        return self.t

    @property
    def unit(self) -> float:
        """Roundoff unit ``u = 2**-bits``."""
        return math.ldexp(1.0, -self.bits)

    @property
    def dtype(self):
        """numpy dtype of the working format."""
        return np.float32 if self.kind is Kind.NATIVE32 else np.float64

    @property
    def label(self) -> str:
        if self.kind is Kind.EMULATED:
            return f"emu{self.t}"
        return self.kind.value

    def __str__(self):
        return self.label

    @classmethod
    def parse(cls, label: str) -> "PrecisionSpec":
        """Build a spec from ``"f64"``, ``"f32"`` or ``"emu<t>"``."""
        label = label.strip().lower()
        if label == "f64":
            return F64
        if label == "f32":
            return F32
        m = _LABEL_RE.match(label)
        if m is None:
            raise ValueError(f"unknown precision label {label!r}")
        return cls(Kind.EMULATED, int(m.group(1)))


F64 = PrecisionSpec(Kind.NATIVE64)
F32 = PrecisionSpec(Kind.NATIVE32)


def emulated(t: int) -> PrecisionSpec:
    return PrecisionSpec(Kind.EMULATED, t)


# ---------------------------------------------------------------------------
# rounding

def round_array(x, t: int) -> np.ndarray:
    """Round a float64 array to ``t`` significand bits, ties to even.

    Works on the IEEE bit pattern: the low ``53 - t`` bits of the stored
    significand are cleared after adding the rounding bias.  A carry out of
    the significand bumps the exponent, which is the correct result.
    Subnormals are rounded at their fixed absolute spacing.
    """
    x = np.asarray(x, dtype=np.float64)
    drop = 53 - t
    if drop <= 0:
        return x.copy()
    bits = np.ascontiguousarray(x).view(np.uint64)
    one = np.uint64(1)
    shift = np.uint64(drop)
    lsb = (bits >> shift) & one
    bias = np.uint64((1 << (drop - 1)) - 1) + lsb
    mask = ~np.uint64((1 << drop) - 1)
    return ((bits + bias) & mask).view(np.float64).reshape(x.shape)


def _round_float(x: float, t: int) -> float:
    # scalar path, ~10x faster than round_array on 0-d input
    if x == 0.0 or t >= 53 or not math.isfinite(x):
        return x
    m, e = math.frexp(x)
    return math.ldexp(round(math.ldexp(m, t)), e - t)


def round_scalar(x: float, spec: PrecisionSpec) -> float:
    """Round ``x`` to the nearest value representable in ``spec``."""
    x = float(x)
    if spec.kind is Kind.NATIVE64:
        return x
    if spec.kind is Kind.NATIVE32:
        return float(np.float32(x))
    return _round_float(x, spec.t)


_OPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "−": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "×": lambda a, b: a * b,
    "/": lambda a, b: a / b,
    "÷": lambda a, b: a / b,
}


def rounded_op(a: float, b: float, op: str, spec: PrecisionSpec) -> float:
    """``fl(a op b)`` in the arithmetic described by ``spec``.

    The exact operation is formed in double and rounded once.  For operands
    representable in a format with ``t <= 26`` bits, +, -, * and / are then
    correctly rounded (double rounding is innocuous), which covers single.
    """
    try:
        f = _OPS[op]
    except KeyError:
        raise ValueError(f"unsupported operation {op!r}") from None
    if f is _OPS["/"] and b == 0:
        raise ZeroDivisionError("rounded_op: division by zero")
    return round_scalar(f(float(a), float(b)), spec)


# ---------------------------------------------------------------------------
# vector kernels

def to_working(x, spec: PrecisionSpec) -> np.ndarray:
    """Convert an array into the working format of ``spec`` (rounding it)."""
    if spec.kind is Kind.NATIVE32:
        return np.asarray(x, dtype=np.float32)
    x = np.asarray(x, dtype=np.float64)
    if spec.kind is Kind.NATIVE64:
        return x
    return round_array(x, spec.t)


def _check_same(x, y):
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")


def vec_axpy(alpha: float, x, y, spec: PrecisionSpec) -> np.ndarray:
    """``fl(y + fl(alpha * x))``, ``alpha`` is rounded into ``spec`` first."""
    x = np.asarray(x)
    y = np.asarray(y)
    _check_same(x, y)
    a = round_scalar(alpha, spec)
    if spec.kind is Kind.NATIVE64:
        return y + a * x
    if spec.kind is Kind.NATIVE32:
        return np.float32(a) * x.astype(np.float32, copy=False) + y.astype(
            np.float32, copy=False
        )
    t = spec.t
    return round_array(y + round_array(a * x, t), t)


def vec_scale(alpha: float, x, spec: PrecisionSpec) -> np.ndarray:
    """``fl(alpha * x)``."""
    a = round_scalar(alpha, spec)
    if spec.kind is Kind.NATIVE64:
        return a * np.asarray(x, dtype=np.float64)
    if spec.kind is Kind.NATIVE32:
        return np.float32(a) * np.asarray(x, dtype=np.float32)
    return round_array(a * np.asarray(x, dtype=np.float64), spec.t)


def vec_div(x, d: float, spec: PrecisionSpec) -> np.ndarray:
    """``fl(x / d)`` elementwise; a single rounding per entry."""
    if d == 0:
        raise ZeroDivisionError("vec_div: division by zero")
    d = round_scalar(d, spec)
    if spec.kind is Kind.NATIVE64:
        return np.asarray(x, dtype=np.float64) / d
    if spec.kind is Kind.NATIVE32:
        return np.asarray(x, dtype=np.float32) / np.float32(d)
    return round_array(np.asarray(x, dtype=np.float64) / d, spec.t)


def vec_dot(x, y, spec: PrecisionSpec) -> float:
    """Inner product accumulated left to right in ``spec`` arithmetic."""
    x = np.asarray(x)
    y = np.asarray(y)
    _check_same(x, y)
    if x.size == 0:
        return 0.0
    if spec.kind is Kind.NATIVE64:
        return float(np.dot(x.astype(np.float64, copy=False), y.astype(np.float64, copy=False)))
    if spec.kind is Kind.NATIVE32:
        prod = x.astype(np.float32, copy=False) * y.astype(np.float32, copy=False)
        # cumsum is a sequential float32 accumulation
        return float(np.cumsum(prod, dtype=np.float32)[-1])
    t = spec.t
    prod = round_array(x.astype(np.float64) * y.astype(np.float64), t).tolist()
    acc = 0.0
    for v in prod:
        acc = _round_float(acc + v, t)
    return acc


def vec_norm(x, spec: PrecisionSpec) -> float:
    """Euclidean norm, accumulated in double and rounded once to ``spec``.

    A sequential low-precision sum of squares errs by up to ``n u / 2``,
    which would break the unit-norm contract of normalized vectors; the
    wide accumulator keeps the result within about one unit.
    """
    x = np.asarray(x)
    x64 = x.astype(np.float64, copy=False)
    if spec.kind is Kind.NATIVE64:
        return float(np.linalg.norm(x64))
    return round_scalar(math.sqrt(float(x64 @ x64)), spec)


# ---------------------------------------------------------------------------
# matrix kernels

def _emu_combine(columns, coeffs, t: int, length: int) -> np.ndarray:
    # sum_j coeffs[j] * columns[j], one rounding per product and per addition
    acc = np.zeros(length)
    for col, c in zip(columns, coeffs):
        if c == 0.0:
            # fl(acc + 0) == acc
            continue
        acc = round_array(acc + round_array(c * col, t), t)
    return acc


def dense_matvec(M: np.ndarray, x, spec: PrecisionSpec, *, fortran: np.ndarray | None = None) -> np.ndarray:
    """``M @ x`` for a dense matrix already stored in the working format.

    For emulated arithmetic, pass a Fortran-ordered copy of ``M`` as
    ``fortran`` to make the column sweep cache friendly.
    """
    x = np.asarray(x)
    if M.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {M.shape} @ {x.shape}")
    if spec.kind is Kind.NATIVE64:
        return M @ x.astype(np.float64, copy=False)
    if spec.kind is Kind.NATIVE32:
        return M @ x.astype(np.float32, copy=False)
    F = M if fortran is None else fortran
    xs = np.asarray(x, dtype=np.float64).tolist()
    return _emu_combine((F[:, j] for j in range(F.shape[1])), xs, spec.t, M.shape[0])


def dense_tmatvec(M: np.ndarray, y, spec: PrecisionSpec) -> np.ndarray:
    """``M.T @ y`` for a dense, C-ordered matrix in the working format."""
    y = np.asarray(y)
    if M.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: {M.shape}.T @ {y.shape}")
    if spec.kind is Kind.NATIVE64:
        return M.T @ y.astype(np.float64, copy=False)
    if spec.kind is Kind.NATIVE32:
        return M.T @ y.astype(np.float32, copy=False)
    ys = np.asarray(y, dtype=np.float64).tolist()
    return _emu_combine((M[i] for i in range(M.shape[0])), ys, spec.t, M.shape[1])


def mat_vec(A, x, spec: PrecisionSpec) -> np.ndarray:
    """``A @ x`` in ``spec`` arithmetic.

    ``A`` is either a linear operator from :mod:`mplsqr.operators` or a plain
    2-d array (which is wrapped on the fly).
    """
    if isinstance(A, np.ndarray):
        from .operators import DenseOperator

        A = DenseOperator(A)
    return A.matvec(x, spec)


def mat_tvec(A, y, spec: PrecisionSpec) -> np.ndarray:
    """``A.T @ y`` in ``spec`` arithmetic."""
    if isinstance(A, np.ndarray):
        from .operators import DenseOperator

        A = DenseOperator(A)
    return A.rmatvec(y, spec)
