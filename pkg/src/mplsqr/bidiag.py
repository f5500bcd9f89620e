"""Golub-Kahan (Lanczos) bidiagonalization with full reorthogonalization.

Starting from ``beta_1 p_1 = b`` and ``alpha_1 q_1 = A^T p_1``, step ``j``
computes::

    s_j = A q_j - alpha_j p_j,          beta_{j+1} p_{j+1} = s_j
    r_j = A^T p_{j+1} - beta_{j+1} q_j, alpha_{j+1} q_{j+1} = r_j

so that ``A Q_k = P_{k+1} B_k`` with ``B_k`` lower bidiagonal.  With
``reorth=True`` each new vector is orthogonalized against all previous ones
by two passes of classical Gram-Schmidt (CGS2).  All arithmetic of the
recurrence runs in the state's :class:`PrecisionSpec`; the orthogonality
levels are diagnostics and are always measured in double.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import as_operator
from .precision import (
    PrecisionSpec,
    to_working,
    vec_axpy,
    vec_div,
    vec_norm,
    dense_matvec,
    dense_tmatvec,
)

__all__ = [
    "BidiagState",
    "init",
    "step",
    "orthogonality_level",
    "lower_bidiagonal",
    "recurrence_residual",
]

# alpha/beta count as zero when the new vector is pure cancellation, i.e.
# its norm is below TERM_FACTOR * u * (norm of the product it came from)
TERM_FACTOR = 10.0


def orthogonality_level(M) -> float:
    """Spectral norm of the strictly upper triangular part of ``I - M^T M``.

    Computed in double whatever the format of ``M``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[1] < 2:
        return 0.0
    G = M.T @ M
    return _sut_norm(G)


def _sut_norm(G: np.ndarray) -> float:
    S = np.triu(-G, 1)
    if not S.any():
        return 0.0
    return float(np.linalg.norm(S, 2))


class _Basis:
    """Growable column store in the working format plus its Gram matrix."""

    def __init__(self, length: int, dtype, capacity: int = 32):
        self.V = np.zeros((capacity, length), dtype=dtype)  # rows are vectors
        self.k = 0
        self.G = np.zeros((capacity, capacity))

    def append(self, v: np.ndarray):
        if self.k == self.V.shape[0]:
            cap = 2 * self.k
            V = np.zeros((cap, self.V.shape[1]), dtype=self.V.dtype)
            V[: self.k] = self.V
            G = np.zeros((cap, cap))
            G[: self.k, : self.k] = self.G[: self.k, : self.k]
            self.V, self.G = V, G
        v64 = v.astype(np.float64)
        g = self.V[: self.k].astype(np.float64) @ v64
        self.G[: self.k, self.k] = g
        self.G[self.k, : self.k] = g
        self.G[self.k, self.k] = v64 @ v64
        self.V[self.k] = v
        self.k += 1

    @property
    def rows(self) -> np.ndarray:
        return self.V[: self.k]

    def level(self) -> float:
        return _sut_norm(self.G[: self.k, : self.k])


@dataclass
class BidiagState:
    """State of a running bidiagonalization.

    After ``k`` steps the state holds ``p_1..p_{k+1}``, ``q_1..q_{k+1}``,
    ``alpha_1..alpha_{k+1}`` and ``beta_1..beta_{k+1}``.  When the process
    terminates (a zero ``beta`` or ``alpha``), the zero coefficient is stored
    and no vector is added for it.
    """

    A: object
    spec: PrecisionSpec
    reorth: bool
    alpha: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    k: int = 0
    mu: float = 0.0
    nu: float = 0.0
    terminated: bool = False
    anorm_est: float = 0.0
    _P: _Basis = None
    _Q: _Basis = None

    @property
    def P(self) -> np.ndarray:
        """Left Lanczos vectors as columns, in the working format."""
        return self._P.rows.T

    @property
    def Q(self) -> np.ndarray:
        """Right Lanczos vectors as columns, in the working format."""
        return self._Q.rows.T

    def p(self, i: int) -> np.ndarray:
        """``p_i``, 1-based."""
        return self._P.V[i - 1]

    def q(self, i: int) -> np.ndarray:
        """``q_i``, 1-based."""
        return self._Q.V[i - 1]

    @property
    def n_p(self) -> int:
        return self._P.k

    @property
    def n_q(self) -> int:
        return self._Q.k


def _reorthogonalize(v: np.ndarray, basis: _Basis, spec: PrecisionSpec) -> np.ndarray:
    V = basis.rows  # k x len, rows are basis vectors
    if V.shape[0] == 0:
        return v
    for _ in range(2):
        c = dense_matvec(V, v, spec)  # V v = coefficients
        v = vec_axpy(-1.0, dense_tmatvec(V, c, spec), v, spec)
    return v


def init(A, b, spec: PrecisionSpec, reorth: bool = True) -> BidiagState:
    """Start the bidiagonalization of ``(A, b)`` in ``spec`` arithmetic."""
    A = as_operator(A)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError(f"b has shape {b.shape}, expected ({m},)")
    b = to_working(b, spec)
    beta1 = vec_norm(b, spec)
    if beta1 == 0:
        raise ValueError("b must be nonzero")
    st = BidiagState(A=A, spec=spec, reorth=reorth)
    st._P = _Basis(m, spec.dtype)
    st._Q = _Basis(n, spec.dtype)
    p1 = vec_div(b, beta1, spec)
    st._P.append(p1)
    st.beta.append(beta1)
    r = A.rmatvec(p1, spec)
    alpha1 = vec_norm(r, spec)
    st.alpha.append(alpha1)
    st.anorm_est = alpha1
    if alpha1 == 0:
        st.terminated = True
        return st
    st._Q.append(vec_div(r, alpha1, spec))
    return st


def step(st: BidiagState) -> BidiagState:
    """Advance by one step (``j -> j + 1``); mutates and returns ``st``."""
    if st.terminated:
        raise RuntimeError("bidiagonalization has terminated")
    spec, A = st.spec, st.A
    j = st.k + 1
    u = spec.unit
    alpha_j = st.alpha[-1]

    Aq = A.matvec(st.q(j), spec)
    s = vec_axpy(-alpha_j, st.p(j), Aq, spec)
    if st.reorth:
        s = _reorthogonalize(s, st._P, spec)
    beta = vec_norm(s, spec)
    st.anorm_est = max(st.anorm_est, math.hypot(alpha_j, beta))
    if beta <= TERM_FACTOR * u * vec_norm(Aq, spec):
        st.beta.append(0.0)
        st.alpha.append(0.0)
        st.k = j
        st.terminated = True
        return st
    p_next = vec_div(s, beta, spec)
    st._P.append(p_next)
    st.beta.append(beta)

    Ap = A.rmatvec(p_next, spec)
    r = vec_axpy(-beta, st.q(j), Ap, spec)
    if st.reorth:
        r = _reorthogonalize(r, st._Q, spec)
    alpha = vec_norm(r, spec)
    st.anorm_est = max(st.anorm_est, alpha)
    st.k = j
    st.mu = st._P.level()
    if alpha <= TERM_FACTOR * u * vec_norm(Ap, spec):
        st.alpha.append(0.0)
        st.terminated = True
        st.nu = st._Q.level()
        return st
    st._Q.append(vec_div(r, alpha, spec))
    st.alpha.append(alpha)
    st.nu = st._Q.level()
    return st


def lower_bidiagonal(st: BidiagState, k: int | None = None) -> np.ndarray:
    """``B_k`` as a dense ``(k+1) x k`` array (double)."""
    k = st.k if k is None else k
    B = np.zeros((k + 1, k))
    for i in range(k):
        B[i, i] = st.alpha[i]
        B[i + 1, i] = st.beta[i + 1]
    return B


def recurrence_residual(st: BidiagState, k: int | None = None) -> float:
    """``||A Q_k - P_{k+1} B_k||_2`` evaluated in double."""
    k = st.k if k is None else k
    A = st.A
    Q = st.Q[:, :k].astype(np.float64)
    P = st.P[:, : k + 1].astype(np.float64)
    AQ = np.column_stack([A.matvec(Q[:, i]) for i in range(k)])
    return float(np.linalg.norm(AQ - P @ lower_bidiagonal(st, k), 2))
