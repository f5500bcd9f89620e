"""Mixed-precision LSQR for discrete ill-posed problems.

Every iteration has three stages, each with its own arithmetic:

1. one bidiagonalization step (full reorthogonalization) in ``spec_bidiag``;
2. the scalar Givens QR update of ``[B_k, beta_1 e_1]`` -- always double,
   since its error grows with ``kappa(B_k)**2``;
3. the vector updates ``x_i = x_{i-1} + (phi_i/rho_i) w_i`` and
   ``w_{i+1} = q_{i+1} - (theta_{i+1}/rho_i) w_i`` in ``spec_update``.

The iterate is kept in the working format of ``spec_update``; diagnostics
(norms, relative errors, orthogonality) are evaluated in double.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import bidiag
from .precision import F64, PrecisionSpec, to_working, vec_axpy
from .stopping import NoCornerError, Rule, StopDecision, lcurve_corner, oracle_optimal

__all__ = [
    "SolverBreakdown",
    "GivensState",
    "UpdateState",
    "SolverConfig",
    "SolverHistory",
    "givens_step",
    "update_step",
    "kappa_rhat",
    "update_error_bound",
    "solve",
    "problem_key",
    "lsqr_iterates",
]

log = logging.getLogger(__name__)


class SolverBreakdown(ArithmeticError):
    """Raised when a Givens rotation degenerates (both inputs zero)."""


@dataclass(frozen=True)
class GivensState:
    """Scalars of the QR update.

    ``rho_bar`` and ``phi_bar`` carry over to the next iteration; the other
    fields are the outputs of the rotation that produced this state.
    """

    rho_bar: float
    phi_bar: float
    rho: float = math.nan
    c: float = math.nan
    s: float = math.nan
    theta: float = math.nan
    phi: float = math.nan

    @classmethod
    def start(cls, alpha1: float, beta1: float) -> "GivensState":
        return cls(rho_bar=float(alpha1), phi_bar=float(beta1))


def givens_step(g: GivensState, beta_next: float, alpha_next: float) -> GivensState:
    """Rotate ``beta_{i+1}`` out of the bidiagonal matrix (double precision)."""
    rho_bar, phi_bar = float(g.rho_bar), float(g.phi_bar)
    beta_next, alpha_next = float(beta_next), float(alpha_next)
    if rho_bar == 0.0 and beta_next == 0.0:
        raise SolverBreakdown("degenerate Givens rotation: rho_bar = beta = 0")
    rho = math.hypot(rho_bar, beta_next)
    c = rho_bar / rho
    s = beta_next / rho
    theta = s * alpha_next
    return GivensState(
        rho_bar=-c * alpha_next,
        phi_bar=s * phi_bar,
        rho=rho,
        c=c,
        s=s,
        theta=theta,
        phi=c * phi_bar,
    )


@dataclass(frozen=True)
class UpdateState:
    x: np.ndarray
    w: np.ndarray
    spec_update: PrecisionSpec

    @classmethod
    def start(cls, q1, spec_update: PrecisionSpec) -> "UpdateState":
        w = to_working(np.asarray(q1, dtype=np.float64), spec_update)
        return cls(x=np.zeros_like(w), w=w, spec_update=spec_update)


def update_step(u: UpdateState, q_next, rho: float, phi: float, theta: float) -> UpdateState:
    """One step of the ``x``/``w`` recurrence in ``u.spec_update``.

    The ratios are formed in double and rounded into the update format
    before the vector operations.  ``q_next`` may be ``None`` on the last
    iteration of a terminated run; ``w`` is then left unchanged.
    """
    if rho == 0:
        raise SolverBreakdown("rho = 0 in update")
    spec = u.spec_update
    x = vec_axpy(phi / rho, u.w, u.x, spec)
    if q_next is None:
        return UpdateState(x=x, w=u.w, spec_update=spec)
    q = to_working(np.asarray(q_next, dtype=np.float64), spec)
    w = vec_axpy(-(theta / rho), u.w, q, spec)
    return UpdateState(x=x, w=w, spec_update=spec)


def rhat_matrix(rho, theta) -> np.ndarray:
    """Unit upper bidiagonal ``R_hat_k`` with superdiagonal ``theta_{i+1}/rho_i``.

    ``rho`` holds ``rho_1..rho_k`` and ``theta`` holds ``theta_2..theta_k``
    (at least ``k - 1`` entries; extras are ignored).
    """
    rho = np.asarray(rho, dtype=np.float64)
    k = rho.size
    R = np.eye(k)
    if k > 1:
        sup = np.asarray(theta, dtype=np.float64)[: k - 1] / rho[: k - 1]
        R[np.arange(k - 1), np.arange(1, k)] = sup
    return R


def kappa_rhat(rho, theta) -> float:
    """2-norm condition number of ``R_hat_k``."""
    R = rhat_matrix(rho, theta)
    if R.shape[0] == 1:
        return 1.0
    sv = np.linalg.svd(R, compute_uv=False)
    return float(sv[0] / sv[-1])


def update_error_bound(k: int, kappa: float, u: float) -> float:
    """First-order bound on the relative error from the update stage:
    ``sqrt(k) (1 + (2 + 2 sqrt(k) + k) kappa) u``."""
    rk = math.sqrt(k)
    return rk * (1.0 + (2.0 + 2.0 * rk + k) * kappa) * u


@dataclass(frozen=True)
class SolverConfig:
    """Configuration of one LSQR run.

    ``history`` selects how long to iterate: ``"full"`` runs to
    ``max_iter``; ``"overshoot"`` stops ``max(ceil(1.5 k1), k1 + 20)``
    iterations after the discrepancy principle fires at ``k1``; ``"stop"``
    ends as soon as it fires.
    """

    spec_bidiag: PrecisionSpec = F64
    spec_update: PrecisionSpec = F64
    reorth: bool = True
    max_iter: int = 100
    stop_rules: tuple = ("dp", "lcurve")
    tau: float = 1.001
    history: str = "full"
    keep_iterates: bool = True
    noise_norm: float | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.history not in ("full", "overshoot", "stop"):
            raise ValueError(f"unknown history mode {self.history!r}")
        bad = set(self.stop_rules) - {"dp", "lcurve"}
        if bad:
            raise ValueError(f"unknown stop rules {sorted(bad)}")
        if "dp" in self.stop_rules and not self.tau > 1:
            raise ValueError("tau must exceed 1")


@dataclass
class SolverHistory:
    """Per-iteration record of a run; index ``i`` holds iteration ``k = i + 1``."""

    config: SolverConfig
    phi_bar: list = field(default_factory=list)
    norm_x: list = field(default_factory=list)
    re: list = field(default_factory=list)
    kappa_rhat: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    nu: list = field(default_factory=list)
    t_bidiag: list = field(default_factory=list)
    t_givens: list = field(default_factory=list)
    t_update: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    decisions: dict = field(default_factory=dict)
    stopped_by: str | None = None
    problem_key: tuple | None = None

    @property
    def n_iter(self) -> int:
        return len(self.phi_bar)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(1, self.n_iter + 1)

    def iterate(self, k: int) -> np.ndarray:
        """``x_k`` in double (requires ``keep_iterates``)."""
        if not self.iterates:
            raise ValueError("iterates were not kept for this run")
        return self.iterates[k - 1]

    def solution(self, rule: str) -> np.ndarray:
        """The regularized solution selected by a stop rule."""
        return self.iterate(self.decisions[Rule(rule)].k1)

    def update_error_bounds(self, u: float | None = None) -> np.ndarray:
        u = self.config.spec_update.unit if u is None else u
        return np.array([update_error_bound(k, kap, u) for k, kap in zip(self.ks, self.kappa_rhat)])


def problem_key(instance) -> tuple | None:
    """``(name, m, n, eps, seed)`` identifying the data of a run, if known."""
    name = getattr(instance, "name", None)
    if name is None:
        return None
    m, n = instance.A.shape
    return (name, m, n, getattr(instance, "eps", None), getattr(instance, "seed", None))


def _overshoot_limit(k1: int) -> int:
    return max(math.ceil(1.5 * k1), k1 + 20)


def solve(instance, cfg: SolverConfig) -> SolverHistory:
    """Run mixed-precision LSQR on ``instance`` (a :class:`ProblemInstance`
    or any object with ``A``, ``b`` and optionally ``x_ex``/``e``)."""
    A, b = instance.A, instance.b
    x_ex = getattr(instance, "x_ex", None)
    norm_x_ex = float(np.linalg.norm(x_ex)) if x_ex is not None else None
    noise_norm = cfg.noise_norm
    if noise_norm is None and getattr(instance, "e", None) is not None:
        noise_norm = float(np.linalg.norm(instance.e))

    use_dp = "dp" in cfg.stop_rules
    if use_dp and noise_norm is None:
        log.warning("noise norm unknown; discrepancy principle disabled")
        use_dp = False

    hist = SolverHistory(config=cfg, problem_key=problem_key(instance))
    t0 = time.perf_counter()
    st = bidiag.init(A, b, cfg.spec_bidiag, cfg.reorth)
    t_init = time.perf_counter() - t0
    if st.terminated:
        hist.stopped_by = "breakdown: A^T b = 0"
        return hist

    g = GivensState.start(st.alpha[0], st.beta[0])
    upd = UpdateState.start(st.q(1), cfg.spec_update)
    limit = cfg.max_iter
    dp_k = None

    for k in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter()
        bidiag.step(st)
        t1 = time.perf_counter()
        beta_next, alpha_next = st.beta[k], st.alpha[k]
        try:
            g = givens_step(g, beta_next, alpha_next)
        except SolverBreakdown as exc:
            hist.stopped_by = f"breakdown: {exc}"
            break
        t2 = time.perf_counter()
        q_next = st.q(k + 1) if st.n_q > k else None
        upd = update_step(upd, q_next, g.rho, g.phi, g.theta)
        t3 = time.perf_counter()

        x64 = upd.x.astype(np.float64)
        hist.phi_bar.append(abs(g.phi_bar))
        hist.norm_x.append(float(np.linalg.norm(x64)))
        hist.re.append(
            float(np.linalg.norm(x64 - x_ex) / norm_x_ex) if norm_x_ex else math.nan
        )
        hist.rho.append(g.rho)
        hist.theta.append(g.theta)
        hist.alpha.append(st.alpha[k - 1])
        hist.beta.append(st.beta[k])
        hist.kappa_rhat.append(kappa_rhat(hist.rho, hist.theta))
        hist.mu.append(st.mu)
        hist.nu.append(st.nu)
        hist.t_bidiag.append(t1 - t0 + (t_init if k == 1 else 0.0))
        hist.t_givens.append(t2 - t1)
        hist.t_update.append(t3 - t2)
        if cfg.keep_iterates:
            hist.iterates.append(x64)

        if use_dp and dp_k is None and hist.phi_bar[-1] <= cfg.tau * noise_norm:
            dp_k = k
            if cfg.history == "stop":
                limit = k
            elif cfg.history == "overshoot":
                limit = min(cfg.max_iter, _overshoot_limit(k))
        if st.terminated:
            hist.stopped_by = "bidiagonalization terminated"
            break
        if k >= limit:
            hist.stopped_by = "max_iter" if limit == cfg.max_iter else "stop rule"
            break

    if use_dp and dp_k is not None:
        hist.decisions[Rule.DP] = StopDecision(Rule.DP, dp_k, dp_k, cfg.tau)
    elif use_dp:
        log.info("discrepancy principle did not fire within %d iterations", hist.n_iter)
    if "lcurve" in cfg.stop_rules:
        # an exact breakdown leaves phi_bar = 0, which has no place on a log scale
        phi, nx = np.asarray(hist.phi_bar), np.asarray(hist.norm_x)
        ok = np.flatnonzero((phi > 0) & (nx > 0))
        try:
            pts = np.column_stack([np.log(phi[ok]), np.log(nx[ok])])
            k1 = int(ok[lcurve_corner(pts) - 1]) + 1
            hist.decisions[Rule.LCURVE] = StopDecision(Rule.LCURVE, k1, hist.n_iter)
        except NoCornerError as exc:
            log.info("L-curve: %s", exc)
    if norm_x_ex:
        k0 = oracle_optimal(hist.re)
        hist.decisions[Rule.OPTIMAL] = StopDecision(Rule.OPTIMAL, k0, hist.n_iter)
    return hist


def lsqr_iterates(A, b, k: int) -> list:
    """Reference LSQR iterates via dense SVD of the projected problem.

    Runs a double-precision, fully reorthogonalized bidiagonalization and
    returns ``Q_j pinv(B_j) beta_1 e_1`` for ``j = 1..k``.  Independent of
    the Givens/update recurrences; used as a test oracle.
    """
    st = bidiag.init(A, b, F64, True)
    out = []
    for j in range(1, k + 1):
        if st.terminated:
            break
        bidiag.step(st)
        B = bidiag.lower_bidiagonal(st, j)
        rhs = np.zeros(j + 1)
        rhs[0] = st.beta[0]
        U, s, Vt = np.linalg.svd(B, full_matrices=False)
        y = Vt.T @ ((U.T @ rhs) / s)
        out.append(st.Q[:, :j] @ y)
    return out
