"""SVD-based diagnostics of a noisy ill-posed problem.

The data are modelled by the discrete Picard condition::

    |u_i^T b_ex| = rho0 * sigma_i ** (1 + beta)

and the singular values by one of two decay laws, ``sigma_i = zeta *
rho ** -i`` (severe) or ``sigma_i = zeta * i ** -alpha`` (moderate when
``alpha > 1``, mild otherwise).  The transition index ``k_star`` is where the
noisy coefficients ``|u_i^T b|`` reach the noise level ``m**-0.5 ||e||``.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DecayType",
    "PicardDiagnostics",
    "picard_diagnostics",
    "picard_from_svd",
    "transition_index",
    "fit_picard_model",
    "fit_decay",
]

# the noise floor is |u_i^T e| ~ m^-1/2 ||e||; a guard band of 2 keeps
# Gaussian fluctuations of single coefficients from ending the search early
K_STAR_FACTOR = 2.0
MIN_RELIABLE_K = 3


class DecayType(str, enum.Enum):
    SEVERE = "Severe"
    MODERATE = "Moderate"
    MILD = "Mild"


@dataclass(frozen=True)
class PicardDiagnostics:
    """Result of :func:`picard_diagnostics`.

    ``decay_param`` is ``rho`` for severe decay and ``alpha`` otherwise.
    ``reliable`` is False when ``k_star`` is too small for the fits to mean
    much (fewer than three points) or the fitted ``beta`` was not positive.
    """

    sigma: np.ndarray
    coef_exact: np.ndarray
    coef_noisy: np.ndarray
    k_star: int
    beta_model: float
    rho0: float
    decay_type: DecayType
    decay_param: float
    zeta: float
    noise_level: float
    reliable: bool = True

    def rows(self):
        """``(i, sigma_i, |u_i^T b_ex|, |u_i^T b|)`` for ``i = 1..n``."""
        for i, (s, ce, cn) in enumerate(zip(self.sigma, self.coef_exact, self.coef_noisy), 1):
            yield i, float(s), float(ce), float(cn)


def transition_index(coef_noisy, noise_norm: float, m: int, factor: float = K_STAR_FACTOR) -> int:
    """Largest ``k`` with ``|u_i^T b| > factor * m**-0.5 * ||e||`` for all ``i <= k``.

    Clamped to at least 1.
    """
    c = np.asarray(coef_noisy, dtype=np.float64)
    thresh = factor * noise_norm / np.sqrt(m)
    below = np.flatnonzero(~(c > thresh))
    k = int(below[0]) if below.size else len(c)
    return max(k, 1)


def _lstsq_line(x, y):
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef[0], coef[1], float(resid @ resid)


def fit_picard_model(sigma, coef_exact, k: int):
    """Least-squares fit of ``log|u_i^T b_ex| = log rho0 + (1+beta) log sigma_i``.

    Uses ``i = 1..k``; returns ``(beta, rho0)``.  Zero coefficients are
    skipped since they carry no information on the log scale.
    """
    s = np.asarray(sigma[:k], dtype=np.float64)
    c = np.asarray(coef_exact[:k], dtype=np.float64)
    ok = (s > 0) & (c > 0)
    if ok.sum() < 2:
        return float("nan"), float("nan")
    a, slope, _ = _lstsq_line(np.log(s[ok]), np.log(c[ok]))
    return float(slope - 1.0), float(np.exp(a))


def fit_decay(sigma, k: int):
    """Classify the decay of ``sigma_1..sigma_k``.

    Fits ``log sigma_i`` linearly against ``i`` (severe) and against
    ``log i`` (polynomial) and keeps the law with the smaller residual.

    Returns
    -------
    decay_type : DecayType
    param : float
        ``rho`` (severe) or ``alpha`` (moderate / mild).
    zeta : float
    """
    k = max(int(k), 2)
    s = np.asarray(sigma[:k], dtype=np.float64)
    i = np.arange(1, len(s) + 1, dtype=np.float64)
    ls = np.log(s)
    a_exp, sl_exp, r_exp = _lstsq_line(i, ls)
    a_pow, sl_pow, r_pow = _lstsq_line(np.log(i), ls)
    if r_exp <= r_pow:
        return DecayType.SEVERE, float(np.exp(-sl_exp)), float(np.exp(a_exp))
    alpha = float(-sl_pow)
    kind = DecayType.MODERATE if alpha > 1 else DecayType.MILD
    return kind, alpha, float(np.exp(a_pow))


def picard_from_svd(U, sigma, b_ex, b, noise_norm: float) -> PicardDiagnostics:
    """Diagnostics from a given SVD; ``U`` holds the left singular vectors."""
    sigma = np.asarray(sigma, dtype=np.float64)
    m = U.shape[0]
    ce = np.abs(U.T @ np.asarray(b_ex, dtype=np.float64))
    cn = np.abs(U.T @ np.asarray(b, dtype=np.float64))
    k_star = transition_index(cn, noise_norm, m)
    k_fit = max(k_star, 2)
    beta, rho0 = fit_picard_model(sigma, ce, k_fit)
    dtype_, param, zeta = fit_decay(sigma, k_fit)
    reliable = k_star >= MIN_RELIABLE_K and np.isfinite(beta) and beta > 0
    return PicardDiagnostics(
        sigma=sigma,
        coef_exact=ce,
        coef_noisy=cn,
        k_star=k_star,
        beta_model=beta,
        rho0=rho0,
        decay_type=dtype_,
        decay_param=param,
        zeta=zeta,
        noise_level=noise_norm / np.sqrt(m),
        reliable=bool(reliable),
    )


def picard_diagnostics(instance, max_dense: int = 4000) -> PicardDiagnostics:
    """Dense-SVD Picard diagnostics of a :class:`~mplsqr.problems.ProblemInstance`.

    Raises
    ------
    ValueError
        If ``n`` exceeds ``max_dense`` (dense SVD infeasible).
    numpy.linalg.LinAlgError
        If the SVD does not converge.
    """
    m, n = instance.A.shape
    if n > max_dense:
        raise ValueError(f"dense SVD of a {m}x{n} operator skipped (n > {max_dense})")
    A = instance.A.to_dense()
    U, sigma, _ = np.linalg.svd(A, full_matrices=False)
    # exact zeros would break the log fits; they are numerically meaningless anyway
    sigma = np.maximum(sigma, np.finfo(np.float64).tiny)
    diag = picard_from_svd(U, sigma, instance.b_ex, instance.b, instance.noise_norm)
    if not diag.reliable:
        warnings.warn(
            f"Picard fit unreliable (k_star = {diag.k_star}, beta = {diag.beta_model:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    return diag
