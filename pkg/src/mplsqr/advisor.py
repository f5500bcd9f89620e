"""How low may the precision of the bidiagonalization go?

Given the noise level ``eps = ||e|| / ||b_ex||``, the row count ``m`` and the
Picard / decay model of the problem (see :mod:`mplsqr.diagnostics`), the
best regularized solution computed with roundoff unit ``u`` in the Lanczos
process is as accurate as the exact-arithmetic one provided::

    u << varrho * (m**-0.5 * eps) ** ((2 + beta) / (1 + beta))

with ``varrho = min(1, rho - 1)`` for severe decay and
``varrho = min(1, ((k_star + 1) / k_star) ** alpha - 1)`` otherwise.  The
``<<`` is made concrete by a safety factor.

All noise quantities use the normalized level ``eps``: the model is written
for data scaled to ``||b_ex|| = 1``, where ``||e||`` and ``eps`` coincide.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

from .diagnostics import DecayType, PicardDiagnostics
from .precision import F32, F64, PrecisionSpec, emulated

__all__ = [
    "C1",
    "DEFAULT_SAFETY",
    "UBound",
    "AdvisorReport",
    "resolution_limit",
    "accuracy_floor",
    "varrho",
    "u_upper_bound",
    "recommend",
    "advise",
    "advise_from_diagnostics",
]

# constant of the accuracy floor; only known to be "moderate", reported as 1
C1 = 1.0
DEFAULT_SAFETY = 10.0


def _check_common(eps, m, beta):
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if m < 1:
        raise ValueError("m must be >= 1")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")


def resolution_limit(eps: float, m: int, beta: float) -> float:
    """Smallest recoverable solution coefficient, ``(m**-0.5 eps)**(beta/(1+beta))``."""
    _check_common(eps, m, beta)
    return (eps / math.sqrt(m)) ** (beta / (1.0 + beta))


def accuracy_floor(eps: float, beta: float, c1: float = C1) -> float:
    """Lower bound ``c1 * eps**(beta/(1+beta))`` on the best relative error."""
    _check_common(eps, 1, beta)
    return c1 * eps ** (beta / (1.0 + beta))


def varrho(decay_type, decay_param: float, k_star: int | None = None) -> float:
    """Spectral-gap factor of the bound; lies in ``(0, 1]``."""
    decay_type = DecayType(decay_type)
    if decay_type is DecayType.SEVERE:
        if not decay_param > 1:
            raise ValueError(f"severe decay needs rho > 1, got {decay_param}")
        return min(1.0, decay_param - 1.0)
    if not decay_param > 0:
        raise ValueError(f"polynomial decay needs alpha > 0, got {decay_param}")
    if k_star is None or k_star < 1:
        raise ValueError("moderate / mild decay needs k_star >= 1")
    return min(1.0, ((k_star + 1) / k_star) ** decay_param - 1.0)


class UBound(NamedTuple):
    value: float
    sanity: float
    varrho: float


def u_upper_bound(eps, m, beta, decay_type, decay_param, k_star=None) -> UBound:
    """Upper bound on the bidiagonalization roundoff unit.

    Returns
    -------
    UBound
        ``value`` is the sharp bound, ``sanity`` the looser
        ``min(eps, (m**-0.5 eps)**(1/(1+beta)))`` that any admissible ``u``
        must also respect, and ``varrho`` the gap factor used.
    """
    _check_common(eps, m, beta)
    vr = varrho(decay_type, decay_param, k_star)
    x = eps / math.sqrt(m)
    value = vr * x ** ((2.0 + beta) / (1.0 + beta))
    sanity = min(eps, x ** (1.0 / (1.0 + beta)))
    return UBound(value, sanity, vr)


def recommend(u_bound: float, safety: float = DEFAULT_SAFETY, grid=None):
    """Cheapest precision whose unit, times ``safety``, stays below ``u_bound``.

    Parameters
    ----------
    u_bound : float
    safety : float
        Margin standing in for "much smaller than"; at least 1.
    grid : iterable of int, optional
        Extra emulated significand lengths to consider besides single and
        double.

    Returns
    -------
    spec : PrecisionSpec
    ok : bool
        False when not even double satisfies the margin; double is
        returned anyway and a warning is issued.
    """
    if safety < 1:
        raise ValueError("safety must be >= 1")
    cands = {F32.bits: F32, F64.bits: F64}
    for t in grid or ():
        cands.setdefault(int(t), emulated(int(t)))
    for bits in sorted(cands):
        spec = cands[bits]
        if spec.unit * safety <= u_bound:
            return spec, True
    warnings.warn(
        f"u bound {u_bound:.3e} is below {safety:g} x the double precision unit; "
        "even double may be marginal",
        RuntimeWarning,
        stacklevel=2,
    )
    return F64, False


@dataclass(frozen=True)
class AdvisorReport:
    eps: float
    m: int
    beta_model: float
    rho0: float | None
    decay_type: DecayType
    decay_param: float
    k_star: int | None
    eta_res: float
    floor: float
    varrho: float
    u_bound: float
    u_sanity: float
    safety: float
    recommended: PrecisionSpec
    satisfied: bool
    notes: tuple = field(default_factory=tuple)

    @property
    def margin(self) -> float:
        return self.u_bound / self.recommended.unit

    def to_record(self) -> dict:
        return {
            "eps": self.eps,
            "m": self.m,
            "beta_model": self.beta_model,
            "rho0": self.rho0,
            "decay_type": self.decay_type.value,
            "decay_param": self.decay_param,
            "k_star": self.k_star,
            "eta_res": self.eta_res,
            "floor": self.floor,
            "C1": C1,
            "varrho": self.varrho,
            "u_bound": self.u_bound,
            "u_sanity": self.u_sanity,
            "safety": self.safety,
            "recommended": self.recommended.label,
            "satisfied": self.satisfied,
            "margin": self.margin,
            "notes": list(self.notes),
        }

    def to_text(self) -> str:
        dp = "rho" if self.decay_type is DecayType.SEVERE else "alpha"
        lines = [
            "Precision advice for the Lanczos bidiagonalization",
            f"  noise level eps        {self.eps:.3e}",
            f"  rows m                 {self.m}",
            f"  Picard exponent beta   {self.beta_model:.4g}",
        ]
        if self.rho0 is not None:
            lines.append(f"  Picard constant rho0   {self.rho0:.4g}")
        lines += [
            f"  decay                  {self.decay_type.value} ({dp} = {self.decay_param:.4g})",
            f"  transition index k*    {self.k_star if self.k_star is not None else '-'}",
            f"  resolution limit       {self.eta_res:.3e}",
            f"  accuracy floor         {self.floor:.3e} (C1 = {C1:g})",
            f"  gap factor varrho      {self.varrho:.4g}",
            f"  bound on u             {self.u_bound:.3e}",
            f"  sanity bound on u      {self.u_sanity:.3e}",
            f"  safety factor          {self.safety:g}",
            f"  recommended            {self.recommended.label} (u = {self.recommended.unit:.3e},"
            f" margin {self.margin:.3g})",
        ]
        for note in self.notes:
            lines.append(f"  note: {note}")
        return "\n".join(lines)


def advise(
    eps,
    m,
    beta,
    decay_type,
    decay_param,
    k_star=None,
    rho0=None,
    safety: float = DEFAULT_SAFETY,
    grid=None,
) -> AdvisorReport:
    """Evaluate the bound for user-supplied model parameters."""
    decay_type = DecayType(decay_type)
    ub = u_upper_bound(eps, m, beta, decay_type, decay_param, k_star)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        spec, ok = recommend(ub.value, safety, grid)
    notes = [str(w.message) for w in caught]
    for w in caught:
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    if decay_type is not DecayType.SEVERE and ub.varrho < 0.1:
        notes.append(
            "slowly decaying spectrum with a late transition; the bound is likely"
            " far too pessimistic here"
        )
    notes.append("the singular value gap hypothesis behind the bound is not checked")
    return AdvisorReport(
        eps=float(eps),
        m=int(m),
        beta_model=float(beta),
        rho0=None if rho0 is None else float(rho0),
        decay_type=decay_type,
        decay_param=float(decay_param),
        k_star=None if k_star is None else int(k_star),
        eta_res=resolution_limit(eps, m, beta),
        floor=accuracy_floor(eps, beta),
        varrho=ub.varrho,
        u_bound=ub.value,
        u_sanity=ub.sanity,
        safety=float(safety),
        recommended=spec,
        satisfied=ok,
        notes=tuple(notes),
    )


def advise_from_diagnostics(
    diag: PicardDiagnostics, eps: float, m: int, safety: float = DEFAULT_SAFETY, grid=None
) -> AdvisorReport:
    """:func:`advise` with the model fitted by :func:`~mplsqr.diagnostics.picard_diagnostics`."""
    rep = advise(
        eps,
        m,
        diag.beta_model,
        diag.decay_type,
        diag.decay_param,
        diag.k_star,
        rho0=diag.rho0,
        safety=safety,
        grid=grid,
    )
    if not diag.reliable:
        notes = rep.notes + (f"model fit unreliable (k* = {diag.k_star})",)
        rep = AdvisorReport(**{**rep.__dict__, "notes": notes})
    return rep
