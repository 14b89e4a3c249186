"""Viscous-plastic constitutive law.

All functions broadcast over leading axes, so a batch of tensors with
shape ``(..., 2, 2)`` is handled the same way as a single tensor. The
assembly code evaluates them at every quadrature point at once.

The stress is written as ``sigma = zeta * S - P/2 I`` with
``S = eps'/2 + tr(eps) I``. With that notation ``Delta_P^2 = S : eps``
and the tangent needed by Newton's method is

    d sigma = zeta dS - (zeta / Delta^2) S (S : d eps).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import RheologyParams

__all__ = [
    "RheologyParams",
    "StrainRate",
    "strain_rate",
    "delta",
    "delta_p",
    "ice_strength",
    "viscosity",
    "stress",
    "stress_derivative",
]

_I = np.eye(2)


@dataclass(frozen=True)
class StrainRate:
    eps: np.ndarray
    dev: np.ndarray
    trace: np.ndarray


def strain_rate(grad_v):
    """Symmetric strain rate of a velocity gradient ``grad_v[..., c, d] = dv_c/dx_d``."""
    g = np.asarray(grad_v, dtype=float)
    eps = 0.5 * (g + np.swapaxes(g, -1, -2))
    tr = eps[..., 0, 0] + eps[..., 1, 1]
    dev = eps - 0.5 * tr[..., None, None] * _I
    return StrainRate(eps=eps, dev=dev, trace=tr)


def delta_p(e: StrainRate):
    """Unregularized deformation measure sqrt(eps':eps'/2 + tr^2)."""
    dd = np.sum(e.dev * e.dev, axis=(-1, -2))
    return np.sqrt(0.5 * dd + e.trace**2)


def delta(e: StrainRate, delta_min):
    """Smoothly regularized deformation, always >= ``delta_min``."""
    dd = np.sum(e.dev * e.dev, axis=(-1, -2))
    return np.sqrt(0.5 * dd + e.trace**2 + delta_min**2)


def ice_strength(h, a, params: RheologyParams):
    """Ice strength P in N/m.

    With ``strength_sign == "hibler"`` this is ``h P* exp(-C (1 - a))``,
    which weakens the ice as concentration drops. ``"printed"`` flips the
    exponent sign; the two agree at a = 1.
    """
    h = np.asarray(h, dtype=float)
    a = np.asarray(a, dtype=float)
    sign = -1.0 if params.strength_sign == "hibler" else 1.0
    return h * params.P_star * np.exp(sign * params.C * (1.0 - a))


def viscosity(P, Delta):
    """Bulk viscosity zeta = P / (2 Delta)."""
    return np.asarray(P, dtype=float) / (2.0 * np.asarray(Delta, dtype=float))


def _s_tensor(e: StrainRate):
    return 0.5 * e.dev + e.trace[..., None, None] * _I


def stress(e: StrainRate, zeta, P):
    zeta = np.asarray(zeta, dtype=float)[..., None, None]
    P = np.asarray(P, dtype=float)[..., None, None]
    return zeta * _s_tensor(e) - 0.5 * P * _I


def stress_derivative(grad_v, d_grad_v, P, delta_min, newton=True):
    """Directional derivative of the stress with respect to the velocity gradient.

    ``P`` is held fixed. With ``newton=False`` the viscosity is frozen,
    which gives the Picard linearization.
    """
    e = strain_rate(grad_v)
    de = strain_rate(d_grad_v)
    D = delta(e, delta_min)
    zeta = viscosity(P, D)[..., None, None]
    dsig = zeta * _s_tensor(de)
    if newton:
        S = _s_tensor(e)
        s_de = np.sum(S * de.eps, axis=(-1, -2))[..., None, None]
        dsig = dsig - zeta / (D**2)[..., None, None] * S * s_de
    return dsig
