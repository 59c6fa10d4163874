"""Local density approximation exchange-correlation.

Slater exchange together with the Vosko-Wilk-Nusair correlation in the
spin-unpolarized (closed-shell) paramagnetic parametrization fitted to the
Ceperley-Alder data; all quantities in Hartree atomic units.  Pure and
stateless apart from the negative-density diagnostic counter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["XcEval", "eval_lda", "negative_density_count",
           "reset_negative_density_count", "VWN_PARAMS"]

# paramagnetic VWN fit (Ceperley-Alder): A in Hartree, x0/b/c dimensionless
VWN_PARAMS = {
    "A": 0.0310907,
    "x0": -0.10498,
    "b": 3.72744,
    "c": 12.9352,
}

_SLATER = -(3.0 / np.pi) ** (1.0 / 3.0)

_negative_density = 0


def negative_density_count():
    return _negative_density


def reset_negative_density_count():
    global _negative_density
    _negative_density = 0


@dataclass(frozen=True)
class XcEval:
    """Pointwise potential and energy density per electron (both <= 0)."""

    v_xc: np.ndarray
    e_xc: np.ndarray


def _vwn_eps_and_deriv(rs):
    """Correlation energy per electron eps_c(r_s) and d eps_c / d r_s."""
    A = VWN_PARAMS["A"]
    x0 = VWN_PARAMS["x0"]
    b = VWN_PARAMS["b"]
    c = VWN_PARAMS["c"]
    x = np.sqrt(rs)
    X = x * x + b * x + c
    X0 = x0 * x0 + b * x0 + c
    Q = np.sqrt(4.0 * c - b * b)
    atan_term = np.arctan(Q / (2.0 * x + b))
    eps = A * (np.log(x * x / X) + (2.0 * b / Q) * atan_term
               - (b * x0 / X0) * (np.log((x - x0) ** 2 / X)
                                  + (2.0 * (b + 2.0 * x0) / Q) * atan_term))
    Xp = 2.0 * x + b
    datan = -2.0 * Q / (Xp * Xp + Q * Q)
    deps_dx = A * ((2.0 / x - Xp / X)
                   + (2.0 * b / Q) * datan
                   - (b * x0 / X0) * ((2.0 / (x - x0) - Xp / X)
                                      + (2.0 * (b + 2.0 * x0) / Q) * datan))
    # rs = x^2, so d/d rs = (1 / 2x) d/dx
    deps_drs = deps_dx / (2.0 * x)
    return eps, deps_drs


def eval_lda(rho):
    """Exchange-correlation potential and per-electron energy density.

    Accepts scalars or arrays; negative densities are clamped to zero and
    counted in the module diagnostic, zero density maps to (0, 0).
    """
    global _negative_density
    arr = np.asarray(rho, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr).copy()
    neg = arr < 0.0
    if neg.any():
        _negative_density += int(neg.sum())
        arr[neg] = 0.0
    v = np.zeros_like(arr)
    e = np.zeros_like(arr)
    pos = arr > 0.0
    if pos.any():
        r = arr[pos]
        vx = _SLATER * np.cbrt(r)
        ex = 0.75 * vx
        rs = np.cbrt(3.0 / (4.0 * np.pi * r))
        ec, dec = _vwn_eps_and_deriv(rs)
        vc = ec - (rs / 3.0) * dec
        v[pos] = vx + vc
        e[pos] = ex + ec
    if scalar:
        return XcEval(float(v[0]), float(e[0]))
    return XcEval(v, e)
