"""Smooth gauge-type functional family on path space.

The three-layer family built from the sup-norm gap D = ||gamma - eta||_0 and
the endpoint gap e = |gamma_t(t) - eta_s(s)|:

    smooth_core       (D^{2m} - e^{2m})^3 / D^{4m}          (0 when D = 0)
    upsilon           smooth_core + M * e^{2m}
    upsilon_bar       upsilon + |s - t|^2

The core functional is vertically twice differentiable with closed-form
first and second derivatives, which makes ``upsilon`` a smooth surrogate for
the (non-differentiable) sup norm to the power 2m. For M >= 3 it is pinched
between D^{2m} and M*D^{2m}, and satisfies the 2^{2m-1} subadditivity bound.
Defaults m = 3, M = 3 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pathspace import Path, PathError, _joint_gap, add_paths, zero_like

__all__ = [
    "GaugeParams",
    "s_m",
    "upsilon",
    "upsilon_single",
    "upsilon_bar",
    "grad_s",
    "hess_s",
    "grad_power",
    "hess_power",
    "grad_upsilon",
    "hess_upsilon",
    "subadditivity_gap",
    "s_functional",
    "upsilon_functional",
    "upsilon_bar_functional",
]

MAX_M = 6  # powers up to 6m = 36 stay in double range at desk scale


@dataclass(frozen=True)
class GaugeParams:
    m: int = 3
    M: float = 3.0

    def __post_init__(self):
        if not isinstance(self.m, int) or not 1 <= self.m <= MAX_M:
            raise PathError(f"m must be an integer in [1, {MAX_M}], got {self.m}")
        if not np.isfinite(self.M):
            raise PathError("M must be finite")


def _gaps(p: Path, q: Path) -> tuple[float, float]:
    """(sup gap D, endpoint gap e); D is taken after hold-last-value extension.

    The endpoint gap uses the same summation order as the columnwise sup, so
    D >= e holds exactly in floating point (the endpoint column is one of the
    columns the sup ranges over).
    """
    d_sup = _joint_gap(p, q)
    diff_last = p.values[:, -1] - q.values[:, -1]
    e = float(np.sqrt((diff_last**2).sum()))
    return d_sup, e


def _core(d_sup: float, e: float, m: int) -> float:
    # (D^{2m} - e^{2m})^3 / D^{4m} with a zero branch when the denominator
    # underflows: there 0 <= core <= D^{2m} < 1e-150, indistinguishable from
    # the zero branch at double precision (and the naive quotient is 0/0).
    num = (d_sup ** (2 * m) - e ** (2 * m)) ** 3
    den = d_sup ** (4 * m)
    if den == 0.0 or num == 0.0:
        return 0.0
    return num / den


def s_m(p: Path, q: Path, g: GaugeParams = GaugeParams()) -> float:
    """Smooth core (D^{2m} - e^{2m})^3 / D^{4m}, zero branch at D = 0."""
    d_sup, e = _gaps(p, q)
    if d_sup == 0.0:
        return 0.0
    return _core(d_sup, e, g.m)


def upsilon(p: Path, q: Path, g: GaugeParams = GaugeParams()) -> float:
    """Smooth core plus M times the endpoint gap to the 2m."""
    d_sup, e = _gaps(p, q)
    if d_sup == 0.0:
        return 0.0
    return _core(d_sup, e, g.m) + g.M * e ** (2 * g.m)


def upsilon_single(p: Path, g: GaugeParams = GaugeParams()) -> float:
    """upsilon of p against the zero path of the same time (notational shortcut)."""
    return upsilon(p, zero_like(p), g)


def upsilon_bar(p: Path, q: Path, g: GaugeParams = GaugeParams()) -> float:
    """upsilon plus the squared time gap; a gauge-type function on path space."""
    return upsilon(p, q, g) + (p.t - q.t) ** 2


def _pow0(x: float, k: int) -> float:
    # x**k with the convention x**0 == 1 even at x == 0 (the closed forms
    # below rely on it exactly where the accompanying vector factor vanishes).
    return 1.0 if k == 0 else x**k


def grad_s(p: Path, anchor: Path, g: GaugeParams = GaugeParams()) -> np.ndarray:
    """Closed-form vertical gradient of s_m(., anchor) at p.

    Single displayed formula; the squared numerator factor vanishes
    identically on the endpoint-dominant branch, and the zero branch at
    D = 0 is explicit.
    """
    if anchor.t_index > p.t_index:
        raise PathError("anchor time must not exceed the path time")
    d_sup, e = _gaps(p, anchor)
    if d_sup == 0.0 or e == 0.0:
        return np.zeros(p.d)
    m = g.m
    den = d_sup ** (4 * m)
    if den == 0.0:
        return np.zeros(p.d)  # subnormal scale, see _core
    x = p.values[:, -1] - anchor.values[:, -1]
    a = d_sup ** (2 * m) - e ** (2 * m)
    coef = -6.0 * m * a**2 * _pow0(e, 2 * m - 2) / den
    return coef * x


def hess_s(p: Path, anchor: Path, g: GaugeParams = GaugeParams()) -> np.ndarray:
    """Closed-form vertical Hessian of s_m(., anchor) at p (symmetric d x d)."""
    if anchor.t_index > p.t_index:
        raise PathError("anchor time must not exceed the path time")
    d_sup, e = _gaps(p, anchor)
    if d_sup == 0.0:
        return np.zeros((p.d, p.d))
    m = g.m
    den = d_sup ** (4 * m)
    if den == 0.0:
        return np.zeros((p.d, p.d))  # subnormal scale, see _core
    x = p.values[:, -1] - anchor.values[:, -1]
    a = d_sup ** (2 * m) - e ** (2 * m)
    eye = np.eye(p.d)
    if e == 0.0:
        # Only the identity term can survive (its e-power is 2m-2, zero iff m=1).
        if m == 1:
            return -6.0 * a**2 * eye / den
        return np.zeros((p.d, p.d))
    outer = np.outer(x, x)
    h = 24.0 * m**2 * a * _pow0(e, 4 * m - 4) * outer
    h -= 12.0 * m * (m - 1) * a**2 * _pow0(e, 2 * m - 4) * outer
    h -= 6.0 * m * a**2 * _pow0(e, 2 * m - 2) * eye
    return h / den


def grad_power(p: Path, a, m: int) -> np.ndarray:
    """Vertical gradient of |gamma_t(t) - a|^{2m}: 2m e^{2m-2} (endpoint - a)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    x = p.values[:, -1] - a
    e = float(np.linalg.norm(x))
    if e == 0.0:
        return np.zeros(p.d)
    return 2.0 * m * _pow0(e, 2 * m - 2) * x


def hess_power(p: Path, a, m: int) -> np.ndarray:
    """Vertical Hessian of |gamma_t(t) - a|^{2m}:
    2m e^{2m-2} I + 4m(m-1) e^{2m-4} (endpoint-a)(endpoint-a)^T.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    x = p.values[:, -1] - a
    e = float(np.linalg.norm(x))
    eye = np.eye(p.d)
    if e == 0.0:
        return 2.0 * eye if m == 1 else np.zeros((p.d, p.d))
    h = 2.0 * m * _pow0(e, 2 * m - 2) * eye
    if m > 1:
        h += 4.0 * m * (m - 1) * _pow0(e, 2 * m - 4) * np.outer(x, x)
    return h


def grad_upsilon(p: Path, anchor: Path, g: GaugeParams = GaugeParams()) -> np.ndarray:
    """Vertical gradient of upsilon(., anchor): core gradient + M * power gradient."""
    return grad_s(p, anchor, g) + g.M * grad_power(p, anchor.values[:, -1], g.m)


def hess_upsilon(p: Path, anchor: Path, g: GaugeParams = GaugeParams()) -> np.ndarray:
    """Vertical Hessian of upsilon(., anchor)."""
    return hess_s(p, anchor, g) + g.M * hess_power(p, anchor.values[:, -1], g.m)


def subadditivity_gap(p: Path, q: Path, g: GaugeParams = GaugeParams()) -> float:
    """2^{2m-1} (upsilon(p) + upsilon(q)) - upsilon(p + q), nonnegative for M >= 3.

    upsilon of a single path means upsilon against the zero path of the same
    time; p and q must share the grid and time.
    """
    s = add_paths(p, q)
    m = g.m
    return 2.0 ** (2 * m - 1) * (upsilon_single(p, g) + upsilon_single(q, g)) - upsilon_single(s, g)


# ---------------------------------------------------------------------------
# Smooth-functional wrappers (anchor a second path, differentiate in the first).


def s_functional(anchor: Path, g: GaugeParams = GaugeParams()):
    """s_m(., anchor) as a PathFunctional with its closed-form derivatives."""
    from .funcalc import PathFunctional

    return PathFunctional(
        eval=lambda p: s_m(p, anchor, g),
        analytic_dt=lambda p: 0.0,
        analytic_dx=lambda p: grad_s(p, anchor, g),
        analytic_dxx=lambda p: hess_s(p, anchor, g),
    )


def upsilon_functional(anchor: Path, g: GaugeParams = GaugeParams()):
    """upsilon(., anchor) as a PathFunctional; horizontal derivative is zero."""
    from .funcalc import PathFunctional

    return PathFunctional(
        eval=lambda p: upsilon(p, anchor, g),
        analytic_dt=lambda p: 0.0,
        analytic_dx=lambda p: grad_upsilon(p, anchor, g),
        analytic_dxx=lambda p: hess_upsilon(p, anchor, g),
    )


def upsilon_bar_functional(anchor: Path, g: GaugeParams = GaugeParams()):
    """upsilon_bar(., anchor) as a PathFunctional; the time term adds 2(t - t_anchor)."""
    from .funcalc import PathFunctional

    return PathFunctional(
        eval=lambda p: upsilon_bar(p, anchor, g),
        analytic_dt=lambda p: 2.0 * (p.t - anchor.t),
        analytic_dx=lambda p: grad_upsilon(p, anchor, g),
        analytic_dxx=lambda p: hess_upsilon(p, anchor, g),
    )
