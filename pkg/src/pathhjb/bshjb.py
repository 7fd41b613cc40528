"""Augmentation of Brownian-path-dependent control into the path framework,
and the reduction check for coefficients independent of state and control.

The augmented state stacks the driving noise path (replayed exactly through
an identity diffusion block) on top of the controlled state, so the combined
problem is an ordinary path-dependent one with state dimension d + m and
noise dimension d.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .control import ControlProblem, ControlStrategy, cost, value
from .funcalc import FDScheme
from .pathspace import (
    GridConfig,
    Path,
    PathError,
    horizontal_extension,
    restrict,
    vertical_bump,
)

__all__ = [
    "AugmentedProblem",
    "augment",
    "split_path",
    "stack_paths",
    "remark64_check",
    "MixedFunctional",
    "bshjb_residual",
]


@dataclass(frozen=True)
class AugmentedProblem:
    """Coefficients of a problem path-dependent in the noise, state-dependent
    in x: base_drift(omega_path, x, u) -> (m,), base_diffusion -> (m, d),
    base_generator(omega_path, x, y, z, u) -> real with z a d-vector,
    base_terminal(omega_path at horizon, x) -> real.
    """

    base_drift: Callable
    base_diffusion: Callable
    base_generator: Callable
    base_terminal: Callable
    controls: tuple
    steps: int
    horizon: float
    noise_dim: int  # d, also the driving path dimension
    state_dim: int  # m

    def __post_init__(self):
        if self.noise_dim < 1 or self.state_dim < 1:
            raise PathError("noise_dim and state_dim must be >= 1")
        object.__setattr__(self, "controls", tuple(self.controls))

    @property
    def grid(self) -> GridConfig:
        return GridConfig(self.steps, self.horizon, dim=self.noise_dim + self.state_dim, noise_dim=self.noise_dim)


def split_path(p: Path, d: int) -> tuple[Path, Path]:
    """(noise block, state block) of a stacked path; blocks share the grid."""
    if p.d <= d:
        raise PathError(f"path dimension {p.d} cannot split off a {d}-dim noise block")
    omega = p.values[:d]
    xi = p.values[d:]
    return Path._wrap(omega, p.dt), Path._wrap(xi, p.dt)


def stack_paths(omega: Path, xi: Path) -> Path:
    """Stack a noise path on top of a state path sharing the grid and time."""
    if omega.t_index != xi.t_index or omega.dt != xi.dt:
        raise PathError("stacked blocks must share grid and time")
    v = np.vstack([omega.values, xi.values])
    v.setflags(write=False)
    return Path._wrap(v, omega.dt)


def augment(ap: AugmentedProblem) -> ControlProblem:
    """Block construction: drift (0; b-bar), diffusion (I; sigma-bar),
    generator and terminal read the state block only through its endpoint.
    """
    d, m = ap.noise_dim, ap.state_dim

    def drift(p: Path, u) -> np.ndarray:
        omega, xi = split_path(p, d)
        b = np.atleast_1d(np.asarray(ap.base_drift(omega, xi.values[:, -1], u), dtype=float))
        if b.shape != (m,):
            raise PathError(f"base drift must return an ({m},) vector")
        return np.concatenate([np.zeros(d), b])

    def diffusion(p: Path, u) -> np.ndarray:
        omega, xi = split_path(p, d)
        s = np.atleast_2d(np.asarray(ap.base_diffusion(omega, xi.values[:, -1], u), dtype=float))
        if s.shape != (m, d):
            raise PathError(f"base diffusion must return an ({m}, {d}) matrix")
        return np.vstack([np.eye(d), s])

    def gen(p: Path, y: float, z: np.ndarray, u) -> float:
        omega, xi = split_path(p, d)
        return float(ap.base_generator(omega, xi.values[:, -1], y, z, u))

    def term(p: Path) -> float:
        omega, xi = split_path(p, d)
        return float(ap.base_terminal(omega, xi.values[:, -1]))

    return ControlProblem(
        drift=drift,
        diffusion=diffusion,
        generator=gen,
        terminal=term,
        controls=ap.controls,
        grid=ap.grid,
    )


def _check_xu_free(ap: AugmentedProblem, seed: int, tol: float) -> None:
    rng = np.random.default_rng(seed)
    d = ap.noise_dim
    dt = ap.horizon / ap.steps
    for _ in range(6):
        k = int(rng.integers(0, ap.steps + 1))
        omega = Path(rng.normal(size=(d, k + 1)), dt)
        y = float(rng.normal())
        z = rng.normal(size=d)
        xs = [rng.normal(size=ap.state_dim) for _ in range(3)]
        q_ref = ap.base_generator(omega, xs[0], y, z, ap.controls[0])
        for x in xs:
            for u in ap.controls:
                if abs(ap.base_generator(omega, x, y, z, u) - q_ref) > tol:
                    raise PathError("generator depends on x or u; reduction check not applicable")
        f_ref = ap.base_terminal(omega, xs[0])
        for x in xs:
            if abs(ap.base_terminal(omega, x) - f_ref) > tol:
                raise PathError("terminal depends on x; reduction check not applicable")


def remark64_check(
    ap: AugmentedProblem,
    p_omega: Path,
    tolerance: float = 1e-12,
    x0: float | np.ndarray = 0.0,
) -> float:
    """|direct noise-path BSDE value - augmented value| at the noise path.

    Requires base generator and terminal independent of x and u (probed with
    ``tolerance``). The direct side solves the BSDE driven by the noise path
    alone on the exact tree; the augmented side runs the full value
    functional of the block problem started from (p_omega; constant x0).
    """
    if p_omega.d != ap.noise_dim:
        raise PathError("noise path dimension must match the problem noise_dim")
    _check_xu_free(ap, seed=0, tol=tolerance)
    d = ap.noise_dim
    u0 = ap.controls[0]
    x_fill = np.zeros(ap.state_dim) + np.asarray(x0, dtype=float)

    noise_cp = ControlProblem(
        drift=lambda p, u: np.zeros(d),
        diffusion=lambda p, u: np.eye(d),
        generator=lambda p, y, z, u: float(ap.base_generator(p, x_fill, y, z, u)),
        terminal=lambda p: float(ap.base_terminal(p, x_fill)),
        controls=(u0,),
        grid=GridConfig(ap.steps, ap.horizon, dim=d, noise_dim=d),
    )
    direct = cost(noise_cp, p_omega, ControlStrategy.constant(u0))

    xi0 = Path.constant(x_fill, p_omega.t_index, p_omega.dt)
    combined = stack_paths(p_omega, xi0)
    augmented = value(augment(ap), combined)
    return abs(direct - augmented)


@dataclass(frozen=True)
class MixedFunctional:
    """Functional v(omega_path, x) with optional analytic derivatives.

    Derivative fields mirror the mixed equation: dt (horizontal in omega),
    dgamma/dgammagamma (vertical in omega), dx/dxx (classical in x), and
    dxgamma with shape (m, d) holding d/dx_i of dgamma_j. Missing pieces fall
    back to finite differences.
    """

    eval: Callable[[Path, np.ndarray], float]
    dt: Optional[Callable] = None
    dgamma: Optional[Callable] = None
    dgammagamma: Optional[Callable] = None
    dx: Optional[Callable] = None
    dxx: Optional[Callable] = None
    dxgamma: Optional[Callable] = None

    def __call__(self, omega: Path, x) -> float:
        return float(self.eval(omega, np.atleast_1d(np.asarray(x, dtype=float))))


def _omega_bump(omega: Path, j: int, h: float) -> Path:
    e = np.zeros(omega.d)
    e[j] = h
    return vertical_bump(omega, e)


def _mixed_derivatives(v: MixedFunctional, omega: Path, x: np.ndarray, scheme: FDScheme, end_index: Optional[int]):
    d = omega.d
    m = x.shape[0]
    h = scheme.h_vertical * (1.0 + float(np.linalg.norm(omega.values[:, -1])) + float(np.linalg.norm(x)))

    if v.dt is not None:
        dt_v = float(v.dt(omega, x))
    else:
        step = scheme.h_horizontal
        if end_index is not None and omega.t_index + step > end_index:
            base = restrict(omega, omega.t_index - step)
            dt_v = (v(horizontal_extension(base, omega.t_index), x) - v(base, x)) / (step * omega.dt)
        else:
            dt_v = (v(horizontal_extension(omega, omega.t_index + step), x) - v(omega, x)) / (step * omega.dt)

    if v.dgamma is not None:
        dg = np.atleast_1d(np.asarray(v.dgamma(omega, x), dtype=float))
    else:
        dg = np.array([(v(_omega_bump(omega, j, h), x) - v(_omega_bump(omega, j, -h), x)) / (2 * h) for j in range(d)])

    if v.dgammagamma is not None:
        dgg = np.atleast_2d(np.asarray(v.dgammagamma(omega, x), dtype=float))
    else:
        dgg = np.empty((d, d))
        f0 = v(omega, x)
        for j in range(d):
            dgg[j, j] = (v(_omega_bump(omega, j, h), x) - 2 * f0 + v(_omega_bump(omega, j, -h), x)) / h**2
        for a in range(d):
            for b in range(a + 1, d):
                ea = np.zeros(d)
                ea[a] = h
                eb = np.zeros(d)
                eb[b] = h
                pp = v(vertical_bump(omega, ea + eb), x)
                pm = v(vertical_bump(omega, ea - eb), x)
                mp = v(vertical_bump(omega, -ea + eb), x)
                mm = v(vertical_bump(omega, -ea - eb), x)
                dgg[a, b] = dgg[b, a] = (pp - pm - mp + mm) / (4 * h**2)
        dgg = 0.5 * (dgg + dgg.T)

    def ex(i, s):
        e = np.zeros(m)
        e[i] = s * h
        return x + e

    if v.dx is not None:
        dxv = np.atleast_1d(np.asarray(v.dx(omega, x), dtype=float))
    else:
        dxv = np.array([(v(omega, ex(i, 1)) - v(omega, ex(i, -1))) / (2 * h) for i in range(m)])

    if v.dxx is not None:
        dxxv = np.atleast_2d(np.asarray(v.dxx(omega, x), dtype=float))
    else:
        dxxv = np.empty((m, m))
        f0 = v(omega, x)
        for i in range(m):
            dxxv[i, i] = (v(omega, ex(i, 1)) - 2 * f0 + v(omega, ex(i, -1))) / h**2
        for a in range(m):
            for b in range(a + 1, m):
                pp = v(omega, x + h * (_unit(m, a) + _unit(m, b)))
                pm = v(omega, x + h * (_unit(m, a) - _unit(m, b)))
                mp = v(omega, x + h * (-_unit(m, a) + _unit(m, b)))
                mm = v(omega, x - h * (_unit(m, a) + _unit(m, b)))
                dxxv[a, b] = dxxv[b, a] = (pp - pm - mp + mm) / (4 * h**2)
        dxxv = 0.5 * (dxxv + dxxv.T)

    if v.dxgamma is not None:
        dxg = np.atleast_2d(np.asarray(v.dxgamma(omega, x), dtype=float))
    else:
        dxg = np.empty((m, d))
        for i in range(m):
            for j in range(d):
                pp = v(_omega_bump(omega, j, h), ex(i, 1))
                pm = v(_omega_bump(omega, j, -h), ex(i, 1))
                mp = v(_omega_bump(omega, j, h), ex(i, -1))
                mm = v(_omega_bump(omega, j, -h), ex(i, -1))
                dxg[i, j] = (pp - pm - mp + mm) / (4 * h**2)
    return dt_v, dg, dgg, dxv, dxxv, dxg


def _unit(n: int, i: int) -> np.ndarray:
    e = np.zeros(n)
    e[i] = 1.0
    return e


def bshjb_residual(
    ap: AugmentedProblem,
    v: MixedFunctional,
    point: tuple[Path, float | np.ndarray],
    scheme: FDScheme = FDScheme(),
) -> float:
    """Mixed residual at (omega_t, x):

    dt_v + sup_u [ <dx_v, b-bar> + 0.5 tr(dxx_v sigma-bar sigma-bar^T)
        + 0.5 tr(dgammagamma_v) + tr(sigma-bar^T dxgamma_v)
        + q-bar(omega, x, v, dgamma_v + sigma-bar^T dx_v, u) ];

    zero for classical solutions of the mixed equation.
    """
    omega, x_in = point
    x = np.atleast_1d(np.asarray(x_in, dtype=float))
    if omega.d != ap.noise_dim or x.shape != (ap.state_dim,):
        raise PathError("point must be (noise path, m-vector state)")
    dt_v, dg, dgg, dxv, dxxv, dxg = _mixed_derivatives(v, omega, x, scheme, ap.steps)
    best = -np.inf
    for u in ap.controls:
        b = np.atleast_1d(np.asarray(ap.base_drift(omega, x, u), dtype=float))
        sig = np.atleast_2d(np.asarray(ap.base_diffusion(omega, x, u), dtype=float))
        term = float(dxv @ b)
        term += 0.5 * float(np.trace(dxxv @ (sig @ sig.T)))
        term += 0.5 * float(np.trace(dgg))
        term += float(np.trace(sig.T @ dxg))
        z = dg + sig.T @ dxv
        term += float(ap.base_generator(omega, x, v(omega, x), z, u))
        best = max(best, term)
    return dt_v + best
