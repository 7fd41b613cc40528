import numpy as np
import pytest

from pathhjb.funcalc import (
    FDScheme,
    PathFunctional,
    add_functionals,
    constant_functional,
    endpoint_functional,
    horizontal_derivative,
    ito_check,
    running_integral_functional,
    scale_functional,
    time_functional,
    vertical_gradient,
    vertical_hessian,
)
from pathhjb.gauge import GaugeParams, grad_upsilon, hess_upsilon, upsilon_functional
from pathhjb.pathspace import Path, PathError

SQUARE = endpoint_functional(
    lambda x: float(x @ x),
    grad=lambda x: 2.0 * x,
    hess=lambda x: 2.0 * np.eye(x.shape[0]),
)


def test_fdscheme_validation():
    with pytest.raises(PathError):
        FDScheme(h_vertical=0.0)
    with pytest.raises(PathError):
        FDScheme(h_horizontal=0)


def test_vertical_gradient_examples():
    p = Path(np.array([[1.0, 3.0]]), 0.5)
    g = vertical_gradient(SQUARE, p)
    assert g == pytest.approx(np.array([6.0]), abs=1e-8)
    # functional of the initial value only: bump-invariant, exactly zero
    f0 = PathFunctional(eval=lambda q: float(q.values[0, 0]))
    assert np.all(vertical_gradient(f0, p) == 0.0)


def test_vertical_hessian_examples():
    p = Path(np.array([[1.0, 0.5], [0.0, -0.25]]), 0.5)
    h = vertical_hessian(SQUARE, p)
    assert h == pytest.approx(2.0 * np.eye(2), abs=1e-6)
    lin = endpoint_functional(lambda x: float(x.sum()))
    assert vertical_hessian(lin, p) == pytest.approx(np.zeros((2, 2)), abs=1e-7)


def test_horizontal_derivative_examples():
    p = Path(np.array([[0.3, 1.1, 0.7]]), 0.25)
    clock = PathFunctional(eval=lambda q: q.t)
    assert horizontal_derivative(clock, p) == pytest.approx(1.0, abs=1e-14)
    end = PathFunctional(eval=lambda q: float(q.values[0, -1]))
    assert horizontal_derivative(end, p) == 0.0
    integ = running_integral_functional()
    assert horizontal_derivative(integ, p) == pytest.approx(0.7, abs=1e-14)


def test_horizontal_derivative_terminal_convention():
    # at the final grid node the quotient moves one node left
    clock = PathFunctional(eval=lambda q: q.t)
    p = Path(np.array([[0.0, 0.0, 0.0]]), 0.25)
    assert horizontal_derivative(clock, p, end_index=2) == pytest.approx(1.0)
    single = Path(np.array([[0.0]]), 0.25)
    with pytest.raises(PathError):
        horizontal_derivative(clock, single, end_index=0)


def test_fd_matches_analytic_on_gauge_family():
    rng = np.random.default_rng(0)
    g = GaugeParams(3, 3.0)
    scheme = FDScheme()
    checked = 0
    while checked < 50:
        anchor = Path(rng.normal(size=(2, 3)) * 0.5, 0.25)
        p = Path(rng.normal(size=(2, 5)) * 0.5, 0.25)
        e = np.linalg.norm(p.values[:, -1] - anchor.values[:, -1])
        ext = np.concatenate([anchor.values, np.tile(anchor.values[:, -1:], (1, 2))], axis=1)
        interior = np.sqrt(((p.values[:, :-1] - ext[:, :-1]) ** 2).sum(axis=0)).max()
        if abs(e - interior) < 10 * scheme.bump_size(p) or e < 1e-6:
            continue
        f = upsilon_functional(anchor, g)
        an = grad_upsilon(p, anchor, g)
        assert np.linalg.norm(vertical_gradient(f, p, scheme) - an) <= 1e-6 * max(1.0, np.linalg.norm(an))
        anh = hess_upsilon(p, anchor, g)
        assert np.linalg.norm(vertical_hessian(f, p, scheme) - anh) <= 1e-4 * max(1.0, np.linalg.norm(anh))
        checked += 1


def test_fd_matches_analytic_across_builder_functionals():
    # every functional carrying analytic derivatives agrees with the stencil
    rng = np.random.default_rng(1)
    quad = endpoint_functional(
        lambda x: float(x @ x) + 0.3 * float(x.sum()),
        grad=lambda x: 2.0 * x + 0.3,
        hess=lambda x: 2.0 * np.eye(x.shape[0]),
    )
    integ = running_integral_functional()
    clock = time_functional(lambda t: 0.5 * t, dg=lambda t: 0.5)
    for f in (quad, integ, clock):
        for _ in range(100):
            d = int(rng.integers(1, 3))
            k = int(rng.integers(1, 6))
            p = Path(rng.normal(size=(d, k + 1)), 0.25)
            an_g = np.atleast_1d(f.analytic_dx(p))
            fd_g = vertical_gradient(f, p)
            assert np.linalg.norm(an_g - fd_g) <= max(1e-6, 1e-4 * abs(f.eval(p)))
            an_h = np.atleast_2d(f.analytic_dxx(p))
            fd_h = vertical_hessian(f, p)
            assert np.linalg.norm(an_h - fd_h) <= max(1e-6, 1e-4 * abs(f.eval(p)))


def test_combinators_compose_derivatives():
    p = Path(np.array([[0.2, 0.8]]), 0.5)
    f = add_functionals(scale_functional(SQUARE, 2.0), constant_functional(1.0))
    assert f.eval(p) == pytest.approx(2 * 0.64 + 1.0)
    assert f.analytic_dx(p) == pytest.approx(np.array([3.2]))
    assert f.analytic_dxx(p) == pytest.approx(np.array([[4.0]]))
    assert f.analytic_dt(p) == 0.0
    tf = time_functional(lambda t: t**2, dg=lambda t: 2 * t)
    assert tf.analytic_dt(p) == pytest.approx(2 * p.t)


ZERO_DRIFT = lambda p: np.zeros(p.d)  # noqa: E731
UNIT_DIFFUSION = lambda p: np.eye(p.d)  # noqa: E731


def test_ito_check_telescoping_identity():
    # endpoint functional: residual is exactly the telescoped sum, zero
    end = endpoint_functional(
        lambda x: float(x[0]), grad=lambda x: np.ones(1), hess=lambda x: np.zeros((1, 1))
    )
    p0 = Path.constant(0.2, 0, 1.0 / 16)
    drift = lambda p: np.full(1, 0.3)  # noqa: E731
    res = ito_check(end, drift, UNIT_DIFFUSION, p0, 16, n_paths=200, seed=1)
    assert res <= 1e-10


def test_ito_check_affine_insensitive_to_dt():
    aff = endpoint_functional(
        lambda x: 2.0 * float(x[0]) - 0.7,
        grad=lambda x: np.array([2.0]),
        hess=lambda x: np.zeros((1, 1)),
    )
    for steps in (4, 32):
        p0 = Path.constant(-0.4, 0, 1.0 / steps)
        assert ito_check(aff, ZERO_DRIFT, UNIT_DIFFUSION, p0, steps, 100, seed=2) <= 1e-10


def test_ito_check_square_residual_shrinks():
    res = []
    for steps in (8, 16):
        p0 = Path.constant(0.0, 0, 1.0 / steps)
        res.append(ito_check(SQUARE, ZERO_DRIFT, UNIT_DIFFUSION, p0, steps, 1500, seed=3))
    assert res[1] < res[0]


def test_ito_check_gauge_functional_residual_shrinks():
    g = GaugeParams(3, 3.0)
    res = []
    for steps in (6, 24):
        anchor = Path.constant(0.3, 0, 1.0 / steps)
        f = upsilon_functional(anchor, g)
        p0 = Path.constant(0.0, 0, 1.0 / steps)
        res.append(ito_check(f, ZERO_DRIFT, UNIT_DIFFUSION, p0, steps, 1200, seed=4))
    assert res[1] < res[0]


def test_ito_check_fd_fallback_close_to_analytic():
    p0 = Path.constant(0.1, 0, 1.0 / 8)
    plain = PathFunctional(eval=SQUARE.eval)
    with_an = ito_check(SQUARE, ZERO_DRIFT, UNIT_DIFFUSION, p0, 8, 50, seed=5)
    with_fd = ito_check(plain, ZERO_DRIFT, UNIT_DIFFUSION, p0, 8, 50, seed=5)
    assert with_fd == pytest.approx(with_an, rel=1e-5, abs=1e-7)
