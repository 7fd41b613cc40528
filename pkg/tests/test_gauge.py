import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathhjb.funcalc import FDScheme, vertical_gradient, vertical_hessian
from pathhjb.gauge import (
    GaugeParams,
    grad_power,
    grad_s,
    grad_upsilon,
    hess_power,
    hess_s,
    hess_upsilon,
    s_functional,
    s_m,
    subadditivity_gap,
    upsilon,
    upsilon_bar,
    upsilon_bar_functional,
    upsilon_functional,
    upsilon_single,
)
from pathhjb.pathspace import Path, PathError, _joint_gap, d_infty, sub_paths, zero_like
from pathhjb.sampling import random_pair

G33 = GaugeParams(3, 3.0)


def _interior_sup(p: Path, anchor: Path) -> float:
    # sup over nodes strictly before the final one, after common extension
    k = max(p.t_index, anchor.t_index)
    a = np.concatenate([p.values, np.tile(p.values[:, -1:], (1, k - p.t_index))], axis=1)
    b = np.concatenate([anchor.values, np.tile(anchor.values[:, -1:], (1, k - anchor.t_index))], axis=1)
    return float(np.sqrt(((a - b)[:, :-1] ** 2).sum(axis=0)).max())


def _nonboundary_pair(rng, g, scheme, d_max=3, scale=0.5):
    # random (path, anchor) away from the branch boundary and the singular
    # set; the band is relative because the closed-form gradient degenerates
    # (and FD truncation dominates) as the two branches meet
    while True:
        d = int(rng.integers(1, d_max + 1))
        k = int(rng.integers(1, 6))
        anchor = Path(rng.normal(size=(d, k + 1)) * scale, 0.25)
        p = Path(rng.normal(size=(d, k + 3)) * scale, 0.25)
        e = float(np.linalg.norm(p.values[:, -1] - anchor.values[:, -1]))
        interior = _interior_sup(p, anchor)
        big = _joint_gap(p, anchor)
        if big < 1e-8 or e < 1e-6:
            continue
        if abs(e - interior) > max(10 * scheme.bump_size(p), 0.05 * (1.0 + big)):
            return p, anchor


def test_gauge_params_validation():
    with pytest.raises(PathError):
        GaugeParams(0, 3.0)
    with pytest.raises(PathError):
        GaugeParams(7, 3.0)  # m capped to keep powers in double range


def test_s_m_examples():
    p = Path(np.array([[0.2, 1.4, -0.3]]), 0.5)
    assert s_m(p, p, G33) == 0.0
    # endpoints equal, paths differ: numerator collapses to D^{2m}
    a = Path(np.array([[0.0, 5.0, 1.0]]), 0.5)
    b = Path(np.array([[0.0, 0.0, 1.0]]), 0.5)
    assert s_m(a, b, G33) == pytest.approx(5.0**6, rel=1e-15)
    # constant difference: endpoint gap equals sup gap, so the core vanishes
    c = Path.constant(1.0, 3, 0.5)
    d = Path.constant(0.0, 3, 0.5)
    assert s_m(c, d, G33) == 0.0


def test_s_m_range():
    rng = np.random.default_rng(3)
    for _ in range(500):
        p, q = random_pair(rng, 2, 0.25, 5)
        val = s_m(p, q, G33)
        assert 0.0 <= val <= _joint_gap(p, q) ** 6 + 1e-12


def test_upsilon_examples():
    c = Path.constant(2.0, 4, 0.5)
    assert upsilon_single(c, G33) == pytest.approx(3 * 2.0**6, rel=1e-15)
    assert upsilon(c, c, G33) == 0.0


def test_upsilon_bound_sweep():
    rng = np.random.default_rng(4)
    for m in (1, 2, 3):
        g = GaugeParams(m, 3.0)
        for _ in range(2000):
            p, q = random_pair(rng, 1, 0.25, 6, scale=0.5)
            gap = _joint_gap(p, q) ** (2 * m)
            val = upsilon(p, q, g)
            assert val - gap >= -1e-12
            assert g.M * gap - val >= -1e-12


def test_upsilon_translation_identity():
    rng = np.random.default_rng(5)
    for _ in range(300):
        p, q = random_pair(rng, 2, 0.25, 4)
        assert upsilon(p, q, G33) == pytest.approx(upsilon_single(sub_paths(p, q), G33), rel=1e-12, abs=1e-14)


def test_upsilon_bar_examples():
    p = Path(np.array([[0.4, -0.2]]), 0.5)
    assert upsilon_bar(p, p, G33) == 0.0
    q = Path(np.array([[0.1, 0.2]]), 0.5)
    assert upsilon_bar(p, q, G33) == upsilon(p, q, G33)  # equal times
    r = Path.constant(0.1, 3, 0.5)
    assert upsilon_bar(p, r, G33) == pytest.approx(upsilon(p, r, G33) + 1.0**2)


def test_upsilon_bar_gauge_lower_bound():
    # the (0612d) inequality: upsilon_bar >= sup-gap^6 + time-gap^2
    rng = np.random.default_rng(6)
    for _ in range(2000):
        ka, kb = int(rng.integers(0, 6)), int(rng.integers(0, 6))
        p = Path(rng.normal(size=(1, ka + 1)) * 0.5, 0.25)
        q = Path(rng.normal(size=(1, kb + 1)) * 0.5, 0.25)
        lower = _joint_gap(p, q) ** 6 + (p.t - q.t) ** 2
        assert upsilon_bar(p, q, G33) >= lower - 1e-12


def test_upsilon_bar_is_gauge_type():
    # smallness of upsilon_bar forces d_infty-closeness: take delta = min(eps^6, eps^2)/2
    rng = np.random.default_rng(7)
    for eps in (0.5, 0.25, 0.1):
        delta = min(eps**6, eps**2) / 2.0
        for _ in range(500):
            ka, kb = int(rng.integers(0, 5)), int(rng.integers(0, 5))
            p = Path(rng.normal(size=(1, ka + 1)) * 0.4, 0.25)
            q = Path(rng.normal(size=(1, kb + 1)) * 0.4, 0.25)
            if upsilon_bar(p, q, G33) <= delta:
                assert d_infty(p, q) < eps


def test_grad_s_zero_branches():
    p = Path.constant(1.0, 3, 0.5)
    assert np.all(grad_s(p, p, G33) == 0.0)
    # endpoint-dominant branch: gradient vanishes
    anchor = Path.constant(0.0, 1, 0.5)
    spike = Path(np.array([[0.0, 0.1, 0.0, 2.0]]), 0.5)  # endpoint gap 2 > interior 0.1
    assert np.all(grad_s(spike, anchor, G33) == 0.0)
    assert np.all(hess_s(spike, anchor, G33) == 0.0)


def test_hess_s_endpoint_zero_cases():
    # interior-dominant with zero endpoint gap: -6I for m=1, zero for m>=2
    anchor = Path(np.array([[0.0, 0.0]]), 0.5)
    p = Path(np.array([[0.0, 3.0, 0.0]]), 0.5)
    h1 = hess_s(p, anchor, GaugeParams(1, 3.0))
    assert h1 == pytest.approx(np.array([[-6.0]]))
    assert np.all(hess_s(p, anchor, GaugeParams(2, 3.0)) == 0.0)


def test_grad_hess_anchor_time_precondition():
    p = Path.constant(0.5, 1, 0.5)
    anchor = Path.constant(0.0, 3, 0.5)
    with pytest.raises(PathError):
        grad_s(p, anchor, G33)


def test_grad_s_matches_fd():
    rng = np.random.default_rng(8)
    scheme = FDScheme()
    for _ in range(100):
        p, anchor = _nonboundary_pair(rng, G33, scheme)
        f = s_functional(anchor, G33)
        an = grad_s(p, anchor, G33)
        fd = vertical_gradient(f, p, scheme)
        assert np.linalg.norm(an - fd) <= 1e-6 * max(1.0, np.linalg.norm(an))


def test_hess_s_matches_fd():
    rng = np.random.default_rng(9)
    scheme = FDScheme()
    for _ in range(100):
        p, anchor = _nonboundary_pair(rng, G33, scheme)
        f = s_functional(anchor, G33)
        an = hess_s(p, anchor, G33)
        fd = vertical_hessian(f, p, scheme)
        assert np.linalg.norm(an - fd) <= 1e-4 * max(1.0, np.linalg.norm(an))


def test_power_derivative_examples():
    p = Path(np.array([[1.0, 3.0]]), 0.5)
    assert grad_power(p, [0.0], 1) == pytest.approx(np.array([6.0]))
    assert hess_power(p, [0.0], 1) == pytest.approx(np.array([[2.0]]))
    at = Path.constant(0.7, 2, 0.5)
    for m in (2, 3):
        assert np.all(grad_power(at, [0.7], m) == 0.0)
        assert np.all(hess_power(at, [0.7], m) == 0.0)


def test_power_derivatives_match_fd():
    from pathhjb.funcalc import endpoint_functional

    rng = np.random.default_rng(10)
    scheme = FDScheme()
    for _ in range(100):
        d = int(rng.integers(1, 4))
        m = int(rng.integers(1, 4))
        a = rng.normal(size=d) * 0.5
        p = Path(rng.normal(size=(d, 4)) * 0.5, 0.25)
        if np.linalg.norm(p.values[:, -1] - a) < 1e-2:
            continue
        f = endpoint_functional(lambda x, a=a, m=m: float(np.linalg.norm(x - a) ** (2 * m)))
        fd = vertical_gradient(f, p, scheme)
        an = grad_power(p, a, m)
        assert np.linalg.norm(fd - an) <= 1e-6 * max(1.0, np.linalg.norm(an))
        fdh = vertical_hessian(f, p, scheme)
        anh = hess_power(p, a, m)
        assert np.linalg.norm(fdh - anh) <= 1e-4 * max(1.0, np.linalg.norm(anh))


def test_upsilon_functional_consistency():
    rng = np.random.default_rng(11)
    scheme = FDScheme()
    p, anchor = _nonboundary_pair(rng, G33, scheme)
    f = upsilon_functional(anchor, G33)
    assert f.eval(p) == upsilon(p, anchor, G33)
    assert np.allclose(f.analytic_dx(p), grad_upsilon(p, anchor, G33))
    assert np.allclose(f.analytic_dxx(p), hess_upsilon(p, anchor, G33))
    assert f.analytic_dt(p) == 0.0


def test_upsilon_bar_functional_time_derivative():
    from pathhjb.funcalc import horizontal_derivative

    anchor = Path.constant(0.3, 1, 0.25)
    f = upsilon_bar_functional(anchor, G33)
    rng = np.random.default_rng(14)
    for k in (2, 4):
        p = Path(rng.normal(size=(1, k + 1)) * 0.5, 0.25)
        # the time term |t - t_anchor|^2 differentiates to 2(t - t_anchor);
        # the gauge part has zero horizontal derivative
        fd = horizontal_derivative(f, p)
        expected = f.analytic_dt(p)
        # forward quotient of t^2 carries an O(dt) offset: ((t+dt)^2 - t^2)/dt = 2t + dt
        assert fd == pytest.approx(expected + p.dt, abs=1e-10)


def test_subadditivity_examples():
    z = zero_like(Path.constant(0.0, 3, 0.5))
    assert subadditivity_gap(z, z, G33) == 0.0
    rng = np.random.default_rng(12)
    p = Path(rng.normal(size=(1, 4)) * 0.5, 0.5)
    gap = subadditivity_gap(p, zero_like(p), G33)
    expected = (2.0 ** (2 * 3 - 1) - 1.0) * upsilon_single(p, G33)
    assert gap == pytest.approx(expected, rel=1e-12)
    assert gap >= 0.0


def test_subadditivity_sweep():
    rng = np.random.default_rng(13)
    for m in (1, 2, 3):
        for big_m in (3.0, 5.0):
            g = GaugeParams(m, big_m)
            for _ in range(1000):
                p, q = random_pair(rng, 1, 0.25, 5, scale=0.5)
                assert subadditivity_gap(p, q, g) >= -1e-12


def test_subadditivity_needs_equal_times():
    p = Path.constant(1.0, 2, 0.5)
    q = Path.constant(1.0, 3, 0.5)
    with pytest.raises(PathError):
        subadditivity_gap(p, q, G33)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=1, max_size=6),
    st.lists(st.floats(-3, 3), min_size=1, max_size=6),
    st.integers(1, 3),
)
def test_pinch_bound_property(xs, ys, m):
    # relative slack: the bound is exact in real arithmetic, and rounding
    # noise scales with the magnitudes being subtracted (tiny inputs reach
    # subnormal powers, large ones reach 1e4-scale sixth powers)
    g = GaugeParams(m, 3.0)
    p = Path(np.array([xs]), 0.5)
    q = Path(np.array([ys]), 0.5)
    gap = _joint_gap(p, q) ** (2 * m)
    val = upsilon(p, q, g)
    assert np.isfinite(val)
    assert val - gap >= -1e-12 * max(1.0, gap)
    assert g.M * gap - val >= -1e-12 * max(1.0, gap)
