import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from otmesh import shock_reg
from otmesh.fields import ScalarFieldDG, StateFieldDG
from otmesh.generators import rectangle_mesh, unit_square_mesh
from otmesh.monitor import DegenerateField
from otmesh.presets import tanh_shock_state, uniform_state
from otmesh.shock_reg import (
    HomotopyState,
    av_field,
    check_constraints,
    eta_solve,
    homotopy_step,
    mu_ramp,
    run_homotopy,
    shock_elements,
)

_MESH = {}


def small_mesh():
    if "m" not in _MESH:
        _MESH["m"] = unit_square_mesh(4, 2)[0]
    return _MESH["m"]


# ramp ----------------------------------------------------------------------


def test_mu_at_threshold():
    assert mu_ramp(0.2, 0.2) == pytest.approx(0.5 - math.atan(100) / math.pi, abs=1e-15)
    assert mu_ramp(0.2, 0.2) == pytest.approx(0.003183, abs=1e-6)


def test_mu_at_one():
    assert mu_ramp(1.0, 0.2) == pytest.approx(0.8, abs=1e-5)


def test_mu_at_zero_is_negligible():
    z = -0.2
    closed = z * (math.atan(100 * z) / math.pi + 0.5) - math.atan(100) / math.pi + 0.5
    assert mu_ramp(0.0, 0.2) == pytest.approx(closed, abs=1e-15)
    assert abs(mu_ramp(0.0, 0.2)) <= 1e-5


def test_mu_monotone_on_grid():
    vals = mu_ramp(np.linspace(0.0, 1.0, 10_001))
    assert np.all(np.diff(vals) >= 0.0)


# artificial viscosity --------------------------------------------------------


def test_av_zero_eta_degenerate():
    m = small_mesh()
    with pytest.warns(DegenerateField):
        av = av_field(ScalarFieldDG.constant(m, 0.0), 1.0)
    assert np.array_equal(av.coeffs, np.zeros_like(av.coeffs))


def test_av_peak_value():
    m = small_mesh()
    c = np.zeros(m.coords.shape[:2])
    c[5] = np.linspace(0.0, 1.0, c.shape[1])
    av = av_field(ScalarFieldDG(m, c), 0.1)
    assert av.coeffs.max() == pytest.approx(0.08, abs=1e-5)


@given(st.floats(1e-6, 1e6), st.integers(0, 2**31 - 1))
def test_av_scale_invariance(scale, seed):
    m = small_mesh()
    eta = ScalarFieldDG(m, np.random.default_rng(seed).uniform(0.0, 1.0, m.coords.shape[:2]))
    a = av_field(eta, 0.5).coeffs
    b = av_field(ScalarFieldDG(m, scale * eta.coeffs), 0.5).coeffs
    assert np.max(np.abs(a - b)) <= 1e-12
    assert np.argmax(a) == np.argmax(b)


# shock set -------------------------------------------------------------------


def test_shock_set_all_and_none():
    m = small_mesh()
    assert shock_elements(m, ScalarFieldDG.constant(m, 1.0)).tolist() == list(range(m.n_elements))
    assert shock_elements(m, ScalarFieldDG.constant(m, 0.0)).size == 0


def test_shock_set_half_domain():
    m = small_mesh()
    left = m.coords[..., 0].mean(axis=1) < 0.5
    eta = ScalarFieldDG(m, np.where(left[:, None], 0.5, 0.0) * np.ones(m.coords.shape[:2]))
    assert shock_elements(m, eta).tolist() == np.flatnonzero(left).tolist()


def test_shock_set_partial_level():
    m = small_mesh()
    c = np.zeros(m.coords.shape[:2])
    c[0] = 1.0
    c[1:4] = 0.5
    c[4:6] = 0.1
    assert shock_elements(m, ScalarFieldDG(m, c)).tolist() == [0, 1, 2, 3]


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_shock_set_monotone(seed, frac):
    m = small_mesh()
    rng = np.random.default_rng(seed)
    lower = rng.uniform(0.0, 1.0, m.coords.shape[:2])
    upper = lower + frac * rng.uniform(0.0, 1.0, lower.shape)
    # equal maxima keep eta_bar <= eta_bar' elementwise after normalisation
    peak = upper.max()
    lower[np.unravel_index(np.argmax(upper), upper.shape)] = peak
    lower = np.minimum(lower, upper)
    a = set(shock_elements(m, ScalarFieldDG(m, lower)).tolist())
    b = set(shock_elements(m, ScalarFieldDG(m, upper)).tolist())
    assert a <= b


# homotopy --------------------------------------------------------------------


def test_homotopy_sequence():
    s = HomotopyState.initial((1.0, 1.5), 0.8)
    seq = []
    for _ in range(3):
        s = homotopy_step(s)
        seq.append((s.lam1, s.lam2))
    expected = [(1.0, 1.5), (0.8, 1.4), (0.512, 1.256)]
    assert np.max(np.abs(np.array(seq) - expected)) <= 1e-12


def test_homotopy_zeta_one_is_fixed():
    s = HomotopyState.initial((0.7, 3.0), 1.0)
    for _ in range(6):
        s = homotopy_step(s)
        assert (s.lam1, s.lam2) == (0.7, 3.0)


@given(st.floats(0.05, 0.99), st.floats(0.01, 10.0), st.floats(1.0, 10.0))
def test_homotopy_properties(zeta, lam1, lam2):
    s = HomotopyState.initial((lam1, lam2), zeta)
    l1, l2 = [], []
    for _ in range(8):
        s = homotopy_step(s)
        l1.append(s.lam1)
        l2.append(s.lam2)
    assert min(l2) >= 1.0
    assert np.all(np.diff(l2) <= 0.0)
    assert np.all(np.diff(l1[1:]) < 0.0)
    # strict decrease while the excess over 1 is still resolved in floating point
    excess = np.array(l2) - 1.0
    resolved = excess[1:] > 1e-12
    assert np.all(np.diff(excess[1:])[resolved[1:]] < 0.0)


@pytest.mark.parametrize("kw", [dict(lam1=0.0), dict(lam2=0.5), dict(zeta=0.0), dict(zeta=1.2), dict(c0=-1.0)])
def test_homotopy_state_validation(kw):
    with pytest.raises(ValueError):
        HomotopyState(**kw)


# constraints -----------------------------------------------------------------


def test_constraints_free_stream_pass():
    m = small_mesh()
    s = StateFieldDG.from_primitive(m, uniform_state())
    v = check_constraints(s, ScalarFieldDG.constant(m, 0.0), 0.0)
    assert v.passed and v.sigma == 0.0


def test_constraints_negative_density():
    m = small_mesh()
    s = StateFieldDG.from_primitive(m, uniform_state())
    c = s.coeffs.copy()
    c[3, 2, 0] = -0.1
    v = check_constraints(StateFieldDG(m, c), None, np.inf)
    assert not v.passed and v.reason == "density <= 0" and v.element == 3


def test_constraints_negative_pressure():
    m = small_mesh()
    s = StateFieldDG.from_primitive(m, uniform_state())
    c = s.coeffs.copy()
    c[6, 4, 3] = 0.0
    v = check_constraints(StateFieldDG(m, c), None, np.inf)
    assert not v.passed and v.reason == "pressure <= 0" and v.element == 6


def test_constraints_smoothness_violation():
    m, _ = unit_square_mesh(3, 3)
    me = m.master
    top = np.polynomial.legendre.legval(me.nodes[:, 0], np.eye(m.k + 1)[m.k])

    def state(amp):
        s = StateFieldDG.from_primitive(m, uniform_state())
        c = s.coeffs.copy()
        c[..., 0] = 1.0 + amp * top  # the truncated density is exactly 1
        return StateFieldDG(m, c)

    sigma0 = check_constraints(state(0.01), None, np.inf).sigma
    v = check_constraints(state(0.06), None, sigma0, c0=5.0)
    assert v.sigma == pytest.approx(6 * sigma0, rel=1e-10)
    assert not v.passed and v.reason == "smoothness"
    assert check_constraints(state(0.04), None, sigma0, c0=5.0).passed


def test_smoothness_variable_choice():
    m = small_mesh()
    s = StateFieldDG.from_primitive(m, uniform_state())
    assert np.allclose(shock_reg.smoothness_variable(s, "mach").coeffs, 1.4)
    with pytest.raises(ValueError):
        shock_reg.smoothness_variable(s, "entropy")


# eta -------------------------------------------------------------------------


def test_eta_uniform_flow_small():
    m = small_mesh()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateField)
        eta = eta_solve(m, StateFieldDG.from_primitive(m, uniform_state()), 1.5)
    assert eta.max_abs() <= 1e-6


def test_eta_constant_source():
    m = small_mesh()
    s = StateFieldDG.from_primitive(m, lambda x, y: (1.0 + 0 * x, -x, 0 * x, 1.0 + 0 * x))
    eta = eta_solve(m, s, 2.0)
    assert np.allclose(eta.coeffs, shock_reg.source_s(s).coeffs.mean(), atol=1e-6)


def _support_width(eta, m):
    eb = eta.coeffs / eta.max_abs()
    x = m.coords[..., 0][eb >= 0.2]
    return x.max() - x.min()


def test_eta_width_grows_with_lambda2():
    m, _ = rectangle_mesh(40, 2, 3)
    s = StateFieldDG.from_primitive(m, tanh_shock_state(width=0.02))
    w15 = _support_width(eta_solve(m, s, 1.5), m)
    w5 = _support_width(eta_solve(m, s, 5.0), m)
    assert w5 > w15


def test_eta_vanishes_on_walls():
    m, g = unit_square_mesh(6, 2)
    s = StateFieldDG.from_primitive(m, lambda x, y: (1.0 + 0 * x, -x, 0 * x, 1.0 + 0 * x))
    eta = eta_solve(m, s, 1.5, wall_tags=(0,))
    assert np.all(eta.coeffs[np.isclose(m.coords[..., 1], 0.0)] == 0.0)
    eta0 = shock_reg.initial_eta(m, g, (0,))
    assert np.all(eta0.coeffs[np.isclose(m.coords[..., 1], 0.0)] == 0.0)
    assert eta0.coeffs.max() == pytest.approx(1.0)


# homotopy state machine -------------------------------------------------------


class FakeSolver:
    """Supplies states whose oscillation grows once lambda1 drops below a threshold."""

    def __init__(self, mesh, break_below=None, negative_at=None):
        self.mesh = mesh
        self.break_below = break_below
        self.negative_at = negative_at
        self.calls = []

    def __call__(self, n, lam1, lam2, eta):
        self.calls.append((n, lam1, lam2))
        amp = 0.02
        if self.break_below is not None and lam1 < self.break_below:
            amp = 0.4
        base = tanh_shock_state(width=0.1)

        def fn(x, y):
            rho, u, v, p = base(x, y)
            return rho * (1.0 + amp * np.cos(9 * np.pi * x) ** 3), u, v, p

        s = StateFieldDG.from_primitive(self.mesh, fn)
        if self.negative_at == n:
            c = s.coeffs.copy()
            c[0, 0, 0] = -1.0
            s = StateFieldDG(self.mesh, c)
        return s


def test_run_homotopy_stops_on_smoothness():
    m, _ = unit_square_mesh(6, 3)
    fake = FakeSolver(m, break_below=0.7)
    res = run_homotopy(fake, m, max_steps=6)
    assert res.stopped_by == "smoothness"
    # n=1 keeps lambda0, n=2 gives 0.8, n=3 gives 0.512 which fails
    assert res.accepted.n == 2
    assert res.accepted.lam1 == pytest.approx(0.8)
    assert [c[0] for c in fake.calls] == [0, 1, 2, 3]
    assert res.trace[-1]["verdict"]["passed"] is False


def test_run_homotopy_positivity_rollback():
    m, _ = unit_square_mesh(6, 3)
    fake = FakeSolver(m, negative_at=2)
    res = run_homotopy(fake, m, max_steps=5)
    assert res.stopped_by == "density <= 0"
    assert res.accepted.n == 1
    assert np.all(res.state.coeffs[..., 0] > 0)


def test_run_homotopy_max_steps():
    m, _ = unit_square_mesh(6, 3)
    res = run_homotopy(FakeSolver(m), m, max_steps=3)
    assert res.stopped_by == "max_steps"
    assert res.accepted.n == 3
    assert res.to_dict()["sigma0"] > 0


def test_run_homotopy_bad_initial_state():
    m, _ = unit_square_mesh(4, 2)
    with pytest.raises(ValueError):
        run_homotopy(FakeSolver(m, negative_at=0), m)
