import numpy as np
import pytest

from errors import ConfigInvalid, KernelUnresolved, NegativeRadius
from lescheme import CONSTANT, CellField, Grid, SchemeConfig, noflow_slopes, select_dt
from metrics import mass
from models import (Burgers, FluxModel, KeyfitzKranzer, KKState, LinearAdvection, NonlocalKernel,
                    NonlocalLWR, burgers_model, burgers_sine_model, kk_drift, kk_initial, kk_model,
                    kk_noflow_slopes, kk_step, linear_advection_model, lwr_model, lwr_nonlocal_model)

SCALAR_MODELS = [LinearAdvection(0.8), LinearAdvection(-1.3), Burgers("p1"), NonlocalLWR(),
                 KeyfitzKranzer()]


@pytest.mark.parametrize("model", SCALAR_MODELS, ids=lambda m: m.name)
def test_noflow_slope_times_u_is_the_flux(model):
    u = np.linspace(0.0, 1.0, 101)
    np.testing.assert_allclose(u * model.f(u), model.H(u), atol=1e-15)


@pytest.mark.parametrize("model", SCALAR_MODELS, ids=lambda m: m.name)
def test_flux_derivative_matches_finite_differences(model):
    u = np.linspace(0.1, 0.9, 9)
    step = 1e-6
    numeric = (model.H(u + step) - model.H(u - step)) / (2 * step)
    np.testing.assert_allclose(model.dH(u), numeric, atol=1e-7)


def test_base_model_is_abstract():
    with pytest.raises(NotImplementedError):
        FluxModel().f(1.0)


def test_factories():
    assert linear_advection_model(-0.5).speed == -0.5
    assert burgers_model("p2").problem == "p2"
    assert burgers_sine_model().problem == "sine"
    assert (lwr_model("forward").x1, lwr_model("forward").x2) == (0.0, 0.25)
    assert isinstance(kk_model(), KeyfitzKranzer)
    assert not FluxModel().has_exact
    assert FluxModel().exact(0.0, 0.0) is None


def test_derivative_bounds():
    u_fprime, flux_prime = Burgers("p1").derivative_bounds(0.0, 2.0)
    assert u_fprime == pytest.approx(1.05)
    assert flux_prime == pytest.approx(2.1)
    assert LinearAdvection(-2.0).derivative_bounds(0.0, 1.0) == pytest.approx((0.0, 2.1))


# --------------------------------------------------------------------------- #
# Burgers problems
# --------------------------------------------------------------------------- #

def test_burgers_exact_solutions():
    p1 = Burgers("p1")
    assert p1.exact(0.3, 0.15) == 2.0
    assert p1.exact(0.5, 0.15) == 1.0
    assert p1.exact(0.7, 0.3) == 0.0
    assert p1.exact(0.6, 0.3) == 2.0
    p2 = Burgers("p2")
    assert p2.exact(0.0, 0.5) == 0.0
    assert p2.exact(0.25, 0.5) == pytest.approx(0.5)
    assert p2.exact(-0.9, 0.5) == -1.0
    np.testing.assert_array_equal(p2.exact(np.array([-0.5, 0.5]), 0.0), [-1.0, 1.0])


def test_p1_interfaces_follow_rankine_hugoniot():
    model = Burgers("p1")

    def speed(left, right):
        return (model.H(left) - model.H(right)) / (left - right)

    dt = 1e-3
    fast, slow = np.subtract(model.breakpoints(0.1 + dt), model.breakpoints(0.1)) / dt
    assert fast == pytest.approx(speed(2.0, 1.0))
    assert slow == pytest.approx(speed(1.0, 0.0))
    merged = (model.breakpoints(0.4 + dt)[0] - model.breakpoints(0.4)[0]) / dt
    assert merged == pytest.approx(speed(2.0, 0.0))
    # the two shocks meet at x = 5/8 when t = 1/4
    assert model.breakpoints(0.25 - 1e-12) == pytest.approx((0.625, 0.625))
    assert model.breakpoints(0.25) == pytest.approx((0.625,))


def test_burgers_problem_setup():
    assert Burgers("p1").boundary == CONSTANT
    assert Burgers("p2").domain == (-1.0, 1.0)
    assert not Burgers("sine").has_exact
    assert Burgers("p1").has_exact
    with pytest.raises(ConfigInvalid):
        Burgers("p3")


def test_linear_advection_exact_is_periodic_shift():
    model = LinearAdvection(1.0, "box")
    x = (np.arange(40) + 0.37) / 40
    np.testing.assert_array_equal(model.exact(x, 1.0), model.initial(x))
    np.testing.assert_allclose(model.exact(x, 0.25), model.initial(x - 0.25 + (x < 0.25)))
    assert model.breakpoints(0.1) == pytest.approx((0.35, 0.6))
    with pytest.raises(ConfigInvalid):
        LinearAdvection(1.0, "gauss")


# --------------------------------------------------------------------------- #
# Nonlocal kernel and traffic model
# --------------------------------------------------------------------------- #

@pytest.mark.parametrize("x1, x2", [(0.25, 0.0), (0.0, 0.25), (0.1, 0.3)])
@pytest.mark.parametrize("at", ["edges", "centers"])
def test_kernel_is_normalised(x1, x2, at):
    kernel = NonlocalKernel(x1, x2, h=0.01, at=at)
    assert np.all(kernel.weights > 0)
    assert np.sum(kernel.weights) * kernel.h == pytest.approx(1.0, abs=1e-12)


def test_kernel_resolution_and_support():
    with pytest.raises(KernelUnresolved):
        NonlocalKernel(0.25, 0.0, h=0.1)
    NonlocalKernel(0.25, 0.0, h=0.1, min_cells=1)
    with pytest.raises(ConfigInvalid):
        NonlocalKernel(0.0, 0.0, h=0.01)
    with pytest.raises(ConfigInvalid):
        NonlocalKernel(0.25, 0.0, h=0.01, at="nodes")


def _lwr_field(model, values, n=1000):
    grid = Grid(model.domain[0], model.domain[1], n, model.boundary)
    return CellField(np.broadcast_to(values, (n,)), grid)


@pytest.mark.parametrize("rho, speed", [(0.0, 1.0), (1.0, 0.0)])
def test_lwr_velocity_limits(rho, speed):
    model = NonlocalLWR()
    U = _lwr_field(model, rho)
    np.testing.assert_allclose(noflow_slopes(U, model, SchemeConfig().limiter), speed, atol=1e-12)


def test_lwr_velocity_stays_in_range():
    model = NonlocalLWR("forward")
    grid = Grid(-5.0, 5.0, 512, CONSTANT)
    U = CellField(model.initial(grid.centers()), grid)
    f = noflow_slopes(U, model, SchemeConfig().limiter)
    assert f.min() >= -1e-12
    assert f.max() <= 1.0 + 1e-12


def test_lwr_kernel_direction():
    backward, forward = NonlocalLWR("backward"), NonlocalLWR("forward")
    step = (np.arange(1000) >= 500).astype(float)   # rho = 1 for x >= 0
    x = np.array([-0.1, 0.3])
    for model in (backward, forward):
        model.pre_step(_lwr_field(model, step), 0.0)
    conv_backward = backward.convolution(x)
    conv_forward = forward.convolution(x)
    assert conv_backward[0] == 0.0
    assert conv_forward[0] > 0.1
    assert conv_backward[1] == pytest.approx(1.0)
    assert conv_forward[1] == pytest.approx(1.0)


def test_lwr_kernel_cache_follows_the_grid():
    model = NonlocalLWR(min_cells=1)
    coarse = model.kernel_for(Grid(-5.0, 5.0, 64, CONSTANT))
    assert model.kernel_for(Grid(-5.0, 5.0, 64, CONSTANT)) is coarse
    assert model.kernel_for(Grid(-5.0, 5.0, 128, CONSTANT)) is not coarse
    with pytest.raises(KernelUnresolved):
        NonlocalLWR().kernel_for(Grid(-5.0, 5.0, 64, CONSTANT))


def test_lwr_initial_queues():
    model = NonlocalLWR()
    np.testing.assert_array_equal(model.initial([-3.0, -2.0, -0.5, 0.8, 1.2, 2.0]),
                                  [0.0, 0.5, 0.75, 0.75, 0.0, 1.0])
    with pytest.raises(ConfigInvalid):
        NonlocalLWR("sideways")


def test_lwr_factory_takes_an_explicit_support():
    model = lwr_nonlocal_model(0.0, 0.25, v_max=2.0)
    assert model.direction == "forward"
    assert model.velocity(0.0, None) == 2.0
    custom = lwr_nonlocal_model(0.1, 0.3, grid=Grid(-5.0, 5.0, 512, CONSTANT))
    assert custom.direction == "custom"
    assert (custom.kernel.x1, custom.kernel.x2) == (0.1, 0.3)
    assert np.sum(custom.kernel.weights) * custom.kernel.h == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(KernelUnresolved):
        lwr_nonlocal_model(0.25, 0.0, grid=Grid(-5.0, 5.0, 64, CONSTANT))


# --------------------------------------------------------------------------- #
# Keyfitz-Kranzer system
# --------------------------------------------------------------------------- #

def test_kk_phi():
    model = KeyfitzKranzer()
    assert model.phi(2.0) == 1.5
    assert model.phi(0.0) == 5.5
    assert model.df(2.0) == 0.0


def _kk_setup(n=128):
    model = KeyfitzKranzer()
    grid = Grid(model.domain[0], model.domain[1], n, model.boundary)
    return model, grid, kk_initial(model, grid)


def test_kk_initial_has_no_drift_in_the_continuum_limit():
    _, _, coarse = _kk_setup(64)
    _, _, fine = _kk_setup(512)
    assert kk_drift(fine) < kk_drift(coarse) < 1e-2


def test_kk_constant_state_is_stationary():
    model, grid, _ = _kk_setup(32)
    state = KKState(*(CellField(np.full(32, v), grid) for v in (1.5, 0.9, 1.2)))
    new, report = kk_step(state, model, SchemeConfig(), 0.01)
    for name in KKState.COMPONENTS:
        np.testing.assert_allclose(getattr(new, name).values, getattr(state, name).values, rtol=1e-14)
    assert report.drift == pytest.approx(0.0, abs=1e-13)


def test_kk_conserves_every_component():
    model, grid, state = _kk_setup()
    cfg = SchemeConfig()
    masses = [mass(c) for c in state.fields().values()]
    t = 0.0
    for _ in range(30):
        f = kk_noflow_slopes(state, model, cfg.limiter, t)
        dt = select_dt(f, grid.h, cfg)
        state, report = kk_step(state, model, cfg, dt, t, f_edges=f)
        t += dt
        assert len(report.masses) == 3
        assert max(abs(d) for d in report.mass_defects) <= 1e-13
    for before, component in zip(masses, state.fields().values()):
        assert mass(component) == pytest.approx(before, abs=1e-12)
    assert report.drift < 0.05


def test_kk_negative_radius_is_reported():
    model, grid, state = _kk_setup(32)
    r = state.r.values.copy()
    r[10:14] = -0.5
    with pytest.raises(NegativeRadius):
        kk_noflow_slopes(KKState(state.r.with_values(r), state.u1, state.u2), model,
                         SchemeConfig().limiter)
