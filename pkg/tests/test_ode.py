import numpy as np
import pytest

from nextpp import autodiff as ad
from nextpp.errors import ContractError
from nextpp.ode import OdeSolverConfig, ode_solve

from helpers import check_gradients


def test_zero_field_returns_initial_state():
    z0 = ad.Tensor([1.0, -2.0, 3.5])
    out = ode_solve(lambda z, t: z * 0.0, z0, 0.0, 5.0, OdeSolverConfig(step_count=4))
    assert np.array_equal(out.data, z0.data)


def test_exponential_decay_matches_analytic():
    out = ode_solve(lambda z, t: -z, ad.Tensor(1.0), 0.0, 1.0, OdeSolverConfig(step_count=10))
    assert abs(out.data - np.exp(-1.0)) < 1e-6


def test_polynomial_field_exact():
    # RK4 integrates cubics exactly: dz/dt = 2t over [0, 1] -> 1
    out = ode_solve(lambda z, t: 2.0 * t, ad.Tensor(0.0), 0.0, 1.0, OdeSolverConfig(step_count=8))
    assert abs(out.data - 1.0) < 1e-9


def test_zero_length_interval_is_identity():
    z0 = ad.Tensor([0.1, 0.2])
    out = ode_solve(lambda z, t: -z, z0, 3.0, 3.0, OdeSolverConfig(step_count=8))
    assert out is z0  # bit-exact passthrough


def test_reversed_interval_rejected():
    with pytest.raises(ContractError):
        ode_solve(lambda z, t: -z, ad.Tensor(1.0), 1.0, 0.0, OdeSolverConfig())


def test_convergence_order_at_least_3_5():
    """Halving the step size must shrink the error by >= 12x (order ~4)."""
    errors = []
    for steps in (2, 4, 8, 16):
        out = ode_solve(lambda z, t: -z, ad.Tensor(1.0), 0.0, 1.0, OdeSolverConfig(step_count=steps))
        errors.append(abs(out.item() - np.exp(-1.0)))
    for coarse, fine in zip(errors, errors[1:]):
        if fine < 1e-14:  # float noise floor
            break
        assert coarse / fine >= 12.0, f"convergence ratio {coarse / fine:.1f} below 12"


def test_batched_rows_match_scalar_solves():
    cfg = OdeSolverConfig(step_count=6)
    w = np.array([[-1.0, 0.2], [0.0, -0.5]])

    def field(z, t):
        return z @ ad.Tensor(w.T)

    z0 = ad.Tensor([[1.0, 0.5], [0.2, -0.3], [2.0, 1.0]])
    t0 = np.array([0.0, 1.0, 2.0])
    t1 = np.array([1.0, 1.0, 4.0])  # middle row: zero-length
    batched = ode_solve(field, z0, t0, t1, cfg)
    for i in range(3):
        single = ode_solve(field, ad.rows(z0, i, i + 1), float(t0[i]), float(t1[i]), cfg)
        assert np.allclose(batched.data[i], single.data[0], rtol=0, atol=1e-12)
    assert np.array_equal(batched.data[1], z0.data[1])  # zero-length row untouched


def test_gradients_flow_through_solver():
    x0 = np.array([[0.7, -0.2]])

    def build(ps):
        def field(z, t):
            return z @ ps["w"].T + t * ps["u"].reshape(1, -1)

        out = ode_solve(field, ad.Tensor(x0) @ ps["p"], 0.0, 1.5, OdeSolverConfig(step_count=5))
        return (out * out).sum()

    nprng = np.random.default_rng(3)
    params = {
        "w": ad.param(nprng.normal(size=(2, 2)) * 0.4),
        "u": ad.param(nprng.normal(size=2) * 0.4),
        "p": ad.param(nprng.normal(size=(2, 2)) * 0.4),
    }
    check_gradients(build, params, rtol=1e-4)
