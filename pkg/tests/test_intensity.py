import numpy as np
import pytest

from nextpp import autodiff as ad
from nextpp.errors import ContractError
from nextpp.intensity import (
    GAMMA_FLOOR,
    IntensityParams,
    IntensityWeights,
    init_intensity_params,
    intensity_at,
    scaled_softplus,
    softplus_inverse,
    total_intensity_at,
)
from nextpp.rng import Rng

from helpers import check_gradients

D, M = 6, 3


def flat_params(level=0.0, decay=0.0, gamma=1.0, marks=M):
    """Hand-set parameters: W = 0, so the intensity ignores the history row."""
    raw = softplus_inverse(gamma - GAMMA_FLOOR)
    return IntensityParams(
        decay=ad.param(np.full(marks, decay)),
        readout=ad.param(np.zeros((marks, D))),
        bias=ad.param(np.zeros(marks)),
        base=ad.param(np.full(marks, level)),
        gamma_raw=ad.param(np.full(marks, float(raw))),
        mark_count=marks,
    )


def test_scaled_softplus_log_two():
    assert abs(scaled_softplus(0.0, 1.0) - np.log(2.0)) < 1e-12


def test_scaled_softplus_upper_asymptote():
    assert abs(scaled_softplus(50.0, 1.0) - 50.0) < 1e-9


def test_scaled_softplus_lower_asymptote_positive():
    val = scaled_softplus(-50.0, 1.0)
    assert 0.0 < val < 1e-20
    assert np.isfinite(val)


def test_scaled_softplus_rejects_bad_gamma():
    with pytest.raises(ContractError):
        scaled_softplus(1.0, 0.0)


def test_scaled_softplus_monotone_in_x():
    xs = np.linspace(-5, 5, 101)
    vals = [scaled_softplus(x, 0.7) for x in xs]
    assert np.all(np.diff(vals) > 0)


def test_scaled_softplus_approaches_relu_for_small_gamma():
    for x in (-1.3, -0.2, 0.4, 2.0):
        assert abs(scaled_softplus(x, 1e-3) - max(x, 0.0)) < 1e-2


def test_softplus_inverse_roundtrip():
    ys = np.array([1e-3, 0.5, 1.0, 7.0, 40.0])
    xs = softplus_inverse(ys)
    assert np.allclose(np.logaddexp(0.0, xs), ys, rtol=1e-12, atol=1e-12)


def test_constant_intensity_log_two():
    params = flat_params(level=0.0, gamma=1.0)
    c = ad.Tensor(np.random.default_rng(0).normal(size=D))
    for elapsed in (0.0, 0.5, 10.0):
        for m in range(M):
            lam = intensity_at(params, c, elapsed, m)
            assert abs(lam.item() - np.log(2.0)) < 1e-9


def test_negative_decay_is_nonincreasing_in_time():
    params = flat_params(level=1.0, decay=-0.5)
    c = ad.Tensor(np.zeros(D))
    vals = [intensity_at(params, c, e, 0).item() for e in np.linspace(0, 5, 21)]
    assert np.all(np.diff(vals) < 0)


def test_positivity_everywhere():
    rng = Rng(1)
    params = init_intensity_params(M, D, rng)
    weights = IntensityWeights.from_params(params)
    nprng = np.random.default_rng(2)
    for _ in range(50):
        c = nprng.normal(size=D) * 5.0
        lam = weights.grid(c, nprng.uniform(0, 20, size=4))
        assert np.all(lam > 0.0)


def test_readout_gradient_matches_finite_differences():
    nprng = np.random.default_rng(3)
    c = nprng.normal(size=D)

    def build(ps):
        params = IntensityParams(
            decay=ps["decay"], readout=ps["readout"], bias=ps["bias"],
            base=ps["base"], gamma_raw=ps["gamma_raw"], mark_count=M,
        )
        total = intensity_at(params, ad.Tensor(c), 0.7, 1)
        return total + total_intensity_at(params, ad.Tensor(c), 1.3)

    params = {
        "decay": ad.param(nprng.normal(size=M) * 0.3),
        "readout": ad.param(nprng.normal(size=(M, D)) * 0.5),
        "bias": ad.param(nprng.normal(size=M) * 0.2),
        "base": ad.param(nprng.normal(size=M) * 0.2),
        "gamma_raw": ad.param(nprng.normal(size=M) * 0.3),
    }
    check_gradients(build, params, rtol=1e-4)


def test_total_intensity_single_mark_equals_marginal():
    params = flat_params(level=0.3, decay=-0.2, gamma=0.8, marks=1)
    c = ad.Tensor(np.zeros(D))
    a = intensity_at(params, c, 0.9, 0).item()
    b = total_intensity_at(params, c, 0.9).item()
    assert abs(a - b) < 1e-12


def test_total_intensity_symmetric_marks_doubles():
    params = flat_params(level=0.4, decay=-0.1, gamma=1.2, marks=2)
    c = ad.Tensor(np.zeros(D))
    single = intensity_at(params, c, 0.5, 0).item()
    total = total_intensity_at(params, c, 0.5).item()
    assert abs(total - 2.0 * single) < 1e-12


def test_total_intensity_equals_summation_oracle():
    rng = Rng(4)
    params = init_intensity_params(M, D, rng)
    c = ad.Tensor(np.random.default_rng(5).normal(size=D))
    total = total_intensity_at(params, c, 0.8).item()
    summed = sum(intensity_at(params, c, 0.8, m).item() for m in range(M))
    assert abs(total - summed) < 1e-10


def test_gamma_strictly_positive_for_any_raw():
    params = flat_params()
    params.gamma_raw.data = np.array([-100.0, 0.0, 100.0])
    weights = IntensityWeights.from_params(params)
    assert np.all(weights.gamma >= GAMMA_FLOOR)


def test_weights_grid_matches_graph_path():
    rng = Rng(6)
    params = init_intensity_params(M, D, rng)
    weights = IntensityWeights.from_params(params)
    c = np.random.default_rng(7).normal(size=D)
    elapsed = np.array([0.0, 0.4, 2.2])
    grid = weights.grid(c, elapsed)
    for i, e in enumerate(elapsed):
        for m in range(M):
            node = intensity_at(params, ad.Tensor(c), float(e), m)
            assert abs(grid[i, m] - node.item()) < 1e-12


def test_contract_errors():
    params = flat_params()
    c = ad.Tensor(np.zeros(D))
    with pytest.raises(ContractError):
        intensity_at(params, c, -0.1, 0)
    with pytest.raises(ContractError):
        intensity_at(params, c, 0.1, M)
