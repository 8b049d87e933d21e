"""Shared test utilities: central finite differences against the tape."""

import numpy as np

from nextpp import autodiff as ad


def finite_difference(loss_fn, arrays, h=1e-5):
    """Central-difference gradients of loss_fn w.r.t. a dict of numpy arrays.

    loss_fn takes the dict and returns a float; arrays are perturbed one
    entry at a time.
    """
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(arrays)
            flat[i] = orig - h
            down = loss_fn(arrays)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def check_gradients(build_loss, params, h=1e-5, rtol=1e-4, sample=None, rng=None):
    """Compare tape gradients of build_loss(params) against central differences.

    ``build_loss`` maps a dict of leaf Tensors to a scalar Tensor.  When
    ``sample`` is given, only that many randomly chosen coordinates per
    parameter are checked (rng required).  Returns the worst relative error.
    """
    ad.zero_gradients(params)
    loss = build_loss(params)
    loss.backward()
    analytic = ad.collect_gradients(params)

    arrays = {k: p.data.copy() for k, p in params.items()}

    def eval_loss(arrs):
        probe = {k: ad.param(v) for k, v in arrs.items()}
        return build_loss(probe).item()

    worst = 0.0
    for name, arr in arrays.items():
        flat = arr.ravel()
        gflat = analytic[name].ravel()
        if sample is None or flat.size <= sample:
            coords = range(flat.size)
        else:
            coords = rng.integers(0, flat.size, shape=sample)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = eval_loss(arrays)
            flat[i] = orig - h
            down = eval_loss(arrays)
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(1.0, abs(gflat[i]))
            worst = max(worst, err)
            assert err <= rtol, f"{name}[{i}]: analytic {gflat[i]:.8g} vs fd {fd:.8g} (rel {err:.2e})"
    return worst
