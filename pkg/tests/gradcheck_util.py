"""Shared central-finite-difference gradient-check harness."""

import numpy as np

EPS = 1e-4


def numeric_grad(forward_scalar, arr, eps=EPS):
    """Central-difference gradient of a scalar-valued closure w.r.t. arr,
    mutating arr in place entry by entry."""
    g = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = g.ravel()
    for i in range(arr.size):
        old = flat[i]
        flat[i] = old + eps
        fp = forward_scalar()
        flat[i] = old - eps
        fm = forward_scalar()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def max_gradient_error(build, arrays, n_cases=20, seed=0):
    """For each seeded case: build() -> (out_tensor, leaf_tensors); backward
    with a fixed random weighting; compare each leaf's analytic gradient
    against central differences.  Returns the worst relative error."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        objs = arrays(rng)
        out, leaves = build(objs)
        r = rng.standard_normal(out.data.shape)
        out.backward(seed=r)

        def scalar():
            o, _ = build(objs)
            return float((o.data * r).sum())

        for leaf in leaves:
            num = numeric_grad(scalar, leaf.data)
            err = np.abs(leaf.grad - num).max() / max(1.0, np.abs(num).max())
            worst = max(worst, err)
    return worst


def check_grads(build, arrays, tol, n_cases=20, seed=0):
    worst = max_gradient_error(build, arrays, n_cases=n_cases, seed=seed)
    assert worst < tol, f"max relative gradient error {worst:.3e} >= {tol}"
