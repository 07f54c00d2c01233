"""Shared test utilities: finite-difference gradient checking.

The checker is deliberately independent of the autodiff tape: it re-evaluates
the forward function under central perturbations of the raw numpy buffers.
"""
import numpy as np

from gramnet.tensor import Tape, Tensor, tsum, mul

FD_EPS = 1e-3
FD_TOL = 1e-4


def numeric_grads(f, arrays, eps=FD_EPS):
    """Central finite differences of the scalar ``f()`` w.r.t. each array."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gf = arr.ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f()
            flat[i] = orig - eps
            fm = f()
            flat[i] = orig
            gf[i] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def max_rel_err(a, b):
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float((np.abs(a - b) / scale).max())


def check_grads(forward, leaves, rng, tol=FD_TOL, eps=FD_EPS):
    """Compare tape gradients of a closure over ``leaves`` with central FD.

    ``forward`` takes no arguments and reads the leaf tensors from its
    closure; the scalar under test is sum(out * r) for a fixed random
    projection r, which exercises every output element with a distinct
    weight.
    """
    out_probe = forward()
    r = Tensor(rng.normal(size=out_probe.shape))

    def scalar():
        return float(tsum(mul(forward(), r)).data[0])

    for leaf in leaves:
        leaf.grad = None
    with Tape() as tape:
        loss = tsum(mul(forward(), r))
    tape.backward(loss)

    fd = numeric_grads(scalar, [leaf.data for leaf in leaves], eps=eps)
    worst = 0.0
    for leaf, ref in zip(leaves, fd):
        assert leaf.grad is not None, "leaf did not receive a gradient"
        worst = max(worst, max_rel_err(leaf.grad, ref))
    assert worst < tol, f"gradient mismatch: max relative error {worst:.3e}"
    return worst


def well_separated(shape, rng, span=1.0, margin=3e-3):
    """Values with pairwise gaps > 4*FD_EPS and none within ``margin`` of 0.

    Keeps finite differences of kinked ops (max pooling, leaky relu) away
    from their non-smooth points.
    """
    n = int(np.prod(shape))
    vals = np.linspace(-span, span, n + 2)
    vals = vals[np.abs(vals) > margin][:n]
    assert vals.size == n
    return rng.permutation(vals).reshape(shape)
