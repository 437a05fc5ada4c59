"""Central finite differences against the reverse-mode tape."""

import numpy as np

from stgn.numerics.tensor import NumericError, Tensor


def grad_check(f, x, h=1e-5):
    """Max relative error between ``x.grad`` from backprop and central differences.

    ``f`` maps a :class:`Tensor` to a scalar :class:`Tensor`. The relative
    error per coordinate is ``|a - b| / max(|a|, |b|, 1e-8)``.
    """
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    xt = Tensor(base.copy(), requires_grad=True)
    out = f(xt)
    out.backward()
    analytic = np.zeros_like(base) if xt.grad is None else xt.grad.reshape(base.shape)

    flat = base.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        up = float(f(Tensor(base)).data)
        flat[i] = saved - h
        down = float(f(Tensor(base)).data)
        flat[i] = saved
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"non-finite function value while perturbing coordinate {i}")
        numeric = (up - down) / (2 * h)
        a = analytic.reshape(-1)[i]
        if not np.isfinite(a):
            raise NumericError(f"non-finite analytic gradient at coordinate {i}")
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
