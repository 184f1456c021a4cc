"""Pure-numpy kernels. Reference semantics for :mod:`flslab._ckernels`."""

import numpy as np


def _sigmoid_neg(m):
    # 1 / (1 + exp(m)) without overflow
    out = np.empty_like(m)
    pos = m >= 0
    e = np.exp(-m[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(m[~pos]))
    return out


def softplus_neg(m):
    """log(1 + exp(-m)) evaluated branch-wise."""
    return np.maximum(-m, 0.0) + np.log1p(np.exp(-np.abs(m)))


def margins(X, y, W, v, gamma=1.0):
    pre = X @ W
    return y * (gamma * (np.maximum(pre, 0.0) @ v))


def risk_grad(X, y, W, v, gamma=1.0, sp0=0.0):
    """Mean logistic risk and its subgradient with respect to (W, v).

    Returns ``(risk, margins, dW, dv)``. ``sp0`` is the value used for the
    ReLU derivative at exactly zero pre-activation.
    """
    n = X.shape[0]
    pre = X @ W
    act = np.maximum(pre, 0.0)
    m = y * (gamma * (act @ v))
    risk = softplus_neg(m).sum() / n
    g = -(y * _sigmoid_neg(m)) * (gamma / n)
    mask = (pre > 0.0).astype(np.float64)
    if sp0 != 0.0:
        mask[pre == 0.0] = sp0
    dv = act.T @ g
    dW = X.T @ ((g[:, None] * mask) * v[None, :])
    return risk, m, dW, dv


def class_risks(m, pos):
    loss = softplus_neg(m)
    return loss.mean(), loss[pos].mean()


def advance(X, y, pos, W, v, tau, scale, nsteps, heun=False, stop_level=-1.0, sp0=0.0):
    """Integrate ``nsteps`` explicit steps in place.

    Before each step the positive-class risk is compared with ``stop_level``
    (disabled when negative); integration halts on the first state at or below
    it. A non-finite margin or parameter ends the run with ``finite`` False.
    Returns ``(steps_taken, finite)``.
    """
    h = tau * scale
    pos = np.asarray(pos).astype(bool)
    for k in range(nsteps):
        _, m, dW, dv = risk_grad(X, y, W, v, 1.0, sp0)
        if not np.isfinite(m).all():
            return k, False
        if stop_level >= 0.0 and softplus_neg(m[pos]).mean() <= stop_level:
            return k, True
        if heun:
            W1 = W - h * dW
            v1 = v - h * dv
            _, _, dW1, dv1 = risk_grad(X, y, W1, v1, 1.0, sp0)
            W -= 0.5 * h * (dW + dW1)
            v -= 0.5 * h * (dv + dv1)
        else:
            W -= h * dW
            v -= h * dv
        if not (np.isfinite(W).all() and np.isfinite(v).all()):
            return k + 1, False
    return nsteps, True
