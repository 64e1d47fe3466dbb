"""Pure numpy implementation of the MLP kernels.

Mirrors the signatures of the compiled ``_kernels`` extension exactly, so
either module can back :mod:`infoflow.nn`.

Parameter layout (shared with the extension): a single flat float64 array
holding, for every layer ``l``, the row-major weight block ``(n_l, n_{l+1})``
followed by the bias ``(n_{l+1},)``.

Workspace layout: one flat float64 array of length ``B * sum(sizes)``
holding the activations of every layer (input copy included) as consecutive
row-major ``(B, n_l)`` blocks.
"""

import numpy as np

ACT_LINEAR = 0
ACT_TANH = 1
ACT_RELU = 2


def _views(params, sizes):
    out = []
    off = 0
    for i in range(len(sizes) - 1):
        n_in, n_out = sizes[i], sizes[i + 1]
        W = params[off:off + n_in * n_out].reshape(n_in, n_out)
        off += n_in * n_out
        b = params[off:off + n_out]
        off += n_out
        out.append((W, b))
    return out


def _acts(work, sizes, batch):
    out = []
    off = 0
    for n in sizes:
        out.append(work[off:off + batch * n].reshape(batch, n))
        off += batch * n
    return out


def mlp_forward(params, sizes, hidden_act, out_act, out_scale, x, work):
    """Forward pass over a (B, n_0) batch; fills ``work`` and returns a copy of the output."""
    batch = x.shape[0]
    layers = _views(params, sizes)
    acts = _acts(work, sizes, batch)
    acts[0][...] = x
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = acts[i] @ W
        z += b
        act = out_act if i == last else hidden_act
        if act == ACT_TANH:
            np.tanh(z, out=z)
            if i == last and out_scale != 1.0:
                z *= out_scale
        elif act == ACT_RELU:
            np.maximum(z, 0.0, out=z)
        acts[i + 1][...] = z
    return acts[-1].copy()


def mlp_backward(params, sizes, hidden_act, out_act, out_scale, work, dout, grad, dx):
    """Backpropagate ``dout`` through the pass cached in ``work``.

    Writes parameter gradients into ``grad`` (same layout as ``params``) and
    the input gradient into ``dx``.
    """
    batch = dout.shape[0]
    layers = _views(params, sizes)
    grads = _views(grad, sizes)
    acts = _acts(work, sizes, batch)
    last = len(layers) - 1
    delta = np.array(dout, dtype=np.float64)
    for i in range(last, -1, -1):
        act = out_act if i == last else hidden_act
        a = acts[i + 1]
        if act == ACT_TANH:
            if i == last and out_scale != 1.0:
                t = a / out_scale
                delta *= out_scale * (1.0 - t * t)
            else:
                delta *= 1.0 - a * a
        elif act == ACT_RELU:
            delta *= a > 0.0
        W, _ = layers[i]
        gW, gb = grads[i]
        np.matmul(acts[i].T, delta, out=gW)
        np.sum(delta, axis=0, out=gb)
        delta = delta @ W.T
    dx[...] = delta


def adam_update(params, grad, m, v, lr, beta1, beta2, eps, step):
    """In-place bias-corrected Adam update; ``step`` is the 1-based step count."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    params -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def polyak(target, source, tau):
    """target <- tau * source + (1 - tau) * target, in place."""
    if tau == 1.0:
        target[...] = source
    else:
        target *= 1.0 - tau
        target += tau * source
