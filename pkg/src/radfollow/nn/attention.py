from __future__ import annotations

import numpy as np


def attention_pool(H, mask, W, b, ctx):
    """Additive attention pooling over the time axis.

    ``H`` is ``(B, T, K)``; scores are ``ctx . tanh(H W + b)`` and the
    weights are a softmax over the unmasked positions. Returns
    ``(pooled (B, K), alpha (B, T), cache)``.
    """
    if H.shape[1] == 0:
        raise ValueError("attention over an empty sequence")
    u = np.tanh(H @ W + b)
    e = u @ ctx
    if mask is not None:
        e = np.where(mask > 0, e, -np.inf)
    e = e - e.max(axis=1, keepdims=True)
    ex = np.exp(e)
    alpha = ex / ex.sum(axis=1, keepdims=True)
    pooled = np.einsum("bt,btk->bk", alpha, H)
    return pooled, alpha, (H, u, alpha)


def attention_pool_backward(dpooled, cache, W, ctx, grads, prefix):
    H, u, alpha = cache
    dH = alpha[:, :, None] * dpooled[:, None, :]
    dalpha = np.einsum("btk,bk->bt", H, dpooled)
    de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    grads[prefix + "ctx"] += np.einsum("bt,bta->a", de, u)
    dpre = de[:, :, None] * ctx[None, None, :] * (1.0 - u * u)
    A = dpre.shape[-1]
    grads[prefix + "W"] += H.reshape(-1, H.shape[-1]).T @ dpre.reshape(-1, A)
    grads[prefix + "b"] += dpre.sum(axis=(0, 1))
    dH += dpre @ W.T
    return dH
