"""Independent float64 re-implementations used as test oracles.

These avoid the package's ops entirely so a shared bug cannot hide.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv(x, w, b, stride=1):
    k = w.shape[-1]
    pad = k // 2
    xp = np.pad(np.asarray(x, np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.einsum("bchwij,ocij->bohw", win, np.asarray(w, np.float64))
    return out + np.asarray(b, np.float64)[None, :, None, None]


def relu(x):
    return np.maximum(x, 0.0)


def layer_norm(x, g, b, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def softmax(x):
    e = np.exp(x - x.max(-1, keepdims=True))
    return e / e.sum(-1, keepdims=True)


def mha(q_in, kv_in, wq, wk, wv, wo, heads):
    c = q_in.shape[-1]
    d = c // heads
    q, k, v = q_in @ wq, kv_in @ wk, kv_in @ wv
    outs = []
    for h in range(heads):
        sl = slice(h * d, (h + 1) * d)
        att = softmax(q[..., sl] @ np.swapaxes(k[..., sl], -1, -2) / np.sqrt(d))
        outs.append(att @ v[..., sl])
    return np.concatenate(outs, -1) @ wo


def brb(x, block):
    p = {n: t.data.astype(np.float64) for n, t in block.named_tensors()}
    h = relu(conv(x, p["w_expand"], p["b_expand"]))
    h = h + relu(conv(h, p["w_mid"], p["b_mid"]))
    return conv(h, p["w_project"], p["b_project"])


def perceptual_features(img, net):
    feats = []
    x = np.asarray(img, np.float64)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        if i:
            bsz, c, h, wd = x.shape
            x = x.reshape(bsz, c, h // 2, 2, wd // 2, 2).mean(axis=(3, 5))
        x = relu(conv(x, w.data, b.data))
        feats.append(x)
    return feats


def content_loss(a, b, net):
    fa, fb = perceptual_features(a, net), perceptual_features(b, net)
    return float(np.mean([np.mean((x - y) ** 2) for x, y in zip(fa, fb)]))


def style_loss(a, b, net):
    fa, fb = perceptual_features(a, net), perceptual_features(b, net)
    terms = []
    for x, y in zip(fa, fb):
        mx, my = x.mean(axis=(2, 3)), y.mean(axis=(2, 3))
        vx, vy = x.var(axis=(2, 3)), y.var(axis=(2, 3))
        terms.append(np.mean((mx - my) ** 2) + np.mean((vx - vy) ** 2))
    return float(np.mean(terms))
