"""Independent oracles shared by the unit and acceptance tests."""
from __future__ import annotations

import numpy as np


def numeric_grad(loss_fn, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn()`` w.r.t. ``array``, perturbed in place."""
    grad = np.zeros_like(array, dtype=np.float64)
    flat, gflat = array.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||); 0 when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def gradcheck(build_loss, tensors, h: float = 1e-5) -> float:
    """Largest per-tensor relative error between backward() and finite differences.

    ``build_loss()`` must rebuild a scalar Tensor loss from the current values
    of ``tensors`` (inputs and/or parameters, all requiring grad).
    """
    for t in tensors:
        t.grad = None
    build_loss().backward()
    analytic = [np.array(t.grad, dtype=np.float64) for t in tensors]
    worst = 0.0
    for t, a in zip(tensors, analytic):
        n = numeric_grad(lambda: build_loss().item(), t.data, h)
        worst = max(worst, rel_error(a, n))
    return worst


def weighted_sum(out, rng: np.random.Generator):
    """Scalar probe with generic weights so every output element matters."""
    from gcsep import tensor as T
    w = T.Tensor(rng.standard_normal(out.shape))
    return T.sum_(out * w)


# -- scalar-loop LSTM oracle ------------------------------------------------

def _sig(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x))


def lstm_step_oracle(x, h, c, weight, bias):
    """Textbook LSTM step written with explicit loops; gate order (i, f, g, o)."""
    H = len(h)
    xh = list(x) + list(h)
    pre = []
    for row in range(4 * H):
        acc = bias[row]
        for col, v in enumerate(xh):
            acc += weight[row][col] * v
        pre.append(acc)
    h_new, c_new = [], []
    for j in range(H):
        i_g = _sig(pre[j])
        f_g = _sig(pre[H + j])
        g_g = np.tanh(pre[2 * H + j])
        o_g = _sig(pre[3 * H + j])
        cj = f_g * c[j] + i_g * g_g
        c_new.append(cj)
        h_new.append(o_g * np.tanh(cj))
    return np.array(h_new), np.array(c_new)


def lstm_seq_oracle(seq, weight, bias, reverse=False):
    H = weight.shape[0] // 4
    h, c = np.zeros(H), np.zeros(H)
    out = [None] * len(seq)
    order = range(len(seq) - 1, -1, -1) if reverse else range(len(seq))
    for t in order:
        h, c = lstm_step_oracle(seq[t], h, c, weight, bias)
        out[t] = h
    return np.stack(out)


def total_bias(lstm) -> np.ndarray:
    b = lstm.bias.data.copy()
    if lstm.dual_bias:
        b = b + lstm.bias_hh.data
    return b


def blstm_oracle(seq, blstm):
    fwd = lstm_seq_oracle(seq, blstm.fwd.weight.data, total_bias(blstm.fwd))
    bwd = lstm_seq_oracle(seq, blstm.bwd.weight.data, total_bias(blstm.bwd), reverse=True)
    return np.concatenate([fwd, bwd], axis=-1)


def layer_norm_oracle(x, gain, bias, eps=1e-8):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def chain_oracle(seq, chain):
    """RnnChain on a single [len, feat] sequence, via the scalar-loop LSTM."""
    y = blstm_oracle(seq, chain.rnn)
    y = y @ chain.fc.weight.data.T + chain.fc.bias.data
    return layer_norm_oracle(y, chain.norm.gain.data, chain.norm.bias.data, chain.norm.eps)


def zero_fc(chain):
    chain.fc.weight.data[...] = 0.0
    chain.fc.bias.data[...] = 0.0


def jitter_parameters(module, rng: np.random.Generator, scale: float = 0.1):
    """Move every parameter off its structured initial value.

    Zero biases make LayerNorm see exact zero vectors at padded positions,
    where 1/sqrt(var + eps) is ~1e4 and finite differences stop being
    accurate; gradient checks belong at generic points.
    """
    for p in module.parameters():
        p.data = np.asarray(p.data + rng.normal(0.0, scale, p.shape))
    return module
