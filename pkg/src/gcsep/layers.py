"""Parameterized layers (LSTM/BLSTM, FC, LayerNorm, PReLU) and the parameter registry."""
from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor


class ParamRegistry:
    """Ordered name -> tensor map of a model's trainable parameters."""

    def __init__(self):
        self._entries: OrderedDict[str, Tensor] = OrderedDict()
        self._ids: set[int] = set()

    def register(self, name: str, param: Tensor) -> bool:
        """Add ``param`` under ``name``. Returns False if that exact tensor is already present."""
        if id(param) in self._ids:
            return False
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._entries[name] = param
        self._ids.add(id(param))
        return True

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries.items())

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> list[str]:
        return list(self._entries)

    def tensors(self) -> list[Tensor]:
        return list(self._entries.values())

    def count(self) -> int:
        return sum(p.size for p in self._entries.values())

    def zero_grad(self):
        for p in self._entries.values():
            p.grad = None


class Module:
    """Base class: parameters are ``Tensor`` attributes with ``requires_grad``.

    Sub-modules may be held directly or in lists; discovery follows attribute
    definition order, which makes the registry order deterministic.
    """

    def named_parameters(self, prefix: str = ""):
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def registry(self) -> ParamRegistry:
        reg = ParamRegistry()
        for name, p in self.named_parameters():
            reg.register(name, p)
        return reg

    def parameters(self) -> list[Tensor]:
        return self.registry().tensors()

    def astype(self, dtype):
        """Cast every parameter in place (e.g. float32 for training runs)."""
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        return self

    @property
    def dtype(self):
        return next(self.named_parameters())[1].data.dtype


def count_params(module: Module) -> int:
    return module.registry().count()


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = _uniform(rng, (out_dim, in_dim), in_dim)
        self.bias = T.zeros((out_dim,), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"Linear expects last dim {self.in_dim}, got {x.shape}")
        if x.ndim == 1:
            return T.reshape(T.reshape(x, (1, -1)) @ T.transpose(self.weight), (-1,)) + self.bias
        return x @ T.transpose(self.weight) + self.bias


class LayerNorm(Module):
    """Normalizes the last axis: (x - mean) / sqrt(biased var + eps) * gain + bias."""

    def __init__(self, dim: int, eps: float = 1e-8):
        self.dim = dim
        self.eps = eps
        self.gain = T.ones((dim,), requires_grad=True)
        self.bias = T.zeros((dim,), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.dim:
            raise DimensionError(f"LayerNorm expects last dim {self.dim}, got {x.shape}")
        centered = x - T.mean(x, axis=-1, keepdims=True)
        var = T.mean(centered * centered, axis=-1, keepdims=True)
        inv_std = T.power(var + self.eps, -0.5)
        return centered * inv_std * self.gain + self.bias


class PReLU(Module):
    """max(0, x) + slope * min(0, x) with one learned slope."""

    def __init__(self, init: float = 0.25):
        self.slope = Tensor(init, requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.relu(x) - T.relu(-x) * self.slope


class Lstm(Module):
    """Unidirectional LSTM; gate order (input, forget, cell, output).

    ``weight`` couples input and recurrent weights as [4H x (I + H)]. With
    ``dual_bias`` there are separate input-side and recurrent biases, which is
    the layout whose counts match published model sizes.
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator,
                 dual_bias: bool = True):
        self.input_dim, self.hidden_dim = input_dim, hidden_dim
        self.dual_bias = dual_bias
        self.weight = _uniform(rng, (4 * hidden_dim, input_dim + hidden_dim),
                               input_dim + hidden_dim)
        bias = np.zeros(4 * hidden_dim)
        bias[hidden_dim:2 * hidden_dim] = 1.0  # forget-gate offset
        self.bias = Tensor(bias, requires_grad=True)
        if dual_bias:
            self.bias_hh = T.zeros((4 * hidden_dim,), requires_grad=True)

    def _total_bias(self) -> Tensor:
        return self.bias + self.bias_hh if self.dual_bias else self.bias

    def _gates_to_state(self, gates: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        H = self.hidden_dim
        s = T.sigmoid(gates)
        i, f, o = s[..., :H], s[..., H:2 * H], s[..., 3 * H:]
        g = T.tanh(gates[..., 2 * H:3 * H])
        c_new = f * c + i * g
        return o * T.tanh(c_new), c_new

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        """One recurrence step on [..., I] input with [..., H] state."""
        if x.shape[-1] != self.input_dim or h.shape[-1] != self.hidden_dim \
                or c.shape[-1] != self.hidden_dim:
            raise DimensionError(
                f"lstm_step: x{x.shape} h{h.shape} c{c.shape} vs "
                f"I={self.input_dim} H={self.hidden_dim}")
        xh = T.concat([x, h], axis=-1)
        if xh.ndim == 1:
            xh = T.reshape(xh, (1, -1))
            gates = T.reshape(xh @ T.transpose(self.weight), (-1,))
        else:
            gates = xh @ T.transpose(self.weight)
        return self._gates_to_state(gates + self._total_bias(), c)

    def __call__(self, seq: Tensor, reverse: bool = False) -> Tensor:
        """Run over axis -2 of ``seq`` ([..., len, I]) from zero state; returns [..., len, H]."""
        if seq.ndim < 2:
            raise DimensionError(f"LSTM input needs [..., len, I], got {seq.shape}")
        length = seq.shape[-2]
        if length < 1:
            raise ContractError("LSTM over an empty sequence")
        if seq.shape[-1] != self.input_dim:
            raise DimensionError(f"LSTM expects input dim {self.input_dim}, got {seq.shape}")
        if seq.ndim == 2:  # lone sequence: run as a batch of one
            out = self(T.reshape(seq, (1,) + seq.shape), reverse)
            return T.reshape(out, out.shape[1:])
        I, H = self.input_dim, self.hidden_dim
        w_in = T.transpose(self.weight[:, :I])
        w_rec = T.transpose(self.weight[:, I:])
        # input projection for all steps at once
        proj = seq @ w_in + self._total_bias()
        batch = seq.shape[:-2]
        h = T.zeros(batch + (H,), dtype=seq.data.dtype)
        c = T.zeros(batch + (H,), dtype=seq.data.dtype)
        outputs: list[Tensor] = [None] * length
        steps = range(length - 1, -1, -1) if reverse else range(length)
        for t in steps:
            gates = proj[..., t, :]
            if t != steps[0]:
                gates = gates + h @ w_rec
            h, c = self._gates_to_state(gates, c)
            outputs[t] = h
        return T.stack(outputs, axis=-2)


class BLstm(Module):
    """Bidirectional LSTM: [..., len, I] -> [..., len, 2H] (forward half first)."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator,
                 dual_bias: bool = True):
        self.fwd = Lstm(input_dim, hidden_dim, rng, dual_bias)
        self.bwd = Lstm(input_dim, hidden_dim, rng, dual_bias)

    def __call__(self, seq: Tensor) -> Tensor:
        return T.concat([self.fwd(seq), self.bwd(seq, reverse=True)], axis=-1)


class RnnChain(Module):
    """BLSTM -> FC back to the input width -> LayerNorm, along axis -2.

    This is the unit reused by the intra-block, inter-block and inter-group
    passes; the residual add is left to the caller. ``bidirectional=False``
    swaps the BLSTM for a forward-only (causal) LSTM.
    """

    def __init__(self, feat_dim: int, hidden_dim: int, rng: np.random.Generator,
                 dual_bias: bool = True, bidirectional: bool = True):
        self.bidirectional = bidirectional
        if bidirectional:
            self.rnn = BLstm(feat_dim, hidden_dim, rng, dual_bias)
        else:
            self.rnn = Lstm(feat_dim, hidden_dim, rng, dual_bias)
        self.fc = Linear((2 if bidirectional else 1) * hidden_dim, feat_dim, rng)
        self.norm = LayerNorm(feat_dim)

    def __call__(self, seq: Tensor) -> Tensor:
        return self.norm(self.fc(self.rnn(seq)))


# -- checkpoints -----------------------------------------------------------
#
# A checkpoint is a numpy .npz archive: one .npy member per registry entry,
# keyed by the registry name (the .npy header carries dtype and shape).
# An extra member "__order__" stores the registry names as a JSON list so
# loading can verify that the archive matches the model exactly.

def save_checkpoint(path, module: Module | ParamRegistry):
    reg = module if isinstance(module, ParamRegistry) else module.registry()
    arrays = {name: p.data for name, p in reg}
    arrays["__order__"] = np.frombuffer(json.dumps(reg.names()).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, module: Module):
    reg = module.registry()
    with np.load(Path(path)) as archive:
        names = json.loads(archive["__order__"].tobytes().decode())
        if names != reg.names():
            raise ValueError("checkpoint parameter names do not match the model")
        for name, p in reg:
            arr = archive[name]
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: checkpoint shape {arr.shape} != model {p.shape}")
            p.data = arr.astype(p.data.dtype)
    return module


def state_dict(module: Module | ParamRegistry) -> dict[str, np.ndarray]:
    reg = module if isinstance(module, ParamRegistry) else module.registry()
    return {name: p.data.copy() for name, p in reg}


def load_state_dict(module: Module, state: dict[str, np.ndarray]):
    for name, p in module.registry():
        p.data = state[name].copy()
