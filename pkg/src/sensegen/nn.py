"""LSTM cells, stacked unrolling, dense layers, initialization and clipping.

All layers use the row-batch convention: an input of width ``n`` is a
``(batch, n)`` tensor and weights are stored ``(fan_in, fan_out)`` so an
affine map is ``x @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import ndmath as nd
from .errors import ConfigError, ContractError, DimensionError
from .ndmath import Tensor

ACTIVATIONS = ("sigmoid", "linear")

_GATES = ("f", "i", "o", "c")


@dataclass
class LSTMParams:
    """Weights of one LSTM layer (forget, input, output gates and cell candidate)."""

    W_xf: Tensor
    W_hf: Tensor
    b_f: Tensor
    W_xi: Tensor
    W_hi: Tensor
    b_i: Tensor
    W_xo: Tensor
    W_ho: Tensor
    b_o: Tensor
    W_xc: Tensor
    W_hc: Tensor
    b_c: Tensor

    @property
    def input_dim(self) -> int:
        return self.W_xf.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W_hf.shape[0]

    def tensors(self) -> Iterator[tuple[str, Tensor]]:
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    def validate(self) -> None:
        n_in, n_h = self.input_dim, self.hidden_dim
        for g in _GATES:
            expect = {
                f"W_x{g}": (n_in, n_h),
                f"W_h{g}": (n_h, n_h),
                f"b_{g}": (n_h,),
            }
            for name, shape in expect.items():
                actual = getattr(self, name).shape
                if actual != shape:
                    raise DimensionError(f"LSTMParams.{name} has shape {actual}, expected {shape}")


@dataclass
class LSTMState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, batch: int, hidden_dim: int) -> "LSTMState":
        return cls(Tensor(np.zeros((batch, hidden_dim))), Tensor(np.zeros((batch, hidden_dim))))


@dataclass
class DenseParams:
    W: Tensor
    b: Tensor
    activation: str = "sigmoid"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")

    def tensors(self) -> Iterator[tuple[str, Tensor]]:
        yield "W", self.W
        yield "b", self.b


def lstm_step(p: LSTMParams, x: Tensor, s: LSTMState) -> LSTMState:
    """Advance one LSTM layer by a single timestep.

    ``x`` is ``(batch, input_dim)``; ``s.h`` and ``s.c`` are ``(batch, hidden_dim)``.
    """
    if x.ndim != 2 or x.shape[1] != p.input_dim:
        raise DimensionError(f"lstm_step: input shape {x.shape} does not match input_dim {p.input_dim}")
    if s.h.shape != (x.shape[0], p.hidden_dim) or s.c.shape != s.h.shape:
        raise DimensionError(
            f"lstm_step: state shapes h={s.h.shape}, c={s.c.shape} do not match "
            f"(batch={x.shape[0]}, hidden_dim={p.hidden_dim})"
        )
    h = s.h
    f = nd.sigmoid(x @ p.W_xf + h @ p.W_hf + p.b_f)
    i = nd.sigmoid(x @ p.W_xi + h @ p.W_hi + p.b_i)
    o = nd.sigmoid(x @ p.W_xo + h @ p.W_ho + p.b_o)
    cand = nd.tanh(h @ p.W_hc + x @ p.W_xc + p.b_c)
    c = f * s.c + i * cand
    return LSTMState(h=o * nd.tanh(c), c=c)


def lstm_unroll(
    stack: Sequence[LSTMParams],
    xs: Sequence[Tensor],
    s0: Sequence[LSTMState] | None = None,
) -> tuple[list[Tensor], list[LSTMState]]:
    """Run a layer stack over a sequence; layer n reads layer n-1's output at the same step.

    Returns the top layer's ``h`` for every step and the final state of each layer.
    """
    if len(xs) < 1:
        raise ContractError("lstm_unroll: sequence length must be >= 1")
    if not stack:
        raise ConfigError("lstm_unroll: empty layer stack")
    batch = xs[0].shape[0]
    states = list(s0) if s0 is not None else [LSTMState.zeros(batch, p.hidden_dim) for p in stack]
    if len(states) != len(stack):
        raise ContractError(f"lstm_unroll: {len(states)} initial states for {len(stack)} layers")
    outputs = []
    for x in xs:
        inp = x
        for k, p in enumerate(stack):
            states[k] = lstm_step(p, inp, states[k])
            inp = states[k].h
        outputs.append(inp)
    return outputs, states


def dense_forward(p: DenseParams, x: Tensor) -> Tensor:
    if x.ndim != 2 or x.shape[1] != p.W.shape[0]:
        raise DimensionError(f"dense_forward: input shape {x.shape} does not match weight {p.W.shape}")
    z = x @ p.W + p.b
    return nd.sigmoid(z) if p.activation == "sigmoid" else z


# -- initialization ---------------------------------------------------------


def _uniform(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> Tensor:
    s = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-s, s, size=shape))


def _check_sizes(**sizes: int) -> None:
    for name, n in sizes.items():
        if int(n) != n or n < 1:
            raise ConfigError(f"{name} must be a positive integer, got {n!r}")


def init_lstm(input_dim: int, hidden_dim: int, rng: np.random.Generator, forget_bias: float = 1.0) -> LSTMParams:
    _check_sizes(input_dim=input_dim, hidden_dim=hidden_dim)
    kw = {}
    for g in _GATES:
        kw[f"W_x{g}"] = _uniform(rng, input_dim, (input_dim, hidden_dim))
        kw[f"W_h{g}"] = _uniform(rng, hidden_dim, (hidden_dim, hidden_dim))
        kw[f"b_{g}"] = Tensor(np.full(hidden_dim, forget_bias if g == "f" else 0.0))
    return LSTMParams(**kw)


def init_dense(fan_in: int, fan_out: int, rng: np.random.Generator, activation: str = "sigmoid") -> DenseParams:
    _check_sizes(fan_in=fan_in, fan_out=fan_out)
    return DenseParams(_uniform(rng, fan_in, (fan_in, fan_out)), Tensor(np.zeros(fan_out)), activation)


def zeros_lstm(input_dim: int, hidden_dim: int) -> LSTMParams:
    _check_sizes(input_dim=input_dim, hidden_dim=hidden_dim)
    kw = {}
    for g in _GATES:
        kw[f"W_x{g}"] = Tensor(np.zeros((input_dim, hidden_dim)))
        kw[f"W_h{g}"] = Tensor(np.zeros((hidden_dim, hidden_dim)))
        kw[f"b_{g}"] = Tensor(np.zeros(hidden_dim))
    return LSTMParams(**kw)


def zeros_dense(fan_in: int, fan_out: int, activation: str = "sigmoid") -> DenseParams:
    _check_sizes(fan_in=fan_in, fan_out=fan_out)
    return DenseParams(Tensor(np.zeros((fan_in, fan_out))), Tensor(np.zeros(fan_out)), activation)


def init_params(
    lstm_sizes: Sequence[int],
    dense_sizes: Sequence[int],
    seed: int | np.random.Generator,
    dense_activations: Sequence[str] | None = None,
) -> tuple[list[LSTMParams], list[DenseParams]]:
    """Build an LSTM stack followed by dense layers.

    ``lstm_sizes`` is ``[input_dim, h1, h2, ...]``; the dense chain starts at the
    last LSTM width and walks ``dense_sizes``. Weights are drawn from
    U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases are zero except the forget gate (1.0).
    """
    if len(lstm_sizes) < 2:
        raise ConfigError("lstm_sizes needs an input width and at least one layer width")
    _check_sizes(**{f"lstm_sizes[{k}]": n for k, n in enumerate(lstm_sizes)})
    _check_sizes(**{f"dense_sizes[{k}]": n for k, n in enumerate(dense_sizes)})
    acts = list(dense_activations) if dense_activations is not None else ["sigmoid"] * len(dense_sizes)
    if len(acts) != len(dense_sizes):
        raise ConfigError("one activation per dense layer is required")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    stack = [init_lstm(a, b, rng) for a, b in zip(lstm_sizes[:-1], lstm_sizes[1:])]
    widths = [lstm_sizes[-1], *dense_sizes]
    dense = [init_dense(a, b, rng, act) for a, b, act in zip(widths[:-1], widths[1:], acts)]
    return stack, dense


# -- gradient clipping ------------------------------------------------------


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(np.sum([np.sum(g * g) for g in grads.values()])))


def clip_gradients(
    grads: Mapping[str, np.ndarray], max_norm: float, mode: str = "global"
) -> dict[str, np.ndarray]:
    """Rescale gradients so their global L2 norm is at most ``max_norm``.

    ``mode="element"`` instead clamps each entry to [-max_norm, max_norm].
    """
    if not max_norm > 0:
        raise ConfigError(f"max_norm must be positive, got {max_norm}")
    if mode == "element":
        return {k: np.clip(g, -max_norm, max_norm) for k, g in grads.items()}
    if mode != "global":
        raise ConfigError(f"unknown clipping mode {mode!r}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads)
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}
