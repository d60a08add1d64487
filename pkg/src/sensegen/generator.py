"""Stacked-LSTM generator with a Gaussian mixture output head."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import ndmath as nd
from .errors import ConfigError, ContractError, DimensionError
from .mdn import GMMParams, nll, sample_arrays, split_head
from .ndmath import Tensor
from .nn import (
    ACTIVATIONS,
    DenseParams,
    LSTMParams,
    LSTMState,
    dense_forward,
    init_dense,
    init_lstm,
    lstm_step,
    zeros_dense,
    zeros_lstm,
)


@dataclass(frozen=True)
class GeneratorConfig:
    """Layer sizes of the generator.

    ``final_activation="sigmoid"`` squashes the 3K-wide output layer before the
    mixture split, which confines means to (0, 1) and standard deviations to
    (1, e). ``"linear"`` leaves that layer affine.
    """

    lstm_layers: int = 3
    lstm_units: int = 256
    fc_units: int = 128
    mixtures: int = 24
    final_activation: str = "sigmoid"
    sigma_floor: float = 1e-4
    input_dim: int = 1

    def __post_init__(self):
        for name in ("lstm_layers", "lstm_units", "fc_units", "mixtures", "input_dim"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"GeneratorConfig.{name} must be a positive integer, got {v!r}")
        if self.input_dim != 1:
            raise ConfigError("the mixture head emits scalars, so input_dim must be 1")
        if self.final_activation not in ACTIVATIONS:
            raise ConfigError(f"final_activation must be one of {ACTIVATIONS}")
        if self.sigma_floor < 0:
            raise ConfigError("sigma_floor must be >= 0")

    @property
    def head_width(self) -> int:
        return 3 * self.mixtures

    def to_dict(self) -> dict:
        return asdict(self)


class GeneratorModel:
    def __init__(self, stack: Sequence[LSTMParams], fc4: DenseParams, fc5: DenseParams, config: GeneratorConfig):
        self.stack = list(stack)
        self.fc4 = fc4
        self.fc5 = fc5
        self.config = config
        self._validate()

    def _validate(self) -> None:
        cfg = self.config
        if len(self.stack) != cfg.lstm_layers:
            raise ConfigError(f"expected {cfg.lstm_layers} LSTM layers, got {len(self.stack)}")
        width = cfg.input_dim
        for k, p in enumerate(self.stack):
            p.validate()
            if p.input_dim != width or p.hidden_dim != cfg.lstm_units:
                raise ConfigError(
                    f"layer {k} maps {p.input_dim}->{p.hidden_dim}, expected {width}->{cfg.lstm_units}"
                )
            width = p.hidden_dim
        if self.fc4.W.shape != (width, cfg.fc_units) or self.fc4.b.shape != (cfg.fc_units,):
            raise ConfigError(f"fc4 weight {self.fc4.W.shape} does not chain {width}->{cfg.fc_units}")
        if self.fc5.W.shape != (cfg.fc_units, cfg.head_width) or self.fc5.b.shape != (cfg.head_width,):
            raise ConfigError(f"fc5 weight {self.fc5.W.shape} does not chain {cfg.fc_units}->{cfg.head_width}")
        if self.fc4.activation != "sigmoid" or self.fc5.activation != cfg.final_activation:
            raise ConfigError("dense activations do not match the configuration")

    @classmethod
    def init(cls, config: GeneratorConfig, seed: int | np.random.Generator) -> "GeneratorModel":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        widths = [config.input_dim] + [config.lstm_units] * config.lstm_layers
        stack = [init_lstm(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        fc4 = init_dense(config.lstm_units, config.fc_units, rng, "sigmoid")
        fc5 = init_dense(config.fc_units, config.head_width, rng, config.final_activation)
        return cls(stack, fc4, fc5, config)

    @classmethod
    def zeros(cls, config: GeneratorConfig) -> "GeneratorModel":
        widths = [config.input_dim] + [config.lstm_units] * config.lstm_layers
        stack = [zeros_lstm(a, b) for a, b in zip(widths[:-1], widths[1:])]
        return cls(
            stack,
            zeros_dense(config.lstm_units, config.fc_units, "sigmoid"),
            zeros_dense(config.fc_units, config.head_width, config.final_activation),
            config,
        )

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for k, p in enumerate(self.stack):
            for name, t in p.tensors():
                out[f"lstm{k}.{name}"] = t
        for prefix, d in (("fc4", self.fc4), ("fc5", self.fc5)):
            for name, t in d.tensors():
                out[f"{prefix}.{name}"] = t
        return out

    def initial_state(self, batch: int) -> list[LSTMState]:
        return [LSTMState.zeros(batch, p.hidden_dim) for p in self.stack]

    def head(self, h_top: Tensor) -> Tensor:
        """Dense layers on top of the last LSTM output: returns the 3K-wide activation."""
        return dense_forward(self.fc5, dense_forward(self.fc4, h_top))

    def step(self, x: Tensor, states: list[LSTMState]) -> tuple[Tensor, list[LSTMState]]:
        new_states = []
        inp = x
        for p, s in zip(self.stack, states):
            s = lstm_step(p, inp, s)
            new_states.append(s)
            inp = s.h
        return self.head(inp), new_states


def _as_batch(xs) -> tuple[np.ndarray, bool]:
    arr = np.asarray(xs.values if isinstance(xs, Tensor) else xs, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise DimensionError(f"expected a sequence or a (batch, time) array, got shape {arr.shape}")
    return arr, False


def forward(
    m: GeneratorModel, xs, s0: list[LSTMState] | None = None
) -> tuple[GMMParams, list[LSTMState]]:
    """Per-step mixture parameters for inputs ``xs`` of shape (T,) or (batch, T).

    The returned GMMParams fields have shape (T, K) or (batch, T, K); entry t
    is the predictive distribution of the value following ``xs[..., t]``.
    """
    arr, squeeze = _as_batch(xs)
    batch, steps = arr.shape
    if steps < 1:
        raise ContractError("forward: sequence length must be >= 1")
    states = list(s0) if s0 is not None else m.initial_state(batch)
    heads = []
    for t in range(steps):
        l5, states = m.step(Tensor._wrap(arr[:, t : t + 1]), states)
        heads.append(l5)
    l5_seq = nd.stack(heads, axis=1)
    if squeeze:
        l5_seq = nd.reshape(l5_seq, l5_seq.shape[1:])
    return split_head(l5_seq, m.config.sigma_floor), states


def sequence_nll(m: GeneratorModel, window) -> Tensor:
    """Summed next-step NLL: predict ``window[..., 1:]`` from ``window[..., :-1]``."""
    arr, squeeze = _as_batch(window)
    if arr.shape[1] < 2:
        raise ContractError("sequence_nll: window length must be >= 2")
    g, _ = forward(m, arr[:, :-1])
    return nll(g, arr[:, 1:])


def generate(
    m: GeneratorModel,
    length: int,
    rng: np.random.Generator,
    seed_value: float = 0.0,
    count: int = 1,
    clip: tuple[float, float] | None = None,
) -> np.ndarray:
    """Autoregressive sampling; each draw is fed back as the next input.

    Returns an array of shape (count, length). ``clip`` bounds every draw
    before it is emitted and fed back.
    """
    if length < 1:
        raise ContractError("generate: length must be >= 1")
    if count < 1:
        raise ContractError("generate: count must be >= 1")
    out = np.empty((count, length))
    x = np.full((count, 1), float(seed_value))
    with nd.no_grad():
        states = m.initial_state(count)
        for t in range(length):
            l5, states = m.step(Tensor._wrap(x), states)
            g = split_head(l5, m.config.sigma_floor)
            draw = sample_arrays(g.pi.values, g.mu.values, g.sigma.values, rng)
            if clip is not None:
                draw = np.clip(draw, clip[0], clip[1])
            out[:, t] = draw
            x = draw[:, None]
    return out
