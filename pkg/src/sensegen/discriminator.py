"""LSTM classifier that scores a window as real (1) or synthetic (0)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import ndmath as nd
from .errors import ConfigError, ContractError, DimensionError
from .ndmath import Tensor
from .nn import (
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

SCORE_CLAMP = 1e-12


@dataclass(frozen=True)
class DiscriminatorConfig:
    lstm_units: int = 64
    fc_units: int = 16
    window_len: int = 400
    strict: bool = True

    def __post_init__(self):
        for name in ("lstm_units", "fc_units", "window_len"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"DiscriminatorConfig.{name} must be a positive integer, got {v!r}")

    def to_dict(self) -> dict:
        return asdict(self)


class DiscriminatorModel:
    def __init__(self, lstm: LSTMParams, fc: DenseParams, out: DenseParams, config: DiscriminatorConfig):
        self.lstm = lstm
        self.fc = fc
        self.out = out
        self.config = config
        lstm.validate()
        shapes = (lstm.input_dim, lstm.hidden_dim, fc.W.shape, out.W.shape)
        expected = (1, config.lstm_units, (config.lstm_units, config.fc_units), (config.fc_units, 1))
        if shapes != expected:
            raise ConfigError(f"discriminator shape chain {shapes} does not match {expected}")
        if fc.activation != "sigmoid" or out.activation != "sigmoid":
            raise ConfigError("discriminator dense layers must use sigmoid activations")

    @classmethod
    def init(cls, config: DiscriminatorConfig, seed: int | np.random.Generator) -> "DiscriminatorModel":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return cls(
            init_lstm(1, config.lstm_units, rng),
            init_dense(config.lstm_units, config.fc_units, rng, "sigmoid"),
            init_dense(config.fc_units, 1, rng, "sigmoid"),
            config,
        )

    @classmethod
    def zeros(cls, config: DiscriminatorConfig) -> "DiscriminatorModel":
        return cls(
            zeros_lstm(1, config.lstm_units),
            zeros_dense(config.lstm_units, config.fc_units),
            zeros_dense(config.fc_units, 1),
            config,
        )

    def parameters(self) -> dict[str, Tensor]:
        out = {f"lstm.{name}": t for name, t in self.lstm.tensors()}
        out.update({f"fc.{name}": t for name, t in self.fc.tensors()})
        out.update({f"out.{name}": t for name, t in self.out.tensors()})
        return out


def _windows(m: DiscriminatorModel, windows) -> np.ndarray:
    arr = np.asarray(windows.values if isinstance(windows, Tensor) else windows, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"expected (batch, time) windows, got shape {arr.shape}")
    if m.config.strict and arr.shape[1] != m.config.window_len:
        raise ContractError(f"window length {arr.shape[1]} != configured window_len {m.config.window_len}")
    return arr


def score(m: DiscriminatorModel, windows) -> Tensor:
    """Probability that each window is real; shape (batch,)."""
    arr = _windows(m, windows)
    s = LSTMState.zeros(arr.shape[0], m.config.lstm_units)
    for t in range(arr.shape[1]):
        s = lstm_step(m.lstm, Tensor._wrap(arr[:, t : t + 1]), s)
    p = dense_forward(m.out, dense_forward(m.fc, s.h))
    return nd.reshape(p, (arr.shape[0],))


def score_values(m: DiscriminatorModel, windows) -> np.ndarray:
    with nd.no_grad():
        return score(m, windows).values


def bce_from_scores(real_scores, fake_scores) -> Tensor:
    """-(sum log D(real) + sum log(1 - D(fake))) with scores clamped away from 0 and 1."""
    real = nd.clip(real_scores, SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    fake = nd.clip(fake_scores, SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    return nd.neg(nd.sum(nd.log(real)) + nd.sum(nd.log(1.0 - fake)))


def bce_loss(m: DiscriminatorModel, real, fake) -> Tensor:
    if len(real) == 0 or len(fake) == 0:
        raise ContractError("bce_loss: both batches must be non-empty")
    return bce_from_scores(score(m, real), score(m, fake))


def accuracy_from_scores(real_scores, fake_scores, threshold: float = 0.5) -> float:
    """Fraction correct; a score equal to the threshold counts as 'fake'."""
    real_scores = np.asarray(real_scores)
    fake_scores = np.asarray(fake_scores)
    if real_scores.size == 0 or fake_scores.size == 0:
        raise ContractError("accuracy: both batches must be non-empty")
    correct = np.count_nonzero(real_scores > threshold) + np.count_nonzero(fake_scores <= threshold)
    return correct / (real_scores.size + fake_scores.size)


def accuracy(m: DiscriminatorModel, real, fake, threshold: float = 0.5) -> float:
    return accuracy_from_scores(score_values(m, real), score_values(m, fake), threshold)
