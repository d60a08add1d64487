"""RMSProp, minibatch training loops and the alternating generator/discriminator schedule."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import ndmath as nd
from .discriminator import DiscriminatorModel, accuracy_from_scores, bce_loss, score_values
from .errors import ConfigError, ContractError
from .generator import GeneratorModel, generate, sequence_nll
from .ndmath import Tensor
from .nn import DenseParams, LSTMParams, clip_gradients, dense_forward, init_dense, init_lstm, lstm_unroll
from .rng import stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    minibatch_size: int = 32
    d_epochs: int = 200
    g_epochs: int = 100
    outer_rounds: int = 10
    tbptt_window: int = 100
    learning_rate: float = 1e-3
    rmsprop_decay: float = 0.9
    rmsprop_eps: float = 1e-6
    clip_norm: float = 5.0
    clip_mode: str = "global"
    minibatches_per_round: int = 8
    holdout_fraction: float = 0.25
    sample_clip: bool = True
    burn_in: int = 0
    reset_discriminator: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in (
            "minibatch_size",
            "d_epochs",
            "g_epochs",
            "outer_rounds",
            "tbptt_window",
            "minibatches_per_round",
        ):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"TrainConfig.{name} must be a positive integer, got {v!r}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if not 0.0 < self.rmsprop_decay < 1.0:
            raise ConfigError("rmsprop_decay must lie in (0, 1)")
        if self.rmsprop_eps <= 0 or self.clip_norm <= 0:
            raise ConfigError("rmsprop_eps and clip_norm must be positive")
        if self.clip_mode not in ("global", "element"):
            raise ConfigError(f"unknown clip_mode {self.clip_mode!r}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in (0, 1)")
        if int(self.burn_in) != self.burn_in or self.burn_in < 0:
            raise ConfigError("burn_in must be a non-negative integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        return asdict(self)


# -- optimizer --------------------------------------------------------------


@dataclass
class OptimizerState:
    cache: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def rmsprop_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    cfg: TrainConfig,
) -> tuple[Mapping[str, Tensor], OptimizerState]:
    """One RMSProp update, applied in place to ``params``.

    cache <- decay * cache + (1 - decay) * g^2
    param <- param - lr * g / (sqrt(cache) + eps)
    """
    rho, lr, eps = cfg.rmsprop_decay, cfg.learning_rate, cfg.rmsprop_eps
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ContractError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        cache = state.cache.get(name)
        if cache is None:
            cache = np.zeros_like(p.values)
        cache = rho * cache + (1.0 - rho) * g * g
        state.cache[name] = cache
        p.values = p.values - lr * g / (np.sqrt(cache) + eps)
    state.step += 1
    return params, state


def _minibatches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + size] for i in range(0, n, size)]


def _gradient_step(model, loss: Tensor, tape: nd.Tape, state: OptimizerState, cfg: TrainConfig) -> None:
    params = model.parameters()
    grads = nd.backward(tape, loss)
    named = {k: grads[t] for k, t in params.items()}
    named = clip_gradients(named, cfg.clip_norm, cfg.clip_mode)
    rmsprop_step(params, named, state, cfg)


# -- generator --------------------------------------------------------------


def _fit_sequence_model(
    model,
    loss_fn: Callable,
    windows: np.ndarray,
    cfg: TrainConfig,
    epochs: int,
    rng: np.random.Generator,
    state: OptimizerState,
) -> list[float]:
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 2 or windows.shape[0] == 0:
        raise ConfigError("training needs a non-empty (n_windows, length) array")
    if windows.shape[1] < 2:
        raise ConfigError("training windows need at least 2 values")
    steps_per_window = windows.shape[1] - 1
    history = []
    for epoch in range(epochs):
        total = 0.0
        for idx in _minibatches(len(windows), cfg.minibatch_size, rng):
            batch = windows[idx]
            with nd.Tape() as tape:
                summed = loss_fn(model, batch)
                loss = summed * (1.0 / (len(batch) * steps_per_window))
            total += summed.item()
            _gradient_step(model, loss, tape, state, cfg)
        history.append(total / (len(windows) * steps_per_window))
        logger.debug("epoch %d mean loss %.6f", epoch + 1, history[-1])
    return history


def train_generator(
    model: GeneratorModel,
    windows,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    epochs: int | None = None,
    state: OptimizerState | None = None,
) -> tuple[GeneratorModel, list[float]]:
    """Fit the generator by next-step NLL on windows of ``tbptt_window + 1`` values.

    Each window starts from zero LSTM state, so gradients never cross window
    boundaries. Returns the model (updated in place) and the mean per-step NLL
    of every epoch.
    """
    rng = rng if rng is not None else stream(cfg.seed, "shuffling")
    state = state if state is not None else OptimizerState()
    epochs = cfg.g_epochs if epochs is None else epochs
    history = _fit_sequence_model(model, sequence_nll, windows, cfg, epochs, rng, state)
    return model, history


# -- discriminator ----------------------------------------------------------


def split_holdout(windows: np.ndarray, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle and split into (train, held_out); both parts keep at least one window."""
    n = len(windows)
    if n < 2:
        raise ConfigError("need at least two windows to reserve a held-out set")
    n_hold = min(max(1, int(round(n * fraction))), n - 1)
    order = rng.permutation(n)
    return windows[order[n_hold:]], windows[order[:n_hold]]


def train_discriminator(
    model: DiscriminatorModel,
    real_windows,
    fake_windows,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    epochs: int | None = None,
    state: OptimizerState | None = None,
) -> tuple[DiscriminatorModel, list[float]]:
    """Fit by cross-entropy on real (target 1) vs fake (target 0) windows.

    A ``holdout_fraction`` share of each source is never trained on; the
    returned history is the accuracy on that balanced held-out set after
    every epoch.
    """
    real = np.asarray(real_windows, dtype=np.float64)
    fake = np.asarray(fake_windows, dtype=np.float64)
    if real.ndim != 2 or fake.ndim != 2 or len(real) == 0 or len(fake) == 0:
        raise ConfigError("train_discriminator needs non-empty real and fake window arrays")
    rng = rng if rng is not None else stream(cfg.seed, "shuffling")
    state = state if state is not None else OptimizerState()
    epochs = cfg.d_epochs if epochs is None else epochs
    real_train, real_hold = split_holdout(real, cfg.holdout_fraction, rng)
    fake_train, fake_hold = split_holdout(fake, cfg.holdout_fraction, rng)
    m = cfg.minibatch_size
    history = []
    for _ in range(epochs):
        r_batches = _minibatches(len(real_train), m, rng)
        f_batches = _minibatches(len(fake_train), m, rng)
        for r_idx, f_idx in zip(r_batches, f_batches):
            with nd.Tape() as tape:
                summed = bce_loss(model, real_train[r_idx], fake_train[f_idx])
                loss = summed * (1.0 / (len(r_idx) + len(f_idx)))
            _gradient_step(model, loss, tape, state, cfg)
        history.append(
            accuracy_from_scores(score_values(model, real_hold), score_values(model, fake_hold))
        )
    return model, history


# -- alternating schedule ---------------------------------------------------


def sample_windows(series_list: Sequence[np.ndarray], length: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` random contiguous windows of ``length`` values."""
    usable = [np.asarray(s, dtype=np.float64) for s in series_list if len(s) >= length]
    if not usable:
        raise ConfigError(f"no series is long enough for windows of {length} values")
    starts_per = np.array([len(s) - length + 1 for s in usable])
    cum = np.cumsum(starts_per)
    picks = rng.integers(0, cum[-1], size=count)
    out = np.empty((count, length))
    for row, p in enumerate(picks):
        k = int(np.searchsorted(cum, p, side="right"))
        start = p - (cum[k - 1] if k else 0)
        out[row] = usable[k][start : start + length]
    return out


@dataclass
class RoundMetrics:
    round: int
    d_accuracy: float
    g_nll: float


def alternating_loop(
    g: GeneratorModel,
    d: DiscriminatorModel,
    series_list: Sequence[np.ndarray],
    cfg: TrainConfig,
    on_round: Callable[[RoundMetrics, GeneratorModel, DiscriminatorModel], None] | None = None,
) -> tuple[GeneratorModel, DiscriminatorModel, list[RoundMetrics]]:
    """Alternate discriminator and generator phases for ``cfg.outer_rounds`` rounds.

    Per round: sample real windows and generator samples (the first
    ``burn_in`` generated steps are discarded), train D for
    ``d_epochs``, sample fresh real windows, then train G on real data only
    for ``g_epochs``. The generator objective never sees the discriminator.
    ``d_accuracy`` is D's final held-out accuracy in that round.

    With ``cfg.reset_discriminator`` D is re-initialized (fresh weights and
    optimizer state) at the start of every round after the first, so each
    round's accuracy measures the current generator against a discriminator
    with the same training budget.
    """
    if not series_list:
        raise ConfigError("alternating_loop needs at least one training series")
    data_rng = stream(cfg.seed, "data")
    sample_rng = stream(cfg.seed, "sampling")
    shuffle_rng = stream(cfg.seed, "shuffling")
    g_state, d_state = OptimizerState(), OptimizerState()
    n = cfg.minibatches_per_round * cfg.minibatch_size
    win = d.config.window_len
    clip = (0.0, 1.0) if cfg.sample_clip else None
    metrics: list[RoundMetrics] = []
    for r in range(1, cfg.outer_rounds + 1):
        if cfg.reset_discriminator and r > 1:
            fresh = DiscriminatorModel.init(d.config, stream(cfg.seed, f"init-d-{r}")).parameters()
            for name, p in d.parameters().items():
                p.values = fresh[name].values
            d_state = OptimizerState()
        real = sample_windows(series_list, win, n, data_rng)
        fake = generate(g, cfg.burn_in + win, sample_rng, count=n, clip=clip)[:, cfg.burn_in :]
        _, acc_hist = train_discriminator(d, real, fake, cfg, shuffle_rng, state=d_state)
        real_g = sample_windows(series_list, cfg.tbptt_window + 1, n, data_rng)
        _, nll_hist = train_generator(g, real_g, cfg, shuffle_rng, state=g_state)
        metrics.append(RoundMetrics(r, acc_hist[-1], nll_hist[-1]))
        logger.info("round %d: d_accuracy=%.4f g_nll=%.6f", r, acc_hist[-1], nll_hist[-1])
        if on_round is not None:
            on_round(metrics[-1], g, d)
    return g, d, metrics


# -- deterministic baseline -------------------------------------------------


class BaselineModel:
    """LSTM stack + sigmoid dense + one linear output read as the next value."""

    def __init__(self, stack: Sequence[LSTMParams], fc: DenseParams, out: DenseParams):
        self.stack = list(stack)
        self.fc = fc
        self.out = out
        if out.activation != "linear" or out.W.shape[1] != 1:
            raise ConfigError("baseline output must be a single linear unit")

    @classmethod
    def init(cls, lstm_layers: int, lstm_units: int, fc_units: int, seed) -> "BaselineModel":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        widths = [1] + [lstm_units] * lstm_layers
        stack = [init_lstm(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        return cls(stack, init_dense(lstm_units, fc_units, rng, "sigmoid"), init_dense(fc_units, 1, rng, "linear"))

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for k, p in enumerate(self.stack):
            out.update({f"lstm{k}.{n}": t for n, t in p.tensors()})
        out.update({f"fc.{n}": t for n, t in self.fc.tensors()})
        out.update({f"out.{n}": t for n, t in self.out.tensors()})
        return out

    def predict(self, xs) -> Tensor:
        """One-step-ahead predictions, shape (batch, T)."""
        arr = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        steps = [Tensor._wrap(arr[:, t : t + 1]) for t in range(arr.shape[1])]
        hs, _ = lstm_unroll(self.stack, steps)
        ys = [dense_forward(self.out, dense_forward(self.fc, h)) for h in hs]
        return nd.reshape(nd.stack(ys, axis=1), arr.shape)


def rmse_baseline_loss(model, window) -> Tensor:
    """Sum of squared one-step errors sum_t (x_{t+1} - y_t)^2.

    ``model`` is anything with ``predict(xs) -> Tensor`` of matching shape.
    """
    arr = np.atleast_2d(np.asarray(window, dtype=np.float64))
    if arr.shape[1] < 2:
        raise ContractError("rmse_baseline_loss: window length must be >= 2")
    pred = model.predict(arr[:, :-1])
    return nd.sum(nd.square(pred - arr[:, 1:]))


def train_baseline(
    model: BaselineModel,
    windows,
    cfg: TrainConfig,
    epochs: int,
    rng: np.random.Generator | None = None,
) -> tuple[BaselineModel, list[float]]:
    """Fit by squared error; history holds the mean per-step squared error."""
    rng = rng if rng is not None else stream(cfg.seed, "shuffling")
    history = _fit_sequence_model(model, rmse_baseline_loss, windows, cfg, epochs, rng, OptimizerState())
    return model, history


def relative_decrease(first: float, last: float) -> float:
    return (first - last) / abs(first) if first else math.inf
