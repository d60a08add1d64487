"""Loading, normalizing and windowing scalar sensor series."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, ParseError

HAR_SAMPLES_PER_ROW = 128
HAR_SAMPLE_RATE_HZ = 50.0


@dataclass(frozen=True)
class NormRecord:
    """Min-max scaling record for one channel, in raw units."""

    min: float
    max: float
    channel: str = "x"

    def __post_init__(self):
        if not self.max > self.min:
            raise ContractError(f"degenerate range: max {self.max} must exceed min {self.min}")

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.min) / (self.max - self.min)

    def invert(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * (self.max - self.min) + self.min

    def to_dict(self) -> dict:
        return {"channel": self.channel, "min": self.min, "max": self.max}

    @classmethod
    def from_dict(cls, d: dict) -> "NormRecord":
        return cls(float(d["min"]), float(d["max"]), str(d.get("channel", "x")))


@dataclass
class SeriesBatch:
    windows: np.ndarray
    channel: str = "x"
    sample_rate_hz: float = HAR_SAMPLE_RATE_HZ
    norm: NormRecord | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        if self.windows.ndim != 2:
            raise ContractError("SeriesBatch windows must be a 2-D array of equal-length windows")


def _parse_float(token: str, path, lineno: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: non-numeric token {token!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{path}:{lineno}: non-finite value {token!r}")
    return v


def load_windowed_text(path, samples_per_row: int = HAR_SAMPLES_PER_ROW) -> np.ndarray:
    """Whitespace-separated rows, one window per row (HAR inertial-signal layout)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != samples_per_row:
                raise ParseError(f"{path}:{lineno}: expected {samples_per_row} values, found {len(tokens)}")
            rows.append([_parse_float(t, path, lineno) for t in tokens])
    if not rows:
        raise ParseError(f"{path}: empty input")
    return np.array(rows, dtype=np.float64)


def load_column(path) -> np.ndarray:
    """One value per line."""
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 1:
                raise ParseError(f"{path}:{lineno}: expected one value per line, found {len(tokens)}")
            values.append(_parse_float(tokens[0], path, lineno))
    if not values:
        raise ParseError(f"{path}: empty input")
    return np.array(values, dtype=np.float64)


def load_series(path) -> list[np.ndarray]:
    """Column file -> one series; multi-column file -> one series per row."""
    with open(path, encoding="utf-8") as fh:
        width = next((len(line.split()) for line in fh if line.split()), 0)
    if width == 0:
        raise ParseError(f"{path}: empty input")
    if width == 1:
        return [load_column(path)]
    return list(load_windowed_text(path, width))


def write_column(path, values) -> None:
    Path(path).write_text("".join(f"{float(v)!r}\n" for v in values), encoding="utf-8")


def write_metadata(path, channel: str, sample_rate_hz: float, norm: NormRecord | None, **extra) -> None:
    doc = {"channel": channel, "sample_rate_hz": sample_rate_hz, "normalization": norm.to_dict() if norm else None}
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def normalize(data, channel: str = "x") -> tuple[np.ndarray, NormRecord]:
    """Min-max scale to [0, 1] using the global extrema of ``data``."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("normalize: empty input")
    lo, hi = float(arr.min()), float(arr.max())
    if not hi > lo:
        raise ContractError(f"normalize: degenerate range, all values equal {lo}")
    rec = NormRecord(lo, hi, channel)
    return rec.apply(arr), rec


def window_series(series, window_len: int, stride: int = 1) -> np.ndarray:
    """Windows starting every ``stride`` steps; count = (len - window_len) // stride + 1."""
    arr = np.asarray(series, dtype=np.float64)
    if window_len < 1 or stride < 1:
        raise ContractError("window_len and stride must be positive")
    if window_len > len(arr):
        raise ContractError(f"window_len {window_len} exceeds series length {len(arr)}")
    view = np.lib.stride_tricks.sliding_window_view(arr, window_len)
    return view[::stride].copy()


def synthetic_dataset(kind: str, length: int, seed: int = 0, **params) -> np.ndarray:
    """Desk-scale stand-in series.

    sine:    amplitude * sin(2 pi frequency t) + noise * N(0, 1)
    ar1:     x[t+1] = phi * x[t] + noise * N(0, 1)
    bimodal: x[t+1] = +-1 with equal probability, plus noise * N(0, 1)
    """
    if int(length) != length or length < 1:
        raise ConfigError(f"length must be a positive integer, got {length!r}")
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    if kind == "sine":
        a = params.get("amplitude", 1.0)
        f = params.get("frequency", 1.0 / 50.0)
        noise = params.get("noise", 0.0)
        return a * np.sin(2.0 * np.pi * f * t) + noise * rng.standard_normal(length)
    if kind == "ar1":
        phi = params.get("phi", 0.9)
        noise = params.get("noise", 1.0)
        eps = noise * rng.standard_normal(length)
        x = np.empty(length)
        x[0] = eps[0]
        for i in range(1, length):
            x[i] = phi * x[i - 1] + eps[i]
        return x
    if kind == "bimodal":
        noise = params.get("noise", 0.05)
        signs = np.where(rng.random(length) < 0.5, -1.0, 1.0)
        return signs + noise * rng.standard_normal(length)
    raise ConfigError(f"unknown synthetic kind {kind!r}; expected sine, ar1 or bimodal")
