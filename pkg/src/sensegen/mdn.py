"""Gaussian mixture output head for scalar next-step prediction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import ndmath as nd
from .errors import ContractError, DimensionError, DomainError
from .ndmath import Tensor

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class GMMParams:
    """Mixture weights, means and standard deviations along the last axis.

    Leading axes index batch/time, so a single object can hold a whole
    sequence of per-step mixtures. ``log_pi`` and ``log_sigma`` are kept when
    the head computes them directly, which avoids log(softmax) underflow.
    """

    pi: Tensor
    mu: Tensor
    sigma: Tensor
    log_pi: Tensor | None = None
    log_sigma: Tensor | None = None

    @property
    def n_components(self) -> int:
        return self.pi.shape[-1]

    def at(self, index) -> "GMMParams":
        """Select leading-axis entries, e.g. ``g.at((0, t))`` for batch 0 step t."""
        pick = lambda t: None if t is None else nd.getitem(t, index)  # noqa: E731
        return GMMParams(pick(self.pi), pick(self.mu), pick(self.sigma), pick(self.log_pi), pick(self.log_sigma))

    @classmethod
    def from_arrays(cls, pi, mu, sigma) -> "GMMParams":
        return cls(Tensor(pi), Tensor(mu), Tensor(sigma))


def split_head(l5: Tensor, sigma_floor: float | None = None) -> GMMParams:
    """Split a ``3K``-wide activation into (softmax weights, raw means, exp std devs)."""
    width = l5.shape[-1]
    if width % 3 != 0 or width == 0:
        raise DimensionError(f"split_head: width {width} is not a positive multiple of 3")
    k = width // 3
    ell = (Ellipsis,)
    logits = nd.getitem(l5, ell + (slice(0, k),))
    mu = nd.getitem(l5, ell + (slice(k, 2 * k),))
    log_sigma = nd.getitem(l5, ell + (slice(2 * k, 3 * k),))
    if sigma_floor:
        log_sigma = nd.maximum(log_sigma, math.log(sigma_floor))
    return GMMParams(
        pi=nd.softmax(logits),
        mu=mu,
        sigma=nd.exp(log_sigma),
        log_pi=nd.log_softmax(logits),
        log_sigma=log_sigma,
    )


def gmm_log_pdf(g: GMMParams, x) -> Tensor:
    """Log density of ``x`` under the mixture, via log-sum-exp over components.

    ``x`` broadcasts against the leading axes of ``g``.
    """
    if np.any(g.sigma.values <= 0):
        raise DomainError("gmm_log_pdf: sigma must be strictly positive")
    x = nd.as_tensor(x)
    xk = nd.reshape(x, x.shape + (1,))
    log_pi = g.log_pi if g.log_pi is not None else nd.log(g.pi)
    log_sigma = g.log_sigma if g.log_sigma is not None else nd.log(g.sigma)
    z = (xk - g.mu) / g.sigma
    comp = log_pi - log_sigma - HALF_LOG_2PI - 0.5 * nd.square(z)
    return nd.log_sum_exp(comp, axis=-1)


def nll(g_seq: GMMParams, x_next) -> Tensor:
    """Summed negative log-likelihood of targets ``x_next`` under per-step mixtures."""
    x_next = nd.as_tensor(x_next)
    if g_seq.pi.shape[:-1] != x_next.shape:
        raise ContractError(
            f"nll: {g_seq.pi.shape[:-1]} mixtures vs {x_next.shape} targets"
        )
    if x_next.size < 1:
        raise ContractError("nll: need at least one step")
    return nd.neg(nd.sum(gmm_log_pdf(g_seq, x_next)))


def sample_arrays(pi: np.ndarray, mu: np.ndarray, sigma: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one value per leading index: component ~ Categorical(pi), then Normal."""
    u = rng.random(pi.shape[:-1])
    cdf = np.cumsum(pi, axis=-1)
    k = (u[..., None] >= cdf).sum(axis=-1)
    k = np.minimum(k, pi.shape[-1] - 1)
    m = np.take_along_axis(mu, k[..., None], axis=-1)[..., 0]
    s = np.take_along_axis(sigma, k[..., None], axis=-1)[..., 0]
    return m + s * rng.standard_normal(u.shape)


def sample(g: GMMParams, rng: np.random.Generator):
    """Sample the mixture; returns a float for a single mixture, else an array."""
    out = sample_arrays(g.pi.values, g.mu.values, g.sigma.values, rng)
    return float(out) if out.ndim == 0 else out


def mass_within(pi, mu, sigma, lo: float, hi: float) -> np.ndarray:
    """Probability the mixture assigns to [lo, hi]."""
    pi, mu, sigma = (np.asarray(a, dtype=float) for a in (pi, mu, sigma))
    return np.sum(pi * (ndtr((hi - mu) / sigma) - ndtr((lo - mu) / sigma)), axis=-1)
