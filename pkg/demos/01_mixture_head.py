"""A tour of the mixture-density head.

The generator never predicts a value directly. Each step it emits the
weights, means and widths of a Gaussian mixture, and the next sample is
drawn from that mixture. This script builds one by hand and pokes at it.
"""

import numpy as np

from sensegen import ndmath as nd
from sensegen.mdn import GMMParams, gmm_log_pdf, mass_within, sample, split_head

# A raw 9-wide head output splits into K=3 components: softmax for the
# weights, identity for the means, exp for the widths.
raw = nd.Tensor([0.0, 1.0, -1.0, -2.0, 0.0, 3.0, np.log(0.5), 0.0, np.log(2.0)])
g = split_head(raw)
print("pi    ", np.round(g.pi.values, 4))
print("mu    ", g.mu.values)
print("sigma ", g.sigma.values)

# Density on a grid. The log-sum-exp form stays finite far in the tails,
# where the plain sum of exponentials would underflow to log(0).
xs = np.linspace(-6, 10, 9)
print("\nlog p(x):")
for x, lp in zip(xs, gmm_log_pdf(g, xs).values):
    print(f"  x={x:6.2f}  {lp:9.4f}")
print("  x=60.00 ", gmm_log_pdf(g, 60.0).item())

# Sampling: pick a component by its weight, then draw from that Gaussian.
mix = GMMParams.from_arrays([0.2, 0.3, 0.5], [-2.0, 0.0, 3.0], [0.5, 1.0, 2.0])
n = 100_000
tiled = GMMParams.from_arrays(*(np.tile(v.values, (n, 1)) for v in (mix.pi, mix.mu, mix.sigma)))
draws = sample(tiled, np.random.default_rng(0))
mean = float(mix.pi.values @ mix.mu.values)
var = float(mix.pi.values @ (mix.sigma.values**2 + mix.mu.values**2)) - mean**2
print(f"\nsample mean {draws.mean():.3f} (analytic {mean:.3f})")
print(f"sample var  {draws.var():.3f} (analytic {var:.3f})")

# How much probability sits near each component mean?
for m in (-2.0, 0.0, 3.0):
    print(f"mass within 0.5 of {m:+.0f}: {mass_within(mix.pi.values, mix.mu.values, mix.sigma.values, m - 0.5, m + 0.5):.3f}")
