"""Why a single predicted value is not enough.

Each value of the bimodal process is +1 or -1 with equal odds. A model
trained on squared error can do no better than predicting 0, the average of
the two modes, which is never a value the process actually produces. The
mixture model instead puts its mass on both modes.
"""

import numpy as np

from sensegen import ndmath as nd
from sensegen.data import synthetic_dataset, window_series
from sensegen.generator import GeneratorConfig, GeneratorModel, forward
from sensegen.mdn import mass_within
from sensegen.rng import stream
from sensegen.training import BaselineModel, TrainConfig, rmse_baseline_loss, train_baseline, train_generator

train = window_series(synthetic_dataset("bimodal", 4000, seed=0), 51, 50)
test = synthetic_dataset("bimodal", 1000, seed=1)
cfg = TrainConfig(seed=0, learning_rate=1e-2)

base = BaselineModel.init(1, 16, 16, stream(0, "init-baseline"))
train_baseline(base, train, cfg, epochs=30)
with nd.no_grad():
    pred = base.predict(test[:-1]).values[0]
    mse = rmse_baseline_loss(base, test).item() / (len(test) - 1)
print(f"baseline: predictions mean {pred.mean():+.3f}, spread {pred.std():.3f}; per-step squared error {mse:.3f}")

mdn = GeneratorModel.init(
    GeneratorConfig(lstm_layers=1, lstm_units=16, fc_units=16, mixtures=5, final_activation="linear"), stream(0, "init")
)
train_generator(mdn, train, cfg, epochs=30)
with nd.no_grad():
    g, _ = forward(mdn, test[:-1])
p, m, s = g.pi.values, g.mu.values, g.sigma.values
near_pos = mass_within(p, m, s, 0.8, 1.2).mean()
near_neg = mass_within(p, m, s, -1.2, -0.8).mean()
print(f"mixture: mass near +1 {near_pos:.3f}, near -1 {near_neg:.3f}, near 0 {mass_within(p, m, s, -0.2, 0.2).mean():.3f}")
print("step 0 components (pi, mu, sigma):")
for k in np.argsort(-p[0]):
    print(f"  {p[0, k]:.3f}  {m[0, k]:+.3f}  {s[0, k]:.3f}")
