"""The alternating schedule in miniature.

Each round trains the discriminator on real windows against fresh generator
samples, then trains the generator on real data alone. The generator never
sees the discriminator's verdict, so the falling accuracy below measures how
much more realistic the samples became, not an adversarial game.
About a minute on one core.
"""

from sensegen.data import normalize, synthetic_dataset
from sensegen.discriminator import DiscriminatorConfig, DiscriminatorModel
from sensegen.generator import GeneratorConfig, GeneratorModel
from sensegen.rng import stream
from sensegen.training import TrainConfig, alternating_loop

series, _ = normalize(synthetic_dataset("ar1", 3000, seed=0, phi=0.0))
g = GeneratorModel.init(
    GeneratorConfig(lstm_layers=1, lstm_units=16, fc_units=16, mixtures=3, final_activation="linear"), stream(0, "init-g")
)
d = DiscriminatorModel.init(DiscriminatorConfig(lstm_units=8, fc_units=4, window_len=40), stream(0, "init-d"))
cfg = TrainConfig(outer_rounds=5, d_epochs=60, g_epochs=5, minibatches_per_round=4, tbptt_window=60, burn_in=20, seed=0)


def show(m, g, d):
    print(f"round {m.round}: discriminator held-out accuracy {m.d_accuracy:.3f}, generator NLL {m.g_nll:.4f}", flush=True)


alternating_loop(g, d, [series], cfg, on_round=show)
