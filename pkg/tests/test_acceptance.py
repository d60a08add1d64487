"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line (criterion, measured values, pinned
tolerance). The lines are printed immediately and again in pytest's terminal
summary, and ``python tests/test_acceptance.py`` runs the suite standalone.
"""

from __future__ import annotations

import math
import shutil
import sys
import time

import numpy as np
import pytest
from scipy.integrate import simpson

from sensegen import ndmath as nd
from sensegen.checkpoint import Checkpoint, decode, encode
from sensegen.cli import main as cli_main
from sensegen.data import normalize, synthetic_dataset, window_series
from sensegen.discriminator import DiscriminatorConfig, DiscriminatorModel, bce_loss, score_values
from sensegen.generator import GeneratorConfig, GeneratorModel, forward, sequence_nll
from sensegen.mdn import GMMParams, gmm_log_pdf, mass_within, sample
from sensegen.rng import stream
from sensegen.training import (
    BaselineModel,
    TrainConfig,
    alternating_loop,
    relative_decrease,
    rmse_baseline_loss,
    train_baseline,
    train_generator,
)

from oracles import central_diff

RESULTS: list[str] = []


def report(name: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    return ok


def _grad_errors(analytic: dict, numeric: dict, loss: float, h: float, rel: float = 1e-4) -> tuple[float, float, int]:
    """Compare analytic and central-difference gradients.

    Central differences carry a roundoff floor of about eps * |loss| / h, so a
    relative error of ``rel`` is only resolvable for entries larger than
    floor / rel. Those entries get the relative check; smaller ones must agree
    to within 10 * floor. Returns (max rel err on resolvable entries, strict
    pointwise max rel err, number of small entries over the absolute bound).
    """
    floor = np.finfo(float).eps * max(1.0, abs(loss)) / h
    worst, strict, small_bad = 0.0, 0.0, 0
    for k, a in analytic.items():
        n = numeric[k]
        diff = np.abs(a - n)
        scale = np.maximum(np.abs(a), np.abs(n))
        nz = scale > 0
        if nz.any():
            strict = max(strict, float((diff[nz] / scale[nz]).max()))
        big = scale > floor / rel
        if big.any():
            worst = max(worst, float((diff[big] / scale[big]).max()))
        small_bad += int((diff[~big] > 10 * floor).sum())
    return worst, strict, small_bad


# -- 1 ----------------------------------------------------------------------


def test_gradient_oracle():
    t0 = time.perf_counter()
    h = 1e-5
    gcfg = GeneratorConfig(lstm_layers=1, lstm_units=4, fc_units=4, mixtures=2)
    g = GeneratorModel.init(gcfg, stream(0, "init"))
    window = np.random.default_rng(0).uniform(0, 1, 5)
    params = g.parameters()
    with nd.Tape() as tape:
        loss = sequence_nll(g, window)
    grads = nd.backward(tape, loss)
    g_err, g_strict, g_small = _grad_errors(
        {k: grads[t] for k, t in params.items()},
        central_diff(lambda: sequence_nll(g, window).item(), params, h=h),
        loss.item(),
        h,
    )

    d = DiscriminatorModel.init(DiscriminatorConfig(lstm_units=4, fc_units=3, window_len=5), stream(0, "init-d"))
    rng = np.random.default_rng(1)
    real, fake = rng.uniform(0, 1, (2, 5)), rng.uniform(0, 1, (2, 5))
    dparams = d.parameters()
    with nd.Tape() as tape:
        loss = bce_loss(d, real, fake)
    grads = nd.backward(tape, loss)
    d_err, d_strict, d_small = _grad_errors(
        {k: grads[t] for k, t in dparams.items()},
        central_diff(lambda: bce_loss(d, real, fake).item(), dparams, h=h),
        loss.item(),
        h,
    )
    elapsed = time.perf_counter() - t0
    ok = g_err < 1e-4 and d_err < 1e-4 and g_small == 0 and d_small == 0 and elapsed < 10
    assert report(
        "gradient oracle",
        ok,
        f"max rel err generator {g_err:.2e}, discriminator {d_err:.2e} (< 1e-4, entries above the h=1e-5 "
        f"roundoff floor); entries below it off by more than 10x floor: {g_small + d_small}; "
        f"strict pointwise max {max(g_strict, d_strict):.2e}; {elapsed:.1f}s (< 10s)",
    )


# -- 2 ----------------------------------------------------------------------


def test_mixture_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_mass = 0.0
    for _ in range(20):
        k = int(rng.integers(1, 6))
        w = rng.random(k) + 0.05
        pi, mu, sigma = w / w.sum(), rng.uniform(-3, 3, k), rng.uniform(0.2, 2.0, k)
        xs = np.linspace(mu.min() - 10 * sigma.max(), mu.max() + 10 * sigma.max(), 20001)
        dens = np.exp(gmm_log_pdf(GMMParams.from_arrays(pi, mu, sigma), xs).values)
        worst_mass = max(worst_mass, abs(simpson(dens, x=xs) - 1.0))

    pi, mu, sigma = np.array([0.2, 0.3, 0.5]), np.array([-2.0, 0.0, 3.0]), np.array([0.5, 1.0, 2.0])
    mean = float(pi @ mu)
    var = float(pi @ (sigma**2 + mu**2)) - mean**2
    n = 200_000
    g = GMMParams.from_arrays(np.tile(pi, (n, 1)), np.tile(mu, (n, 1)), np.tile(sigma, (n, 1)))
    draws = sample(g, stream(7, "sampling"))
    mean_err = abs(draws.mean() - mean) / abs(mean)
    var_err = abs(draws.var() - var) / var
    elapsed = time.perf_counter() - t0
    ok = worst_mass <= 1e-4 and mean_err < 0.01 and var_err < 0.02 and elapsed < 30
    assert report(
        "mixture correctness",
        ok,
        f"worst |integral - 1| {worst_mass:.1e} (<= 1e-4); mean {draws.mean():.4f} vs {mean:.4f} "
        f"({mean_err:.2%} < 1%), variance {draws.var():.4f} vs {var:.4f} ({var_err:.2%} < 2%), {elapsed:.1f}s (< 30s)",
    )


# -- 3 ----------------------------------------------------------------------


def test_zero_parameter_closed_forms():
    gen = GeneratorModel.zeros(GeneratorConfig())
    with nd.no_grad():
        g, _ = forward(gen, np.random.default_rng(0).uniform(0, 1, 6))
    errs = [
        np.abs(g.pi.values - 1 / 24).max(),
        np.abs(g.mu.values - 0.5).max(),
        np.abs(g.sigma.values - math.exp(0.5)).max(),
    ]
    disc = DiscriminatorModel.zeros(DiscriminatorConfig())
    s = score_values(disc, np.random.default_rng(1).uniform(0, 1, (3, 400)))
    errs.append(np.abs(s - 0.5).max())
    ok = max(errs) <= 1e-12
    assert report(
        "zero-parameter closed forms",
        ok,
        "max |pi - 1/24| {:.1e}, |mu - 0.5| {:.1e}, |sigma - e^0.5| {:.1e}, |score - 0.5| {:.1e} (<= 1e-12)".format(*errs),
    )


# -- 4 ----------------------------------------------------------------------


def test_nll_learning_curve():
    t0 = time.perf_counter()
    series, _ = normalize(synthetic_dataset("sine", 2000, seed=0, noise=0.1))
    windows = window_series(series, 101, 50)
    cfg = GeneratorConfig(lstm_layers=2, lstm_units=32, fc_units=32, mixtures=5, final_activation="linear")
    model = GeneratorModel.init(cfg, stream(0, "init"))
    _, hist = train_generator(model, windows, TrainConfig(seed=0), epochs=200)
    elapsed = time.perf_counter() - t0
    dec = relative_decrease(hist[0], hist[-1])
    best = int(np.argmin(hist)) + 1
    ok = len(hist) == 200 and dec >= 0.30 and best > 150 and elapsed < 600
    assert report(
        "NLL learning curve",
        ok,
        f"epoch-mean NLL {hist[0]:.4f} -> {hist[-1]:.4f}, decrease {dec:.1%} (>= 30%), "
        f"best epoch {best} (> 150), {elapsed:.0f}s (< 600s)",
    )


# -- 5 ----------------------------------------------------------------------

DECAY = dict(
    data=dict(kind="ar1", length=4000, seed=0, phi=0.0),
    generator=dict(lstm_layers=2, lstm_units=32, fc_units=32, mixtures=5, final_activation="linear"),
    discriminator=dict(lstm_units=8, fc_units=4, window_len=30),
    train=dict(outer_rounds=8, minibatches_per_round=8, tbptt_window=100, burn_in=25, g_epochs=2, seed=0),
)


def moving_average(values, width=3):
    return [float(np.mean(values[i : i + width])) for i in range(len(values) - width + 1)]


def test_discriminator_decay():
    t0 = time.perf_counter()
    data_kw = dict(DECAY["data"])
    series, _ = normalize(synthetic_dataset(data_kw.pop("kind"), data_kw.pop("length"), **data_kw))
    seed = DECAY["train"]["seed"]
    g = GeneratorModel.init(GeneratorConfig(**DECAY["generator"]), stream(seed, "init-g"))
    d = DiscriminatorModel.init(DiscriminatorConfig(**DECAY["discriminator"]), stream(seed, "init-d"))
    _, _, metrics = alternating_loop(g, d, [series], TrainConfig(**DECAY["train"]))
    elapsed = time.perf_counter() - t0
    acc = [m.d_accuracy for m in metrics]
    ma = moving_average(acc)
    non_increasing = all(b <= a for a, b in zip(ma, ma[1:]))
    ok = len(acc) == 8 and acc[0] >= 0.90 and 0.35 <= acc[-1] <= 0.65 and non_increasing and elapsed < 1800
    assert report(
        "discriminator decay",
        ok,
        f"accuracies {[round(a, 3) for a in acc]}; round 1 {acc[0]:.3f} (>= 0.90), final {acc[-1]:.3f} "
        f"(in [0.35, 0.65]), 3-round MA {[round(a, 3) for a in ma]} non-increasing={non_increasing}, "
        f"{elapsed:.0f}s (< 1800s)",
    )


# -- 6 ----------------------------------------------------------------------


def test_multimodality():
    train = window_series(synthetic_dataset("bimodal", 4000, seed=0), 51, 50)
    held_out = synthetic_dataset("bimodal", 1000, seed=1)
    cfg = TrainConfig(seed=0, learning_rate=1e-2)

    base = BaselineModel.init(1, 16, 16, stream(0, "init-baseline"))
    train_baseline(base, train, cfg, epochs=30)
    with nd.no_grad():
        base_mse = rmse_baseline_loss(base, held_out).item() / (len(held_out) - 1)

    mdn = GeneratorModel.init(
        GeneratorConfig(lstm_layers=1, lstm_units=16, fc_units=16, mixtures=5, final_activation="linear"),
        stream(0, "init"),
    )
    train_generator(mdn, train, cfg, epochs=30)
    with nd.no_grad():
        g, _ = forward(mdn, held_out[:-1])
    p, m, s = g.pi.values, g.mu.values, g.sigma.values
    mass = float(
        np.mean(
            [mass_within(p[t], m[t], s[t], 0.8, 1.2) + mass_within(p[t], m[t], s[t], -1.2, -0.8) for t in range(len(p))]
        )
    )
    ok = base_mse >= 0.95 and mass >= 0.80
    assert report(
        "multimodality",
        ok,
        f"baseline per-step squared error {base_mse:.4f} (>= 0.95); MDN mass within 0.2 of +-1 {mass:.3f} (>= 0.80)",
    )


# -- 7 ----------------------------------------------------------------------


def _run_all_commands(root, data_file):
    tiny_g = ["--g-layers", "1", "--g-units", "6", "--g-fc-units", "4", "--mixtures", "2", "--head", "linear"]
    tiny_d = ["--d-units", "4", "--d-fc-units", "3"]
    runs = [
        ["synth-data", "--kind", "ar1", "--length", "500", "--seed", "3", "--out", str(root / "synth")],
        ["train-gen", "--data", str(data_file), "--seed", "3", "--epochs", "4", "--window", "20", "--out", str(root / "gen")]
        + tiny_g,
        ["generate", "--checkpoint", str(root / "gen" / "generator.ckpt"), "--length", "40", "--count", "4", "--seed", "3",
         "--out", str(root / "samples")],
        ["train-disc", "--real", str(data_file), "--fake", str(root / "samples" / "sample_000.txt"), "--window", "20",
         "--stride", "5", "--epochs", "3", "--seed", "3", "--out", str(root / "disc")] + tiny_d,
        ["evaluate", "--checkpoint", str(root / "disc" / "discriminator.ckpt"), "--real", str(data_file), "--fake",
         str(root / "samples" / "sample_001.txt"), "--out", str(root / "eval")],
        ["alternate", "--data", str(data_file), "--rounds", "2", "--d-epochs", "2", "--g-epochs", "2", "--window", "20",
         "--tbptt-window", "15", "--minibatches-per-round", "1", "--minibatch-size", "8", "--seed", "3",
         "--out", str(root / "alt")] + tiny_g + tiny_d,
    ]
    codes = [cli_main(r) for r in runs]
    files = {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
    return codes, files


def test_determinism_and_persistence(tmp_path):
    assert cli_main(["synth-data", "--kind", "sine", "--length", "300", "--noise", "0.05", "--seed", "1",
                     "--out", str(tmp_path)]) == 0
    data_file = tmp_path / "sine.txt"
    # same paths both times: the generate sidecar records its checkpoint path
    codes_a, files_a = _run_all_commands(tmp_path / "run", data_file)
    shutil.rmtree(tmp_path / "run")
    codes_b, files_b = _run_all_commands(tmp_path / "run", data_file)
    identical = files_a.keys() == files_b.keys() and all(files_a[k] == files_b[k] for k in files_a)

    gen = GeneratorModel.init(GeneratorConfig(lstm_layers=2, lstm_units=8, fc_units=6, mixtures=3), stream(5, "init"))
    disc = DiscriminatorModel.init(DiscriminatorConfig(lstm_units=6, fc_units=4, window_len=30), stream(5, "init-d"))
    xs = np.random.default_rng(5).uniform(0, 1, (2, 30))
    g0, _ = forward(gen, xs)
    g1, _ = forward(decode(encode(Checkpoint.from_model(gen))).to_model(), xs)
    gen_same = all(getattr(g0, n).values.tobytes() == getattr(g1, n).values.tobytes() for n in ("pi", "mu", "sigma"))
    disc_same = (
        score_values(disc, xs).tobytes()
        == score_values(decode(encode(Checkpoint.from_model(disc))).to_model(), xs).tobytes()
    )
    ok = codes_a == codes_b == [0] * 6 and identical and len(files_a) > 10 and gen_same and disc_same
    assert report(
        "determinism and persistence",
        ok,
        f"6 commands x 2 runs, exit codes {codes_a}, {len(files_a)} output files byte-identical={identical}; "
        f"checkpoint round-trip bitwise: generator={gen_same}, discriminator={disc_same}",
    )


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
