"""Command-line entry point: ``sensegen <verb> [flags]``.

Settings are resolved as defaults < ``--config`` file (``key = value`` lines) < flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (
    HAR_SAMPLE_RATE_HZ,
    NormRecord,
    load_series,
    normalize,
    synthetic_dataset,
    window_series,
    write_column,
    write_metadata,
)
from .discriminator import DiscriminatorConfig, DiscriminatorModel, accuracy_from_scores, score_values
from .errors import ConfigError, ContractError, DimensionError, DomainError, FormatError, ParseError, SenseGenError
from .generator import GeneratorConfig, GeneratorModel, generate
from .rng import stream
from .training import TrainConfig, alternating_loop, train_discriminator, train_generator

logger = logging.getLogger("sensegen")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_FORMAT = 0, 2, 3, 4

_G, _D, _T = GeneratorConfig(), DiscriminatorConfig(), TrainConfig()

# key -> (type, default). Paths and lists are kept as strings / lists of strings.
KEYS: dict[str, tuple[type, object]] = {
    "seed": (int, None),
    "out": (str, "sensegen_out"),
    "data": (list, None),
    "real": (list, None),
    "fake": (list, None),
    "checkpoint": (list, None),
    "channel": (str, "x"),
    "sample_rate_hz": (float, HAR_SAMPLE_RATE_HZ),
    "stride": (int, None),
    # generator
    "g_layers": (int, _G.lstm_layers),
    "g_units": (int, _G.lstm_units),
    "g_fc_units": (int, _G.fc_units),
    "mixtures": (int, _G.mixtures),
    "head": (str, _G.final_activation),
    "sigma_floor": (float, _G.sigma_floor),
    # discriminator
    "d_units": (int, _D.lstm_units),
    "d_fc_units": (int, _D.fc_units),
    "window": (int, _D.window_len),
    # generation
    "length": (int, 400),
    "count": (int, 4),
    "burn_in": (int, _T.burn_in),
    # synthetic data
    "kind": (str, "sine"),
    "amplitude": (float, 1.0),
    "frequency": (float, 1.0 / 50.0),
    "noise": (float, None),
    "phi": (float, 0.9),
}
for _f in fields(TrainConfig):
    KEYS.setdefault(_f.name, (type(getattr(_T, _f.name)), getattr(_T, _f.name)))


def _coerce(key: str, raw):
    typ = KEYS[key][0]
    if raw is None:
        return None
    try:
        if typ is list:
            return raw.split() if isinstance(raw, str) else list(raw)
        if typ is bool:
            if isinstance(raw, bool):
                return raw
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"setting {key!r}: cannot read {raw!r} as {typ.__name__}") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
        out[key] = _coerce(key, value)
    return out


# -- argument parsing -------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def _gen_arch(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mixtures", type=int)
    p.add_argument("--g-layers", type=int)
    p.add_argument("--g-units", type=int)
    p.add_argument("--g-fc-units", type=int)
    p.add_argument("--head", choices=["sigmoid", "linear"])
    p.add_argument("--sigma-floor", type=float)


def _disc_arch(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-units", type=int)
    p.add_argument("--d-fc-units", type=int)


def _optim(p: argparse.ArgumentParser) -> None:
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    p.add_argument("--minibatch-size", type=int)
    p.add_argument("--clip-norm", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensegen", description="Train and sample sensor-trace generators.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-gen", help="fit the mixture-density generator by next-step NLL")
    _common(p)
    p.add_argument("--data", nargs="+", help="column or windowed-text files")
    p.add_argument("--epochs", type=int, dest="g_epochs")
    p.add_argument("--window", type=int, dest="tbptt_window", help="truncated-BPTT window length")
    p.add_argument("--stride", type=int)
    p.add_argument("--channel")
    p.add_argument("--sample-rate-hz", type=float)
    _gen_arch(p)
    _optim(p)

    p = sub.add_parser("train-disc", help="fit the discriminator on real vs generated files")
    _common(p)
    p.add_argument("--real", nargs="+")
    p.add_argument("--fake", nargs="+")
    p.add_argument("--epochs", type=int, dest="d_epochs")
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    _disc_arch(p)
    _optim(p)

    p = sub.add_parser("alternate", help="run the alternating D/G schedule")
    _common(p)
    p.add_argument("--data", nargs="+")
    p.add_argument("--rounds", type=int, dest="outer_rounds")
    p.add_argument("--d-epochs", type=int)
    p.add_argument("--g-epochs", type=int)
    p.add_argument("--window", type=int, help="discriminator window length")
    p.add_argument("--tbptt-window", type=int)
    p.add_argument("--minibatches-per-round", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--reset-discriminator", action="store_true", default=None, help="fresh D weights every round")
    p.add_argument("--channel")
    p.add_argument("--sample-rate-hz", type=float)
    _gen_arch(p)
    _disc_arch(p)
    _optim(p)

    p = sub.add_parser("generate", help="sample traces from generator checkpoints")
    _common(p)
    p.add_argument("--checkpoint", nargs="+", help="one generator checkpoint per output column")
    p.add_argument("--length", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--burn-in", type=int)

    p = sub.add_parser("evaluate", help="score real and generated files with a discriminator")
    _common(p)
    p.add_argument("--checkpoint", nargs=1)
    p.add_argument("--real", nargs="+")
    p.add_argument("--fake", nargs="+")

    p = sub.add_parser("synth-data", help="write a synthetic series as a column file")
    _common(p)
    p.add_argument("--kind", choices=["sine", "ar1", "bimodal"])
    p.add_argument("--length", type=int)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--frequency", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--phi", type=float)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    settings = {k: default for k, (_, default) in KEYS.items()}
    if args.config:
        if not Path(args.config).is_file():
            raise ConfigError(f"config file not found: {args.config}")
        settings.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key in KEYS and value is not None:
            settings[key] = _coerce(key, value)
    return settings


def _require(settings: dict, *keys: str) -> None:
    for key in keys:
        if settings.get(key) is None:
            raise ConfigError(f"missing required setting {key!r}")
        if KEYS[key][0] is list:
            for path in settings[key]:
                if not Path(path).is_file():
                    raise ConfigError(f"{key} path does not exist: {path}")


# -- helpers ----------------------------------------------------------------


def gen_config(s: dict) -> GeneratorConfig:
    return GeneratorConfig(
        lstm_layers=s["g_layers"],
        lstm_units=s["g_units"],
        fc_units=s["g_fc_units"],
        mixtures=s["mixtures"],
        final_activation=s["head"],
        sigma_floor=s["sigma_floor"],
    )


def disc_config(s: dict) -> DiscriminatorConfig:
    return DiscriminatorConfig(lstm_units=s["d_units"], fc_units=s["d_fc_units"], window_len=s["window"])


def train_config(s: dict) -> TrainConfig:
    return TrainConfig(**{f.name: s[f.name] for f in fields(TrainConfig)})


def _load_all(paths) -> list[np.ndarray]:
    out = []
    for p in paths:
        out.extend(load_series(p))
    return out


def _normalized(series: list[np.ndarray], channel: str) -> tuple[list[np.ndarray], NormRecord]:
    _, rec = normalize(np.concatenate(series), channel)
    return [rec.apply(s) for s in series], rec


def _windows(series: list[np.ndarray], length: int, stride: int | None) -> np.ndarray:
    stride = stride or length
    parts = [window_series(s, length, stride) for s in series if len(s) >= length]
    if not parts:
        raise ConfigError(f"no input series has at least {length} values")
    return np.concatenate(parts)


def _num(v: float) -> str:
    return repr(float(v))


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8")
    os.replace(tmp, path)


def _outdir(s: dict) -> Path:
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ---------------------------------------------------------------


def cmd_train_gen(s: dict) -> int:
    _require(s, "data", "seed")
    gcfg, tcfg = gen_config(s), train_config(s)
    series, rec = _normalized(_load_all(s["data"]), s["channel"])
    windows = _windows(series, tcfg.tbptt_window + 1, s["stride"])
    logger.info("train-gen: %d windows of %d values", len(windows), windows.shape[1])
    model = GeneratorModel.init(gcfg, stream(tcfg.seed, "init"))
    _, hist = train_generator(model, windows, tcfg, stream(tcfg.seed, "shuffling"))
    out = _outdir(s)
    save_checkpoint(
        out / "generator.ckpt",
        Checkpoint.from_model(model, norm=rec, train_config=tcfg.to_dict(), history={"mean_nll": hist}),
    )
    _write_csv(out / "gen_loss.csv", ["epoch", "mean_nll"], [(i + 1, v) for i, v in enumerate(hist)])
    logger.info("train-gen: NLL %.6f -> %.6f", hist[0], hist[-1])
    return EXIT_OK


def cmd_train_disc(s: dict) -> int:
    _require(s, "real", "fake", "seed")
    dcfg = disc_config(s)
    tcfg = train_config(s)
    real_series, rec = _normalized(_load_all(s["real"]), s["channel"])
    fake_series = [rec.apply(x) for x in _load_all(s["fake"])]
    real = _windows(real_series, dcfg.window_len, s["stride"])
    fake = _windows(fake_series, dcfg.window_len, s["stride"])
    model = DiscriminatorModel.init(dcfg, stream(tcfg.seed, "init"))
    _, hist = train_discriminator(model, real, fake, tcfg, stream(tcfg.seed, "shuffling"))
    out = _outdir(s)
    save_checkpoint(
        out / "discriminator.ckpt",
        Checkpoint.from_model(model, norm=rec, train_config=tcfg.to_dict(), history={"heldout_accuracy": hist}),
    )
    _write_csv(out / "disc_accuracy.csv", ["epoch", "heldout_accuracy"], [(i + 1, v) for i, v in enumerate(hist)])
    logger.info("train-disc: held-out accuracy %.4f", hist[-1])
    return EXIT_OK


def cmd_alternate(s: dict) -> int:
    _require(s, "data", "seed")
    tcfg = train_config(s)
    series, rec = _normalized(_load_all(s["data"]), s["channel"])
    g = GeneratorModel.init(gen_config(s), stream(tcfg.seed, "init-g"))
    d = DiscriminatorModel.init(disc_config(s), stream(tcfg.seed, "init-d"))
    out = _outdir(s)
    rows = []

    def on_round(m, g, d):
        rows.append((m.round, m.d_accuracy, m.g_nll))
        hist = {"rounds": [list(r) for r in rows]}
        save_checkpoint(out / "generator.ckpt", Checkpoint.from_model(g, rec, tcfg.to_dict(), hist))
        save_checkpoint(out / "discriminator.ckpt", Checkpoint.from_model(d, rec, tcfg.to_dict(), hist))
        _write_csv(out / "rounds.csv", ["round", "d_accuracy", "g_nll"], rows)

    alternating_loop(g, d, series, tcfg, on_round=on_round)
    return EXIT_OK


def cmd_generate(s: dict) -> int:
    _require(s, "checkpoint", "seed")
    if s["length"] < 1 or s["count"] < 1 or s["burn_in"] < 0:
        raise ConfigError("length and count must be positive, burn_in non-negative")
    ckpts = [load_checkpoint(p) for p in s["checkpoint"]]
    columns = []
    for k, ck in enumerate(ckpts):
        if ck.kind != "generator":
            raise ConfigError(f"{s['checkpoint'][k]} holds a {ck.kind}, not a generator")
        model = ck.to_model()
        name = "sampling" if len(ckpts) == 1 else f"sampling-{k}"
        clip = (0.0, 1.0) if ck.norm is not None else None
        x = generate(model, s["burn_in"] + s["length"], stream(s["seed"], name), count=s["count"], clip=clip)
        x = x[:, s["burn_in"] :]
        columns.append(ck.norm.invert(x) if ck.norm is not None else x)
    out = _outdir(s)
    stacked = np.stack(columns, axis=-1)  # (count, length, channels)
    for i in range(s["count"]):
        path = out / f"sample_{i:03d}.txt"
        if len(columns) == 1:
            write_column(path, stacked[i, :, 0])
        else:
            path.write_text("".join(" ".join(_num(v) for v in row) + "\n" for row in stacked[i]), encoding="utf-8")
    norms = [ck.norm for ck in ckpts]
    write_metadata(
        out / "sample_meta.json",
        channel=",".join(n.channel if n else "raw" for n in norms),
        sample_rate_hz=s["sample_rate_hz"],
        norm=norms[0] if len(norms) == 1 else None,
        normalization_per_column=[n.to_dict() if n else None for n in norms],
        checkpoints=[str(p) for p in s["checkpoint"]],
        seed=s["seed"],
        length=s["length"],
        count=s["count"],
        burn_in=s["burn_in"],
    )
    logger.info("generate: wrote %d traces of %d steps to %s", s["count"], s["length"], out)
    return EXIT_OK


def cmd_evaluate(s: dict) -> int:
    _require(s, "checkpoint", "real", "fake")
    ck = load_checkpoint(s["checkpoint"][0])
    if ck.kind != "discriminator":
        raise ConfigError(f"{s['checkpoint'][0]} holds a {ck.kind}, not a discriminator")
    model = ck.to_model()

    def prep(paths):
        series = _load_all(paths)
        if ck.norm is not None:
            series = [ck.norm.apply(x) for x in series]
        return _windows(series, model.config.window_len, None)

    real, fake = prep(s["real"]), prep(s["fake"])
    rs, fs = score_values(model, real), score_values(model, fake)
    rows = [
        ("real", len(rs), float(rs.mean()), float(np.mean(rs > 0.5))),
        ("fake", len(fs), float(fs.mean()), float(np.mean(fs <= 0.5))),
        ("all", len(rs) + len(fs), float(np.concatenate([rs, fs]).mean()), accuracy_from_scores(rs, fs)),
    ]
    out = _outdir(s)
    _write_csv(out / "evaluation.csv", ["class", "count", "mean_score", "accuracy"], rows)
    sys.stdout.write((out / "evaluation.csv").read_text(encoding="utf-8"))
    return EXIT_OK


def cmd_synth_data(s: dict) -> int:
    _require(s, "seed")
    kind = s["kind"]
    params = {"sine": {"amplitude": s["amplitude"], "frequency": s["frequency"]}, "ar1": {"phi": s["phi"]}}.get(kind, {})
    if s["noise"] is not None:
        params["noise"] = s["noise"]
    series = synthetic_dataset(kind, s["length"], seed=s["seed"], **params)
    out = _outdir(s)
    write_column(out / f"{kind}.txt", series)
    write_metadata(
        out / f"{kind}_meta.json", channel=kind, sample_rate_hz=s["sample_rate_hz"], norm=None, seed=s["seed"], **params
    )
    return EXIT_OK


COMMANDS = {
    "train-gen": cmd_train_gen,
    "train-disc": cmd_train_disc,
    "alternate": cmd_alternate,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "synth-data": cmd_synth_data,
}

_LEVELS = {"error": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def main(argv=None) -> int:
    level = os.environ.get("SENSEGEN_LOG", "info").lower()
    if level not in _LEVELS:
        print(f"sensegen: SENSEGEN_LOG must be one of error|info|debug, got {level!r}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](resolve(args))
    except (ConfigError, ContractError, DimensionError, DomainError) as exc:
        print(f"sensegen: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"sensegen: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FormatError as exc:
        print(f"sensegen: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"sensegen: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SenseGenError as exc:
        print(f"sensegen: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
