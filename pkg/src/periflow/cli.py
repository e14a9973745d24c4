"""Command-line pipeline: gen, train, score, eval, inspect.

Configuration is a flat `key = value` text file; any key can be overridden
with repeated `--set key=value` flags and the seed with `--seed`. Every
command writes its fully resolved configuration beside its outputs so a
run can be reproduced from its output directory alone. Commands exit 0 on
success and print a single `error: ...` line on failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .evaluate import auroc, emit_reports, window_scores_to_points
from .series import (MultivariateSeries, SeriesError, SplitSpec, load_csv,
                     make_windows)
from .spectral import discover_global_period, periodicity_strength, top_k_periods
from .synthetic import Anomaly, SynthConfig, generate, write_csv
from .training import (TrainConfig, fit, history_to_csv, load_checkpoint,
                       prepare_series, score_windows)


class ConfigError(ValueError):
    pass


@dataclass
class GenConfig:
    gen_length: int = 4000
    gen_dims: int = 3
    gen_periods: str = "20:3.0,60:1.0"
    gen_noise_std: float = 0.3
    gen_anomalies: str = ""
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2


def _coercers() -> dict[str, tuple[str, type]]:
    table: dict[str, tuple[str, type]] = {}
    for f in fields(TrainConfig):
        table[f.name] = ("train", type(f.default))
    for f in fields(GenConfig):
        table[f.name] = ("gen", type(f.default))
    return table


def _coerce(key: str, raw: str, target: type):
    if target is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r}: cannot parse boolean {raw!r}")
    try:
        return target(raw.strip())
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as "
                          f"{target.__name__}") from None


def load_config(path=None, overrides=(), seed=None) -> tuple[TrainConfig, GenConfig]:
    """Flat key=value config with unknown keys rejected."""
    table = _coercers()
    values: dict[str, object] = {}

    def absorb(key: str, raw: str):
        key = key.strip()
        if key not in table:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw, table[key][1])

    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        for line_no, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"config line {line_no}: expected key = value")
            key, raw = stripped.split("=", 1)
            absorb(key, raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        absorb(key, raw)
    if seed is not None:
        values["seed"] = int(seed)

    train_kwargs = {k: v for k, v in values.items() if table[k][0] == "train"}
    gen_kwargs = {k: v for k, v in values.items() if table[k][0] == "gen"}
    return TrainConfig(**train_kwargs), GenConfig(**gen_kwargs)


def write_resolved_config(out_dir: Path, train_cfg: TrainConfig,
                          gen_cfg: GenConfig, extra: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "resolved_config.txt", "w", encoding="utf-8") as fh:
        for key, value in {**asdict(train_cfg), **asdict(gen_cfg), **extra}.items():
            fh.write(f"{key} = {value}\n")


def _parse_periods(spec: str) -> dict[int, float]:
    out = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        period, amp = part.split(":")
        out[int(period)] = float(amp)
    if not out:
        raise ConfigError("gen_periods must name at least one period")
    return out


def _parse_anomalies(spec: str) -> list[Anomaly]:
    out = []
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        kind, start, duration, magnitude = part.split(":")
        out.append(Anomaly(kind, int(start), int(duration), float(magnitude)))
    return out


def _split_spec(gen_cfg: GenConfig) -> SplitSpec:
    return SplitSpec(gen_cfg.train_frac, gen_cfg.val_frac, gen_cfg.test_frac)


def cmd_gen(args) -> int:
    train_cfg, gen_cfg = load_config(args.config, args.set, args.seed)
    synth = SynthConfig(gen_cfg.gen_length, gen_cfg.gen_dims,
                        _parse_periods(gen_cfg.gen_periods),
                        gen_cfg.gen_noise_std,
                        _parse_anomalies(gen_cfg.gen_anomalies),
                        seed=train_cfg.seed)
    series = generate(synth)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "synthetic.csv"
    write_csv(series, target)
    write_resolved_config(out, train_cfg, gen_cfg, {"command": "gen"})
    print(json.dumps({"written": str(target), "length": series.length,
                      "dims": series.dims,
                      "anomalous_points": int(series.labels.sum())}))
    return 0


def cmd_train(args) -> int:
    train_cfg, gen_cfg = load_config(args.config, args.set, args.seed)
    series = load_csv(args.data)
    data = prepare_series(series, train_cfg, _split_spec(gen_cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.npz"
    bundle, history, _ = fit(data["train"], data["val"], train_cfg,
                             data["global_period"], stats=data["stats"],
                             checkpoint_path=ckpt)
    history_to_csv(history, out / "history.csv")
    write_resolved_config(out, train_cfg, gen_cfg,
                          {"command": "train", "data": args.data,
                           "global_period": data["global_period"]})
    best = [row for row in history if row["best"]][0]
    print(json.dumps({"checkpoint": str(ckpt), "epochs_run": history[-1]["epoch"],
                      "best_epoch": best["epoch"],
                      "best_val_nll": best["val_nll"],
                      "global_period": data["global_period"]}))
    return 0


def cmd_score(args) -> int:
    train_cfg, gen_cfg = load_config(args.config, args.set, args.seed)
    bundle = load_checkpoint(args.checkpoint)
    series = load_csv(args.data)
    values = series.values
    if bundle.stats is not None:
        values = bundle.stats.apply(values)
    prepared = MultivariateSeries(values, series.timestamps, series.labels,
                                  list(series.dim_names))
    window_length = bundle.config.window_length
    windows = make_windows(prepared, window_length, stride=1)
    tau, tau_t, diags = score_windows(bundle, windows.windows)
    points = window_scores_to_points(tau_t, windows.window_starts, prepared.length)
    out = Path(args.out)
    diagnostics = [{"window_start": int(s), **d}
                   for s, d in zip(windows.window_starts, diags)]
    summary = emit_reports(out, points.scores, series.labels,
                           diagnostics=diagnostics,
                           metadata={"checkpoint": str(args.checkpoint),
                                     "data": str(args.data),
                                     "windows": int(windows.count),
                                     "window_length": window_length,
                                     "global_period": bundle.global_period,
                                     "seed": bundle.config.seed})
    write_resolved_config(out, bundle.config, gen_cfg,
                          {"command": "score", "checkpoint": args.checkpoint,
                           "data": args.data})
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    scores = []
    with open(args.scores, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if "score" not in header:
            raise ConfigError(f"{args.scores}: no 'score' column")
        col = header.index("score")
        for line in fh:
            scores.append(float(line.split(",")[col]))
    series = load_csv(args.data)
    if series.labels is None:
        raise SeriesError(f"{args.data}: no label column to evaluate against")
    if len(scores) != series.length:
        raise ConfigError(f"{args.scores}: {len(scores)} scores vs "
                          f"{series.length} labels")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"auroc": auroc(np.asarray(scores), series.labels),
               "n_points": len(scores),
               "anomaly_rate": float(series.labels.mean())}
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_inspect(args) -> int:
    train_cfg, _ = load_config(args.config, args.set, args.seed)
    series = load_csv(args.data)
    period = discover_global_period(series)
    ps = top_k_periods(series.values, min(train_cfg.k_periods,
                                          max(1, series.length // 2 - 1)))
    strength = {}
    for d, name in enumerate(series.dim_names):
        try:
            strength[name] = periodicity_strength(series.values[:, d], period)
        except Exception:
            strength[name] = None
    report = {"global_period": period,
              "top_periods": list(ps.periods),
              "top_frequencies": list(ps.frequencies),
              "amplitudes": [float(w) for w in ps.weights],
              "periodicity_strength": strength}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "inspect.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(json.dumps(report, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="periflow",
        description="Periodicity-aware density-based time-series anomaly detection")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, checkpoint=False, scores=False, out_required=True):
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key")
        if data:
            p.add_argument("--data", required=True, help="input CSV")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="model checkpoint")
        if scores:
            p.add_argument("--scores", required=True, help="scores CSV")
        p.add_argument("--out", required=out_required, default=None,
                       help="output directory")

    p_gen = sub.add_parser("gen", help="generate a labelled synthetic dataset")
    common(p_gen)
    p_gen.set_defaults(func=cmd_gen)

    p_train = sub.add_parser("train", help="train a detector")
    common(p_train, data=True)
    p_train.set_defaults(func=cmd_train)

    p_score = sub.add_parser("score", help="score a series with a checkpoint")
    common(p_score, data=True, checkpoint=True)
    p_score.set_defaults(func=cmd_score)

    p_eval = sub.add_parser("eval", help="evaluate scores against labels")
    common(p_eval, data=True, scores=True)
    p_eval.set_defaults(func=cmd_eval)

    p_inspect = sub.add_parser("inspect", help="report periodicity diagnostics")
    common(p_inspect, data=True, out_required=False)
    p_inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line machine-parseable failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
