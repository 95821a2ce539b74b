"""Command-line entry point: train, compare, sweep-alpha, plot.

Configs are line-oriented text with [section] headers and key = value
pairs; every field of the training configuration is addressable and any
key can be overridden on the command line with --section.key=value.
Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import re
import statistics
import sys
from dataclasses import dataclass, field, replace

from .harness import (
    ComparisonTable,
    DataConfig,
    PolicyConfig,
    RunResult,
    TrainConfig,
    compare,
    read_metrics,
    run,
    write_metrics,
)
from .presets import preset_config, preset_names
from .svgplot import Series, render_chart
from .timing import interval

ENV_SEED = "GROWBENCH_SEED"


class ConfigError(ValueError):
    """Config-file or override problem; maps to exit code 2."""


@dataclass(frozen=True)
class OutputConfig:
    metrics_path: str = "metrics.jsonl"


@dataclass(frozen=True)
class CliConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


# section name -> (target dataclass, description used in echo output)
_SECTIONS = {
    "model": (None, "architecture and growth mechanics"),
    "policy": (PolicyConfig, "when-to-grow policy"),
    "data": (DataConfig, "dataset recipe and split"),
    "train": (None, "optimization schedule"),
    "output": (OutputConfig, "artifact paths"),
}

_MODEL_KEYS = ("seed_arch", "target_arch", "where", "init", "moment_decay")
_TRAIN_KEYS = (
    "total_epochs", "min_finetune_epochs", "lr_base", "momentum",
    "weight_decay", "batch_size", "run_seed", "eval_train_full",
)


def _field_types(cls) -> dict[str, type]:
    return {f.name: type(f.default) for f in dataclasses.fields(cls)
            if f.default is not dataclasses.MISSING}


_TYPES: dict[str, dict[str, type]] = {
    "model": {k: type(getattr(TrainConfig(), k)) for k in _MODEL_KEYS},
    "policy": _field_types(PolicyConfig),
    "data": _field_types(DataConfig),
    "train": {k: type(getattr(TrainConfig(), k)) for k in _TRAIN_KEYS},
    "output": _field_types(OutputConfig),
}


def _cast(section: str, key: str, raw: str, where: str) -> object:
    ty = _TYPES[section][key]
    raw = raw.strip()
    try:
        if ty is bool:
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if ty is int:
            return int(raw)
        if ty is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {section}.{key}: {exc}") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict[str, dict[str, object]]:
    """Parse section/key/value lines, rejecting unknown keys by line number."""
    values: dict[str, dict[str, object]] = {s: {} for s in _SECTIONS}
    section: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        m = re.match(r"^\[([A-Za-z_]+)\]$", stripped)
        if m:
            section = m.group(1)
            if section not in _SECTIONS:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigError(f"{where}: expected 'key = value', got {stripped!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside any [section]")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _TYPES[section]:
            raise ConfigError(f"{where}: unknown key {section}.{key}")
        if key in values[section]:
            raise ConfigError(f"{where}: duplicate key {section}.{key}")
        values[section][key] = _cast(section, key, raw, where)
    return values


def _build_config(values: dict[str, dict[str, object]]) -> CliConfig:
    try:
        policy = PolicyConfig(**values["policy"])
        data = DataConfig(**values["data"])
        train = TrainConfig(policy=policy, data=data,
                            **values["model"], **values["train"])
        output = OutputConfig(**values["output"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return CliConfig(train=train, output=output)


def _config_to_values(cfg: CliConfig) -> dict[str, dict[str, object]]:
    return {
        "model": {k: getattr(cfg.train, k) for k in _MODEL_KEYS},
        "policy": dataclasses.asdict(cfg.train.policy),
        "data": dataclasses.asdict(cfg.train.data),
        "train": {k: getattr(cfg.train, k) for k in _TRAIN_KEYS},
        "output": dataclasses.asdict(cfg.output),
    }


def _format_value(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_config(cfg: CliConfig) -> str:
    """Echo the effective config; re-parsing this text reproduces cfg."""
    values = _config_to_values(cfg)
    out = []
    for section, (_, desc) in _SECTIONS.items():
        out.append(f"# {desc}")
        out.append(f"[{section}]")
        for key, v in values[section].items():
            out.append(f"{key} = {_format_value(v)}")
        out.append("")
    return "\n".join(out)


_OVERRIDE_RE = re.compile(r"^--([A-Za-z_]+)\.([A-Za-z_0-9]+)=(.*)$", re.DOTALL)


def apply_overrides(values: dict[str, dict[str, object]], overrides: list[str]) -> None:
    for token in overrides:
        m = _OVERRIDE_RE.match(token)
        if m is None:
            raise ConfigError(
                f"bad override {token!r}; expected --section.key=value"
            )
        section, key, raw = m.group(1), m.group(2), m.group(3)
        if section not in _SECTIONS:
            raise ConfigError(f"override {token!r}: unknown section {section!r}")
        if key not in _TYPES[section]:
            raise ConfigError(f"override {token!r}: unknown key {section}.{key}")
        values[section][key] = _cast(section, key, raw, f"override {token!r}")


def load_config(source: str, overrides: list[str] | None = None) -> CliConfig:
    """Resolve a config path or preset name, then apply overrides."""
    if os.path.exists(source):
        with open(source) as f:
            values = parse_config_text(f.read(), source)
    else:
        try:
            cfg = preset_config(source)
        except KeyError:
            raise ConfigError(
                f"{source!r} is neither a readable config file nor a preset name "
                f"(presets: {', '.join(preset_names())})"
            ) from None
        values = _config_to_values(CliConfig(train=cfg))
    apply_overrides(values, overrides or [])
    return _build_config(values)


def _apply_env_seed(cfg: CliConfig) -> CliConfig:
    env = os.environ.get(ENV_SEED)
    if env is None:
        return cfg
    try:
        seed = int(env)
    except ValueError:
        raise ConfigError(f"{ENV_SEED} must be an integer, got {env!r}") from None
    return CliConfig(train=replace(cfg.train, run_seed=seed), output=cfg.output)


def _summarize(result: RunResult) -> str:
    lines = [
        f"final test error:  {result.final_test_error:.2f} %",
        f"final train error: {result.final_train_error:.2f} %",
        f"avg block training epochs: "
        + (f"{result.e_bar:.3f}" if result.e_bar is not None else "n/a (no growth)"),
        f"wall time: {result.wall_seconds:.2f} s",
    ]
    if result.events:
        lines.append("growth events (epoch, stage, block, init):")
        for e in result.events:
            lines.append(f"  {e.epoch:>4}  stage {e.stage}  block {e.block_index}  {e.init_rule}")
    return "\n".join(lines)


def cmd_train(args: argparse.Namespace, overrides: list[str]) -> int:
    cfg = load_config(args.config, overrides)
    if args.print_config:
        print(render_config(cfg), end="")
        return 0
    cfg = _apply_env_seed(cfg)
    result = run(cfg.train)
    write_metrics(result, cfg.output.metrics_path)
    print(f"metrics written to {cfg.output.metrics_path}")
    print(_summarize(result))
    return 0


def cmd_compare(args: argparse.Namespace, overrides: list[str]) -> int:
    if len(args.configs) < 2:
        raise ConfigError("compare needs at least two configs")
    labeled = []
    for source in args.configs:
        label = os.path.splitext(os.path.basename(source))[0]
        labeled.append((label, load_config(source, overrides).train))
    seeds = list(range(args.seeds))
    table = compare(labeled, seeds)
    print(table.to_text())
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(table.to_csv())
        print(f"csv written to {args.csv}")
    return 0


def _parse_float_list(text: str, what: str) -> list[float]:
    items = [p.strip() for p in text.split(",") if p.strip()]
    if not items:
        raise ConfigError(f"empty {what} list")
    try:
        return [float(p) for p in items]
    except ValueError as exc:
        raise ConfigError(f"bad {what} list {text!r}: {exc}") from exc


def cmd_sweep_alpha(args: argparse.Namespace, overrides: list[str]) -> int:
    alphas = _parse_float_list(args.alphas, "alpha")
    base = load_config(args.config, overrides)
    if base.train.policy.name != "fragrow":
        raise ConfigError("sweep-alpha requires policy.name = fragrow")
    labeled = [
        (f"alpha={a:g}", replace(base.train, policy=replace(base.train.policy, alpha=a)))
        for a in alphas
    ]
    seeds = list(range(args.seeds))
    table = compare(labeled, seeds)

    # normalize wall time to the alpha=4 row when present (else first row)
    anchor = next((r for r in table.rows if r.label == "alpha=4"), table.rows[0])
    if anchor.time_pct:
        scale = 100.0 / anchor.time_pct
        table = ComparisonTable(
            rows=[replace(r, time_pct=(r.time_pct * scale if r.time_pct else None))
                  for r in table.rows],
            seeds=table.seeds,
        )
    print(table.to_text())
    csv_text = table.to_csv()
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(csv_text)
        print(f"csv written to {args.csv}")
    else:
        print(csv_text, end="")
    return 0


_CURVES = ("train_err", "val_err", "test_err", "train_acc", "val_acc",
           "test_acc", "train_loss", "lr", "blocks", "orl", "interval")


def _curve_values(result: RunResult, curve: str, alpha: float | None,
                  max_interval: float | None) -> tuple[float, ...]:
    ms = result.metrics
    if curve == "train_err":
        return tuple(100.0 - m.train_acc for m in ms)
    if curve == "val_err":
        return tuple(100.0 - m.val_acc for m in ms)
    if curve == "test_err":
        return tuple(100.0 - m.test_acc for m in ms)
    if curve in ("train_acc", "val_acc", "test_acc", "train_loss", "lr", "orl"):
        return tuple(getattr(m, curve) for m in ms)
    if curve == "blocks":
        return tuple(float(sum(m.blocks)) for m in ms)
    if curve == "interval":
        if alpha is None or max_interval is None:
            raise ConfigError(
                "curve 'interval' is derived from orl and needs --alpha and --i-max"
            )
        return tuple(interval(max_interval, alpha, m.orl) for m in ms)
    raise ConfigError(f"unknown curve {curve!r}; available: {', '.join(_CURVES)}")


def _parse_range(text: str | None, what: str) -> tuple[float, float] | None:
    if text is None:
        return None
    m = re.match(r"^(-?[0-9.eE+]+):(-?[0-9.eE+]+)$", text)
    if m is None:
        raise ConfigError(f"bad {what} {text!r}; expected LO:HI")
    return float(m.group(1)), float(m.group(2))


def cmd_plot(args: argparse.Namespace, overrides: list[str]) -> int:
    if overrides:
        raise ConfigError(f"plot takes no config overrides, got {overrides[0]!r}")
    curves = [c.strip() for c in args.curves.split(",") if c.strip()]
    if not curves:
        raise ConfigError("empty curve list")
    for c in curves:
        if c not in _CURVES:
            raise ConfigError(f"unknown curve {c!r}; available: {', '.join(_CURVES)}")

    series: list[Series] = []
    events_x: tuple[float, ...] = ()
    for path in args.metrics:
        result = read_metrics(path)
        label_prefix = ""
        if len(args.metrics) > 1:
            label_prefix = os.path.splitext(os.path.basename(path))[0] + ":"
        xs = tuple(float(m.epoch) for m in result.metrics)
        for curve in curves:
            ys = _curve_values(result, curve, args.alpha, args.i_max)
            series.append(Series(f"{label_prefix}{curve}", xs, ys))
        if len(args.metrics) == 1:
            events_x = tuple(float(e.epoch) for e in result.events)

    svg = render_chart(
        series,
        title=args.title,
        ylabel=args.ylabel,
        events_x=events_x,
        x_range=_parse_range(args.x_range, "--x-range"),
        y_range=_parse_range(args.y_range, "--y-range"),
    )
    with open(args.out, "w") as f:
        f.write(svg)
    print(f"svg written to {args.out}")
    return 0


def _make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="growbench",
        description="Grow a seed staged network into a target network during "
                    "training, with selectable growth-timing policies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one grow-train-finetune experiment")
    p_train.add_argument("config", help="config file path or preset name "
                                        f"({', '.join(preset_names())})")
    p_train.add_argument("--print-config", action="store_true",
                         help="echo the effective config and exit")

    p_cmp = sub.add_parser("compare", help="run several configs over shared seeds")
    p_cmp.add_argument("configs", nargs="+", help="config paths or preset names")
    p_cmp.add_argument("--seeds", type=int, default=3, help="number of seeds (0..k-1)")
    p_cmp.add_argument("--csv", default="", help="also write the table as CSV here")

    p_sweep = sub.add_parser("sweep-alpha", help="sweep the risk-sensitivity alpha")
    p_sweep.add_argument("config", help="config path or preset name (fragrow policy)")
    p_sweep.add_argument("--alphas", default="2,4,6", help="comma-separated alpha values")
    p_sweep.add_argument("--seeds", type=int, default=3)
    p_sweep.add_argument("--csv", default="", help="write the summary CSV here")

    p_plot = sub.add_parser("plot", help="render metrics files to an SVG chart")
    p_plot.add_argument("metrics", nargs="+", help="metrics JSONL file(s)")
    p_plot.add_argument("--curves", default="train_err,val_err,test_err",
                        help=f"comma-separated curves from: {', '.join(_CURVES)}")
    p_plot.add_argument("--out", default="curves.svg")
    p_plot.add_argument("--title", default="")
    p_plot.add_argument("--ylabel", default="")
    p_plot.add_argument("--x-range", dest="x_range", default=None)
    p_plot.add_argument("--y-range", dest="y_range", default=None)
    p_plot.add_argument("--alpha", type=float, default=None,
                        help="policy alpha (needed for the interval curve)")
    p_plot.add_argument("--i-max", dest="i_max", type=float, default=None,
                        help="interval cap (needed for the interval curve)")

    return parser


_COMMANDS = {
    "train": cmd_train,
    "compare": cmd_compare,
    "sweep-alpha": cmd_sweep_alpha,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = _make_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
