"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

SORT_EVAL_INTERVALS = (
    (0.0, 1.0), (0.0, 10.0), (0.0, 1000.0), (1.0, 2.0),
    (10.0, 11.0), (100.0, 101.0), (1000.0, 1001.0),
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    task: str = "sort"
    n: int = 5
    grid: tuple[int, int] = (3, 3)
    train_interval: tuple[float, float] = (0.0, 1.0)
    intervals: tuple[tuple[float, float], ...] = SORT_EVAL_INTERVALS
    epochs: int = 8
    sets: int = 2 ** 15
    batch: int = 512
    chunk: int = 512
    lr: float = 0.1
    T: int = 6
    L: int = 4
    eta_init: float = 1.0
    hidden: int = 16
    init_mode: str = "uniform"
    seed: int = 0
    eval_sets: int = 1024
    source: str = "synthetic"
    tile_dim: int = 4
    embed_hidden: int = 32
    mnist_images: str = ""
    checkpoint: str = "model.popt"
    metrics: str = "metrics.csv"

    def __post_init__(self):
        if self.task not in ("sort", "mosaic"):
            raise ConfigError(f"task must be sort or mosaic, got {self.task!r}")
        if self.task == "sort" and self.n < 2:
            raise ConfigError("sorting needs n >= 2")
        for lo, hi in (self.train_interval,) + tuple(self.intervals):
            if not lo < hi:
                raise ConfigError(f"empty interval [{lo}, {hi})")
        if len(self.grid) != 2 or min(self.grid) < 1:
            raise ConfigError("grid sides must be >= 1")
        if self.init_mode not in ("uniform", "linear-assignment"):
            raise ConfigError(f"unknown init-mode {self.init_mode!r}")
        if self.source not in ("synthetic", "mnist"):
            raise ConfigError(f"unknown source {self.source!r}")
        for name in ("batch", "chunk", "L", "sets", "eval_sets"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{_key(name)} must be >= 1")
        if self.epochs < 0 or self.T < 0:
            raise ConfigError("epochs and T must be >= 0")

    @property
    def set_size(self) -> int:
        return self.n if self.task == "sort" else self.grid[0] * self.grid[1]

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def _key(name: str) -> str:
    return name.replace("_", "-")


def _interval(text: str) -> tuple[float, float]:
    lo, hi = text.split(":")
    return float(lo), float(hi)


def _format_float(x: float) -> str:
    return repr(float(x))


_PARSERS = {
    "grid": lambda s: tuple(int(v) for v in s.lower().split("x")),
    "train_interval": _interval,
    "intervals": lambda s: tuple(_interval(p.strip()) for p in s.split(",") if p.strip()),
}

_FORMATTERS = {
    "grid": lambda g: f"{g[0]}x{g[1]}",
    "train_interval": lambda iv: f"{_format_float(iv[0])}:{_format_float(iv[1])}",
    "intervals": lambda ivs: ", ".join(
        f"{_format_float(lo)}:{_format_float(hi)}" for lo, hi in ivs
    ),
}


def _field_types() -> dict[str, type]:
    defaults = TrainConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(TrainConfig)}


def parse_config(text: str, source: str = "<config>") -> TrainConfig:
    types = _field_types()
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        name = key.replace("-", "_")
        if name not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            if name in _PARSERS:
                values[name] = _PARSERS[name](raw)
            elif types[name] is int:
                values[name] = int(raw)
            elif types[name] is float:
                values[name] = float(raw)
            else:
                values[name] = raw
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value {raw!r} for key {key!r}") from None
    try:
        return TrainConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> TrainConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def format_config(config: TrainConfig) -> str:
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name in _FORMATTERS:
            text = _FORMATTERS[f.name](value)
        elif isinstance(value, float):
            text = _format_float(value)
        else:
            text = str(value)
        lines.append(f"{_key(f.name)} = {text}")
    return "\n".join(lines) + "\n"
