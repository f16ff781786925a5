"""Configuration, deterministic parallel map and CSV reports for the examples."""

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError

__all__ = [
    "ExperimentConfig",
    "ErrorReport",
    "DEFAULTS",
    "SMALL",
    "FULL_SCALE",
    "resolve_config",
    "read_config_file",
    "ordered_map",
    "worker_count",
    "fmt",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one example run; ``None`` fields take per-example defaults."""

    example: int
    seed: int = 0
    out: str = "."
    strategy: str = "srrqr"
    eta: float = 2.0
    weight: str = None
    grid: int = None
    n_points: int = None
    n_train: int = None
    n_test: int = None
    ranks: tuple = None
    rank: int = None
    deim_rank: int = None
    n_state: int = None
    n_steps: int = None
    t_final: float = None
    scheme: str = None
    substeps: int = None
    threads: int = None
    small: bool = False


DEFAULTS = {
    1: dict(n_points=10000, n_train=40, n_test=200, rank=34, ranks=(10, 14, 18, 22, 26, 30, 34), weight="identity"),
    2: dict(n_state=1000, n_steps=2000, t_final=7.0, ranks=(5, 10, 15, 20, 25, 30, 35, 40), scheme="euler", substeps=1, weight="ladder"),
    3: dict(grid=100, n_train=25, n_test=11, ranks=(5, 10, 15, 20, 25, 30, 35, 40, 45, 50), weight="all"),
    4: dict(grid=100, n_train=25, n_test=11, ranks=(5, 10, 15, 20, 25, 30, 35, 40, 45, 50), weight="all"),
    5: dict(grid=40, n_train=200, n_test=10, rank=28, deim_rank=24, ranks=(4, 8, 12, 16, 20, 24, 28), weight="h1"),
}

SMALL = {
    1: dict(),
    2: dict(n_state=100),
    3: dict(grid=50),
    4: dict(grid=50),
    5: dict(grid=30, n_train=100),
}

FULL_SCALE = {5: dict(n_train=1000)}

_INT_FIELDS = {"example", "seed", "grid", "n_points", "n_train", "n_test", "rank", "deim_rank",
               "n_state", "n_steps", "substeps", "threads"}


def resolve_config(cfg, full_scale=False):
    """Fill unset fields from the example defaults (``small`` and
    ``full_scale`` presets applied on top) and validate."""
    if cfg.example not in DEFAULTS:
        raise ConfigError(f"example must be 1..5, got {cfg.example}")
    preset = dict(DEFAULTS[cfg.example])
    if cfg.small:
        preset.update(SMALL[cfg.example])
    if full_scale:
        preset.update(FULL_SCALE.get(cfg.example, {}))
    changes = {k: v for k, v in preset.items() if getattr(cfg, k) is None}
    cfg = replace(cfg, **changes)
    if cfg.ranks is not None:
        cfg = replace(cfg, ranks=tuple(int(r) for r in cfg.ranks))
    _validate(cfg)
    return cfg


def _validate(cfg):
    for name in ("grid", "n_points", "n_train", "n_test", "rank", "deim_rank", "n_state", "n_steps", "substeps", "threads"):
        v = getattr(cfg, name)
        if v is not None and v < 1:
            raise ConfigError(f"{name} must be >= 1, got {v}")
    if cfg.grid is not None and cfg.grid < 2:
        raise ConfigError("grid needs at least 2 nodes per side")
    if cfg.n_state is not None and cfg.n_state < 2:
        raise ConfigError("the ladder needs N >= 2")
    if cfg.ranks is not None and (not cfg.ranks or min(cfg.ranks) < 1):
        raise ConfigError("ranks must be a non-empty list of positive integers")
    if cfg.strategy not in ("deim", "qdeim", "srrqr"):
        raise ConfigError(f"unknown strategy {cfg.strategy!r}")
    if not cfg.eta >= 1:
        raise ConfigError(f"eta must be >= 1, got {cfg.eta}")
    if cfg.t_final is not None and not cfg.t_final > 0:
        raise ConfigError("t_final must be positive")
    if cfg.scheme is not None and cfg.scheme not in ("euler", "radau"):
        raise ConfigError(f"unknown time scheme {cfg.scheme!r}")


def read_config_file(path):
    """Parse ``key = value`` lines (``#`` comments) into a field dict."""
    known = {f.name for f in fields(ExperimentConfig)}
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip().replace("-", "_"), value.strip()
            if not sep or key not in known:
                raise ConfigError(f"{path}:{lineno}: cannot parse {raw.strip()!r}")
            out[key] = _coerce(key, value)
    return out


def _coerce(key, value):
    try:
        if key == "ranks":
            return tuple(int(t) for t in value.replace(",", " ").split())
        if key in _INT_FIELDS:
            return int(value)
        if key in ("eta", "t_final"):
            return float(value)
        if key == "small":
            return value.lower() in ("1", "true", "yes", "on")
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


def worker_count(threads=None):
    """Requested worker count, capped by ``DEIMKIT_THREADS``."""
    raw = os.environ.get("DEIMKIT_THREADS")
    cap = None
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError as exc:
            raise ConfigError(f"DEIMKIT_THREADS must be an integer, got {raw!r}") from exc
    if threads is None:
        return cap or 1
    return max(1, min(threads, cap) if cap else threads)


def ordered_map(fn, items, threads=None):
    """``[fn(x) for x in items]`` on a thread pool; results keep input order."""
    items = list(items)
    n = worker_count(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def fmt(x):
    """CSV cell: integers verbatim, floats with 17 significant digits."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool,)):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


@dataclass
class ErrorReport:
    """Tables produced by one example run.

    ``tables`` maps a CSV file name to ``(header, rows)``. Wall time and notes
    go to a separate text file so the CSVs stay byte-reproducible.
    """

    name: str
    config: ExperimentConfig
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    wall_time: float = 0.0

    def add_table(self, filename, header, rows):
        self.tables[filename] = (list(header), [list(r) for r in rows])

    def column(self, filename, name):
        header, rows = self.tables[filename]
        j = header.index(name)
        return [row[j] for row in rows]

    def write(self, out=None):
        out = Path(out if out is not None else self.config.out)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for filename, (header, rows) in self.tables.items():
            path = out / filename
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for row in rows:
                    w.writerow([fmt(x) for x in row])
            paths.append(path)
        with open(out / f"{self.name}_report.txt", "w", newline="\n") as fh:
            for f in fields(self.config):
                fh.write(f"{f.name} = {getattr(self.config, f.name)}\n")
            for key, value in self.summary.items():
                fh.write(f"# {key}: {value}\n")
            for note in self.notes:
                fh.write(f"# {note}\n")
            fh.write(f"# wall time: {self.wall_time:.3f} s\n")
        return paths


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
