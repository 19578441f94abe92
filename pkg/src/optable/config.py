"""Run configuration (flat ``key = value`` files) and dataset manifests (CSV)."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .dynamic_detect import DynamicParams
from .errors import ConfigError, ManifestError
from .knn import APPROXIMATE, EXACT, IndexParams
from .optimize import SwarmConfig
from .static_detect import DetectParams, ScaleLadder

STATIC = "static"
DYNAMIC = "dynamic"
COLUMNS = {
    STATIC: ("image", "mask"),
    DYNAMIC: ("before", "after", "appeared", "disappeared"),
}


@dataclass(frozen=True)
class RunConfig:
    # detection
    k: int = 89
    tau: int = 4
    p_min: int = 5
    levels: int = 3
    subdivide_threshold: float = 0.0
    w_size: int = 81
    stride: int = 0  # 0 = finest level 1, coarser levels size // 5
    # k-NN index
    knn_mode: str = EXACT
    trees: int = 8
    leaf_size: int = 32
    checks: int = 8192
    # run
    seed: int = 0
    downsample: bool = True
    threads: int = 1
    out_dir: str = "out"
    overlay_threshold: float = 0.5
    figures: bool = True
    # optimization
    swarm_size: int = 20
    iterations: int = 30
    inertia: float = 0.7
    c1: float = 1.5
    c2: float = 1.5
    k_range: tuple = (1, 200)
    tau_values: tuple = (2, 3, 4, 5)
    p_min_range: tuple = (3, 20)
    levels_range: tuple = (1, 4)
    w_candidates: tuple = (21, 41, 61, 81, 101)
    w_draws: int = 5

    def __post_init__(self):
        if self.knn_mode not in (EXACT, APPROXIMATE):
            raise ConfigError(f"knn_mode must be {EXACT!r} or {APPROXIMATE!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        try:
            self.dynamic_params()
            self.swarm_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def index_params(self) -> IndexParams:
        return IndexParams(self.knn_mode, self.trees, self.leaf_size, self.checks)

    def detect_params(self, **overrides) -> DetectParams:
        values = dict(k=self.k, tau=self.tau, p_min=self.p_min, levels=self.levels)
        values.update(overrides)
        return DetectParams(values["k"], ScaleLadder(values["p_min"], values["tau"], values["levels"]),
                            self.subdivide_threshold, self.index_params(), self.seed)

    def dynamic_params(self, **overrides) -> DynamicParams:
        w_size = overrides.pop("w_size", self.w_size)
        return DynamicParams(self.detect_params(**overrides), w_size, self.stride or None)

    def swarm_config(self) -> SwarmConfig:
        return SwarmConfig(self.swarm_size, self.iterations, self.inertia, self.c1, self.c2, self.seed)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, text: str):
    default = _FIELDS[key].default
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return text


def parse_assignments(lines: Sequence[str], source: str = "config") -> dict:
    values = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def load_config(path=None, overrides: Sequence[str] = ()) -> RunConfig:
    """Defaults, then the file (if any), then ``key=value`` overrides."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_assignments(text.splitlines(), str(path)))
    values.update(parse_assignments(list(overrides), "override"))
    return RunConfig(**values)


RUNTIME_KEYS = ("out_dir", "threads")


def dump_config(cfg: RunConfig, skip: Sequence[str] = RUNTIME_KEYS) -> str:
    """Serialize to the ``key = value`` format; run-location keys are left out by default."""
    out = []
    for name in _FIELDS:
        if name in skip:
            continue
        v = getattr(cfg, name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        out.append(f"{name} = {v}")
    return "\n".join(out) + "\n"


@dataclass
class Manifest:
    kind: str
    rows: list  # tuples of paths, relative to base_dir unless absolute
    base_dir: Path

    def path(self, row: int, column: str) -> Path:
        p = Path(self.rows[row][COLUMNS[self.kind].index(column)])
        return p if p.is_absolute() else Path(self.base_dir) / p

    def __len__(self) -> int:
        return len(self.rows)

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS[self.kind])
            for row in self.rows:
                w.writerow([str(v) for v in row])


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if not rows:
        raise ManifestError(f"{path}: empty manifest")
    header = tuple(c.strip() for c in rows[0])
    kinds = [k for k, cols in COLUMNS.items() if cols == header]
    if not kinds:
        raise ManifestError(f"{path}: header {','.join(header)} matches neither "
                            f"{','.join(COLUMNS[STATIC])} nor {','.join(COLUMNS[DYNAMIC])}")
    kind = kinds[0]
    body = []
    for n, r in enumerate(rows[1:], 2):
        if len(r) != len(header):
            raise ManifestError(f"{path}:{n}: expected {len(header)} columns, got {len(r)}")
        body.append(tuple(c.strip() for c in r))
    manifest = Manifest(kind, body, path.parent)
    for i in range(len(body)):
        for col in COLUMNS[kind]:
            if not manifest.path(i, col).exists():
                raise ManifestError(f"{path}: row {i + 2} references missing file {manifest.path(i, col)}")
    return manifest
