"""JSON run configuration.

Unknown keys are rejected at every level so that typos fail loudly.
``regions_path`` is resolved relative to the configuration file; the prefix
``builtin:`` points at the bundled data directory.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .disutility import DisutilityFn
from .errors import InputError
from .fixtures import STORM_PATH, data_dir
from .insurance import InsurerConfig
from .mechanisms import MechanismKind
from .solver import SolverConfig

__all__ = ["RunConfig", "load_config", "resolve_output_dir", "OUTPUT_ENV"]

OUTPUT_ENV = "AFPO_OUTPUT_DIR"
DEFAULT_MECHANISMS = ("baseline", "insurance", "pure_sharing", "hybrid")


def _take(block: dict, allowed: set[str], where: str) -> dict:
    if not isinstance(block, dict):
        raise InputError(f"{where}: expected an object")
    extra = set(block) - allowed
    if extra:
        raise InputError(f"{where}: unknown keys {sorted(extra)}")
    return dict(block)


@dataclass(frozen=True)
class StormBlock:
    path: tuple[tuple[float, float], ...] = tuple(map(tuple, STORM_PATH))
    beta_b: float = 0.5
    a_num: float = 0.1
    d_off: float = 0.3
    d_max: float | None = None


@dataclass(frozen=True)
class RunConfig:
    regions_path: str
    seed: int = 20240601
    n_sims: int = 10_000
    storm: StormBlock = field(default_factory=StormBlock)
    insurer: InsurerConfig = field(default_factory=InsurerConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    disutility: dict = field(default_factory=lambda: {"kind": "cara", "gamma": 1.0})
    mechanisms: tuple[str, ...] = DEFAULT_MECHANISMS
    output_dir: str | None = None
    grid_points: int = 512
    threads: int = 1
    export_losses: bool = False
    base_dir: str = "."

    def __post_init__(self):
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise InputError("seed must be a non-negative 64-bit integer")
        if not isinstance(self.n_sims, int) or self.n_sims < 2:
            raise InputError("n_sims must be an integer >= 2")
        if self.grid_points < 2:
            raise InputError("grid_points must be >= 2")
        if self.threads < 1:
            raise InputError("threads must be >= 1")
        known = {k.value for k in MechanismKind}
        for m in self.mechanisms:
            if m not in known:
                raise InputError(f"unknown mechanism {m!r}; choose from {sorted(known)}")
        if self.disutility.get("kind") == "power":
            DisutilityFn.from_dict(self.disutility, anchor=1.0)
        else:
            DisutilityFn.from_dict(self.disutility)
        if not self.regions_file().is_file():
            raise InputError(f"regions file not found: {self.regions_file()}")

    def regions_file(self) -> Path:
        if self.regions_path.startswith("builtin:"):
            return data_dir() / self.regions_path.removeprefix("builtin:")
        p = Path(self.regions_path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def disutility_for(self, anchor: float) -> DisutilityFn:
        return DisutilityFn.from_dict(self.disutility, anchor=anchor)

    def canonical(self) -> dict:
        """Everything that influences results; excludes output location and thread count."""
        d = {
            "seed": self.seed,
            "n_sims": self.n_sims,
            "storm": asdict(self.storm),
            "insurer": asdict(self.insurer),
            "solver": asdict(self.solver),
            "disutility": self.disutility,
            "mechanisms": list(self.mechanisms),
            "grid_points": self.grid_points,
            "export_losses": self.export_losses,
        }
        return json.loads(json.dumps(d, default=list))

    def content_hash(self, regions_digest: str = "") -> str:
        blob = json.dumps(self.canonical(), sort_keys=True) + regions_digest
        return hashlib.sha256(blob.encode()).hexdigest()


def _storm(d: dict) -> StormBlock:
    d = _take(d, {f.name for f in fields(StormBlock)}, "storm")
    if "path" in d:
        path = d["path"]
        if not isinstance(path, list) or len(path) < 2 or any(
                not isinstance(p, list) or len(p) != 2 for p in path):
            raise InputError("storm.path must be a list of at least two [x, y] pairs")
        d["path"] = tuple((float(x), float(y)) for x, y in path)
    return StormBlock(**d)


def _insurer(d: dict) -> InsurerConfig:
    d = _take(d, {f.name for f in fields(InsurerConfig)}, "insurer")
    if d.get("surplus_shares") is not None:
        d["surplus_shares"] = tuple(float(c) for c in d["surplus_shares"])
    return InsurerConfig(**d)


def _solver(d: dict) -> SolverConfig:
    return SolverConfig(**_take(d, {f.name for f in fields(SolverConfig)}, "solver"))


def config_from_dict(raw: dict, base_dir: str | Path = ".") -> RunConfig:
    top = {f.name for f in fields(RunConfig)} - {"base_dir"}
    d = _take(raw, top, "config")
    if "regions_path" not in d:
        raise InputError("config: regions_path is required")
    if "storm" in d:
        d["storm"] = _storm(d["storm"])
    if "insurer" in d:
        d["insurer"] = _insurer(d["insurer"])
    if "solver" in d:
        d["solver"] = _solver(d["solver"])
    if "mechanisms" in d:
        d["mechanisms"] = tuple(d["mechanisms"])
    try:
        return RunConfig(base_dir=str(base_dir), **d)
    except TypeError as exc:
        raise InputError(f"config: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw, base_dir=path.parent)


def resolve_output_dir(cfg: RunConfig | None = None, override: str | None = None) -> Path:
    """CLI flag, then config, then ``$AFPO_OUTPUT_DIR``, then ``./afpo_out``."""
    for cand in (override, cfg.output_dir if cfg else None, os.environ.get(OUTPUT_ENV)):
        if cand:
            return Path(cand)
    return Path("afpo_out")
