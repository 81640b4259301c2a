"""Run configuration: one human-editable YAML file, fully defaulted.

Every tunable the engine honors appears here with its default, so a config
file only needs the keys it overrides.  `load_config` fills the rest and
validates the combination before a run starts.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .scheduler import DEFAULT_K_INIT, DEFAULT_K_SET, DEFAULT_STEP, DEFAULT_WARMUP, DEFAULT_WINDOW
from .seeding import ALLOCATION_MODES, DEFAULT_ELITE_FRACTION, DEFAULT_MIX_FRACTION

DEFAULT_MAX_EVALS = 800
DEFAULT_SNAPSHOTS = (100, 200, 400, 800)


@dataclass
class ArchiveConfig:
    bins: int = 10
    rank_weight: float = 1.0
    migration_interval: int = 0  # iterations between ring migrations; 0 disables


@dataclass
class TaskConfig:
    kind: str = "circle_packing"  # circle_packing | synthetic_sphere | external
    n_circles: int = 26
    # external-evaluator tasks only:
    command: str | None = None
    direction: str = "maximize"
    feature_names: list[str] = field(default_factory=lambda: ["f0", "f1"])
    feature_bounds: list[list[float]] = field(default_factory=lambda: [[0.0, 1.0], [0.0, 1.0]])
    initial_program: str | None = None  # path to the starting body
    timeout_secs: float = 30.0


@dataclass
class BackendConfig:
    kind: str = "mock"  # mock | scripted | remote
    mock_sigma: float = 0.02
    transcript_dir: str | None = None  # scripted
    endpoint: str | None = None  # remote
    model: str | None = None
    api_key_env: str = "ARCHIPELAGO_API_KEY"
    max_in_flight: int = 4
    max_retries: int = 3
    temperature: float | None = None


@dataclass
class SchedulerConfig:
    k_set: list[int] = field(default_factory=lambda: list(DEFAULT_K_SET))
    step: int = DEFAULT_STEP
    window: int = DEFAULT_WINDOW
    k_init: int = DEFAULT_K_INIT
    warmup: int = DEFAULT_WARMUP


@dataclass
class GenerationConfig:
    n_inspirations: int = 3
    min_candidates: int | None = None  # default: min(k, 2) at call time
    max_requeries: int = 1


@dataclass
class SeedingConfig:
    mode: str = "cold"
    pool: str | None = None
    d: float = DEFAULT_MIX_FRACTION
    rho: float = DEFAULT_ELITE_FRACTION
    degrade_top_fraction: float = 0.0


@dataclass
class EmbeddingConfig:
    provider: str = "trigram"  # trigram | precomputed | remote | none
    path: str | None = None  # precomputed
    endpoint: str | None = None  # remote
    model: str | None = None
    api_key_env: str = "ARCHIPELAGO_API_KEY"


@dataclass
class BudgetConfig:
    max_evals: int | None = DEFAULT_MAX_EVALS
    max_cost: float | None = None


@dataclass
class PriceConfig:
    input_per_million: float = 0.0
    output_per_million: float = 0.0


@dataclass
class RunConfig:
    seed: int = 0
    islands: int = 4
    output_dir: str = "runs/run"
    concurrent: bool = False
    archive: ArchiveConfig = field(default_factory=ArchiveConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    seeding: SeedingConfig = field(default_factory=SeedingConfig)
    embeddings: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    budgets: BudgetConfig = field(default_factory=BudgetConfig)
    prices: PriceConfig = field(default_factory=PriceConfig)
    snapshots: list[int] = field(default_factory=lambda: list(DEFAULT_SNAPSHOTS))

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "archive": ArchiveConfig,
    "task": TaskConfig,
    "backend": BackendConfig,
    "scheduler": SchedulerConfig,
    "generation": GenerationConfig,
    "seeding": SeedingConfig,
    "embeddings": EmbeddingConfig,
    "budgets": BudgetConfig,
    "prices": PriceConfig,
}


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data or {})
    kwargs: dict = {}
    for key, cls in _SECTIONS.items():
        section = data.pop(key, None) or {}
        unknown = set(section) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown keys in '{key}': {sorted(unknown)}")
        kwargs[key] = cls(**section)
    top_fields = {f for f in RunConfig.__dataclass_fields__} - set(_SECTIONS)
    unknown = set(data) - top_fields
    if unknown:
        raise ValueError(f"unknown top-level config keys: {sorted(unknown)}")
    kwargs.update(data)
    config = RunConfig(**kwargs)
    validate_config(config)
    return config


def load_config(path: str | Path) -> RunConfig:
    with Path(path).open("r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data or {})


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with Path(path).open("w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True, default_flow_style=False)


def validate_config(config: RunConfig) -> None:
    if config.islands < 1:
        raise ValueError("islands must be >= 1")
    if config.task.kind not in ("circle_packing", "synthetic_sphere", "external"):
        raise ValueError(f"unknown task kind {config.task.kind!r}")
    if config.task.kind == "external" and not config.task.command:
        raise ValueError("external task requires task.command")
    if config.task.direction not in ("maximize", "minimize"):
        raise ValueError(f"bad direction {config.task.direction!r}")
    if config.backend.kind not in ("mock", "scripted", "remote"):
        raise ValueError(f"unknown backend kind {config.backend.kind!r}")
    if config.backend.kind == "scripted" and not config.backend.transcript_dir:
        raise ValueError("scripted backend requires backend.transcript_dir")
    if config.backend.kind == "remote" and not (config.backend.endpoint and config.backend.model):
        raise ValueError("remote backend requires backend.endpoint and backend.model")
    sched = config.scheduler
    if not sched.k_set or sorted(sched.k_set) != list(sched.k_set):
        raise ValueError("scheduler.k_set must be a nonempty ascending list")
    if sched.k_init not in sched.k_set:
        raise ValueError("scheduler.k_init must be a member of scheduler.k_set")
    if sched.window < 1 or sched.warmup < 0 or sched.step < 1:
        raise ValueError("scheduler window/warmup/step out of range")
    if config.seeding.mode not in ALLOCATION_MODES:
        raise ValueError(f"unknown seeding mode {config.seeding.mode!r}")
    if config.seeding.mode not in ("cold",) and not config.seeding.pool:
        raise ValueError(f"seeding mode {config.seeding.mode!r} requires seeding.pool")
    for name, frac in (("d", config.seeding.d), ("rho", config.seeding.rho),
                       ("degrade_top_fraction", config.seeding.degrade_top_fraction)):
        if not 0.0 <= frac <= 1.0:
            raise ValueError(f"seeding.{name} must be within [0, 1]")
    if config.embeddings.provider not in ("trigram", "precomputed", "remote", "none"):
        raise ValueError(f"unknown embeddings provider {config.embeddings.provider!r}")
    budgets = config.budgets
    if budgets.max_evals is None and budgets.max_cost is None:
        raise ValueError("at least one of budgets.max_evals / budgets.max_cost is required")
    if budgets.max_evals is not None and budgets.max_evals < 0:
        raise ValueError("budgets.max_evals must be >= 0")
    if budgets.max_cost is not None and budgets.max_cost < 0:
        raise ValueError("budgets.max_cost must be >= 0")
    if config.archive.bins < 1:
        raise ValueError("archive.bins must be >= 1")
    if config.archive.migration_interval < 0:
        raise ValueError("archive.migration_interval must be >= 0")
    if any(m < 0 for m in config.snapshots):
        raise ValueError("snapshot milestones must be >= 0")
