"""Run configuration: one JSON document shared by every subcommand."""
import hashlib
import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from affdim import config
from affdim.errors import ConfigError
from affdim.ifs import IFSSpec, validate
from affdim.randomness import DistributionSpec

U64_MAX = (1 << 64) - 1


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MapConfig(StrictModel):
    matrix: List[List[float]]
    translation: List[float]


class IFSConfig(StrictModel):
    maps: List[MapConfig] = Field(min_length=1)

    @model_validator(mode="after")
    def check_shapes(self):
        d = len(self.maps[0].translation)
        for idx, item in enumerate(self.maps):
            if len(item.matrix) != d or any(len(row) != d for row in item.matrix):
                raise ValueError(f"map {idx + 1}: matrix must be {d}x{d}")
            if len(item.translation) != d:
                raise ValueError(f"map {idx + 1}: translation must have {d} entries")
        return self


class DistributionConfig(StrictModel):
    kind: Literal["gaussian", "laplace", "uniform-ball", "student-t"] = "gaussian"
    sigma: float = Field(0.05, gt=0)
    b: float = Field(0.05, gt=0)
    radius: float = Field(0.0, ge=0)
    nu: float = Field(3.0, gt=0)
    scale: float = Field(1.0, gt=0)
    model: Literal["full-word-iid", "last-symbol"] = "full-word-iid"
    projection_bound: Optional[float] = Field(None, gt=0)


class SolverConfig(StrictModel):
    tol: float = Field(config.DEFAULT_TOL, gt=0)
    n_max: Optional[int] = Field(None, ge=1)
    enumeration_cap: int = Field(config.ENUMERATION_CAP, ge=1)
    mc_samples: int = Field(config.DEFAULT_MC_SAMPLES, ge=1)


class GenerationConfig(StrictModel):
    count: int = Field(10000, ge=0)
    truncation_tol: float = Field(config.DEFAULT_TRUNCATION_TOL, gt=0)
    theta: Optional[float] = Field(None, gt=0, lt=1)
    max_depth: Optional[int] = Field(None, ge=1)
    sampler: Literal["uniform", "word-measure"] = "uniform"
    measure_level: int = Field(4, ge=1)
    measure_s: Optional[float] = Field(None, ge=0)


class ScalePolicyConfig(StrictModel):
    max_doublings: int = Field(config.BOX_MAX_DOUBLINGS, ge=1)
    min_window: int = Field(config.BOX_MIN_WINDOW, ge=2)
    offsets: int = Field(1, ge=1)


class EstimationConfig(StrictModel):
    scale_policy: ScalePolicyConfig = Field(default_factory=ScalePolicyConfig)
    t_list: List[float] = Field(default_factory=list)
    rho_list: List[float] = Field(default_factory=list)
    energy_pairs: int = Field(2000, ge=1)
    energy_level: int = Field(4, ge=1)
    transversality_pairs: List[Tuple[List[int], List[int]]] = Field(default_factory=list)
    transversality_seeds: int = Field(1000, ge=1)
    randomize_continuations: bool = False

    @field_validator("rho_list")
    @classmethod
    def positive_rho(cls, value: List[float]) -> List[float]:
        if any(not r > 0 for r in value):
            raise ValueError("rho values must be positive")
        return value

    @field_validator("transversality_pairs")
    @classmethod
    def one_based(cls, value):
        for i, j in value:
            if any(sym < 1 for sym in list(i) + list(j)):
                raise ValueError("word symbols are 1-based")
        return value


class VerifyConfig(StrictModel):
    theta: Optional[float] = Field(None, gt=0, lt=1)
    n_max_level: int = Field(40, ge=1)
    samples_per_level: int = Field(10000, ge=1)
    covering_theta: List[float] = Field(default_factory=list)
    covering_levels: int = Field(8, ge=1)
    energy: bool = True


class OutputConfig(StrictModel):
    dir: str = "out"
    formats: List[Literal["json", "csv", "svg"]] = Field(default_factory=lambda: ["json", "csv", "svg"])


class RunConfig(StrictModel):
    schema_version: int = config.SCHEMA_VERSION
    ifs: IFSConfig
    distribution: DistributionConfig = Field(default_factory=DistributionConfig)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    generation: GenerationConfig = Field(default_factory=GenerationConfig)
    estimation: EstimationConfig = Field(default_factory=EstimationConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("seeds")
    @classmethod
    def u64_seeds(cls, value: List[int]) -> List[int]:
        if any(not 0 <= s <= U64_MAX for s in value):
            raise ValueError("seeds must be unsigned 64-bit integers")
        return value

    @field_validator("schema_version")
    @classmethod
    def known_version(cls, value: int) -> int:
        if value != config.SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {value}")
        return value


def _error_path(loc) -> str:
    return ".".join(str(part) for part in loc)


def parse_run_config(raw: bytes) -> RunConfig:
    """Parse config bytes, turning every failure into a ConfigError."""
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        errors = [{"path": _error_path(err["loc"]), "message": err["msg"]} for err in exc.errors()]
        first = errors[0] if errors else {"path": "", "message": str(exc)}
        raise ConfigError(f"{first['path']}: {first['message']}", {"errors": errors})


def load_run_config(path: str) -> Tuple[RunConfig, bytes]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", {"path": str(path)})
    return parse_run_config(raw), raw


def config_digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def build_ifs(cfg: RunConfig) -> IFSSpec:
    """Validated IFSSpec (raises not-contracting / singular-map errors)."""
    return validate(IFSSpec.from_maps([(m.matrix, m.translation) for m in cfg.ifs.maps]))


def build_distribution(cfg: RunConfig, dim: int) -> DistributionSpec:
    dist = cfg.distribution
    return DistributionSpec(
        kind=dist.kind,
        dim=dim,
        sigma=dist.sigma,
        b=dist.b,
        radius=dist.radius,
        nu=dist.nu,
        scale=dist.scale,
        projection_override=dist.projection_bound,
    )


def zero_based(word: List[int]) -> Tuple[int, ...]:
    return tuple(int(i) - 1 for i in word)
