"""Run configuration for the command line harness.

One nested YAML (or JSON) document with optional sections ``simulate``,
``fit``, ``bench`` and ``climate``, plus a top-level ``seed``. Every section
is validated before any computation; unknown keys are rejected.
"""

from __future__ import annotations

import itertools
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from coroica.jointdiag import DiagonalizerOptions
from coroica.separation import DEFAULT_LAGS, SeparationConfig, check_lags
from coroica.simgen import BlockVarSpec, GarchSpec

U64_MAX = 2**64 - 1
BLOCKVAR_AXES = ("n", "d", "m", "subsets_per_group", "c1", "c2")
GARCH_AXES = ("setting", "noise", "n", "d")


class ConfigError(ValueError):
    """Config document failed to load or validate; message lists every problem."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MethodConfig(_Strict):
    method: Literal["coroica", "choiica", "sobi", "random"]
    signal: Literal["var", "td", "var_and_td"] = "var"
    lags: Optional[List[Annotated[int, Field(ge=0)]]] = None
    partition_length: Optional[Union[Annotated[int, Field(ge=2)], List[Annotated[int, Field(ge=2)]]]] = None
    strategy: Literal["all", "complement", "neighbor"] = "neighbor"
    max_lag: int = Field(10, ge=0)
    max_iter: int = Field(10_000, ge=1)
    rel_tol: float = Field(1e-9, gt=0)
    n_random: int = Field(100, ge=1)
    label: Optional[str] = None

    @model_validator(mode="after")
    def _consistent(self):
        if self.method in ("coroica", "choiica"):
            if self.partition_length is None:
                raise ValueError(f"partition_length is required for method {self.method!r}")
            check_lags(self.signal, DEFAULT_LAGS[self.signal] if self.lags is None else self.lags)
        if isinstance(self.partition_length, list) and not self.partition_length:
            raise ValueError("partition_length list must be nonempty")
        return self

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.method in ("coroica", "choiica"):
            return f"{self.method}({self.signal})"
        if self.method == "sobi":
            return f"sobi(L={self.max_lag})"
        return "random"

    def separation_config(self, seed: int = 0) -> SeparationConfig:
        part = self.partition_length
        return SeparationConfig(
            method=self.method,
            signal=self.signal,
            lags=None if self.lags is None else tuple(self.lags),
            partition=tuple(part) if isinstance(part, list) else part,
            strategy=self.strategy,
            max_lag=self.max_lag,
            diag_opts=DiagonalizerOptions(max_iter=self.max_iter, rel_tol=self.rel_tol),
            seed=seed,
        )

    def first_length(self) -> Optional[int]:
        part = self.partition_length
        return part[0] if isinstance(part, list) else part


class BlockVarConfig(_Strict):
    kind: Literal["blockvar"]
    n: int = Field(ge=1)
    d: int = Field(ge=1)
    m: int = Field(10, ge=1)
    subsets_per_group: int = Field(10, ge=1)
    c1: float = Field(1.0, ge=0)
    c2: float = Field(1.0, gt=0)

    @field_validator("c1")
    @classmethod
    def _c1_gap(cls, v):
        if 0 < v <= 0.05:
            raise ValueError("c1 must be 0 or larger than 0.05")
        return v

    @model_validator(mode="after")
    def _size(self):
        if self.n < 2 * self.m * self.subsets_per_group:
            raise ValueError(f"n must be at least 2 * m * subsets_per_group = {2 * self.m * self.subsets_per_group}")
        return self

    def spec(self, seed: int) -> BlockVarSpec:
        return BlockVarSpec(self.n, self.d, self.m, self.subsets_per_group, self.c1, self.c2, seed)


class GarchConfig(_Strict):
    kind: Literal["garch"]
    setting: Literal[1, 2, 3] = 1
    noise: Literal["ar", "iid"] = "ar"
    n: int = Field(200_000, ge=2)
    d: int = Field(6, ge=1)
    segment_length: int = Field(2000, ge=2)
    burn_in: int = Field(1000, ge=0)

    def spec(self, seed: int) -> GarchSpec:
        return GarchSpec(self.setting, self.noise, self.n, self.d, seed, self.segment_length, self.burn_in)


GeneratorConfig = Annotated[Union[BlockVarConfig, GarchConfig], Field(discriminator="kind")]


class FitSection(_Strict):
    method: MethodConfig
    train_groups: Optional[List[int]] = None
    score_partition_length: Optional[int] = Field(None, ge=2)


def _as_list(v):
    return v if isinstance(v, list) else [v]


class BlockVarGrid(_Strict):
    kind: Literal["blockvar"]
    n: Union[int, List[int]]
    d: Union[int, List[int]]
    m: Union[int, List[int]] = 10
    subsets_per_group: Union[int, List[int]] = 10
    c1: Union[float, List[float]] = 1.0
    c2: Union[float, List[float]] = 1.0

    @model_validator(mode="after")
    def _valid_cells(self):
        self.cells()
        return self

    def cells(self) -> list:
        values = [_as_list(getattr(self, a)) for a in BLOCKVAR_AXES]
        return [
            BlockVarConfig(kind="blockvar", **dict(zip(BLOCKVAR_AXES, combo)))
            for combo in itertools.product(*values)
        ]


class GarchGrid(_Strict):
    kind: Literal["garch"]
    setting: Union[Literal[1, 2, 3], List[Literal[1, 2, 3]]] = [1, 2, 3]
    noise: Union[Literal["ar", "iid"], List[Literal["ar", "iid"]]] = ["ar", "iid"]
    n: Union[int, List[int]] = 200_000
    d: Union[int, List[int]] = 6
    segment_length: int = Field(2000, ge=2)
    burn_in: int = Field(1000, ge=0)

    @model_validator(mode="after")
    def _valid_cells(self):
        self.cells()
        return self

    def cells(self) -> list:
        values = [_as_list(getattr(self, a)) for a in GARCH_AXES]
        return [
            GarchConfig(
                kind="garch",
                segment_length=self.segment_length,
                burn_in=self.burn_in,
                **dict(zip(GARCH_AXES, combo)),
            )
            for combo in itertools.product(*values)
        ]


class BenchSection(_Strict):
    generator: Annotated[Union[BlockVarGrid, GarchGrid], Field(discriminator="kind")]
    methods: List[MethodConfig] = Field(min_length=1)
    replicates: int = Field(ge=1)
    metrics: List[Literal["md", "mcis"]] = Field(["md"], min_length=1)
    score_partition_length: Optional[int] = Field(None, ge=2)

    @model_validator(mode="after")
    def _unique_names(self):
        names = [m.name for m in self.methods]
        dup = sorted({x for x in names if names.count(x) > 1})
        if dup:
            raise ValueError(f"method names must be unique, repeated: {dup} (set 'label')")
        if "mcis" in self.metrics and self.score_partition_length is None:
            lacking = [m.name for m in self.methods if m.first_length() is None]
            if lacking:
                raise ValueError(f"metric 'mcis' needs score_partition_length for methods {lacking}")
        return self


class ClimateSection(_Strict):
    lags: Union[List[Annotated[int, Field(ge=0)]], "LagRange"]
    methods: List[MethodConfig] = Field(min_length=1)
    step: float = Field(500.0, gt=0)
    criterion: Literal["radius", "norm"] = "radius"
    spline: Literal["natural", "not-a-knot"] = "natural"

    def lag_list(self) -> list:
        if isinstance(self.lags, LagRange):
            return list(range(self.lags.min, self.lags.max + 1))
        return list(self.lags)


class LagRange(_Strict):
    min: int = Field(ge=0)
    max: int = Field(ge=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.max < self.min:
            raise ValueError("lags.max must be >= lags.min")
        return self


ClimateSection.model_rebuild()


class RunConfig(_Strict):
    seed: int = Field(0, ge=0, le=U64_MAX)
    simulate: Optional[GeneratorConfig] = None
    fit: Optional[FitSection] = None
    bench: Optional[BenchSection] = None
    climate: Optional[ClimateSection] = None


def _clean_loc(loc) -> tuple:
    # union and discriminator tags are not part of the document path
    return tuple(p for p in loc if isinstance(p, int) or ("[" not in p and p not in ("blockvar", "garch")))


def _line_of(node, loc) -> Optional[int]:
    """1-based line of the deepest YAML node reachable along ``loc``."""
    line = None
    for part in loc:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            node = next((v for k, v in node.value if k.value == str(part)), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
        else:
            node = None
    if node is not None:
        line = node.start_mark.line + 1
    return line


def _format_errors(exc: ValidationError, root=None) -> str:
    lines = []
    for err in exc.errors():
        loc = _clean_loc(err["loc"])
        where = ".".join(str(p) for p in loc) or "<root>"
        line = _line_of(root, loc) if root is not None else None
        prefix = f"line {line}: " if line else ""
        lines.append(f"  {prefix}{where}: {err['msg']}")
    return "invalid config:\n" + "\n".join(lines)


def parse_config(data, root=None) -> RunConfig:
    """Validate a config mapping; ``root`` is the composed YAML node for line numbers."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("invalid config: top level must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, root)) from None


def load_config(path) -> RunConfig:
    """Read and validate a YAML/JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"cannot parse config {path}{where}: {getattr(exc, 'problem', exc)}") from None
    return parse_config(data, root)
