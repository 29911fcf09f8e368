"""coroICA and the second-order baselines, each expressed as a matrix-set recipe
handed to :func:`coroica.jointdiag.uwedge`."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from coroica.covstats import (
    GroupedPartition,
    MatrixSet,
    as_signal,
    build_block_covariances,
    build_matrix_set,
    equal_blocks,
)
from coroica.jointdiag import Diagonalizer, DiagonalizerOptions, normalize_rows, uwedge, whitening
from coroica.rng import make_rng

METHODS = ("coroica", "choiica", "sobi", "random")
SIGNALS = ("var", "td", "var_and_td")
DEFAULT_LAGS = {"var": (0,), "td": (1, 2, 3, 4, 5), "var_and_td": (0, 1, 2, 3, 4, 5)}


def check_lags(signal: str, lags: Sequence[int]) -> tuple:
    lags = tuple(sorted({int(t) for t in lags}))
    if signal == "var" and lags != (0,):
        raise ValueError(f"signal 'var' requires lags (0,), got {lags}")
    if signal == "td" and (not lags or lags[0] < 1):
        raise ValueError(f"signal 'td' requires a nonempty set of positive lags, got {lags}")
    if signal == "var_and_td" and (not lags or lags[0] != 0 or len(lags) < 2):
        raise ValueError(f"signal 'var_and_td' requires lag 0 plus positive lags, got {lags}")
    if lags and lags[0] < 0:
        raise ValueError("lags must be nonnegative")
    return lags


@dataclass(frozen=True)
class SeparationConfig:
    """How to build the matrix set and diagonalize it.

    ``partition`` is either a block length, a list of block lengths (one grid
    per length; all difference matrices are pooled), or an explicit
    :class:`GroupedPartition` (its lags are replaced by ``lags``).
    For ``method="sobi"``, ``max_lag`` is used instead of ``lags``.
    """

    method: str = "coroica"
    signal: str = "var"
    lags: Optional[tuple] = None
    partition: Union[int, tuple, GroupedPartition, None] = None
    strategy: str = "neighbor"
    max_lag: int = 10
    diag_opts: DiagonalizerOptions = field(default_factory=DiagonalizerOptions)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.signal not in SIGNALS:
            raise ValueError(f"unknown signal {self.signal!r}; expected one of {SIGNALS}")
        lags = DEFAULT_LAGS[self.signal] if self.lags is None else self.lags
        object.__setattr__(self, "lags", check_lags(self.signal, lags))
        if isinstance(self.partition, (list, tuple)):
            object.__setattr__(self, "partition", tuple(int(p) for p in self.partition))
        if self.strategy not in ("all", "complement", "neighbor"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.max_lag < 0:
            raise ValueError("max_lag must be nonnegative")

    def block_lengths(self) -> tuple:
        if self.partition is None:
            raise ValueError("a partition (block length or explicit partition) is required")
        if isinstance(self.partition, GroupedPartition):
            raise TypeError("explicit partition has no block lengths")
        lengths = (self.partition,) if np.isscalar(self.partition) else tuple(self.partition)
        if not lengths or min(lengths) < 2:
            raise ValueError(f"block lengths must be >= 2, got {lengths}")
        return tuple(int(x) for x in lengths)


@dataclass(frozen=True)
class SeparationModel:
    """Fitted unmixing ``V`` (unit-norm rows) and its inverse ``A_hat``."""

    V: np.ndarray
    A_hat: np.ndarray
    config: Optional[SeparationConfig] = None
    diagnostics: Optional[Diagonalizer] = None

    def __post_init__(self):
        for name in ("V", "A_hat"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_unmixing(cls, V, config=None, diagnostics=None) -> "SeparationModel":
        V = normalize_rows(np.asarray(V, dtype=float))
        return cls(V=V, A_hat=np.linalg.inv(V), config=config, diagnostics=diagnostics)

    def transform(self, X) -> np.ndarray:
        return transform(self, X)


def transform(model: SeparationModel, X) -> np.ndarray:
    """Recovered sources ``V @ X``; works on any data with matching channel count."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    if X.ndim != 2 or X.shape[0] != model.V.shape[1]:
        raise ValueError(
            f"data with {X.shape[0] if X.ndim == 2 else '?'} channels does not match "
            f"unmixing of dimension {model.V.shape[1]}"
        )
    return model.V @ X


def _diagonalize(X: np.ndarray, mats: MatrixSet, cfg: SeparationConfig) -> SeparationModel:
    opts = cfg.diag_opts
    if isinstance(opts.init, str) and opts.init == "whitening":
        cov = np.atleast_2d(np.cov(X, bias=True))
        opts = replace(opts, init=whitening(cov))
    result = uwedge(mats, opts)
    return SeparationModel.from_unmixing(result.V, cfg, result)


def _grouped_partitions(n: int, group_labels, cfg: SeparationConfig) -> list:
    if isinstance(cfg.partition, GroupedPartition):
        return [GroupedPartition(cfg.partition.groups, cfg.partition.partitions, cfg.lags)]
    labels = np.zeros(n, dtype=int) if group_labels is None else np.asarray(group_labels)
    if labels.shape != (n,):
        raise ValueError(f"need one group label per sample ({n}), got shape {labels.shape}")
    return [GroupedPartition.from_labels(labels, length, cfg.lags) for length in cfg.block_lengths()]


def coroica_matrices(X, group_labels, cfg: SeparationConfig) -> MatrixSet:
    """Difference matrices coroICA diagonalizes, pooled over all partition grids."""
    X = as_signal(X)
    pooled = None
    for gp in _grouped_partitions(X.shape[1], group_labels, cfg):
        gp.validate(X.shape[1])
        for k, part in enumerate(gp.partitions):
            if len(part) < 2:
                raise ValueError(
                    f"partition too coarse: group {k} has a single subgroup and yields no matrices"
                )
        mats = build_matrix_set(X, gp, cfg.strategy)
        pooled = mats if pooled is None else pooled.extend(mats)
    return pooled


def coroica_fit(X, group_labels=None, cfg: SeparationConfig | None = None) -> SeparationModel:
    """Fit coroICA: jointly diagonalize within-group differences of (auto-)covariances.

    ``group_labels`` assigns each sample to a group (``None``: one group).
    """
    cfg = cfg or SeparationConfig()
    if cfg.method != "coroica":
        cfg = replace(cfg, method="coroica")
    X = as_signal(X)
    return _diagonalize(X, coroica_matrices(X, group_labels, cfg), cfg)


def choiica_matrices(X, cfg: SeparationConfig) -> MatrixSet:
    X = as_signal(X)
    if isinstance(cfg.partition, GroupedPartition):
        blocks = [e for part in cfg.partition.partitions for e in part]
        return build_block_covariances(X, blocks, cfg.lags)
    pooled = None
    for length in cfg.block_lengths():
        mats = build_block_covariances(X, equal_blocks(X.shape[1], length), cfg.lags)
        pooled = mats if pooled is None else pooled.extend(mats)
    return pooled


def choiica_fit(X, cfg: SeparationConfig | None = None) -> SeparationModel:
    """Fit choiICA: jointly diagonalize raw block (auto-)covariances of the whole series."""
    cfg = cfg or SeparationConfig(method="choiica")
    if cfg.method != "choiica":
        cfg = replace(cfg, method="choiica")
    X = as_signal(X)
    return _diagonalize(X, choiica_matrices(X, cfg), cfg)


def sobi_fit(X, max_lag: int = 10, diag_opts: DiagonalizerOptions | None = None) -> SeparationModel:
    """Fit SOBI: jointly diagonalize the auto-covariances of lags ``0..max_lag`` on all data."""
    X = as_signal(X)
    max_lag = int(max_lag)
    if max_lag < 0:
        raise ValueError("max_lag must be nonnegative")
    if X.shape[1] <= max_lag + 2:
        raise ValueError(f"need more than {max_lag + 2} samples for max lag {max_lag}")
    cfg = SeparationConfig(
        method="sobi",
        signal="var_and_td" if max_lag > 0 else "var",
        lags=tuple(range(max_lag + 1)),
        max_lag=max_lag,
        diag_opts=diag_opts or DiagonalizerOptions(),
    )
    mats = build_block_covariances(X, [np.arange(X.shape[1])], range(max_lag + 1))
    return _diagonalize(X, mats, cfg)


def random_unmixing(d: int, seed: int = 0) -> SeparationModel:
    """Unmixing with iid standard normal entries, row-normalized; deterministic per seed."""
    d = int(d)
    if d < 1:
        raise ValueError("d must be >= 1")
    V = make_rng(seed, "random_unmixing").standard_normal((d, d))
    return SeparationModel.from_unmixing(V, SeparationConfig(method="random", seed=int(seed)))


def fit(X, group_labels, cfg: SeparationConfig) -> SeparationModel:
    """Dispatch on ``cfg.method``."""
    if cfg.method == "coroica":
        return coroica_fit(X, group_labels, cfg)
    if cfg.method == "choiica":
        return choiica_fit(X, cfg)
    if cfg.method == "sobi":
        return sobi_fit(X, cfg.max_lag, cfg.diag_opts)
    return random_unmixing(as_signal(X).shape[0], cfg.seed)
