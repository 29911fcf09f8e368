"""Empirical (auto-)covariances on signal blocks and the matrix sets built from them.

Signals are ``d x n`` arrays: rows are channels, columns are samples in
temporal order. Index subsets select columns; lags are taken against the
column order of the selected block.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

STRATEGIES = ("all", "complement", "neighbor")


def as_signal(X) -> np.ndarray:
    """Validate and return ``X`` as a finite 2-d float array (channels x samples)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    if X.ndim != 2:
        raise ValueError(f"signal must be a d x n matrix, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"signal must have d >= 1 and n >= 1, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("signal contains non-finite entries")
    return X


@dataclass(frozen=True)
class GroupedPartition:
    """Groups of sample indices, an ordered partition of each group, and lags.

    ``groups[k]`` holds the sample indices of group ``k`` and
    ``partitions[k]`` the ordered subgroups covering it.
    """

    groups: tuple
    partitions: tuple
    lags: tuple = (0,)

    def __post_init__(self):
        groups = tuple(np.asarray(g, dtype=np.intp) for g in self.groups)
        partitions = tuple(
            tuple(np.asarray(e, dtype=np.intp) for e in part) for part in self.partitions
        )
        lags = tuple(sorted({int(t) for t in self.lags}))
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "partitions", partitions)
        object.__setattr__(self, "lags", lags)
        if len(groups) != len(partitions):
            raise ValueError("need exactly one partition per group")
        if not lags or lags[0] < 0:
            raise ValueError("lags must be a nonempty set of nonnegative integers")

    @property
    def n_samples(self) -> int:
        return int(sum(len(g) for g in self.groups))

    def validate(self, n: int) -> None:
        """Raise ``ValueError`` unless this partition is valid for ``n`` samples."""
        seen = np.zeros(n, dtype=int)
        for k, (g, part) in enumerate(zip(self.groups, self.partitions)):
            if g.size and (g.min() < 0 or g.max() >= n):
                raise ValueError(f"group {k} has indices outside 0..{n - 1}")
            seen[g] += 1
            covered = np.sort(np.concatenate(part)) if part else np.empty(0, dtype=np.intp)
            if not np.array_equal(covered, np.sort(g)):
                raise ValueError(f"partition of group {k} does not cover the group exactly")
            for j, e in enumerate(part):
                if e.size < 2:
                    raise ValueError(f"subgroup {j} of group {k} has fewer than 2 samples")
                if self.lags[-1] >= e.size:
                    raise ValueError(
                        f"subgroup {j} of group {k} (length {e.size}) is too short "
                        f"for lag {self.lags[-1]}"
                    )
        if np.any(seen != 1):
            raise ValueError("groups must be pairwise disjoint and cover all samples")

    @classmethod
    def from_labels(cls, labels, block_length: int, lags: Sequence[int] = (0,)) -> "GroupedPartition":
        """Group samples by label and cut each group into equal blocks.

        Groups are taken in order of first appearance of their label.
        """
        labels = np.asarray(labels)
        _, first = np.unique(labels, return_index=True)
        groups = [np.flatnonzero(labels == lab) for lab in labels[np.sort(first)]]
        parts = [[g[b] for b in equal_blocks(g.size, int(block_length))] for g in groups]
        return cls(tuple(groups), tuple(parts), tuple(lags))


def equal_blocks(n: int, length: int) -> list[np.ndarray]:
    """Cut ``range(n)`` into consecutive blocks of ``length`` samples.

    A trailing remainder shorter than half of ``length`` is merged into the
    last block, otherwise it is kept as a block of its own.
    """
    if length < 1:
        raise ValueError(f"block length must be positive, got {length}")
    if n <= 0:
        return []
    n_full, rest = divmod(n, length)
    if n_full == 0:
        return [np.arange(n)]
    stops = [length * (k + 1) for k in range(n_full)]
    if rest:
        if rest < length / 2:
            stops[-1] = n
        else:
            stops.append(n)
    starts = [0] + stops[:-1]
    return [np.arange(a, b) for a, b in zip(starts, stops)]


SYM_RTOL = 1e-12


def check_symmetric(mats: np.ndarray) -> None:
    """Raise unless every matrix in the stack is symmetric to ``SYM_RTOL`` relative to its largest entry."""
    if mats.size == 0:
        return
    scale = np.max(np.abs(mats), axis=(1, 2))
    asym = np.max(np.abs(mats - mats.transpose(0, 2, 1)), axis=(1, 2))
    bad = np.flatnonzero(asym > SYM_RTOL * np.maximum(scale, np.finfo(float).tiny))
    if bad.size:
        raise ValueError(f"matrix {bad[0]} of the set is not symmetric")


@dataclass
class MatrixSet:
    """Ordered collection of symmetric ``d x d`` matrices with provenance tags."""

    matrices: np.ndarray
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim == 2:
            mats = mats[np.newaxis]
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValueError(f"expected a stack of square matrices, got shape {mats.shape}")
        check_symmetric(mats)
        self.matrices = mats
        if not self.provenance:
            self.provenance = [None] * len(mats)
        if len(self.provenance) != len(mats):
            raise ValueError("provenance must have one entry per matrix")

    def __len__(self) -> int:
        return self.matrices.shape[0]

    def __iter__(self):
        return iter(self.matrices)

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    def extend(self, other: "MatrixSet") -> "MatrixSet":
        if len(self) and len(other) and self.dim != other.dim:
            raise ValueError("cannot pool matrix sets of different dimension")
        return MatrixSet(
            np.concatenate([self.matrices, other.matrices]),
            list(self.provenance) + list(other.provenance),
        )


def _autocov(block: np.ndarray, lag: int) -> np.ndarray:
    return _autocovs(block, (lag,))[0]


def _autocovs(block: np.ndarray, lags) -> list:
    m = block.shape[1]
    centered = block - block.mean(axis=1, keepdims=True)
    out = []
    for lag in lags:
        C = centered[:, lag:] @ centered[:, : m - lag].T / (m - lag)
        out.append((C + C.T) / 2)
    return out


def _contiguous_bounds(g: np.ndarray, part) -> list | None:
    """Block bounds relative to ``g`` if ``g`` is one increasing run cut into
    consecutive runs in order; ``None`` otherwise."""
    if g.size == 0 or g[-1] - g[0] != g.size - 1 or np.any(np.diff(g) != 1):
        return None
    bounds, pos = [], 0
    for e in part:
        if e.size == 0 or e[0] != g[0] + pos or e[-1] - e[0] != e.size - 1 or np.any(np.diff(e) != 1):
            return None
        bounds.append((pos, pos + e.size))
        pos += e.size
    return bounds if pos == g.size else None


def _complement_covs_fast(Y: np.ndarray, bounds: list, lags) -> list:
    """Lagged covariances of every complement ``g \\ e`` from per-block sums.

    ``Y`` is the group's data with columns in time order and ``bounds`` the
    consecutive ``(start, stop)`` blocks covering it. The complement is the
    concatenation of the remaining blocks, so lag pairs straddling the removed
    block are included, exactly as if its columns were gathered and passed to
    :func:`empirical_autocov`.
    """
    Y = Y - Y.mean(axis=1, keepdims=True)
    L = Y.shape[1]
    K = len(bounds)
    sums = np.stack([Y[:, a:b].sum(axis=1) for a, b in bounds])
    total = sums.sum(axis=0)
    out = [[None] * len(lags) for _ in range(K)]
    for t_pos, lag in enumerate(lags):
        within = np.stack([Y[:, a + lag : b] @ Y[:, a : b - lag].T for a, b in bounds])
        # pairs whose later element opens block j + 1 and earlier element closes block j
        across = np.stack(
            [Y[:, b : b + lag] @ Y[:, b - lag : b].T for (_, b) in bounds[:-1]]
        ) if K > 1 else np.zeros((0,) + within.shape[1:])
        if lag == 0:
            across = np.zeros_like(across)
        W, B = within.sum(axis=0), across.sum(axis=0)
        for e, (a, b) in enumerate(bounds):
            m_r = L - (b - a)
            P = W + B - within[e]
            if e > 0:
                P = P - across[e - 1]
            if e < K - 1:
                P = P - across[e]
            if 0 < e < K - 1 and lag:
                prev_stop, next_start = bounds[e - 1][1], bounds[e + 1][0]
                P = P + Y[:, next_start : next_start + lag] @ Y[:, prev_stop - lag : prev_stop].T
            rest_sum = total - sums[e]
            mu = rest_sum / m_r
            if lag:
                first_start = bounds[1][0] if e == 0 else 0
                last_stop = bounds[-2][1] if e == K - 1 else L
                sum_late = rest_sum - Y[:, first_start : first_start + lag].sum(axis=1)
                sum_early = rest_sum - Y[:, last_stop - lag : last_stop].sum(axis=1)
            else:
                sum_late = sum_early = rest_sum
            N = m_r - lag
            C = (P - np.outer(sum_late, mu) - np.outer(mu, sum_early) + N * np.outer(mu, mu)) / N
            out[e][t_pos] = (C + C.T) / 2
    return out


def empirical_autocov(X_block, lag: int = 0) -> np.ndarray:
    """Symmetrized lag-``lag`` auto-covariance of a block, normalized by ``m - lag``.

    Each channel is centered by its block mean. For ``lag=0`` this is the
    biased (``1/m``) covariance.
    """
    X_block = as_signal(X_block)
    lag = int(lag)
    if lag < 0:
        raise ValueError(f"lag must be nonnegative, got {lag}")
    if X_block.shape[1] < lag + 2:
        raise ValueError(
            f"block of {X_block.shape[1]} samples is too short for lag {lag} "
            f"(need at least {lag + 2})"
        )
    return _autocov(X_block, lag)


def _block_covs(X, blocks, lags, label):
    covs = []
    for j, idx in enumerate(blocks):
        if len(idx) < lags[-1] + 2:
            raise ValueError(
                f"{label.format(j)} has {len(idx)} samples, too short for lag {lags[-1]}"
            )
        covs.append(_autocovs(X[:, idx], lags))
    return covs


def build_matrix_set(X, gp: GroupedPartition, strategy: str = "neighbor") -> MatrixSet:
    """Differences of subgroup (auto-)covariances within each group.

    ``strategy`` selects which pairs ``(e, f)`` of subgroups are compared:
    every unordered pair (``"all"``), each subgroup against the rest of its
    group (``"complement"``), or each subgroup against its right neighbour
    (``"neighbor"``; the last subgroup of a group emits nothing).

    Matrices come out grouped by group, then subgroup pair, then lag, and
    each provenance entry is ``(group, e, f, lag)`` with ``f = -1`` standing
    for the complement.
    """
    X = as_signal(X)
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    gp.validate(X.shape[1])
    lags = gp.lags
    mats, prov = [], []
    for k, (g, part) in enumerate(zip(gp.groups, gp.partitions)):
        covs = _block_covs(X, part, lags, "subgroup {} of group " + str(k))
        if strategy == "all":
            pairs = [(e, f, covs[e], covs[f]) for e, f in combinations(range(len(part)), 2)]
        elif strategy == "neighbor":
            pairs = [(e, e + 1, covs[e], covs[e + 1]) for e in range(len(part) - 1)]
        else:
            pairs = []
            bounds = _contiguous_bounds(g, part) if len(part) > 1 else None
            if bounds is not None:
                rest_covs = _complement_covs_fast(X[:, g], bounds, lags)
                pairs = [(e, -1, covs[e], rest_covs[e]) for e in range(len(part))]
            else:
                for e, idx in enumerate(part):
                    rest = np.setdiff1d(g, idx, assume_unique=True)
                    if rest.size == 0:
                        continue
                    (rest_cov,) = _block_covs(
                        X, [rest], lags, f"complement of subgroup {e} of group {k}"
                    )
                    pairs.append((e, -1, covs[e], rest_cov))
        for e, f, ce, cf in pairs:
            for t_pos, t in enumerate(lags):
                mats.append(ce[t_pos] - cf[t_pos])
                prov.append((k, e, f, t))
    if not mats:
        raise ValueError("partition too coarse: no difference matrices were produced")
    return MatrixSet(np.stack(mats), prov)


def build_block_covariances(X, blocks, lags: Sequence[int] = (0,)) -> MatrixSet:
    """Raw symmetrized (auto-)covariances per block and lag, without differencing.

    Provenance entries are ``("block", j, lag)``.
    """
    X = as_signal(X)
    lags = tuple(sorted({int(t) for t in lags}))
    if not lags or lags[0] < 0:
        raise ValueError("lags must be a nonempty set of nonnegative integers")
    blocks = [np.asarray(b, dtype=np.intp) for b in blocks]
    if not blocks:
        raise ValueError("need at least one block")
    covs = _block_covs(X, blocks, lags, "block {}")
    mats, prov = [], []
    for j, per_lag in enumerate(covs):
        for t, C in zip(lags, per_lag):
            mats.append(C)
            prov.append(("block", j, t))
    return MatrixSet(np.stack(mats), prov)
