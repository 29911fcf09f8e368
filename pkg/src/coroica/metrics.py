"""Scores for recovered sources: MD index against a known mixing, and the
ground-truth-free covariance instability scores (CIS, MCIS)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from coroica.covstats import MatrixSet, as_signal

_BRUTEFORCE_MAX_DIM = 8


@dataclass(frozen=True)
class MdScore:
    """MD index value in ``[0, 1]`` and the row-to-column assignment attaining it."""

    value: float
    optimal_permutation: tuple

    def __float__(self) -> float:
        return self.value


def _md_costs(V_hat, A) -> np.ndarray:
    V_hat = np.asarray(V_hat, dtype=float)
    A = np.asarray(A, dtype=float)
    if V_hat.ndim != 2 or A.ndim != 2 or V_hat.shape[0] != V_hat.shape[1] or V_hat.shape != A.shape:
        raise ValueError(f"need two square matrices of equal size, got {V_hat.shape} and {A.shape}")
    d = V_hat.shape[0]
    if d < 2:
        raise ValueError("MD index is undefined for d = 1")
    for name, mat in (("V_hat", V_hat), ("A", A)):
        if not np.all(np.isfinite(mat)) or np.linalg.matrix_rank(mat) < d:
            raise ValueError(f"{name} is singular")
    G = V_hat @ A
    G2 = G**2
    # residual of the best rescaling of row j onto unit vector e_k
    return 1.0 - G2 / G2.sum(axis=1, keepdims=True)


def _md_value(costs: np.ndarray, rows, cols) -> float:
    total = math.fsum(costs[r, c] for r, c in zip(rows, cols))
    return math.sqrt(min(max(total, 0.0) / (costs.shape[0] - 1), 1.0))


def md_index(V_hat, A) -> MdScore:
    """Minimum-distance index of ``V_hat`` as an inverse of ``A``.

    Zero iff ``V_hat @ A`` is a scaled permutation matrix. The minimization
    over permutation and scaling reduces to a linear sum assignment on the
    per-row rescaling residuals.
    """
    costs = _md_costs(V_hat, A)
    rows, cols = linear_sum_assignment(costs)
    return MdScore(_md_value(costs, rows, cols), tuple(int(c) for c in cols))


def md_index_bruteforce(V_hat, A) -> MdScore:
    """MD index by exhaustive search over all permutations (``d <= 8``)."""
    V_hat = np.asarray(V_hat, dtype=float)
    if V_hat.ndim == 2 and V_hat.shape[0] > _BRUTEFORCE_MAX_DIM:
        raise ValueError(f"brute force MD limited to d <= {_BRUTEFORCE_MAX_DIM}")
    costs = _md_costs(V_hat, A)
    d = costs.shape[0]
    rows = range(d)
    best, best_perm = math.inf, None
    for perm in permutations(range(d)):
        total = math.fsum(costs[r, c] for r, c in zip(rows, perm))
        if total < best:
            best, best_perm = total, perm
    return MdScore(_md_value(costs, rows, best_perm), tuple(best_perm))


def cis_matrix(S_hat, partition) -> np.ndarray:
    """Covariance instability score matrix of recovered sources on one group.

    ``partition`` is the ordered list of index subsets of the group. Each
    subset is compared with its right neighbour (the last subset has none),
    covariance differences are scaled element-wise by ``sigma sigma^T`` where
    ``sigma`` is the per-component standard deviation over the whole group,
    squared, and averaged.
    """
    S_hat = as_signal(S_hat)
    parts = [np.asarray(e, dtype=np.intp) for e in partition]
    if len(parts) < 2:
        raise ValueError("CIS needs at least 2 partition elements")
    for j, e in enumerate(parts):
        if e.size < 2:
            raise ValueError(f"partition element {j} has fewer than 2 samples")
    group = np.concatenate(parts)
    sigma = S_hat[:, group].std(axis=1)
    zero = np.flatnonzero(sigma == 0)
    if zero.size:
        raise ValueError(f"component {zero[0]} has zero variance on the group")
    covs = []
    for e in parts:
        block = S_hat[:, e]
        centered = block - block.mean(axis=1, keepdims=True)
        covs.append(centered @ centered.T / e.size)
    scale = np.outer(sigma, sigma)
    terms = [((covs[j] - covs[j + 1]) / scale) ** 2 for j in range(len(parts) - 1)]
    return np.mean(terms, axis=0)


def mcis(S_hat, partition) -> float:
    """Square root of the mean off-diagonal entry of :func:`cis_matrix`."""
    S_hat = as_signal(S_hat)
    if S_hat.shape[0] < 2:
        raise ValueError("MCIS is undefined for d = 1")
    return mcis_from_cis(cis_matrix(S_hat, partition))


def mcis_from_cis(cis) -> float:
    cis = np.asarray(cis, dtype=float)
    d = cis.shape[0]
    if d < 2:
        raise ValueError("MCIS is undefined for d = 1")
    return math.sqrt(max(cis.sum() - np.trace(cis), 0.0) / (d * (d - 1)))


def activation_map(V, M, j: int) -> np.ndarray:
    """Sign-aligned sum ``sum_M sign(v_j M v_j^T) M v_j^T`` for row ``j`` of ``V``.

    For a correct unmixing this is proportional to column ``j`` of the
    mixing matrix.
    """
    V = np.asarray(V, dtype=float)
    mats = M.matrices if isinstance(M, MatrixSet) else np.asarray(M, dtype=float)
    if mats.ndim == 2:
        mats = mats[np.newaxis]
    if V.ndim != 2 or mats.ndim != 3 or V.shape[1] != mats.shape[1] or mats.shape[1] != mats.shape[2]:
        raise ValueError("dimension mismatch between V and the matrix set")
    if not 0 <= j < V.shape[0]:
        raise ValueError(f"component index {j} out of range")
    v = V[j]
    Mv = mats @ v
    signs = np.sign(Mv @ v)
    return signs @ Mv
