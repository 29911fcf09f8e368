"""Approximate joint diagonalization by uniformly weighted exhaustive diagonalization
with Gauss iterations (uwedge).

The diagonalizer ``V`` is sought such that ``V M V^T`` is as close to
diagonal as possible for every ``M`` in the set. Each iteration linearizes
the deviation of the transformed matrices from their diagonals and solves a
2 x 2 least-squares system per index pair for the correction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from coroica.covstats import MatrixSet, check_symmetric

_EIG_FLOOR = 1e-12
_DET_FLOOR = 1e-14


@dataclass(frozen=True)
class DiagonalizerOptions:
    """Iteration controls for :func:`uwedge`.

    ``init`` is ``"whitening"`` (from the first matrix of the set),
    ``"identity"``, or an explicit ``d x d`` array.
    """

    max_iter: int = 10_000
    rel_tol: float = 1e-9
    init: Union[str, np.ndarray] = "whitening"

    def __post_init__(self):
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if isinstance(self.init, str) and self.init not in ("whitening", "identity"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class Diagonalizer:
    """Result of a joint diagonalization; rows of ``V`` have unit norm."""

    V: np.ndarray
    converged: bool
    iterations: int
    final_loss: float


def _stack(M) -> np.ndarray:
    if isinstance(M, MatrixSet):
        return M.matrices
    mats = np.asarray(M, dtype=float)
    if mats.ndim == 2:
        mats = mats[np.newaxis]
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got shape {mats.shape}")
    return mats


def offdiag_loss(V, M) -> float:
    """Sum over the set of the squared off-diagonal entries of ``V M V^T``."""
    V = np.asarray(V, dtype=float)
    mats = _stack(M)
    if V.ndim != 2 or V.shape[1] != mats.shape[1]:
        raise ValueError(
            f"V of shape {V.shape} does not match matrices of dimension {mats.shape[1]}"
        )
    return _offdiag(V @ mats @ V.T)


def _offdiag(R: np.ndarray) -> float:
    off = ~np.eye(R.shape[1], dtype=bool)
    return float(np.sum(R[:, off] ** 2))


def normalize_rows(V: np.ndarray) -> np.ndarray:
    """Scale rows to unit Euclidean norm and make each row's largest-magnitude entry positive."""
    V = V / np.linalg.norm(V, axis=1, keepdims=True)
    pivot = V[np.arange(V.shape[0]), np.argmax(np.abs(V), axis=1)]
    return V * np.where(pivot < 0, -1.0, 1.0)[:, np.newaxis]


def whitening(M0: np.ndarray) -> np.ndarray:
    """Whitening-type matrix ``|L|^{-1/2} U^T`` from the eigendecomposition of ``M0``.

    Absolute eigenvalues are used so that indefinite matrices are accepted;
    eigenvalues below ``1e-12`` times the largest magnitude are floored.
    Returns the identity when ``M0`` is numerically zero.
    """
    evals, evecs = np.linalg.eigh(M0)
    mags = np.abs(evals)
    top = mags.max()
    if not top > 0:
        return np.eye(M0.shape[0])
    mags = np.maximum(mags, _EIG_FLOOR * top)
    return evecs.T / np.sqrt(mags)[:, np.newaxis]


def _correction(R: np.ndarray, diag: np.ndarray) -> np.ndarray:
    """Solve the pairwise 2 x 2 normal equations; returns ``Id + E``."""
    d = R.shape[1]
    # G[i, j] = sum_k diag_ki diag_kj ; H[i, j] = sum_k R_kij diag_ki
    G = diag.T @ diag
    H = np.einsum("kij,ki->ij", R, diag)
    g = np.diag(G)
    scale = np.outer(g, g)
    det = scale - G**2
    num = g[:, np.newaxis] * H.T - G * H
    ok = det > _DET_FLOOR * scale
    np.fill_diagonal(ok, False)
    ok &= ok.T
    E = np.zeros((d, d))
    E[ok] = num[ok] / det[ok]
    return E + np.eye(d)


def uwedge(M, opts: DiagonalizerOptions | None = None) -> Diagonalizer:
    """Jointly diagonalize a set of symmetric matrices.

    Parameters
    ----------
    M : MatrixSet or array of shape (K, d, d)
        Nonempty set of symmetric matrices.
    opts : DiagonalizerOptions, optional
        Iteration limit, tolerance and initialization.

    Returns
    -------
    Diagonalizer
        ``converged`` is true when the relative change of the row-normalized,
        sign-canonical ``V`` dropped below ``opts.rel_tol`` within
        ``opts.max_iter`` iterations. Otherwise the iterate with the smallest
        off-diagonal loss is returned.
    """
    opts = opts or DiagonalizerOptions()
    mats = _stack(M)
    if mats.shape[0] == 0:
        raise ValueError("cannot diagonalize an empty matrix set")
    if not np.all(np.isfinite(mats)):
        raise ValueError("matrix set contains non-finite entries")
    check_symmetric(mats)
    d = mats.shape[1]

    if isinstance(opts.init, str):
        W = whitening(mats[0]) if opts.init == "whitening" else np.eye(d)
    else:
        W = np.array(opts.init, dtype=float)
        if W.shape != (d, d):
            raise ValueError(f"init matrix has shape {W.shape}, expected {(d, d)}")
    W = normalize_rows(W)

    best_W, best_loss = W, np.inf
    converged = False
    it = 0
    while it < opts.max_iter:
        R = W @ mats @ W.T
        diag = np.einsum("kii->ki", R)
        loss = _offdiag(R)
        if loss < best_loss:
            best_W, best_loss = W, loss
        it += 1
        W_new = normalize_rows(np.linalg.solve(_correction(R, diag), W))
        change = np.linalg.norm(W_new - W) / np.linalg.norm(W)
        W = W_new
        if change < opts.rel_tol:
            converged = True
            break

    final_loss = offdiag_loss(W, mats)
    if not converged and best_loss < final_loss:
        W, final_loss = best_W, best_loss
    return Diagonalizer(V=W, converged=converged, iterations=it, final_loss=final_loss)
