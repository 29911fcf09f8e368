"""Structural VAR pipeline: resample irregular series, fit a VAR by least squares,
unmix the residuals with an ICA, and read the instantaneous feedback matrix
``B0`` off the estimated mixing.

The bivariate model is ``X_t = B0 X_t + sum_k B_k X_{t-k} + S_t + H_t`` with
``X = (log CO2, T)`` and ``B0 = [[0, beta], [alpha, 0]]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from numba import njit
from scipy.interpolate import CubicSpline

from coroica.covstats import as_signal
from coroica.rng import make_rng
from coroica.separation import SeparationConfig, fit

ECS_LIKELY_BAND = (1.5, 4.5)
# candidates within round-off of the unit bound count as not admissible
BOUND_TOL = 1e-9


class UnidentifiableError(ValueError):
    """No permutation of the estimated mixing gives an admissible ``B0``."""


class AmbiguousError(ValueError):
    """More than one permutation gives an admissible ``B0``; see ``candidates``."""

    def __init__(self, message, candidates):
        super().__init__(message)
        self.candidates = candidates


@dataclass(frozen=True)
class IrregularSeries:
    """Samples ``values[i]`` at strictly increasing ``times[i]``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if t.size < 4:
            raise ValueError(f"need at least 4 points for cubic interpolation, got {t.size}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("series contains non-finite entries")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_ages(cls, ages, values) -> "IrregularSeries":
        """Build from ages before present; time runs as ``-age`` so it increases."""
        ages = np.asarray(ages, dtype=float)
        values = np.asarray(values, dtype=float)
        order = np.argsort(-ages, kind="stable")
        return cls(-ages[order], values[order])

    @property
    def span(self) -> tuple:
        return float(self.times[0]), float(self.times[-1])


def regular_grid(start: float, stop: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def cubic_resample(
    series: IrregularSeries,
    step: float,
    start: Optional[float] = None,
    stop: Optional[float] = None,
    bc_type: str = "natural",
) -> tuple:
    """Evaluate a cubic spline through the series on a regular grid.

    The grid runs from ``start`` (default: first time) in increments of
    ``step`` up to ``stop`` (default: last time). No extrapolation.
    Returns ``(grid, values)``.
    """
    t0, t1 = series.span
    start = t0 if start is None else float(start)
    stop = t1 if stop is None else float(stop)
    if start < t0 or stop > t1 or start > stop:
        raise ValueError(f"grid [{start}, {stop}] is not inside the observed range [{t0}, {t1}]")
    grid = regular_grid(start, stop, step)
    spline = CubicSpline(series.times, series.values, bc_type=bc_type)
    return grid, spline(grid)


@dataclass(frozen=True)
class VarFit:
    """Least-squares VAR(p): ``coefs[k-1]`` multiplies ``X_{t-k}``."""

    coefs: np.ndarray
    intercept: np.ndarray
    residuals: np.ndarray

    @property
    def order(self) -> int:
        return self.coefs.shape[0]


def _lagged_design(X: np.ndarray, p: int) -> np.ndarray:
    d, n = X.shape
    cols = [np.ones(n - p)]
    for k in range(1, p + 1):
        cols.extend(X[:, p - k : n - k])
    return np.column_stack(cols)


def fit_var(X, p: int) -> VarFit:
    """Fit ``X_t = c + sum_{k=1..p} B_k X_{t-k} + R_t`` by ordinary least squares."""
    X = as_signal(X)
    d, n = X.shape
    p = int(p)
    if p < 0:
        raise ValueError("lag order must be nonnegative")
    if n <= d * p + 10:
        raise ValueError(f"need more than {d * p + 10} samples for a VAR({p}) in {d} dimensions")
    Z = _lagged_design(X, p)
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise ValueError("regressor matrix is rank deficient")
    Y = X[:, p:].T
    beta, *_ = np.linalg.lstsq(Z, Y, rcond=None)
    residuals = (Y - Z @ beta).T
    coefs = beta[1:].T.reshape(d, p, d).transpose(1, 0, 2)
    return VarFit(coefs=coefs, intercept=beta[0], residuals=residuals)


def _feedback_measure(B0: np.ndarray, criterion: str) -> float:
    if criterion == "radius":
        return float(np.max(np.abs(np.linalg.eigvals(B0))))
    if criterion == "norm":
        return float(np.linalg.norm(B0, 2))
    raise ValueError(f"unknown criterion {criterion!r}; expected 'radius' or 'norm'")


@dataclass(frozen=True)
class B0Candidate:
    B0: np.ndarray
    measure: float
    permutation: tuple

    @property
    def alpha(self) -> float:
        return float(self.B0[1, 0])

    @property
    def beta(self) -> float:
        return float(self.B0[0, 1])


def b0_candidates(A_hat, criterion: str = "radius") -> list:
    """``B0 = Id - V`` for both row orders of ``V = A_hat^{-1}`` scaled to unit diagonal."""
    A_hat = np.asarray(A_hat, dtype=float)
    if A_hat.shape != (2, 2):
        raise ValueError(f"B0 identification is implemented for 2 x 2 mixings, got {A_hat.shape}")
    if abs(np.linalg.det(A_hat)) <= 1e-300 or not np.all(np.isfinite(A_hat)):
        raise ValueError("estimated mixing matrix is singular")
    V = np.linalg.inv(A_hat)
    out = []
    for perm in ((0, 1), (1, 0)):
        Vp = V[list(perm)]
        diag = np.diag(Vp)
        if np.any(diag == 0):
            continue
        B0 = np.eye(2) - Vp / diag[:, np.newaxis]
        np.fill_diagonal(B0, 0.0)
        out.append(B0Candidate(B0, _feedback_measure(B0, criterion), perm))
    return out


def identify_b0(A_hat, criterion: str = "radius") -> B0Candidate:
    """Pick the permutation whose implied ``B0`` has feedback measure below one.

    ``criterion="radius"`` bounds the spectral radius of ``B0`` (feedback
    loops die out); ``"norm"`` bounds the spectral norm. Raises
    :class:`UnidentifiableError` if no candidate qualifies and
    :class:`AmbiguousError` if both do.
    """
    candidates = b0_candidates(A_hat, criterion)
    ok = [c for c in candidates if c.measure < 1 - BOUND_TOL]
    if not ok:
        raise UnidentifiableError(
            f"no permutation yields B0 with spectral {criterion} < 1 "
            f"(got {[round(c.measure, 6) for c in candidates]})"
        )
    if len(ok) > 1:
        raise AmbiguousError("both permutations yield an admissible B0", ok)
    return ok[0]


def ecs_from_alpha(alpha: float) -> float:
    """Temperature response to a doubling of CO2 for a log-CO2 coefficient ``alpha``."""
    return math.log(2.0) * alpha


@dataclass
class SvarFit:
    """One lag order of the SVAR pipeline; ``status`` is ``ok``, ``ambiguous``,
    ``unidentifiable`` or ``error``."""

    lag_order: int
    method: str
    status: str
    alpha: float = math.nan
    beta: float = math.nan
    ecs: float = math.nan
    B0: Optional[np.ndarray] = None
    var: Optional[VarFit] = None
    message: str = ""
    candidates: list = field(default_factory=list)


def svar_from_residuals(residuals, p: int, cfg: SeparationConfig, criterion: str = "radius", var=None) -> SvarFit:
    model = fit(residuals, None, cfg)
    try:
        cand = identify_b0(model.A_hat, criterion)
    except AmbiguousError as exc:
        return SvarFit(p, cfg.method, "ambiguous", var=var, message=str(exc), candidates=exc.candidates)
    except UnidentifiableError as exc:
        return SvarFit(p, cfg.method, "unidentifiable", var=var, message=str(exc))
    return SvarFit(
        p, cfg.method, "ok", cand.alpha, cand.beta, ecs_from_alpha(cand.alpha), cand.B0, var, candidates=[cand]
    )


def climate_pipeline(
    co2: IrregularSeries,
    temp: IrregularSeries,
    p: Union[int, Iterable[int]],
    ica: SeparationConfig,
    step: float = 500.0,
    criterion: str = "radius",
    bc_type: str = "natural",
) -> list:
    """ECS estimates for one or several VAR lag orders.

    Both series are resampled every ``step`` years on their common range,
    CO2 is log-transformed, a VAR(p) is fitted, the residuals are unmixed by
    the configured ICA and ``B0`` is identified. Returns one
    :class:`SvarFit` per lag order.
    """
    start = max(co2.span[0], temp.span[0])
    stop = min(co2.span[1], temp.span[1])
    if start >= stop:
        raise ValueError("CO2 and temperature series do not overlap")
    _, co2_grid = cubic_resample(co2, step, start, stop, bc_type)
    _, temp_grid = cubic_resample(temp, step, start, stop, bc_type)
    if np.any(co2_grid <= 0):
        raise ValueError("interpolated CO2 must be positive to take logarithms")
    X = np.vstack([np.log(co2_grid), temp_grid])
    lags = [int(p)] if np.isscalar(p) else [int(q) for q in p]
    out = []
    for q in lags:
        try:
            var = fit_var(X, q)
            out.append(svar_from_residuals(var.residuals, q, ica, criterion, var))
        except ValueError as exc:
            out.append(SvarFit(q, ica.method, "error", message=str(exc)))
    return out


@njit(cache=True)
def _var_recursion(shocks, phi):
    d, n = shocks.shape
    p = phi.shape[0]
    X = np.zeros((d, n))
    for t in range(n):
        for i in range(d):
            acc = shocks[i, t]
            for k in range(min(p, t)):
                for j in range(d):
                    acc += phi[k, i, j] * X[j, t - 1 - k]
            X[i, t] = acc
    return X


def simulate_svar(
    n: int,
    alpha: float,
    beta: float,
    p: int = 3,
    seed: int = 0,
    block_length: int = 500,
    signal_strength: float = 1.0,
    confounding_strength: float = 1.0,
    burn_in: int = 500,
) -> dict:
    """Bivariate SVAR with block-wise variance sources and stationary confounding.

    Reduced-form lag matrices are drawn small and stable; the structural
    ones are ``B_k = (Id - B0) Phi_k``. The confounding is iid Gaussian with
    a fixed random cross-covariance. Returns a dict with ``X`` (2 x n),
    ``B0``, ``lag_coefs`` (structural) and ``reduced_coefs``.
    """
    rng = make_rng(seed, "svar")
    B0 = np.array([[0.0, beta], [alpha, 0.0]])
    mix = np.linalg.inv(np.eye(2) - B0)
    while True:
        phi = rng.normal(0.0, 0.15, size=(p, 2, 2)) / np.arange(1, p + 1)[:, None, None]
        companion = np.zeros((2 * p, 2 * p))
        if p == 0:
            break
        companion[:2] = np.hstack(list(phi))
        companion[2:, :-2] = np.eye(2 * p - 2)
        if np.max(np.abs(np.linalg.eigvals(companion))) < 0.95:
            break
    total = n + burn_in
    b2 = 3 * signal_strength + 0.1
    n_blocks = -(-total // block_length)
    var = rng.uniform(0.1, b2, size=(n_blocks, 2)).repeat(block_length, axis=0)[:total].T
    S = rng.standard_normal((2, total)) * np.sqrt(var)
    C = rng.normal(0.0, 1.0, size=(2, 2))
    H = math.sqrt(confounding_strength) * (C @ rng.standard_normal((2, total)))
    X = _var_recursion(mix @ (S + H), phi)
    return {
        "X": X[:, burn_in:],
        "B0": B0,
        "reduced_coefs": phi,
        "lag_coefs": np.einsum("ij,kjl->kil", np.eye(2) - B0, phi),
        "S": S[:, burn_in:],
        "H": H[:, burn_in:],
    }
