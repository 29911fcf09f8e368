"""Seeded synthetic benchmarks.

``gen_blockvar`` draws block-wise shifting variance signals with group-wise
stationary confounding; ``gen_garch`` draws GARCH-type sources (changing
variance and/or changing time dependence) under AR or iid confounding.
Every instance keeps its ground truth so that estimates can be scored.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy.signal import lfilter

from coroica.rng import make_rng

MIN_SUBSET_LENGTH = 50
MAX_AR_ORDER = 10
GARCH_PARAMS = {
    1: (0.005, 0.026, 0.97),
    2: (1.0, 0.0, 0.0),
    3: (0.005, 0.026, 0.97),
}


@dataclass(frozen=True)
class BlockVarSpec:
    n: int
    d: int
    m: int = 10
    subsets_per_group: int = 10
    c1: float = 1.0
    c2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.m < 1 or self.subsets_per_group < 1:
            raise ValueError("d, m and subsets_per_group must be positive")
        if self.n < 2 * self.m * self.subsets_per_group:
            raise ValueError(
                f"n={self.n} is too small for {self.m} groups of "
                f"{self.subsets_per_group} subsets (need n >= {2 * self.m * self.subsets_per_group})"
            )
        if self.c1 < 0:
            raise ValueError(f"c1 must be nonnegative, got {self.c1}")
        if 0 < self.c1 <= 0.05:
            raise ValueError(f"c1 must be 0 or larger than 0.05, got {self.c1}")
        if self.c2 <= 0:
            raise ValueError(f"c2 must be positive, got {self.c2}")

    @property
    def b1(self) -> float:
        return 2 * self.c1 - 0.1

    @property
    def b2(self) -> float:
        return 3 * self.c2 + 0.1


@dataclass(frozen=True)
class GarchSpec:
    setting: int = 1
    noise: str = "ar"
    n: int = 200_000
    d: int = 6
    seed: int = 0
    segment_length: int = 2000
    burn_in: int = 1000

    def __post_init__(self):
        if self.setting not in GARCH_PARAMS:
            raise ValueError(f"setting must be 1, 2 or 3, got {self.setting}")
        if self.noise not in ("ar", "iid"):
            raise ValueError(f"noise must be 'ar' or 'iid', got {self.noise!r}")
        if self.n < 2 or self.d < 1 or self.segment_length < 2 or self.burn_in < 0:
            raise ValueError("n, d, segment_length must be positive and burn_in nonnegative")

    @property
    def a(self) -> tuple:
        return GARCH_PARAMS[self.setting]


@dataclass
class SimInstance:
    """Observed ``X = A @ S + H`` with all ground truth.

    ``H`` is the confounding after mixing. ``partition[k]`` lists the
    true subsets of group ``k`` as index arrays.
    """

    X: np.ndarray
    A: np.ndarray
    S: np.ndarray
    H: np.ndarray
    group_labels: np.ndarray
    partition: list
    spec: object
    info: dict = field(default_factory=dict)

    def subset_labels(self) -> np.ndarray:
        labels = np.empty(self.X.shape[1], dtype=int)
        j = 0
        for part in self.partition:
            for e in part:
                labels[e] = j
                j += 1
        return labels

    def spec_dict(self) -> dict:
        return {"kind": type(self.spec).__name__, **asdict(self.spec)}


def random_composition(length: int, parts: int, min_length: int, rng) -> np.ndarray:
    """Lengths of ``parts`` consecutive subsets of ``range(length)``.

    Uniform over compositions with every part at least ``min_length`` long,
    i.e. uniformly drawn cut points conditioned on the minimum spacing.
    """
    slack = length - parts * min_length
    if slack < 0:
        raise ValueError(f"cannot cut {length} samples into {parts} parts of >= {min_length}")
    if parts == 1:
        return np.array([length])
    bars = np.sort(rng.choice(slack + parts - 1, size=parts - 1, replace=False))
    extra = np.diff(np.concatenate([[-1], bars, [slack + parts - 1]])) - 1
    return extra + min_length


def gen_blockvar(spec: BlockVarSpec) -> SimInstance:
    """Data Set 1: ``X_i = A (S_i + C H_i)``.

    ``H`` has variance ``sigma2_g`` per group and each component of ``S``
    variance ``eta2_e`` per subset, drawn from ``Unif(0.1, b1)`` and
    ``Unif(0.1, b2)``.
    """
    d, m, k = spec.d, spec.m, spec.subsets_per_group
    rng = make_rng(spec.seed, "blockvar")
    A = rng.standard_normal((d, d))
    C = rng.normal(0.0, np.sqrt(1.0 / d), size=(d, d))

    groups = np.array_split(np.arange(spec.n), m)
    labels = np.empty(spec.n, dtype=int)
    partition = []
    sigma2 = np.zeros(m) if spec.c1 == 0 else rng.uniform(0.1, spec.b1, size=m)
    eta2 = []
    S = np.empty((d, spec.n))
    H_raw = np.zeros((d, spec.n))
    for g, idx in enumerate(groups):
        labels[idx] = g
        min_len = min(MIN_SUBSET_LENGTH, idx.size // k)
        lengths = random_composition(idx.size, k, min_len, rng)
        stops = np.cumsum(lengths)
        part = [idx[a:b] for a, b in zip(np.concatenate([[0], stops[:-1]]), stops)]
        partition.append(part)
        # one variance per subset and component; a shared scalar would make
        # all covariance differences proportional to A A^T
        eta2_g = rng.uniform(0.1, spec.b2, size=(k, d))
        eta2.append(eta2_g)
        for e, var in zip(part, eta2_g):
            S[:, e] = rng.standard_normal((d, e.size)) * np.sqrt(var)[:, np.newaxis]
        if spec.c1 > 0:
            H_raw[:, idx] = rng.standard_normal((d, idx.size)) * np.sqrt(sigma2[g])

    H = A @ (C @ H_raw)
    X = A @ S + H
    info = {"C": C, "sigma2": sigma2, "eta2": eta2, "H_raw": H_raw}
    return SimInstance(X, A, S, H, labels, partition, spec, info)


def _is_stable(coefs: np.ndarray) -> bool:
    """AR polynomial ``1 - sum c_i z^i`` has all roots outside the unit circle."""
    if coefs.size == 0:
        return True
    companion_roots = np.roots(np.concatenate([[1.0], -coefs]))
    return bool(np.all(np.abs(companion_roots) < 1.0))


def draw_ar_coefs(rng, max_attempts: int = 100) -> np.ndarray:
    """Random order ``q`` in 1..10 and coefficients ``c_i ~ N(0, 1/(i+1)^2)``, stable."""
    q = int(rng.integers(1, MAX_AR_ORDER + 1))
    sd = 1.0 / (np.arange(1, q + 1) + 1.0)
    for _ in range(max_attempts):
        coefs = rng.normal(0.0, sd)
        if _is_stable(coefs):
            return coefs
    raise RuntimeError(f"no stable AR({q}) coefficients found in {max_attempts} draws")


@njit(cache=True)
def _garch_path(eps, coefs, segment, a1, a2, a3, sigma2_0):
    d, n = eps.shape
    p = coefs.shape[2]
    S = np.zeros((d, n))
    sigma2 = np.empty((d, n))
    for j in range(d):
        s2 = sigma2_0
        shock = 0.0
        for i in range(n):
            # variance feeds back on the innovation, not on the AR-filtered
            # source; equal to the plain GARCH recursion when there is no AR part
            s2 = a1 + a2 * shock * shock + a3 * s2
            b = coefs[segment[i], j]
            acc = 0.0
            for k in range(min(p, i)):
                acc += b[k] * S[j, i - 1 - k]
            shock = np.sqrt(s2) * eps[j, i]
            S[j, i] = acc + shock
            sigma2[j, i] = s2
    return S, sigma2


def gen_garch(spec: GarchSpec) -> SimInstance:
    """Data Set 2: ``X = A S + A C H`` with GARCH-type sources.

    Setting 1 varies only the variance (no AR part). Settings 2 and 3 redraw
    AR coefficients of every source each ``segment_length`` samples; setting 2
    fixes the innovation variance to 1. The confounding ``H`` is a stationary
    AR process per component (``noise="ar"``) or iid standard normal.
    """
    d, n, burn = spec.d, spec.n, spec.burn_in
    rng = make_rng(spec.seed, "garch")
    A = rng.standard_normal((d, d))
    C = rng.normal(0.0, np.sqrt(1.0 / d), size=(d, d))
    a1, a2, a3 = spec.a
    sigma2_0 = a1 / (1.0 - a2 - a3) if a2 + a3 < 1 else a1

    n_seg = -(-n // spec.segment_length)
    coefs = np.zeros((n_seg, d, MAX_AR_ORDER))
    if spec.setting in (2, 3):
        src_rng = make_rng(spec.seed, "garch", "source_ar")
        for s in range(n_seg):
            for j in range(d):
                c = draw_ar_coefs(src_rng)
                coefs[s, j, : c.size] = c
    segment = np.concatenate(
        [np.zeros(burn, dtype=np.int64), np.minimum(np.arange(n) // spec.segment_length, n_seg - 1)]
    )
    eps = rng.standard_normal((d, burn + n))
    S_full, sigma2 = _garch_path(eps, coefs, segment, a1, a2, a3, sigma2_0)
    S, sigma2 = S_full[:, burn:], sigma2[:, burn:]

    noise_rng = make_rng(spec.seed, "garch", "noise")
    nu = noise_rng.standard_normal((d, burn + n))
    noise_coefs = []
    if spec.noise == "ar":
        H_raw = np.empty_like(nu)
        for j in range(d):
            c = draw_ar_coefs(noise_rng)
            noise_coefs.append(c)
            H_raw[j] = lfilter([1.0], np.concatenate([[1.0], -c]), nu[j])
        H_raw = H_raw[:, burn:]
    else:
        H_raw = nu[:, burn:]

    H = A @ (C @ H_raw)
    X = A @ S + H
    seg_idx = np.arange(n)
    partition = [[seg_idx[s * spec.segment_length : (s + 1) * spec.segment_length] for s in range(n_seg)]]
    info = {"C": C, "sigma2": sigma2, "source_coefs": coefs, "noise_coefs": noise_coefs, "H_raw": H_raw}
    return SimInstance(X, A, S, H, np.zeros(n, dtype=int), partition, spec, info)


def generate(spec) -> SimInstance:
    if isinstance(spec, BlockVarSpec):
        return gen_blockvar(spec)
    if isinstance(spec, GarchSpec):
        return gen_garch(spec)
    raise TypeError(f"unsupported spec type {type(spec).__name__}")
