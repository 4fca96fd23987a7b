import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.integrate import simpson

from config import SIMPSON_PANELS_PER_CELL
from streams import check_seed, uniform_open

logger = logging.getLogger(__name__)

CHECK_MESH = 1025


class FrequencyEvaluationError(ValueError):
    """A frequency function or quantile produced a non-finite value."""


class FrequencyDomainError(ValueError):
    """A distribution violates the support or monotonicity requirements."""


@dataclass(frozen=True)
class FrequencyFunction:
    """Frequency function omega(x) on [0, 1].

    kind: 'linear' (a(x - 1/2)), 'constant' (c) or 'callable' (vectorized func).
    """
    kind: str
    a: float = 0.0
    c: float = 0.0
    func: Optional[Callable] = None
    description: str = ''

    @classmethod
    def linear(cls, a):
        if not a > 0:
            raise FrequencyDomainError(f"linear frequency function needs a > 0, got {a}")
        return cls(kind='linear', a=float(a), description=f"linear a={a}")

    @classmethod
    def constant(cls, c):
        return cls(kind='constant', c=float(c), description=f"constant c={c}")

    @classmethod
    def from_callable(cls, func, description='callable'):
        return cls(kind='callable', func=func, description=description)

    @classmethod
    def from_distribution(cls, dist):
        """omega(x) = F^{-1}(x), the continuum frequency function of i.i.d. frequencies."""
        if dist.kind == 'uniform':
            return cls.linear(dist.high - dist.low)
        return cls(kind='callable', func=dist.quantile, description=f"quantile of {dist.description}")

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == 'linear':
            return self.a * (x - 0.5)
        if self.kind == 'constant':
            return np.full(x.shape, self.c)
        out = np.broadcast_to(np.asarray(self.func(x), dtype=np.float64), x.shape)
        if not np.all(np.isfinite(out)):
            raise FrequencyEvaluationError(f"{self.description} returned a non-finite value")
        return out

    def mean(self):
        """Integral of omega over [0, 1]."""
        if self.kind == 'linear':
            return 0.0
        if self.kind == 'constant':
            return self.c
        return float(np.mean(cell_average(self.evaluate, 64)))


@dataclass(frozen=True)
class FrequencyDistribution:
    """Distribution with positive density on the bounded support [low, high]."""
    kind: str
    low: float
    high: float
    cdf: Callable
    quantile: Callable
    density: Optional[Callable] = None
    description: str = ''

    @classmethod
    def uniform(cls, a):
        if not a > 0:
            raise FrequencyDomainError(f"uniform distribution needs a > 0, got {a}")
        a = float(a)
        return cls(
            kind='uniform', low=-a / 2, high=a / 2,
            cdf=lambda w: np.clip((2 * np.asarray(w) + a) / (2 * a), 0.0, 1.0),
            quantile=lambda x: a * (np.asarray(x) - 0.5),
            density=lambda w: np.where(np.abs(np.asarray(w)) <= a / 2, 1.0 / a, 0.0),
            description=f"uniform a={a}",
        )

    @classmethod
    def custom(cls, low, high, cdf, quantile, density=None, description='custom'):
        dist = cls(kind='custom', low=float(low), high=float(high), cdf=cdf,
                   quantile=quantile, density=density, description=description)
        dist.validate()
        return dist

    @classmethod
    def from_scipy(cls, frozen, description=None):
        """Adapter for a frozen scipy.stats distribution with bounded support."""
        low, high = frozen.support()
        if not (np.isfinite(low) and np.isfinite(high)):
            raise FrequencyDomainError("only bounded supports are handled")
        return cls.custom(low, high, frozen.cdf, frozen.ppf, frozen.pdf,
                          description=description or frozen.dist.name)

    @property
    def a(self):
        """Support width."""
        return self.high - self.low

    def validate(self):
        if not self.high > self.low:
            raise FrequencyDomainError("support must have positive length")
        F = np.asarray(self.cdf(np.array([self.low, self.high])), dtype=np.float64)
        if abs(F[0]) > 1e-10 or abs(F[1] - 1.0) > 1e-10:
            raise FrequencyDomainError(f"cdf must be 0 and 1 at the support ends, got {F}")
        mesh = np.linspace(self.low, self.high, CHECK_MESH)
        values = np.asarray(self.cdf(mesh), dtype=np.float64)
        if not np.all(np.diff(values) > 0):
            raise FrequencyDomainError("cdf must be strictly increasing on the support")
        back = np.asarray(self.quantile(values), dtype=np.float64)
        if not np.all(np.isfinite(back)):
            raise FrequencyEvaluationError("quantile returned a non-finite value")
        if np.max(np.abs(back - mesh)) > 1e-8:
            raise FrequencyDomainError("quantile is not the inverse of the cdf")

    def mean(self):
        return float(np.mean(cell_average(self.quantile, 64)))


@dataclass(frozen=True)
class FrequencySample:
    """Sampled frequencies with their ascending-sort permutation and quantile targets.

    xi is 0-based: omegas[xi[0]] is the smallest frequency.
    """
    omegas: np.ndarray
    xi: np.ndarray
    nu: np.ndarray
    seed: int
    ties: bool = False

    @property
    def n(self):
        return self.omegas.size

    def ranks(self):
        """1-based rank of each node in the sorted order."""
        ranks = np.empty(self.n, dtype=np.int64)
        ranks[self.xi] = np.arange(1, self.n + 1)
        return ranks

    def to_csv(self, path):
        df = pd.DataFrame({
            'index': np.arange(1, self.n + 1),
            'omega': self.omegas,
            'rank': self.ranks(),
            'nu': self.nu,
        })
        df.to_csv(path, index=False)


def cell_average(func, n, panels=SIMPSON_PANELS_PER_CELL):
    """n times the integral of func over each I_i^n, composite Simpson per cell."""
    if n < 1:
        raise ValueError("n must be >= 1")
    offsets = np.arange(panels + 1) / panels
    x = (np.arange(n)[:, None] + offsets[None, :]) / n
    values = np.asarray(func(x), dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise FrequencyEvaluationError("non-finite value inside a cell")
    return simpson(values, dx=1.0 / panels, axis=1)


def _equally_placed(a, n):
    i = np.arange(1, n + 1)
    return a * (2 * i - n - 1) / (2 * n)


def discretize(omega, n):
    """omega_i = n * integral of omega over I_i^n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if omega.kind == 'linear':
        return _equally_placed(omega.a, n)
    if omega.kind == 'constant':
        return np.full(n, omega.c)
    return cell_average(omega.evaluate, n)


def quantile_targets(dist, n):
    """nu_n(i) = n * integral of F^{-1} over I_i^n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if dist.kind == 'uniform':
        return _equally_placed(dist.a, n)
    return cell_average(dist.quantile, n)


def sort_permutation(omegas) -> Tuple[np.ndarray, bool]:
    """Stable ascending argsort and whether any tie was broken by index."""
    omegas = np.asarray(omegas)
    xi = np.argsort(omegas, kind='stable')
    ties = bool(np.any(np.diff(omegas[xi]) == 0))
    if ties:
        logger.warning("tied frequencies broken by index")
    return xi, ties


def sample_iid(dist, n, seed):
    """omegas_i = F^{-1}(U_i), U_i uniform on (0, 1) from the seeded frequency stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    seed = check_seed(seed)
    u = uniform_open(seed, 'frequencies', n)
    omegas = np.asarray(dist.quantile(u), dtype=np.float64)
    omegas = np.clip(omegas, dist.low, dist.high)
    xi, ties = sort_permutation(omegas)
    return FrequencySample(omegas=omegas, xi=xi, nu=quantile_targets(dist, n), seed=seed, ties=ties)


def permutation_deviation(sample):
    """max_i |omegas[xi[i]] - nu[i]|."""
    return float(np.max(np.abs(sample.omegas[sample.xi] - sample.nu)))


class EmpiricalCDF:
    """Left-continuous F_n(w) = #{i : omega_i < w} / n."""

    def __init__(self, omegas):
        omegas = np.asarray(omegas, dtype=np.float64)
        if omegas.size == 0:
            raise ValueError("empirical cdf needs at least one point")
        self.points = np.sort(omegas)

    def __call__(self, w):
        return np.searchsorted(self.points, w, side='left') / self.points.size


def empirical_cdf(omegas):
    return EmpiricalCDF(omegas)


def ks_statistic(omegas, dist):
    """sup |F_n - F| over the real line."""
    return float(stats.kstest(np.asarray(omegas), dist.cdf).statistic)


def to_rotating_frame(omegas):
    """Shift frequencies to zero mean; returns (shifted, mean)."""
    omegas = np.asarray(omegas, dtype=np.float64)
    mean = float(np.mean(omegas))
    return omegas - mean, mean
