"""Continuum-limit stationary families, self-consistency solvers and collocation reference runs."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.optimize import bisect

from config import (CL_QUADRATURE_PANELS, CL_SUP_MESH, CRITICAL_RATIO, FIXED_POINT_ITERATIONS,
                    NONE_TOKEN, RESIDUAL_TOL, ROOT_SCAN_POINTS, THRESHOLD_FUZZ)
from dynamics import KMSystem, PhaseState, integrate
from frequencies import FrequencyFunction, cell_average, discretize
from graphs import Graphon, build_deterministic_dense
from metrics import circle_l2, embed

logger = logging.getLogger(__name__)

ROOT_XTOL = 1e-14


class ProfileConsistencyError(RuntimeError):
    """A stationary profile fails the stationarity check."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class FlipSet:
    """Closed flip intervals: minus inside [0, 1/2], plus inside [1/2, 1]."""
    minus: Tuple[Tuple[float, float], ...] = ()
    plus: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        for name, intervals, (lo, hi) in (('minus', self.minus, (0.0, 0.5)), ('plus', self.plus, (0.5, 1.0))):
            ordered = sorted(intervals)
            for a, b in ordered:
                if not lo <= a <= b <= hi:
                    raise ValueError(f"{name} interval [{a}, {b}] not inside [{lo}, {hi}]")
            for (a0, b0), (a1, b1) in zip(ordered, ordered[1:]):
                if a1 < b0:
                    raise ValueError(f"{name} intervals [{a0}, {b0}] and [{a1}, {b1}] overlap")
            object.__setattr__(self, name, tuple((float(a), float(b)) for a, b in ordered))

    @classmethod
    def from_flat(cls, minus, plus):
        """Intervals from flat [lo, hi, lo, hi, ...] lists."""
        if len(minus) % 2 or len(plus) % 2:
            raise ValueError("flip interval lists need an even number of endpoints")
        return cls(minus=tuple(zip(minus[::2], minus[1::2])), plus=tuple(zip(plus[::2], plus[1::2])))

    def measure(self):
        return sum(b - a for a, b in self.minus + self.plus)

    def breakpoints(self):
        return sorted({e for iv in self.minus + self.plus for e in iv} | {0.0, 1.0})

    def masks(self, x):
        x = np.asarray(x, dtype=np.float64)
        minus = np.zeros(x.shape, dtype=bool)
        plus = np.zeros(x.shape, dtype=bool)
        for a, b in self.minus:
            minus |= (x >= a) & (x <= b)
        for a, b in self.plus:
            plus |= (x >= a) & (x <= b)
        return minus, plus

    def sign_on(self, a, b):
        """-1 if the open piece (a, b) lies in a flip interval, else +1."""
        mid = 0.5 * (a + b)
        minus, plus = self.masks(mid)
        return -1.0 if (minus or plus) else 1.0


def mean_frequency(omega):
    """Omega, the integral of omega over [0, 1]."""
    return omega.mean()


@dataclass(frozen=True)
class SelfConsistencyProblem:
    omega: FrequencyFunction
    p: float
    K: float
    flip_set: Optional[FlipSet] = None
    Omega: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")
        object.__setattr__(self, 'Omega', mean_frequency(self.omega))

    @property
    def pK(self):
        return self.p * self.K

    def deviation(self, x):
        return self.omega.evaluate(x) - self.Omega

    def pieces(self):
        """(a, b, sign) over [0, 1] split at the flip-set endpoints."""
        if self.flip_set is None:
            return [(0.0, 1.0, 1.0)]
        points = self.flip_set.breakpoints()
        return [(a, b, self.flip_set.sign_on(a, b)) for a, b in zip(points, points[1:]) if b > a]

    def flipped(self):
        return self.flip_set is not None and self.flip_set.measure() > 0


def _linear_piece(a, b, z):
    """Integral of sqrt(1 - (2z(x - 1/2))^2) over [a, b], exact."""
    def G(s):
        s = np.clip(s, -1.0, 1.0)
        return 0.5 * (s * np.sqrt(1.0 - s * s) + np.arcsin(s))
    return (G(2 * z * (b - 0.5)) - G(2 * z * (a - 0.5))) / (2 * z)


def self_consistency_integral(problem, C):
    """Signed integral of sqrt(1 - ((omega - Omega)/(pKC))^2) over [0, 1]."""
    total = 0.0
    omega = problem.omega
    for a, b, sign in problem.pieces():
        if omega.kind == 'constant' or (omega.kind == 'linear' and omega.a == 0):
            value = b - a
        elif omega.kind == 'linear':
            value = _linear_piece(a, b, omega.a / (2 * problem.pK * C))
        else:
            def integrand(x):
                q = (omega.evaluate(np.array(x)) - problem.Omega) / (problem.pK * C)
                return np.sqrt(max(0.0, 1.0 - float(q) ** 2))
            value, _ = quad(integrand, a, b, limit=200, epsabs=1e-13, epsrel=1e-12)
        total += sign * value
    return total


def _h(z):
    return np.arcsin(z) + z * np.sqrt(max(0.0, 1.0 - z * z))


def solve_C_linear(pK_over_a):
    """C for omega(x) = a(x - 1/2), or None below the existence threshold pK/a = 2/pi."""
    r = float(pK_over_a)
    if not r > 0:
        raise ValueError(f"pK/a must be positive, got {r}")
    if r < CRITICAL_RATIO - THRESHOLD_FUZZ:
        return None
    target = 1.0 / r
    if _h(1.0) - target <= 0:
        z = 1.0
    else:
        z = bisect(lambda s: _h(s) - target, 0.0, 1.0, xtol=ROOT_XTOL, maxiter=200)
    C = 1.0 / (2 * r * z)
    _fixed_point_check(r, C)
    return C


def _fixed_point_check(r, C):
    c_k = 1.0
    for _ in range(FIXED_POINT_ITERATIONS):
        z = min(1.0, 1.0 / (2 * r * c_k))
        c_next = r * c_k * _h(z)
        if abs(c_next - c_k) < 1e-15:
            break
        c_k = c_next
    if abs(c_k - C) > 1e-6:
        level = logging.WARNING if r > CRITICAL_RATIO * (1 + 1e-3) else logging.DEBUG
        logger.log(level, "fixed-point C=%.12g disagrees with bisection C=%.12g at pK/a=%g", c_k, C, r)


def solve_C_general(problem, mesh=CL_SUP_MESH):
    """Root C of g(C) = signed integral - C on [C_min, 1], or None."""
    x = np.linspace(0.0, 1.0, mesh)
    C_min = float(np.max(np.abs(problem.deviation(x)))) / problem.pK
    flipped = problem.flipped()
    if flipped and problem.p != 1:
        logger.warning("discontinuous self-consistency with p=%g uses the p-general signed formula", problem.p)

    if C_min == 0.0:
        value = self_consistency_integral(problem, 1.0)
        return value if value > 0 else None
    if C_min > 1.0:
        return None

    def g(C):
        return self_consistency_integral(problem, C) - C

    grid = np.linspace(C_min, 1.0, ROOT_SCAN_POINTS)
    values = np.array([g(c) for c in grid])
    if not flipped and values[0] < 0:
        return None
    nonneg = values >= 0
    changes = np.nonzero(nonneg[:-1] != nonneg[1:])[0]
    if changes.size == 0:
        if values[-1] == 0:
            return 1.0
        return None
    if changes.size > 1:
        logger.warning("self-consistency equation changes sign %d times; returning the smallest root",
                       changes.size)
    k = changes[0]
    if values[k + 1] == 0:
        return float(grid[k + 1])
    return float(bisect(g, grid[k], grid[k + 1], xtol=ROOT_XTOL, maxiter=200))


@dataclass(frozen=True)
class StationaryProfile:
    """U(x) + theta of one stationary family, evaluable on [0, 1]."""
    problem: SelfConsistencyProblem
    C: float
    family: str
    theta: float = 0.0

    @property
    def Omega(self):
        return self.problem.Omega

    @property
    def flip_set(self):
        return self.problem.flip_set

    def base(self, x):
        """arcsin((omega(x) - Omega)/(pKC)) in [-pi/2, pi/2]."""
        q = self.problem.deviation(x) / (self.problem.pK * self.C)
        return np.arcsin(np.clip(q, -1.0, 1.0))

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        U = self.base(x)
        if self.family == 'continuous_stable':
            out = U
        elif self.family == 'continuous_flipped':
            out = np.pi - U
        else:
            minus, plus = self.flip_set.masks(x)
            out = np.where(plus, np.pi - U, np.where(minus, -U - np.pi, U))
        return out + self.theta

    def shifted(self, theta):
        return StationaryProfile(problem=self.problem, C=self.C, family=self.family, theta=theta)


def _pieces_for(profile):
    if profile.flip_set is None:
        return [(0.0, 1.0)]
    points = profile.flip_set.breakpoints()
    return [(a, b) for a, b in zip(points, points[1:]) if b > a]


def order_parameter_integrals(profile) -> Tuple[float, float]:
    """(integral of cos(u - theta), integral of sin(u - theta)) by adaptive quadrature."""
    cos_total, sin_total = 0.0, 0.0
    for a, b in _pieces_for(profile):
        cos_total += quad(lambda x: np.cos(profile.evaluate(x) - profile.theta), a, b,
                          limit=200, epsabs=1e-13)[0]
        sin_total += quad(lambda x: np.sin(profile.evaluate(x) - profile.theta), a, b,
                          limit=200, epsabs=1e-13)[0]
    return cos_total, sin_total


def stationarity_residual(profile, mesh=CL_SUP_MESH):
    """max over a mesh of |omega + pK Im(e^{-iu} Z) - Omega| with Z the integral of e^{iu}."""
    c, s = order_parameter_integrals(profile)
    Z = (c + 1j * s) * np.exp(1j * profile.theta)
    x = np.linspace(0.0, 1.0, mesh)
    u = profile.evaluate(x)
    velocity = profile.problem.omega.evaluate(x) + profile.problem.pK * np.imag(np.exp(-1j * u) * Z)
    return float(np.max(np.abs(velocity - profile.Omega)))


def stationary_profile(problem, C, family, theta=0.0, verify=True):
    """Evaluator for one family; verify checks feasibility and stationarity."""
    if family not in ('continuous_stable', 'continuous_flipped', 'discontinuous'):
        raise ValueError(f"unknown profile family '{family}'")
    if family == 'discontinuous' and problem.flip_set is None:
        raise ValueError("the discontinuous family needs a flip set")
    if C is None or not C > 0:
        raise ProfileConsistencyError(f"no positive C for the {family} family")
    x = np.linspace(0.0, 1.0, CL_SUP_MESH)
    excess = float(np.max(np.abs(problem.deviation(x)))) - problem.pK * C
    if excess > 1e-12 * max(1.0, problem.pK * C):
        raise ProfileConsistencyError(f"|omega - Omega| exceeds pKC by {excess:.3g}")
    profile = StationaryProfile(problem=problem, C=float(C), family=family, theta=float(theta))
    if verify:
        residual = stationarity_residual(profile)
        if residual > RESIDUAL_TOL:
            raise ProfileConsistencyError(
                f"{family} profile with C={C:.12g} is not stationary (residual {residual:.3g})",
                residual=residual)
    return profile


def delta_u_prediction(K, a, p=1.0):
    """2 arcsin(a/(2pKC)), or None below threshold."""
    C = solve_C_linear(p * K / a)
    if C is None:
        return None
    return 2 * float(np.arcsin(min(1.0, a / (2 * p * K * C))))


@dataclass(frozen=True)
class CLDiscretization:
    """m-point collocation of the continuum limit with uniform weights p."""
    omega: FrequencyFunction
    p: float
    K: float
    m: int

    @property
    def nodes(self):
        return (np.arange(1, self.m + 1) - 0.5) / self.m

    def system(self):
        weights = build_deterministic_dense(Graphon.uniform(self.p), self.m)
        return KMSystem(weights=weights, omegas=discretize(self.omega, self.m), K=self.K)

    def initial_state(self, u0, initial='cell_average'):
        func = u0.evaluate if hasattr(u0, 'evaluate') else u0
        if initial == 'cell_average':
            return cell_average(func, self.m)
        if initial == 'nodal':
            return np.asarray(func(self.nodes), dtype=np.float64)
        raise ValueError(f"unknown initial data mode '{initial}'")


def cl_reference_trajectory(omega, p, K, m, u0, t_end, cfg=None, initial='cell_average'):
    """Collocation run of the continuum limit from the function u0 on [0, 1]."""
    if m < 2:
        raise ValueError("collocation needs m >= 2")
    disc = CLDiscretization(omega=omega, p=p, K=K, m=m)
    state = PhaseState(t=0.0, u=disc.initial_state(u0, initial))
    return integrate(disc.system(), state, t_end, cfg)


def self_convergence(omega, p, K, u0, t_end, cfg=None, m=CL_QUADRATURE_PANELS, tol=1e-4):
    """Compare collocation runs at m and 2m points."""
    coarse = cl_reference_trajectory(omega, p, K, m, u0, t_end, cfg)
    fine = cl_reference_trajectory(omega, p, K, 2 * m, u0, t_end, cfg)
    r_coarse, _ = coarse.order_parameters()
    r_fine, _ = fine.order_parameters()
    r_diff = float(np.max(np.abs(r_coarse - r_fine)))
    l2 = max(circle_l2(embed(a), embed(b)) for a, b in zip(coarse.states, fine.states))
    logger.info("self-convergence m=%d vs %d: max |dr|=%.3g, max L2=%.3g", m, 2 * m, r_diff, l2)
    return {'m': m, 'm_fine': 2 * m, 'max_r_diff': r_diff, 'max_l2': float(l2),
            'certified': bool(r_diff < tol and l2 < tol)}


def c_curve(grid, path=None) -> pd.DataFrame:
    """(pK_over_a, C) for each grid value; C is None below threshold."""
    rows = [{'pK_over_a': float(r), 'C': solve_C_linear(r)} for r in grid]
    df = pd.DataFrame(rows, columns=['pK_over_a', 'C'])
    if path is not None:
        df.to_csv(path, index=False, na_rep=NONE_TOKEN, float_format='%.12g')
    return df


def profile_table(profile, points: int = 1001, path=None) -> pd.DataFrame:
    x = np.linspace(0.0, 1.0, points)
    df = pd.DataFrame({'x': x, 'U': profile.evaluate(x)})
    if path is not None:
        df.to_csv(path, index=False, float_format='%.12g')
    return df


def flip_set_from_lists(minus: List[float], plus: List[float]) -> Optional[FlipSet]:
    if not minus and not plus:
        return None
    return FlipSet.from_flat(minus, plus)
