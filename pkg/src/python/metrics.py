import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from config import ALIGN_GRID_POINTS, ALIGN_XTOL, CL_QUADRATURE_PANELS, STEP_CELL_SUBPANELS

logger = logging.getLogger(__name__)


def wrap_phase(x):
    """Representative in (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=np.float64), 2 * np.pi)


@dataclass(frozen=True)
class StepFunction:
    """Piecewise constant function with value values[i] on I_i^n (last cell closed)."""
    values: np.ndarray

    @property
    def n(self):
        return self.values.size

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        idx = np.clip(np.floor(x * self.n).astype(np.int64), 0, self.n - 1)
        return self.values[idx]


@dataclass(frozen=True)
class AlignmentResult:
    theta_star: float
    distance: float
    distance_unaligned: float


def embed(u):
    u = np.asarray(u, dtype=np.float64)
    if u.size == 0:
        raise ValueError("cannot embed an empty vector")
    return StepFunction(values=u)


def _simpson_weights(panels):
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * panels)


def _evaluate(f, x):
    if hasattr(f, 'evaluate'):
        return np.asarray(f.evaluate(x), dtype=np.float64)
    return np.asarray(f(x), dtype=np.float64)


def _difference_samples(f, g):
    """(f - g at quadrature nodes, nonnegative weights summing to 1)."""
    f_step = isinstance(f, StepFunction)
    g_step = isinstance(g, StepFunction)
    if f_step and g_step:
        if f.n == g.n:
            return f.values - g.values, np.full(f.n, 1.0 / f.n)
        # common refinement
        edges = np.union1d(np.arange(f.n + 1) / f.n, np.arange(g.n + 1) / g.n)
        mids = 0.5 * (edges[1:] + edges[:-1])
        return f.evaluate(mids) - g.evaluate(mids), np.diff(edges)
    if f_step or g_step:
        step = f if f_step else g
        s = STEP_CELL_SUBPANELS
        x = ((np.arange(step.n)[:, None] + np.arange(s + 1)[None, :] / s) / step.n)
        # nodes on a cell's closed ends take that cell's value
        step_values = np.repeat(step.values[:, None], s + 1, axis=1)
        other = _evaluate(g if f_step else f, x)
        diff = step_values - other if f_step else other - step_values
        weights = np.tile(_simpson_weights(s), (step.n, 1)) / step.n
        return diff.reshape(-1), weights.reshape(-1)
    x = np.linspace(0.0, 1.0, CL_QUADRATURE_PANELS + 1)
    return _evaluate(f, x) - _evaluate(g, x), _simpson_weights(CL_QUADRATURE_PANELS)


def _distance(diff, weights, theta=0.0):
    return float(np.sqrt(np.sum(weights * wrap_phase(diff - theta) ** 2)))


def circle_l2(f, g):
    """sqrt of the integral of wrap(f - g)^2 over [0, 1]; f, g are StepFunctions or profiles."""
    diff, weights = _difference_samples(f, g)
    return _distance(diff, weights)


def circular_mean(x, weights=None):
    """Angle of the (weighted) mean of e^{ix}."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.ones(x.shape) if weights is None else np.asarray(weights)
    return float(np.angle(np.sum(weights * np.exp(1j * x))))


def align_theta(f, g, grid_points=ALIGN_GRID_POINTS):
    """Minimize circle_l2(f, g + theta) over theta in (-pi, pi]."""
    diff, weights = _difference_samples(f, g)

    def objective(theta):
        return _distance(diff, weights, theta)

    grid = np.linspace(-np.pi, np.pi, grid_points + 1)[1:]
    values = np.array([objective(t) for t in grid])
    k = int(np.argmin(values))
    step = grid[1] - grid[0]
    candidates = [(values[k], grid[k])]

    lo, mid, hi = grid[k] - step, grid[k], grid[k] + step
    try:
        res = minimize_scalar(objective, bracket=(lo, mid, hi), method='golden',
                              options={'xtol': ALIGN_XTOL})
    except (ValueError, RuntimeError):
        res = minimize_scalar(objective, bounds=(lo, hi), method='bounded',
                              options={'xatol': ALIGN_XTOL})
    candidates.append((float(res.fun), float(res.x)))

    seed = circular_mean(diff, weights)
    res = minimize_scalar(objective, bounds=(seed - step, seed + step), method='bounded',
                          options={'xatol': ALIGN_XTOL})
    candidates.append((float(res.fun), float(res.x)))

    distance, theta = min(candidates, key=lambda c: c[0])
    return AlignmentResult(theta_star=float(wrap_phase(theta)), distance=distance,
                           distance_unaligned=objective(0.0))


def _check_permutation(xi, n):
    xi = np.asarray(xi)
    if xi.ndim != 1 or xi.size != n or not np.issubdtype(xi.dtype, np.integer):
        raise ValueError("permutation must be an integer vector of the data length")
    if not np.array_equal(np.sort(xi), np.arange(n)):
        raise ValueError("not a permutation of 0..n-1")
    return xi


def apply_permutation(xi, u):
    """T_xi: output[i] = u[xi[i]] (0-based xi)."""
    u = np.asarray(u)
    return u[_check_permutation(xi, u.size)]


def inverse_permutation(xi):
    xi = _check_permutation(xi, np.asarray(xi).size)
    inverse = np.empty_like(xi)
    inverse[xi] = np.arange(xi.size)
    return inverse


def order_parameter(u):
    """(r, psi) with r e^{i psi} = mean of e^{iu}."""
    u = np.asarray(u, dtype=np.float64)
    if u.size == 0:
        raise ValueError("order parameter of an empty state")
    z = np.mean(np.exp(1j * u))
    return float(np.abs(z)), float(np.angle(z))


def delta_u_observable(u, omegas):
    """Wrapped phase gap between the fastest and slowest oscillators."""
    u = np.asarray(u, dtype=np.float64)
    omegas = np.asarray(omegas)
    if u.shape != omegas.shape:
        raise ValueError("phases and frequencies differ in length")
    return float(wrap_phase(u[np.argmax(omegas)] - u[np.argmin(omegas)]))
