import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd
from scipy.integrate import DOP853

from config import INTEGRATOR_DEFAULTS, INTEGRATOR_METHODS, LOCK_TOL, LOCK_WINDOW
from graphs import WeightMatrix
from metrics import delta_u_observable, order_parameter, wrap_phase

logger = logging.getLogger(__name__)

SAFETY = 0.9
MIN_FACTOR = 1.0 / 3.0
MAX_FACTOR = 6.0


class IntegrationError(RuntimeError):
    """Step size underflow or solver failure."""

    def __init__(self, message, t=None, h=None):
        super().__init__(f"{message} (t={t}, h={h})")
        self.t = t
        self.h = h


@dataclass(frozen=True)
class KMSystem:
    """du_i/dt = omega_i + K/(n alpha_n) sum_j w_ij sin(u_j - u_i)."""
    weights: WeightMatrix
    omegas: np.ndarray
    K: float

    def __post_init__(self):
        if self.omegas.shape != (self.weights.n,):
            raise ValueError(f"omegas has shape {self.omegas.shape}, weights have n={self.weights.n}")
        if not np.isfinite(self.K):
            raise ValueError("coupling K must be finite")

    @property
    def n(self):
        return self.weights.n

    @property
    def gain(self):
        return self.K / (self.n * self.weights.alpha_n)

    def __call__(self, t, u):
        return rhs(self, u)


@dataclass(frozen=True)
class PhaseState:
    t: float
    u: np.ndarray

    def wrapped(self):
        return wrap_phase(self.u)


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = INTEGRATOR_DEFAULTS['method']
    rtol: float = INTEGRATOR_DEFAULTS['rtol']
    atol: float = INTEGRATOR_DEFAULTS['atol']
    h_init: float = INTEGRATOR_DEFAULTS['h_init']
    h_max: float = INTEGRATOR_DEFAULTS['h_max']
    sample_stride: float = INTEGRATOR_DEFAULTS['sample_stride']
    pi_beta: float = INTEGRATOR_DEFAULTS['pi_beta']

    def __post_init__(self):
        if self.method not in INTEGRATOR_METHODS:
            raise ValueError(f"unknown integrator method '{self.method}'")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not 0 < self.h_init <= self.h_max:
            raise ValueError("need 0 < h_init <= h_max")
        if not self.sample_stride > 0:
            raise ValueError("sample_stride must be positive")


@dataclass
class Trajectory:
    """Sampled phase states of one integration run."""
    times: np.ndarray
    states: np.ndarray
    final: PhaseState
    n_accepted: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    system: Optional[KMSystem] = field(default=None, repr=False)

    def order_parameters(self):
        """(r, psi) at every sample time, as two arrays."""
        pairs = np.array([order_parameter(u) for u in self.states])
        return pairs[:, 0], pairs[:, 1]

    def to_csv(self, path, every=1):
        """t, then wrapped phases of every every-th node (1-based column names)."""
        nodes = np.arange(0, self.states.shape[1], every)
        df = pd.DataFrame(wrap_phase(self.states[:, nodes]), columns=[f"u{k + 1}" for k in nodes])
        df.insert(0, 't', self.times)
        df.to_csv(path, index=False)


def rhs(sys, u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (sys.n,):
        raise ValueError(f"state has shape {u.shape}, system has n={sys.n}")
    if sys.weights.is_constant:
        return rhs_meanfield(sys, u)
    s, c = np.sin(u), np.cos(u)
    coupling = c * sys.weights.matvec(s) - s * sys.weights.matvec(c)
    return sys.omegas + sys.gain * coupling


def rhs_meanfield(sys, u):
    """O(n) evaluation for constant weights via S = sum_j e^{i u_j}."""
    if not sys.weights.is_constant:
        raise ValueError("mean-field evaluation needs constant weights")
    u = np.asarray(u, dtype=np.float64)
    total = np.sum(np.exp(1j * u))
    coupling = np.imag(np.exp(-1j * u) * total)
    return sys.omegas + sys.gain * sys.weights.constant_value * coupling


def rhs_pairwise(sys, u):
    """Brute-force O(n^2) reference."""
    u = np.asarray(u, dtype=np.float64)
    W = sys.weights.to_dense()
    out = np.empty(sys.n)
    for i in range(sys.n):
        out[i] = sys.omegas[i] + sys.gain * np.sum(W[i] * np.sin(u - u[i]))
    return out


def permute_system(sys, xi, omegas=None):
    """System with weights w_{xi(i) xi(j)} and frequencies omegas[xi], or the given ones."""
    xi = np.asarray(xi)
    w = sys.weights
    if w.storage == 'constant':
        weights = w
    elif w.storage == 'sparse':
        data = w.data[xi][:, xi].tocsr()
        data.sort_indices()
        weights = replace(w, data=data)
    else:
        data = np.asarray(w.data)[np.ix_(xi, xi)]
        data.setflags(write=False)
        weights = replace(w, data=data)
    new_omegas = sys.omegas[xi] if omegas is None else np.asarray(omegas, dtype=np.float64)
    return KMSystem(weights=weights, omegas=new_omegas, K=sys.K)


class PIControlledDOP853(DOP853):
    """DOP853 stages and error estimate with a PI step-size controller.

    h_new = h * 0.9 * err^-(1/8 - 0.2 beta) * err_prev^beta, factor clipped to [1/3, 6].
    """

    def __init__(self, fun, t0, y0, t_bound, pi_beta=0.04, **kwargs):
        super().__init__(fun, t0, y0, t_bound, **kwargs)
        self.beta = pi_beta
        self.alpha = 1.0 / 8.0 - 0.2 * pi_beta
        self.err_prev = 1e-4
        self.n_accepted = 0
        self.n_rejected = 0

    def _stages(self, t, y, h):
        K = self.K
        K[0] = self.f
        for s, (a, c) in enumerate(zip(self.A[1:], self.C[1:]), start=1):
            dy = np.dot(K[:s].T, a[:s]) * h
            K[s] = self.fun(t + c * h, y + dy)
        y_new = y + h * np.dot(K[:-1].T, self.B)
        f_new = self.fun(t + h, y_new)
        K[-1] = f_new
        return y_new, f_new

    def _step_impl(self):
        t, y = self.t, self.y
        min_step = 10 * np.abs(np.nextafter(t, self.direction * np.inf) - t)
        h_abs = min(max(self.h_abs, min_step), self.max_step)
        rejected = False
        while True:
            if h_abs < min_step:
                return False, self.TOO_SMALL_STEP
            t_new = t + h_abs * self.direction
            if self.direction * (t_new - self.t_bound) > 0:
                t_new = self.t_bound
            h = t_new - t
            h_abs = np.abs(h)
            y_new, f_new = self._stages(t, y, h)
            scale = self.atol + np.maximum(np.abs(y), np.abs(y_new)) * self.rtol
            err = self._estimate_error_norm(self.K, h, scale)
            if err < 1:
                if err == 0:
                    factor = MAX_FACTOR
                else:
                    factor = SAFETY * err ** -self.alpha * self.err_prev ** self.beta
                    factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
                if rejected:
                    factor = min(1.0, factor)
                self.err_prev = max(err, 1e-4)
                break
            h_abs *= max(MIN_FACTOR, SAFETY * err ** -self.alpha)
            rejected = True
            self.n_rejected += 1
        self.n_accepted += 1
        self.h_previous = h
        self.y_old = y
        self.t = t_new
        self.y = y_new
        self.h_abs = h_abs * factor
        self.f = f_new
        return True, None


def _sample_times(t0, t_end, stride):
    count = int(np.floor((t_end - t0) / stride + 1e-9))
    times = t0 + stride * np.arange(count + 1)
    if t_end - times[-1] > 1e-9 * max(1.0, abs(t_end)):
        times = np.append(times, t_end)
    else:
        times[-1] = t_end
    return times


def _integrate_adaptive(sys, u0, times, cfg):
    solver = PIControlledDOP853(sys, times[0], u0.u.astype(np.float64), times[-1],
                                pi_beta=cfg.pi_beta, rtol=cfg.rtol, atol=cfg.atol,
                                first_step=min(cfg.h_init, times[-1] - times[0]),
                                max_step=cfg.h_max)
    states = np.empty((times.size, sys.n))
    states[0] = u0.u
    k = 1
    while solver.status == 'running':
        message = solver.step()
        if solver.status == 'failed':
            raise IntegrationError(message or 'solver failed', t=solver.t, h=solver.h_abs)
        upto = np.searchsorted(times, solver.t, side='right')
        if upto > k:
            if solver.t == times[upto - 1]:
                inner = times[k:upto - 1]
                if inner.size:
                    states[k:upto - 1] = solver.dense_output()(inner).T
                states[upto - 1] = solver.y
            else:
                states[k:upto] = solver.dense_output()(times[k:upto]).T
            k = upto
    logger.debug("DOP853-PI: %d accepted, %d rejected, %d rhs evaluations",
                 solver.n_accepted, solver.n_rejected, solver.nfev)
    return states, solver.n_accepted, solver.n_rejected, solver.nfev


def _integrate_rk4(sys, u0, times, cfg):
    states = np.empty((times.size, sys.n))
    u = np.array(u0.u, dtype=np.float64)
    states[0] = u
    steps = 0
    for k in range(1, times.size):
        t = times[k - 1]
        span = times[k] - t
        count = max(1, int(np.ceil(span / cfg.h_init - 1e-9)))
        h = span / count
        for _ in range(count):
            k1 = rhs(sys, u)
            k2 = rhs(sys, u + 0.5 * h * k1)
            k3 = rhs(sys, u + 0.5 * h * k2)
            k4 = rhs(sys, u + h * k3)
            u = u + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        if not np.all(np.isfinite(u)):
            raise IntegrationError("non-finite state", t=t, h=h)
        steps += count
        states[k] = u
    return states, steps, 0, 4 * steps


def integrate(sys, u0, t_end, cfg=None):
    """Integrate from u0.t to t_end, sampling every cfg.sample_stride and at t_end."""
    cfg = cfg or IntegratorConfig()
    if not t_end > u0.t:
        raise ValueError(f"t_end={t_end} must exceed the initial time {u0.t}")
    if u0.u.shape != (sys.n,) or not np.all(np.isfinite(u0.u)):
        raise ValueError("initial state must be a finite vector of length n")
    times = _sample_times(u0.t, t_end, cfg.sample_stride)
    if cfg.method == 'adaptive_rk8':
        states, accepted, rejected, nfev = _integrate_adaptive(sys, u0, times, cfg)
    else:
        states, accepted, rejected, nfev = _integrate_rk4(sys, u0, times, cfg)
    return Trajectory(times=times, states=states, final=PhaseState(t=float(times[-1]), u=states[-1].copy()),
                      n_accepted=accepted, n_rejected=rejected, n_rhs=nfev, system=sys)


@dataclass(frozen=True)
class LockResult:
    locked: bool
    max_spread: float
    delta_u: Optional[float] = None


def lock_detect(traj, window=LOCK_WINDOW, tol=LOCK_TOL):
    """Locked iff instantaneous frequencies stay within tol of their mean over the final window."""
    t_end = traj.times[-1]
    if t_end - traj.times[0] < window - 1e-9:
        raise ValueError(f"trajectory spans {t_end - traj.times[0]}, shorter than the window {window}")
    mask = traj.times >= t_end - window - 1e-9
    if traj.system is not None:
        freqs = np.array([rhs(traj.system, u) for u in traj.states[mask]])
    else:
        idx = np.nonzero(mask)[0]
        idx = idx if idx.size > 1 else np.array([idx[0] - 1, idx[0]])
        freqs = np.diff(traj.states[idx], axis=0) / np.diff(traj.times[idx])[:, None]
    spread = float(np.max(np.abs(freqs - freqs.mean(axis=1, keepdims=True))))
    if spread < tol:
        omegas = traj.system.omegas if traj.system is not None else freqs[-1]
        return LockResult(locked=True, max_spread=spread, delta_u=delta_u_observable(traj.final.u, omegas))
    return LockResult(locked=False, max_spread=spread)
