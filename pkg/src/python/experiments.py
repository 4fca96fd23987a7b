"""Scenario runners: simulations, sweeps and stability checks with CSV/JSON artifacts."""

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import joblib
import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config import (BIFURCATION_TOL, CONVERGED_DISTANCE, CRITICAL_RATIO, CSV_SCHEMAS, DISTANCE_TOLERANCES,
                    LOCK_WINDOW, NONE_TOKEN, ORDER_PARAMETER_TOL, PERMUTATION_MEDIAN_BOUND, RESIDUAL_TOL,
                    __version__)
from continuum import (SelfConsistencyProblem, c_curve, cl_reference_trajectory, delta_u_prediction,
                       flip_set_from_lists, solve_C_general, solve_C_linear, stationarity_residual, stationary_profile)
from dynamics import IntegratorConfig, KMSystem, PhaseState, integrate, lock_detect, permute_system
from frequencies import (FrequencyDistribution, FrequencyFunction, cell_average, discretize, ks_statistic,
                         permutation_deviation, sample_iid, sort_permutation)
from graphs import GraphRecipe, build_graph
from metrics import (align_theta, apply_permutation, circle_l2, circular_mean, delta_u_observable, embed,
                     order_parameter, wrap_phase)
from streams import uniform_phases

logger = logging.getLogger(__name__)

INITIAL_FUNCTIONS = {
    'zero': lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
    'sine': lambda x: np.sin(2 * np.pi * np.asarray(x, dtype=np.float64)),
}


class RunManifest:
    """Parameters, timings, outputs and predicate outcomes of one scenario run."""

    def __init__(self, scenario: str, parameters: Dict, threads: int):
        self.scenario = scenario
        self.parameters = parameters
        self.threads = threads
        self.timings: Dict[str, float] = {}
        self.outputs: Dict[str, str] = {}
        self.predicates: Dict[str, bool] = {}
        self.details: Dict[str, object] = {}
        self.error: Optional[str] = None
        self.summary: Optional[Dict] = None

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start

    def check(self, name, ok, detail=None):
        self.predicates[name] = bool(ok)
        if detail is not None:
            self.details[name] = detail
        if not ok:
            logger.warning("predicate failed: %s (%s)", name, detail)

    def add_output(self, filename, schema=None):
        """Record an output with its schema version, or its file type when unversioned."""
        self.outputs[filename] = CSV_SCHEMAS[schema][0] if schema else Path(filename).suffix.lstrip('.')

    def fail(self, error):
        self.error = f"{type(error).__name__}: {error}"

    @property
    def failed(self) -> List[str]:
        return [name for name, ok in self.predicates.items() if not ok]

    @property
    def passed(self):
        return self.error is None and not self.failed

    def to_dict(self):
        return {
            'scenario': self.scenario,
            'version': __version__,
            'parameters': self.parameters,
            'threads': self.threads,
            'timings': self.timings,
            'outputs': self.outputs,
            'predicates': self.predicates,
            'details': self.details,
            'failed': self.failed,
            'error': self.error,
            'passed': self.passed,
        }

    def write(self, out_dir):
        path = Path(out_dir) / 'manifest.json'
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, default=_json_default)
        return path


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value)}")


def _write_json(data, path):
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, default=_json_default)


def _write_csv(rows, schema, path):
    columns = CSV_SCHEMAS[schema][1]
    df = pd.DataFrame(rows, columns=columns).astype(object)
    df = df.where(pd.notna(df), None)
    df.to_csv(path, index=False, na_rep=NONE_TOKEN)
    return df


def integrator_config(cfg, sample_stride=None):
    return IntegratorConfig(
        method=cfg['method'], rtol=cfg['rtol'], atol=cfg['atol'],
        h_init=cfg['h_init'], h_max=cfg['h_max'],
        sample_stride=sample_stride if sample_stride is not None else cfg.get('sample_stride', 1.0),
    )


def make_frequencies(mode, n, a, seed):
    """(omegas, xi, sample); sample is None for equally placed frequencies."""
    if mode == 'equally_placed':
        omegas = discretize(FrequencyFunction.linear(a), n)
        xi, _ = sort_permutation(omegas)
        return omegas, xi, None
    sample = sample_iid(FrequencyDistribution.uniform(a), n, seed)
    return sample.omegas, sample.xi, sample


def stable_profile(a, p, K):
    """Continuous stable profile for omega(x) = a(x - 1/2), or None below threshold."""
    problem = SelfConsistencyProblem(omega=FrequencyFunction.linear(a), p=p, K=K)
    C = solve_C_linear(p * K / a)
    if C is None:
        return None
    return stationary_profile(problem, C, 'continuous_stable')


@dataclass
class SimulationResult:
    trajectory: object
    omegas: np.ndarray
    xi: np.ndarray
    sample: object
    locked: Optional[bool]
    delta_u: float
    r: float
    psi: float
    C: Optional[float]
    distance: Optional[float]
    theta_star: Optional[float]
    theta_circular: float
    theta_arithmetic: float


def run_simulation(case, n, K, a, p, gamma, freq_mode, seed, t_end, int_cfg, directed=False, threads=1):
    """Graph, frequencies, integration, lock check and alignment against the stable profile."""
    weights = build_graph(GraphRecipe(case=case, n=n, p=p, gamma=gamma, seed=seed, directed=directed),
                          threads=threads)
    omegas, xi, sample = make_frequencies(freq_mode, n, a, seed)
    system = KMSystem(weights=weights, omegas=omegas, K=K)
    trajectory = integrate(system, PhaseState(t=0.0, u=uniform_phases(seed, n)), t_end, int_cfg)
    final = trajectory.final.u
    locked = lock_detect(trajectory).locked if t_end >= LOCK_WINDOW else None
    r, psi = order_parameter(final)

    profile = stable_profile(a, p, K)
    distance = theta_star = None
    if profile is not None:
        alignment = align_theta(embed(apply_permutation(xi, final)), profile)
        distance, theta_star = alignment.distance, alignment.theta_star
    wrapped = wrap_phase(final)
    return SimulationResult(
        trajectory=trajectory, omegas=omegas, xi=xi, sample=sample, locked=locked,
        delta_u=delta_u_observable(final, omegas), r=r, psi=psi,
        C=profile.C if profile is not None else None, distance=distance, theta_star=theta_star,
        theta_circular=circular_mean(final), theta_arithmetic=float(np.mean(wrapped)),
    )


def cmd_selfconsistency(cfg, out_dir, manifest, threads=1):
    grid = cfg['grid']
    with manifest.stage('solve'):
        df = c_curve(grid)
    _write_csv(df.to_dict('records'), 'selfconsistency', Path(out_dir) / 'c_curve.csv')
    manifest.add_output('c_curve.csv', 'selfconsistency')

    existing = df.dropna()
    ordered = existing.sort_values('pK_over_a')
    manifest.check('C increasing in pK/a', bool(np.all(np.diff(ordered['C'].to_numpy(dtype=float)) > 0)))
    below = df[df['pK_over_a'] < CRITICAL_RATIO]
    manifest.check('no C below 2/pi', bool(below['C'].isna().all()))
    for value in existing['C']:
        if not np.pi / 4 - 1e-9 <= value <= 1.0:
            manifest.check('C within [pi/4, 1]', False, float(value))
            break
    else:
        manifest.check('C within [pi/4, 1]', True)
    print(f"Solved self-consistency on {len(grid)} points, {len(existing)} with a solution")


def cmd_simulate(cfg, out_dir, manifest, threads=1):
    out_dir = Path(out_dir)
    int_cfg = integrator_config(cfg)
    with manifest.stage('simulate'):
        res = run_simulation(cfg['case'], cfg['n'], cfg['K'], cfg['a'], cfg['p'], cfg['gamma'],
                             cfg['freq_mode'], cfg['seed'], cfg['t_end'], int_cfg,
                             directed=cfg['directed'], threads=threads)

    with manifest.stage('write'):
        res.trajectory.to_csv(out_dir / 'trajectory.csv', every=cfg['trajectory_every'])
        manifest.add_output('trajectory.csv', 'trajectory')
        final = res.trajectory.final.u
        rows = [{'index': i + 1, 'omega': w, 'u': u, 'u_wrapped': float(wrap_phase(u))}
                for i, (w, u) in enumerate(zip(res.omegas, final))]
        _write_csv(rows, 'final_state', out_dir / 'final_state.csv')
        manifest.add_output('final_state.csv', 'final_state')
        if res.sample is not None:
            res.sample.to_csv(out_dir / 'frequency_sample.csv')
            manifest.add_output('frequency_sample.csv', 'frequency_sample')
        joblib.dump({'u': final, 'omegas': res.omegas, 'xi': res.xi, 't': res.trajectory.final.t},
                    out_dir / 'final_state.joblib')
        manifest.add_output('final_state.joblib')

        summary = {
            'theta_circular_mean': res.theta_circular,
            'theta_arithmetic_mean': res.theta_arithmetic,
            'theta_star': res.theta_star,
            'aligned_distance': res.distance,
            'order_parameter': res.r,
            'C': res.C,
            'locked': res.locked,
            'delta_u': res.delta_u,
            'steps_accepted': res.trajectory.n_accepted,
            'steps_rejected': res.trajectory.n_rejected,
            'frequency_ties': bool(res.sample.ties) if res.sample is not None else False,
        }
        manifest.summary = summary

    if cfg['expect_drifting']:
        manifest.check('drifting as expected', res.locked is False, res.locked)
    elif res.C is None:
        manifest.check('no lock below threshold', res.locked is not True)
    elif res.locked is False:
        manifest.check('locked above threshold', False, res.locked)
    elif res.locked:
        tol = DISTANCE_TOLERANCES.get(cfg['case'])
        if tol is not None:
            manifest.check('aligned distance to stable profile', res.distance < tol, res.distance)
        if cfg['case'] == 'complete':
            manifest.check('order parameter matches C', abs(res.r - res.C) < ORDER_PARAMETER_TOL,
                           {'r': res.r, 'C': res.C})
    print(f"r={res.r:.5f}  locked={res.locked}  distance={res.distance}  delta_u={res.delta_u:.5f}")


def _bifurcation_row(K, cfg, int_cfg):
    res = run_simulation(cfg['case'], cfg['n'], K, cfg['a'], cfg['p'], cfg['gamma'], cfg['freq_mode'],
                         cfg['seed'], cfg['t_end'], int_cfg)
    return {
        'K': K,
        'delta_u_sim': res.delta_u if res.locked else None,
        'delta_u_pred': delta_u_prediction(K, cfg['a'], cfg['p']),
        'locked': bool(res.locked),
    }


def cmd_bifurcate(cfg, out_dir, manifest, threads=1):
    K_grid = cfg['K_grid']
    if list(K_grid) != sorted(K_grid):
        raise ValueError("K_grid must be sorted")
    int_cfg = integrator_config(cfg, sample_stride=1.0)
    params = cfg.to_dict()
    with manifest.stage('sweep'):
        rows = Parallel(n_jobs=threads)(delayed(_bifurcation_row)(K, params, int_cfg) for K in K_grid)
    _write_csv(rows, 'bifurcate', Path(out_dir) / 'bifurcation.csv')
    manifest.add_output('bifurcation.csv', 'bifurcate')

    for K in cfg['expect_drifting']:
        matches = [row for row in rows if abs(row['K'] - K) <= 1e-9 * max(1.0, abs(K))]
        if not matches:
            raise ValueError(f"expect_drifting value K={K:g} is not on K_grid")
        manifest.check(f"drifting at K={K:g}", not matches[0]['locked'])

    worst = 0.0
    for row in rows:
        if row['delta_u_pred'] is None:
            manifest.check(f"drifting below threshold at K={row['K']:g}", not row['locked'])
        elif row['locked']:
            worst = max(worst, abs(row['delta_u_sim'] - row['delta_u_pred']))
    manifest.check('delta_u matches prediction on locked rows', worst < BIFURCATION_TOL, worst)
    print(f"Swept {len(K_grid)} coupling values, {sum(r['locked'] for r in rows)} locked, "
          f"max |delta_u error|={worst:.4f}")


def _convergence_seed(n, seed, cfg, int_cfg, ref_states):
    omega_fn = FrequencyFunction.linear(cfg['a'])
    u0 = INITIAL_FUNCTIONS[cfg['initial']]
    weights = build_graph(GraphRecipe(case=cfg['case'], n=n, p=cfg['p'], gamma=cfg['gamma'], seed=seed))
    omegas, xi, sample = make_frequencies(cfg['freq_mode'], n, cfg['a'], seed)
    system = KMSystem(weights=weights, omegas=omegas, K=cfg['K'])
    initial = cell_average(u0, n)
    u_start = np.empty(n)
    u_start[xi] = initial
    traj = integrate(system, PhaseState(t=0.0, u=u_start), cfg['t_end'], int_cfg)
    permuted = traj.states[:, xi]
    distance = max(circle_l2(embed(u), embed(ref)) for u, ref in zip(permuted, ref_states))

    surrogate = None
    if sample is not None:
        surrogate_sys = permute_system(system, xi, omegas=sample.nu)
        straj = integrate(surrogate_sys, PhaseState(t=0.0, u=initial), cfg['t_end'], int_cfg)
        surrogate = max(circle_l2(embed(u), embed(v)) for u, v in zip(permuted, straj.states))
    return n, distance, surrogate


def cmd_convergence(cfg, out_dir, manifest, threads=1):
    n_grid = cfg['n_grid']
    if cfg['m_ref'] < max(n_grid):
        raise ValueError("m_ref must be at least the largest n")
    int_cfg = integrator_config(cfg)
    with manifest.stage('reference'):
        ref = cl_reference_trajectory(FrequencyFunction.linear(cfg['a']), cfg['p'], cfg['K'], cfg['m_ref'],
                                      INITIAL_FUNCTIONS[cfg['initial']], cfg['t_end'], int_cfg)
    params = cfg.to_dict()
    seeds = [cfg['seed'] + s for s in range(cfg['seeds'])]
    with manifest.stage('sweep'):
        results = Parallel(n_jobs=threads)(
            delayed(_convergence_seed)(n, seed, params, int_cfg, ref.states) for n in n_grid for seed in seeds
        )
    rows = []
    for n in n_grid:
        distances = np.array([d for m, d, _ in results if m == n])
        surrogates = [s for m, _, s in results if m == n and s is not None]
        rows.append({
            'n': n,
            'median_distance': float(np.median(distances)),
            'q10': float(np.quantile(distances, 0.1)),
            'q90': float(np.quantile(distances, 0.9)),
            'n_seeds': len(distances),
            'median_surrogate_distance': float(np.median(surrogates)) if surrogates else None,
        })
    _write_csv(rows, 'convergence', Path(out_dir) / 'convergence.csv')
    manifest.add_output('convergence.csv', 'convergence')
    medians = [row['median_distance'] for row in rows]
    manifest.check('distance to continuum decreasing in n', bool(np.all(np.diff(medians) < 0)), medians)
    print("n       median distance")
    for row in rows:
        print(f"{row['n']:<8d}{row['median_distance']:.6g}")


def _permutation_seed(n, seed, a):
    dist = FrequencyDistribution.uniform(a)
    sample = sample_iid(dist, n, seed)
    return n, permutation_deviation(sample), ks_statistic(sample.omegas, dist)


def cmd_permutation(cfg, out_dir, manifest, threads=1):
    n_grid = cfg['n_grid']
    if list(n_grid) != sorted(n_grid):
        raise ValueError("n_grid must be sorted")
    seeds = [cfg['seed'] + s for s in range(cfg['seeds'])]
    with manifest.stage('sweep'):
        results = Parallel(n_jobs=threads)(
            delayed(_permutation_seed)(n, seed, cfg['a']) for n in n_grid for seed in seeds
        )
    rows = []
    for n in n_grid:
        deviations = np.array([d for m, d, _ in results if m == n])
        ks = np.array([k for m, _, k in results if m == n])
        rows.append({
            'n': n,
            'median_deviation': float(np.median(deviations)),
            'q10': float(np.quantile(deviations, 0.1)),
            'q90': float(np.quantile(deviations, 0.9)),
            'median_ks': float(np.median(ks)),
        })
    _write_csv(rows, 'permutation', Path(out_dir) / 'permutation.csv')
    manifest.add_output('permutation.csv', 'permutation')
    medians = [row['median_deviation'] for row in rows]
    manifest.check('permutation deviation decreasing in n', bool(np.all(np.diff(medians) < 0)), medians)
    if n_grid[-1] >= 10**4 and cfg['a'] <= 1.0:
        manifest.check('median deviation below bound at the largest n',
                       medians[-1] < PERMUTATION_MEDIAN_BOUND, medians[-1])
    print(f"Median deviations: {', '.join(f'{m:.4g}' for m in medians)}")


def instability_family(cfg):
    """(family profile, stable profile, residual of the family profile)."""
    a, p, K = cfg['a'], cfg['p'], cfg['K']
    stable = stable_profile(a, p, K)
    if stable is None:
        raise ValueError(f"pK/a={p * K / a:g} is below the existence threshold 2/pi")
    family = cfg['family']
    if family == 'stable':
        return stable, stable, stationarity_residual(stable)
    if family == 'flipped':
        profile = stationary_profile(stable.problem, stable.C, 'continuous_flipped', verify=False)
        residual = stationarity_residual(profile)
        logger.info("flipped profile with the stable C has stationarity residual %.3g", residual)
        return profile, stable, residual
    flips = flip_set_from_lists(cfg['flip_minus'], cfg['flip_plus'])
    if flips is None:
        raise ValueError("the discontinuous family needs at least one flip interval")
    problem = SelfConsistencyProblem(omega=FrequencyFunction.linear(a), p=p, K=K, flip_set=flips)
    C = solve_C_general(problem)
    profile = stationary_profile(problem, C, 'discontinuous')
    return profile, stable, stationarity_residual(profile)


def cmd_instability(cfg, out_dir, manifest, threads=1):
    out_dir = Path(out_dir)
    with manifest.stage('profiles'):
        profile, stable, residual = instability_family(cfg)
    m = cfg['m']
    nodes = (np.arange(1, m + 1) - 0.5) / m
    family_nodes = embed(profile.evaluate(nodes))
    stable_nodes = embed(stable.evaluate(nodes))
    delta = cfg['delta']

    def initial(x):
        return profile.evaluate(x) + delta * np.sin(2 * np.pi * np.asarray(x))

    int_cfg = integrator_config(cfg)
    with manifest.stage('integrate'):
        traj = cl_reference_trajectory(FrequencyFunction.linear(cfg['a']), cfg['p'], cfg['K'], m, initial,
                                       cfg['t_max'], int_cfg, initial='nodal')
    with manifest.stage('distances'):
        d_family = np.array([align_theta(embed(u), family_nodes).distance for u in traj.states])
        d_stable = np.array([align_theta(embed(u), stable_nodes).distance for u in traj.states])

    escaped = np.nonzero(d_family > cfg['epsilon'])[0]
    escape_time = float(traj.times[escaped[0]]) if escaped.size else None
    terminal = float(d_stable[-1])
    if escape_time is None:
        verdict = 'no-escape'
    elif terminal < CONVERGED_DISTANCE:
        verdict = 'escaped-and-converged'
    else:
        verdict = 'escaped'

    rows = [{'t': t, 'distance_family': f, 'distance_stable': s} for t, f, s in zip(traj.times, d_family, d_stable)]
    _write_csv(rows, 'instability', out_dir / 'instability.csv')
    manifest.add_output('instability.csv', 'instability')
    summary = {
        'family': cfg['family'],
        'C': profile.C,
        'stationarity_residual': residual,
        'stationary_start': bool(residual <= RESIDUAL_TOL),
        'escape_time': escape_time,
        'terminal_distance_to_stable': terminal,
        'verdict': verdict,
    }
    manifest.summary = summary

    if cfg['family'] == 'stable':
        manifest.check('stable family does not escape', escape_time is None)
        manifest.check('stable family stays close', terminal < 10 * delta, terminal)
    else:
        manifest.check('family escapes and converges to the stable family',
                       verdict == 'escaped-and-converged', verdict)
    print(f"Verdict: {verdict}  escape time: {escape_time}  terminal distance: {terminal:.5f}")


SCENARIOS = {
    'selfconsistency': cmd_selfconsistency,
    'simulate': cmd_simulate,
    'bifurcate': cmd_bifurcate,
    'convergence': cmd_convergence,
    'permutation': cmd_permutation,
    'instability': cmd_instability,
}


def run_scenario(cfg, out_dir, threads=1):
    """Run one scenario; library errors are recorded in the manifest, never raised."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.scenario, cfg.to_dict(), threads)
    with manifest.stage('total'):
        try:
            SCENARIOS[cfg.scenario](cfg, out_dir, manifest, threads=threads)
        except (ValueError, RuntimeError) as e:
            logger.error("%s failed: %s", cfg.scenario, e)
            manifest.fail(e)
    if manifest.summary is not None:
        _write_json({**manifest.summary, 'failed': manifest.failed}, out_dir / 'summary.json')
        manifest.add_output('summary.json')
    manifest.write(out_dir)
    return manifest
