"""Configuration for the Sincronia Kuramoto toolkit"""

import math

__version__ = '0.1.0'

# Existence threshold of the continuous stationary families (pK/a)
CRITICAL_RATIO = 2 / math.pi
THRESHOLD_FUZZ = 1e-12

# Quadrature
GRAPHON_SUBCELLS = 4
SIMPSON_PANELS_PER_CELL = 16
CL_QUADRATURE_PANELS = 4096
CL_SUP_MESH = 8193
BOUNDS_RESOLUTION = 257
STEP_CELL_SUBPANELS = 8

# Self-consistency root finding
ROOT_TOL = 1e-12
ROOT_SCAN_POINTS = 1024
FIXED_POINT_ITERATIONS = 500
RESIDUAL_TOL = 1e-6

# Integrator defaults
INTEGRATOR_DEFAULTS = {
    'method': 'adaptive_rk8',
    'rtol': 1e-8,
    'atol': 1e-8,
    'h_init': 1e-2,
    'h_max': 1.0,
    'sample_stride': 1.0,
    'pi_beta': 0.04,
}
INTEGRATOR_METHODS = ['adaptive_rk8', 'rk4_fixed']
DEFAULT_HORIZON = 100.0

# Lock detection
LOCK_WINDOW = 10.0
LOCK_TOL = 1e-3

# Alignment
ALIGN_GRID_POINTS = 256
ALIGN_XTOL = 1e-10

# Pre-registered pass/fail tolerances for steady-state distances
DISTANCE_TOLERANCES = {
    'complete': 0.05,
    'random_dense': 0.1,
}
ORDER_PARAMETER_TOL = 0.01
BIFURCATION_TOL = 0.05
CONVERGED_DISTANCE = 0.05
PERMUTATION_MEDIAN_BOUND = 0.05

GRAPH_CASES = ['complete', 'random_dense', 'random_sparse']
FREQUENCY_MODES = ['equally_placed', 'iid_uniform']
PROFILE_FAMILIES = ['continuous_stable', 'continuous_flipped', 'discontinuous']
INSTABILITY_FAMILIES = ['stable', 'flipped', 'discontinuous']
INITIAL_PROFILES = ['zero', 'sine']

THREADS_ENV_VAR = 'SINCRONIA_THREADS'

# Every scenario parameter: name -> (kind, default, range or choices)
# A range (low, high, True) excludes low.
COMMON_PARAMETERS = {
    'seed': ('int', 1, (0, 2**64 - 1)),
    'rtol': ('float', INTEGRATOR_DEFAULTS['rtol'], (0.0, 1.0)),
    'atol': ('float', INTEGRATOR_DEFAULTS['atol'], (0.0, 1.0)),
    'method': ('choice', INTEGRATOR_DEFAULTS['method'], INTEGRATOR_METHODS),
    'h_init': ('float', INTEGRATOR_DEFAULTS['h_init'], (0.0, 10.0)),
    'h_max': ('float', INTEGRATOR_DEFAULTS['h_max'], (0.0, 100.0)),
}

SCENARIO_PARAMETERS = {
    'selfconsistency': {
        'grid': ('float_list', [0.5, CRITICAL_RATIO, 1.0, 10.0], (0.0, 20.0, True)),
    },
    'simulate': {
        'case': ('choice', 'complete', GRAPH_CASES),
        'n': ('int', 1000, (2, 10**6)),
        'K': ('float', 1.0, (0.0, 1e3)),
        'a': ('float', 1.0, (0.0, 1e3, True)),
        'p': ('float', 1.0, (0.0, 1.0, True)),
        'gamma': ('float', 0.3, (0.0, 0.5)),
        'freq_mode': ('choice', 'equally_placed', FREQUENCY_MODES),
        't_end': ('float', DEFAULT_HORIZON, (0.0, 1e6)),
        'sample_stride': ('float', INTEGRATOR_DEFAULTS['sample_stride'], (0.0, 1e6)),
        'directed': ('bool', False, None),
        'expect_drifting': ('bool', False, None),
        'trajectory_every': ('int', 100, (1, 10**6)),
    },
    'bifurcate': {
        'K_grid': ('float_list', [0.64] + [round(0.7 + 0.1 * k, 10) for k in range(14)], (0.0, 1e3)),
        'expect_drifting': ('float_list', [0.64], (0.0, 1e3)),
        'case': ('choice', 'complete', GRAPH_CASES),
        'n': ('int', 1000, (2, 10**6)),
        'a': ('float', 1.0, (0.0, 1e3, True)),
        'p': ('float', 1.0, (0.0, 1.0, True)),
        'gamma': ('float', 0.3, (0.0, 0.5)),
        'freq_mode': ('choice', 'equally_placed', FREQUENCY_MODES),
        't_end': ('float', DEFAULT_HORIZON, (0.0, 1e6)),
    },
    'convergence': {
        'n_grid': ('int_list', [100, 400, 1600], (2, 10**6)),
        'case': ('choice', 'complete', GRAPH_CASES),
        'K': ('float', 1.0, (0.0, 1e3)),
        'a': ('float', 1.0, (0.0, 1e3, True)),
        'p': ('float', 1.0, (0.0, 1.0, True)),
        'gamma': ('float', 0.3, (0.0, 0.5)),
        'freq_mode': ('choice', 'equally_placed', FREQUENCY_MODES),
        'seeds': ('int', 1, (1, 10**4)),
        't_end': ('float', 10.0, (0.0, 1e6)),
        'sample_stride': ('float', 0.5, (0.0, 1e6)),
        'm_ref': ('int', 8192, (2, 10**6)),
        'initial': ('choice', 'zero', INITIAL_PROFILES),
    },
    'permutation': {
        'n_grid': ('int_list', [100, 1000, 10000], (1, 10**8)),
        'a': ('float', 1.0, (0.0, 1e3, True)),
        'seeds': ('int', 20, (1, 10**5)),
    },
    'instability': {
        'family': ('choice', 'flipped', INSTABILITY_FAMILIES),
        'flip_minus': ('float_list', [], (0.0, 0.5)),
        'flip_plus': ('float_list', [0.6, 0.7], (0.5, 1.0)),
        'K': ('float', 1.0, (0.0, 1e3)),
        'a': ('float', 1.0, (0.0, 1e3, True)),
        'p': ('float', 1.0, (0.0, 1.0, True)),
        'delta': ('float', 1e-3, (0.0, 10.0)),
        'epsilon': ('float', 0.5, (0.0, 10.0)),
        'm': ('int', 2048, (2, 10**6)),
        't_max': ('float', 200.0, (0.0, 1e6)),
        'sample_stride': ('float', 0.5, (0.0, 1e6)),
    },
}

# CSV schemas: scenario output -> (version, columns)
CSV_SCHEMAS = {
    'selfconsistency': ('v1', ['pK_over_a', 'C']),
    'bifurcate': ('v1', ['K', 'delta_u_sim', 'delta_u_pred', 'locked']),
    'convergence': ('v1', ['n', 'median_distance', 'q10', 'q90', 'n_seeds', 'median_surrogate_distance']),
    'permutation': ('v1', ['n', 'median_deviation', 'q10', 'q90', 'median_ks']),
    'instability': ('v1', ['t', 'distance_family', 'distance_stable']),
    'frequency_sample': ('v1', ['index', 'omega', 'rank', 'nu']),
    'profile': ('v1', ['x', 'U']),
    'final_state': ('v1', ['index', 'omega', 'u', 'u_wrapped']),
    'trajectory': ('v1', ['t', 'u1', 'u2', '...']),
}
NONE_TOKEN = 'NONE'
