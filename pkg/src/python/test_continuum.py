import numpy as np
import pandas as pd
import pytest

from config import CRITICAL_RATIO
from continuum import (CLDiscretization, FlipSet, ProfileConsistencyError, SelfConsistencyProblem, c_curve,
                       cl_reference_trajectory, delta_u_prediction, mean_frequency, order_parameter_integrals,
                       profile_table, self_consistency_integral, self_convergence, solve_C_general,
                       solve_C_linear, stationarity_residual, stationary_profile)
from dynamics import IntegratorConfig, KMSystem, PhaseState, integrate
from frequencies import FrequencyFunction, discretize
from graphs import Graphon, build_deterministic_dense
from metrics import align_theta, embed


def linear_problem(a=1.0, p=1.0, K=1.0, flip_set=None):
    return SelfConsistencyProblem(omega=FrequencyFunction.linear(a), p=p, K=K, flip_set=flip_set)


def test_mean_frequency():
    assert mean_frequency(FrequencyFunction.linear(1.0)) == 0.0
    assert mean_frequency(FrequencyFunction.constant(0.3)) == 0.3
    assert mean_frequency(FrequencyFunction.from_callable(lambda x: x ** 2)) == pytest.approx(1 / 3, abs=1e-12)


def test_threshold():
    assert solve_C_linear(0.5) is None
    assert solve_C_linear(CRITICAL_RATIO - 1e-9) is None
    assert solve_C_linear(CRITICAL_RATIO) == pytest.approx(np.pi / 4, abs=1e-9)


def test_known_values():
    assert solve_C_linear(1.0) == pytest.approx(0.952, abs=1e-3)
    C10 = solve_C_linear(10.0)
    z = 1 / (20 * C10)
    assert C10 == pytest.approx(1 - z ** 2 / 6, abs=1e-6)
    assert C10 == pytest.approx(0.99958, abs=1e-5)


def test_C_satisfies_equation():
    for r in (0.7, 1.0, 3.0):
        C = solve_C_linear(r)
        z = 1 / (2 * r * C)
        assert C == pytest.approx(r * C * (np.arcsin(z) + z * np.sqrt(1 - z * z)), abs=1e-12)


def test_C_curve_monotone():
    grid = np.linspace(CRITICAL_RATIO, 20.0, 200)
    values = np.array([solve_C_linear(r) for r in grid])
    assert np.all(np.diff(values) > 0)
    assert values[-1] > 0.999


def test_general_solver_agrees_with_linear():
    for r in np.linspace(CRITICAL_RATIO + 1e-6, 20.0, 25):
        general = solve_C_general(linear_problem(K=r))
        assert general == pytest.approx(solve_C_linear(r), abs=1e-10)


def test_general_solver_scaling_in_a_and_p():
    general = solve_C_general(linear_problem(a=2.0, p=0.5, K=4.0))
    assert general == pytest.approx(solve_C_linear(1.0), abs=1e-10)


def test_general_solver_below_threshold():
    assert solve_C_general(linear_problem(K=CRITICAL_RATIO - 1e-6)) is None


def test_general_solver_constant_frequency():
    problem = SelfConsistencyProblem(omega=FrequencyFunction.constant(0.4), p=1.0, K=0.2)
    assert solve_C_general(problem) == 1.0


def test_general_solver_callable():
    # omega(x) = a(x - 1/2) written as a callable
    omega = FrequencyFunction.from_callable(lambda x: np.asarray(x) - 0.5)
    problem = SelfConsistencyProblem(omega=omega, p=1.0, K=1.0)
    assert solve_C_general(problem) == pytest.approx(solve_C_linear(1.0), abs=1e-8)


def test_discontinuous_C_smaller_than_stable():
    flips = FlipSet(plus=((0.6, 0.7),))
    C = solve_C_general(linear_problem(flip_set=flips))
    assert C is not None
    assert 0 < C < solve_C_linear(1.0)


def test_empty_flip_intervals_are_no_ops():
    flips = FlipSet(plus=((0.7, 0.7),))
    problem = linear_problem(flip_set=flips)
    assert self_consistency_integral(problem, 0.9) == pytest.approx(
        self_consistency_integral(linear_problem(), 0.9), abs=1e-14)


def test_flip_set_validation():
    with pytest.raises(ValueError):
        FlipSet(minus=((0.3, 0.6),))
    with pytest.raises(ValueError):
        FlipSet(plus=((0.6, 0.8), (0.7, 0.9)))
    flips = FlipSet.from_flat([0.1, 0.2], [0.6, 0.7, 0.8, 0.9])
    assert flips.measure() == pytest.approx(0.3)
    with pytest.raises(ValueError):
        FlipSet.from_flat([0.1], [])


def test_stable_profile_values():
    problem = linear_problem()
    profile = stationary_profile(problem, solve_C_linear(1.0), 'continuous_stable', theta=0.4)
    assert profile.evaluate(0.5) == pytest.approx(0.4)
    flipped = stationary_profile(problem, profile.C, 'continuous_flipped', theta=0.4, verify=False)
    assert flipped.evaluate(0.5) == pytest.approx(np.pi + 0.4)


def test_threshold_profile_endpoints():
    problem = linear_problem(K=CRITICAL_RATIO)
    profile = stationary_profile(problem, np.pi / 4, 'continuous_stable')
    assert profile.evaluate(1.0) == pytest.approx(np.pi / 2, abs=1e-6)
    assert profile.evaluate(0.0) == pytest.approx(-np.pi / 2, abs=1e-6)


@pytest.mark.parametrize("r", [CRITICAL_RATIO, 0.8, 1.0, 5.0])
def test_stable_profile_is_stationary(r):
    profile = stationary_profile(linear_problem(K=r), solve_C_linear(r), 'continuous_stable', theta=1.1)
    assert stationarity_residual(profile) <= 1e-6


def test_order_parameter_identity():
    profile = stationary_profile(linear_problem(), solve_C_linear(1.0), 'continuous_stable', theta=2.0)
    c, s = order_parameter_integrals(profile)
    assert c == pytest.approx(profile.C, abs=1e-8)
    assert s == pytest.approx(0.0, abs=1e-8)


def test_flipped_family_with_stable_C_is_not_stationary():
    problem = linear_problem()
    C = solve_C_linear(1.0)
    with pytest.raises(ProfileConsistencyError) as info:
        stationary_profile(problem, C, 'continuous_flipped')
    assert info.value.residual > 0.1
    profile = stationary_profile(problem, C, 'continuous_flipped', verify=False)
    # residual is 2 |omega - Omega| at its largest
    assert stationarity_residual(profile) == pytest.approx(1.0, abs=1e-6)


def test_two_sided_flips_have_no_root_at_unit_coupling():
    flips = FlipSet(minus=((0.1, 0.2),), plus=((0.6, 0.7),))
    assert solve_C_general(linear_problem(flip_set=flips)) is None


def test_discontinuous_profile_is_stationary():
    flips = FlipSet(minus=((0.1, 0.2),), plus=((0.6, 0.7),))
    problem = linear_problem(K=2.0, flip_set=flips)
    C = solve_C_general(problem)
    assert C == pytest.approx(0.579183, abs=1e-5)
    profile = stationary_profile(problem, C, 'discontinuous', theta=-0.3)
    assert stationarity_residual(profile) <= 1e-6
    U = profile.base(0.65)
    assert profile.evaluate(0.65) == pytest.approx(np.pi - U - 0.3)
    U = profile.base(0.15)
    assert profile.evaluate(0.15) == pytest.approx(-U - np.pi - 0.3)
    assert profile.evaluate(0.4) == pytest.approx(profile.base(0.4) - 0.3)


def test_profile_rejects_infeasible_C():
    with pytest.raises(ProfileConsistencyError):
        stationary_profile(linear_problem(), 0.3, 'continuous_stable')
    with pytest.raises(ProfileConsistencyError):
        stationary_profile(linear_problem(), None, 'continuous_stable')
    with pytest.raises(ValueError):
        stationary_profile(linear_problem(), 0.9, 'discontinuous')


def test_delta_u_prediction():
    assert delta_u_prediction(CRITICAL_RATIO, 1.0) == pytest.approx(np.pi, abs=1e-6)
    assert delta_u_prediction(1.0, 1.0) == pytest.approx(1.11, abs=0.01)
    assert delta_u_prediction(0.5, 1.0) is None
    values = [delta_u_prediction(K, 1.0) for K in np.linspace(0.7, 20, 50)]
    assert np.all(np.diff(values) < 0)


def test_collocation_matches_deterministic_dense_km():
    m = 64
    omega = FrequencyFunction.linear(1.0)
    u0 = lambda x: np.sin(2 * np.pi * np.asarray(x))
    cfg = IntegratorConfig(sample_stride=1.0)
    reference = cl_reference_trajectory(omega, 1.0, 1.2, m, u0, 5.0, cfg)
    disc = CLDiscretization(omega=omega, p=1.0, K=1.2, m=m)
    system = KMSystem(weights=build_deterministic_dense(Graphon.uniform(1.0), m), omegas=discretize(omega, m), K=1.2)
    direct = integrate(system, PhaseState(t=0.0, u=disc.initial_state(u0)), 5.0, cfg)
    np.testing.assert_array_equal(reference.states, direct.states)


def test_collocation_constant_solution():
    omega = FrequencyFunction.constant(0.0)
    traj = cl_reference_trajectory(omega, 1.0, 1.0, 32, lambda x: np.full(np.shape(x), 0.7), 10.0)
    np.testing.assert_allclose(traj.states, 0.7, atol=1e-12)


def test_stable_profile_stays_put():
    profile = stationary_profile(linear_problem(), solve_C_linear(1.0), 'continuous_stable')
    traj = cl_reference_trajectory(FrequencyFunction.linear(1.0), 1.0, 1.0, 512, profile, 100.0,
                                   IntegratorConfig(sample_stride=10.0), initial='nodal')
    nodes = (np.arange(512) + 0.5) / 512
    target = embed(profile.evaluate(nodes))
    assert max(align_theta(embed(u), target).distance for u in traj.states) < 1e-4


def test_self_convergence_small_m():
    result = self_convergence(FrequencyFunction.linear(1.0), 1.0, 1.0, lambda x: np.zeros_like(np.asarray(x)),
                              2.0, IntegratorConfig(sample_stride=1.0), m=256, tol=1e-2)
    assert result['m_fine'] == 512
    assert result['certified']


def test_c_curve_export(tmp_path):
    path = tmp_path / 'c.csv'
    df = c_curve([0.5, CRITICAL_RATIO, 1.0, 10.0], path)
    assert df['C'].isna().tolist() == [True, False, False, False]
    raw = pd.read_csv(path, keep_default_na=False)
    assert raw['C'].tolist()[0] == 'NONE'
    assert float(raw['C'].tolist()[1]) == pytest.approx(np.pi / 4, abs=1e-9)


def test_profile_table(tmp_path):
    profile = stationary_profile(linear_problem(), solve_C_linear(1.0), 'continuous_stable')
    df = profile_table(profile, points=11, path=tmp_path / 'profile.csv')
    assert list(df.columns) == ['x', 'U']
    assert df['U'].iloc[5] == pytest.approx(0.0, abs=1e-15)
