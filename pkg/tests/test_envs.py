import numpy as np
import pytest

from snctrl import ContractError, get_env, make_gtm, make_pendulum, reward


def test_pendulum_matrices_from_table_parameters():
    env = make_pendulum()
    # l=0.5, M=0.15, g=9.8, eta=0.05, Ts=0.1
    assert env.plant.A == pytest.approx(
        np.array([[1.0, 0.1], [1.96, 0.866667]]), abs=5e-7)
    assert env.plant.B == pytest.approx(np.array([[0.0], [2.666667]]), abs=5e-7)
    assert env.plant.ts == 0.1
    # intermediate quantities quoted to 6 decimals
    assert 0.05 / (0.15 * 0.5**2) == pytest.approx(1.333333, abs=5e-7)
    assert 9.8 / 0.5 * 0.1 == pytest.approx(1.96, abs=1e-12)


def test_pendulum_reward_and_limits():
    env = make_pendulum()
    assert np.array_equal(np.diag(env.reward_spec.Q), [2.0, 2.0])
    assert env.reward_spec.R[0, 0] == 0.001
    assert env.max_episode_steps == 200
    assert env.reward(np.array([1.0, 0.0]), np.zeros(1)) == pytest.approx(-2.0)
    assert env.reward(np.array([0.0, 1.0]), np.ones(1)) == pytest.approx(-2.001)


def test_gtm_matrix_literals():
    env = make_gtm()
    A, B = env.plant.A, env.plant.B
    assert A[0, 0] == 9.968e-1
    assert A[1, 2] == 1.938
    assert A[3, 3] == 1.000
    assert A[3, 0] == 4.681e-5
    assert B[1, 0] == -7.140e-2
    assert B[3, 0] == -1.306e-3
    assert env.plant.ts == 0.05


def test_gtm_reward():
    env = make_gtm()
    assert env.reward(np.ones(4), np.zeros(1)) == pytest.approx(-8.0)
    assert env.reward(np.zeros(4), np.array([0.1])) == pytest.approx(-0.1)


def test_reward_nonpositive_and_zero_only_at_origin(rng):
    for env in (make_pendulum(), make_gtm()):
        n = env.plant.n_states
        for _ in range(100):
            x = rng.normal(size=n)
            u = rng.normal(size=1)
            r = env.reward(x, u)
            assert r <= 0.0
            if np.linalg.norm(x) > 1e-9:
                assert r < 0.0
        assert env.reward(np.zeros(n), np.zeros(1)) == 0.0


def test_reward_dimension_mismatch():
    env = make_pendulum()
    with pytest.raises(ContractError):
        reward(env.reward_spec, np.zeros(3), np.zeros(1))


def test_termination_boundary_probes():
    eps = 1e-9
    pend = make_pendulum()
    assert not pend.termination(np.array([4 * np.pi - eps, 100.0]))
    assert pend.termination(np.array([4 * np.pi + 1e-6, 0.0]))
    assert pend.termination(np.array([-4 * np.pi - 1e-6, 0.0]))

    gtm = make_gtm()
    ok = np.zeros(4)
    assert not gtm.termination(ok)
    for idx, lim in ((3, np.pi / 2), (0, 5.0), (1, 5.0)):
        x = np.zeros(4)
        x[idx] = lim - 1e-9
        assert not gtm.termination(x)
        x[idx] = lim + 1e-6
        assert gtm.termination(x)
        x[idx] = -(lim + 1e-6)
        assert gtm.termination(x)
    # pitch rate is unconstrained
    assert not gtm.termination(np.array([0.0, 0.0, 100.0, 0.0]))


def test_env_registry():
    assert get_env("pendulum").name == "pendulum"
    assert get_env("gtm").name == "gtm"
    with pytest.raises(ContractError, match="pendulum"):
        get_env("cartpole")
