import numpy as np
import pytest

import snctrl as sc
from snctrl import (
    ContractError,
    Ellipsoid,
    GridSpec,
    ellipse_boundary,
    empirical_roa,
    make_pendulum,
    soundness_audit,
    volume_proxy,
)
from conftest import random_stable_plant
from test_certify_post import make_frontier_instance, zero_policy


def test_grid_spec_points_deterministic_order():
    grid = GridSpec(axes=(("a", -1.0, 1.0, 3), ("b", 0.0, 1.0, 2)))
    pts = grid.points()
    expected = np.array([[-1, 0], [-1, 1], [0, 0], [0, 1], [1, 0], [1, 1]],
                        dtype=float)
    assert np.array_equal(pts, expected)


def test_grid_spec_validation():
    with pytest.raises(ContractError):
        GridSpec(axes=(("a", -1.0, 1.0, 1),))
    with pytest.raises(ContractError):
        GridSpec(axes=(("a", 2.0, 1.0, 5),))


def test_empirical_roa_stable_loop_all_converge(rng):
    plant = random_stable_plant(rng, n=2, m=1, rho=0.6)
    pol = zero_policy([2, 4, 1])
    grid = GridSpec(axes=(("x0", -2, 2, 9), ("x1", -2, 2, 9)))
    report = empirical_roa(plant, pol, grid)
    assert report.converged.all()


def test_empirical_roa_unstable_open_loop_only_origin():
    env = make_pendulum()
    pol = zero_policy([2, 4, 1])
    grid = GridSpec(axes=(("theta", -2, 2, 5), ("omega", -2, 2, 5)))
    report = empirical_roa(env.plant, pol, grid)
    origin = np.all(report.points == 0, axis=1)
    assert report.converged[origin].all()
    assert not report.converged[~origin].any()


def test_empirical_roa_batch_matches_single_simulation(rng):
    plant, pol = make_frontier_instance(seed=0, out_scale=2.0)
    pts = rng.uniform(-1.5, 1.5, size=(12, 2))
    report = empirical_roa(plant, pol, pts, horizon=300, tol=1e-3)
    for p, conv in zip(pts, report.converged):
        traj = sc.simulate(plant, pol, p, horizon=300)
        single = (not traj.diverged
                  and np.linalg.norm(traj.states[-1]) < 1e-3)
        assert single == conv


def test_empirical_roa_deterministic(rng):
    plant, pol = make_frontier_instance(seed=5, out_scale=2.0)
    grid = GridSpec(axes=(("x0", -2, 2, 11), ("x1", -2, 2, 11)))
    a = empirical_roa(plant, pol, grid)
    b = empirical_roa(plant, pol, grid)
    assert np.array_equal(a.converged, b.converged)
    # refining the grid keeps previously-tested points' verdicts
    fine = GridSpec(axes=(("x0", -2, 2, 21), ("x1", -2, 2, 21)))
    c = empirical_roa(plant, pol, fine)
    coarse_in_fine = {tuple(p): v for p, v in zip(c.points, c.converged)}
    for p, v in zip(a.points, a.converged):
        assert coarse_in_fine[tuple(p)] == v


def test_soundness_audit_valid_certificate_is_clean():
    plant, pol = make_frontier_instance(seed=0, out_scale=2.0)
    cert, _ = sc.search_vbar(plant, pol, mu_lo=0.01, mu_hi=8.0)
    grid = GridSpec(axes=(("x0", -3, 3, 41), ("x1", -3, 3, 41)))
    report = empirical_roa(plant, pol, grid)
    audit = soundness_audit(cert, report)
    assert audit.ok
    assert audit.n_inside > 0


def test_soundness_audit_flags_inflated_ellipsoid():
    # Deliberately wrong certificate on the unstable open-loop pendulum:
    # a huge ellipsoid around the origin must contain diverging points.
    env = make_pendulum()
    pol = zero_policy([2, 4, 1])
    grid = GridSpec(axes=(("x0", -2, 2, 9), ("x1", -2, 2, 9)))
    report = empirical_roa(env.plant, pol, grid)
    fake = sc.StabilityCertificate(
        P=1e-4 * np.eye(2), lam=np.zeros(0), vbar1=np.ones(4),
        lmi1_margin=-1.0, lmi2_min_eig=0.0, x_star=np.zeros(2),
        W1=np.zeros((4, 2)))
    audit = soundness_audit(fake, report)
    assert not audit.ok
    assert audit.violations.shape[0] == audit.n_inside - 1  # origin converges


def test_soundness_audit_empty_grid():
    fake = sc.StabilityCertificate(
        P=np.eye(2), lam=np.zeros(0), vbar1=np.ones(1),
        lmi1_margin=-1.0, lmi2_min_eig=0.0, x_star=np.zeros(2),
        W1=np.zeros((1, 2)))
    report = sc.RoaGridReport(points=np.zeros((0, 2)),
                              converged=np.zeros(0, dtype=bool),
                              final_norms=np.zeros(0), horizon=400, tol=1e-3)
    assert soundness_audit(fake, report).ok


def test_volume_proxy_trivial_values():
    assert volume_proxy(Ellipsoid(P=np.eye(2), center=np.zeros(2))) == \
        pytest.approx(1.0)
    assert volume_proxy(Ellipsoid(P=np.diag([4.0, 1.0]), center=np.zeros(2))) \
        == pytest.approx(0.5)


def test_volume_proxy_rejects_non_spd():
    with pytest.raises(ContractError):
        volume_proxy(Ellipsoid(P=np.diag([1.0, -1.0]), center=np.zeros(2)))


def test_volume_proxy_orthogonal_invariance(rng):
    for _ in range(20):
        Pr = rng.normal(size=(3, 3))
        P = Pr @ Pr.T + 0.1 * np.eye(3)
        theta = rng.uniform(0, 2 * np.pi)
        Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        v1 = volume_proxy(Ellipsoid(P=P, center=np.zeros(3)))
        v2 = volume_proxy(Ellipsoid(P=Q @ P @ Q.T, center=np.zeros(3)))
        assert v1 == pytest.approx(v2, rel=1e-9)


def test_volume_proxy_orders_like_monte_carlo(rng):
    # hit-and-miss volume oracle over a bounding box
    def mc_volume(P):
        L = np.linalg.cholesky(np.linalg.inv(P))
        r = np.linalg.norm(L, 2)  # ellipsoid fits in |x|_inf <= r
        X = rng.uniform(-r, r, size=(40_000, 2))
        frac = np.mean(np.einsum("ij,jk,ik->i", X, P, X) <= 1.0)
        return frac * (2 * r) ** 2

    ellipsoids = []
    for _ in range(5):
        Pr = rng.normal(size=(2, 2))
        P = Pr @ Pr.T + 0.2 * np.eye(2)
        ellipsoids.append((volume_proxy(Ellipsoid(P=P, center=np.zeros(2))),
                           mc_volume(P)))
    proxies = [e[0] for e in ellipsoids]
    mcs = [e[1] for e in ellipsoids]
    assert np.argsort(proxies).tolist() == np.argsort(mcs).tolist()


def test_ellipse_boundary_on_quadratic_form(rng):
    Pr = rng.normal(size=(2, 2))
    P = Pr @ Pr.T + 0.3 * np.eye(2)
    ell = Ellipsoid(P=P, center=np.array([0.5, -1.0]))
    pts = ellipse_boundary(ell, n_points=64)
    assert pts.shape == (64, 2)
    d = pts - ell.center
    q = np.einsum("ij,jk,ik->i", d, P, d)
    assert np.allclose(q, 1.0, atol=1e-10)


def test_ellipse_boundary_higher_dim_slice(rng):
    Pr = rng.normal(size=(4, 4))
    P = Pr @ Pr.T + 0.3 * np.eye(4)
    ell = Ellipsoid(P=P, center=np.zeros(4))
    pts = ellipse_boundary(ell, axes=(1, 3), n_points=32)
    assert pts.shape == (32, 4)
    assert np.allclose(pts[:, 0], 0.0)
    assert np.allclose(pts[:, 2], 0.0)
    q = np.einsum("ij,jk,ik->i", pts, P, pts)
    assert np.allclose(q, 1.0, atol=1e-10)
