"""Domain estimation, certificate checks, and the transfer arithmetic.

Level-set geometry is pinned on analytic balls where the critical level is
known exactly; the gridded certificate checks are pinned on contractive
linear witnesses; transfer_bounds is pure arithmetic and pinned to the
published constants.
"""

import numpy as np
import pytest

from latentcert import (
    ContractError,
    DegenerateGeometryError,
    NumericError,
    PreimageDomain,
    check_certificate,
    compute_alpha0,
    decay_bound,
    estimate_Dx,
    estimate_Dz,
    estimate_lipschitz,
    identity_witness,
    invariance_check,
    residual_R,
    residuals_R,
    trajectory_bound_check,
    transfer_bounds,
    zero_set_scan,
)
from latentcert.certify import StateDomain, rollout_values


def _contractive_model(rate=0.5):
    return identity_witness(rate * np.eye(2), np.zeros((2, 1)))


def _zero_policy(Z):
    return np.zeros((np.atleast_2d(Z).shape[0], 1))


# ---------------------------------------------------------------------------
# latent domain
# ---------------------------------------------------------------------------

def test_Dz_contractive_stays_in_seed_square():
    dom = estimate_Dz(_contractive_model(), _zero_policy, r1=1.0, T=5,
                      density=5)
    lo, hi = dom.bounding_box()
    np.testing.assert_allclose(lo, [-1.0, -1.0], atol=1e-12)
    np.testing.assert_allclose(hi, [1.0, 1.0], atol=1e-12)
    assert dom.contains(np.zeros(2))
    assert dom.kind == "hull"


def test_Dz_T0_is_the_seed_square():
    dom = estimate_Dz(_contractive_model(), _zero_policy, r1=1.0, T=0,
                      density=3)
    for corner in ([1, 1], [1, -1], [-1, 1], [-1, -1]):
        assert dom.contains(np.array(corner, dtype=float))
    assert not dom.contains(np.array([1.2, 0.0]))


def test_Dz_rolled_points_are_members():
    model = _contractive_model(0.9)
    dom = estimate_Dz(model, _zero_policy, r1=1.5, T=20, density=5)
    Z = dom.grid(5)
    for _ in range(20):
        Z = model.latent_step(Z, _zero_policy(Z))
        assert np.all(dom.contains(Z))


def test_Dz_validation():
    with pytest.raises(ContractError):
        estimate_Dz(_contractive_model(), _zero_policy, T=-1)


# ---------------------------------------------------------------------------
# state domain
# ---------------------------------------------------------------------------

def _witness_setup(rate=0.5, eps=0.01):
    model = _contractive_model(rate)
    step = lambda X: rate * np.atleast_2d(np.asarray(X, dtype=float))
    dz = estimate_Dz(model, _zero_policy, r1=1.0, T=10, density=5)
    dx = estimate_Dx(model, step, dz, r2=0.5, T_prime=10, eps=eps, density=5)
    return model, step, dz, dx


def test_Dx_keeps_equilibrium():
    _, _, _, dx = _witness_setup()
    assert dx.contains(np.zeros(2))


def test_Dx_zero_eps_is_exact_point_set():
    _, _, _, dx = _witness_setup(eps=0.0)
    assert dx.contains(dx.points[3])
    assert not dx.contains(dx.points[3] + 0.004)


def test_Dx_points_encode_into_Dz():
    model, _, dz, dx = _witness_setup()
    assert np.all(dz.contains(model.encode(dx.points)))


def test_Dx_approximate_forward_invariance():
    # resamples inside the inflated cloud stay inside it along the loop
    model, step, dz, dx = _witness_setup(eps=0.05)
    rng = np.random.default_rng(60)
    X = dx.sample(200, rng)
    stayed = 0
    for x in X:
        ok = True
        xs = x[None, :]
        for _ in range(10):
            xs = step(xs)
            if not dx.contains(xs[0]):
                ok = False
                break
        stayed += ok
    assert stayed / len(X) >= 0.99


def test_state_domain_bruteforce_membership_oracle():
    rng = np.random.default_rng(61)
    pts = rng.normal(size=(80, 3))
    dom = StateDomain(pts, eps=0.3)
    Q = rng.normal(size=(300, 3)) * 1.5
    got = dom.contains(Q)
    expect = np.array([np.min(np.max(np.abs(pts - q), axis=1)) <= 0.3 + 1e-12
                       for q in Q])
    np.testing.assert_array_equal(got, expect)


def test_state_domain_validation():
    with pytest.raises(ContractError):
        StateDomain(np.zeros((0, 2)), eps=0.1)
    with pytest.raises(ContractError):
        StateDomain(np.zeros((3, 2)), eps=-0.1)


def test_preimage_domain_membership():
    # membership is judged on the encoding; the fiber coordinate is free
    model = _contractive_model()
    dz = estimate_Dz(model, _zero_policy, r1=1.0, T=0, density=3)
    pre = PreimageDomain(lambda X: np.atleast_2d(X)[:, :1] @ np.ones((1, 2)),
                         dz, box=(np.array([-5.0, -5.0]),
                                  np.array([5.0, 5.0])))
    assert pre.contains(np.array([0.5, 100.0]))      # encodes to (0.5, 0.5)
    assert not pre.contains(np.array([2.0, 0.0]))    # encodes to (2, 2)
    got = pre.contains(np.array([[0.5, 9.0], [2.0, 0.0]]))
    np.testing.assert_array_equal(got, [True, False])
    lo, hi = pre.bounding_box()
    np.testing.assert_array_equal(lo, [-5.0, -5.0])
    with pytest.raises(ContractError):
        PreimageDomain(model.encode, dz, box=(np.ones(2), -np.ones(2)))


# ---------------------------------------------------------------------------
# gridded certificate checks
# ---------------------------------------------------------------------------

def _offgrid(r=2.0, n=9):
    axis = np.linspace(-r, r, n)
    G = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
    return G[np.any(G != 0.0, axis=1)]


_V = lambda Z: np.sum(np.asarray(Z) ** 2, axis=-1)
_GRADV = lambda Z: 2.0 * np.asarray(Z)


def test_lyapunov_discrete_contractive():
    G = _offgrid()
    chk = check_certificate(G, "lyapunov-discrete", _V,
                            lambda Z: 0.5 * Z, rate=0.85)
    assert chk.fraction == 1.0
    # violation is exactly (0.25 - 0.85) V at each point
    assert chk.worst == pytest.approx(-0.6 * _V(G).min(), rel=1e-12)
    assert chk.n == len(G)


def test_lyapunov_discrete_rho_zero_orientation():
    # rho = 0 demands V(f(z)) <= 0: fails everywhere off the origin
    chk = check_certificate(_offgrid(), "lyapunov-discrete", _V,
                            lambda Z: 0.5 * Z, rate=0.0)
    assert chk.fraction == 0.0


def test_lyapunov_continuous_field():
    G = _offgrid()
    field = lambda Z: -np.asarray(Z)
    ok = check_certificate(G, "lyapunov-continuous", _V, field, rate=1.5,
                           grad=_GRADV)
    assert ok.fraction == 1.0
    bad = check_certificate(G, "lyapunov-continuous", _V, field, rate=2.5,
                            grad=_GRADV)
    assert bad.fraction == 0.0


def test_barrier_discrete_orientation():
    # static system: h(z+) = h(z), so the margin is alpha * h(z)
    G = _offgrid()
    h = lambda Z: np.asarray(Z)[:, 0] + 1.0
    chk = check_certificate(G, "barrier-discrete", h, lambda Z: Z, rate=0.5)
    assert chk.fraction == pytest.approx(np.mean(h(G) >= 0.0))


def test_barrier_continuous_orientation():
    G = _offgrid()
    h = lambda Z: np.asarray(Z)[:, 0]
    gradh = lambda Z: np.tile([1.0, 0.0], (len(Z), 1))
    field = lambda Z: np.tile([1.0, 0.0], (len(Z), 1))
    chk = check_certificate(G, "barrier-continuous", h, field, rate=2.0,
                            grad=gradh)
    assert chk.fraction == pytest.approx(np.mean(1.0 + 2.0 * h(G) >= 0.0))


def test_check_certificate_validation():
    with pytest.raises(ContractError):
        check_certificate(np.zeros((0, 2)), "lyapunov-discrete", _V,
                          lambda Z: Z, 0.85)
    with pytest.raises(ContractError):
        check_certificate(_offgrid(), "other", _V, lambda Z: Z, 0.85)
    with pytest.raises(ContractError):
        check_certificate(_offgrid(), "lyapunov-continuous", _V,
                          lambda Z: Z, 0.85)


# ---------------------------------------------------------------------------
# Lipschitz estimation
# ---------------------------------------------------------------------------

def test_lipschitz_quadratic_on_unit_ball():
    rng = np.random.default_rng(62)
    X = rng.normal(size=(500, 2))
    X /= np.maximum(1.0, np.linalg.norm(X, axis=1))[:, None]
    X[0] = [1.0, 0.0]
    L = estimate_lipschitz(_GRADV, X, fn=_V, pairs=2000)
    assert L == pytest.approx(2.0, abs=1e-12)


def test_lipschitz_affine_exact():
    g = np.array([3.0, -4.0])
    grad = lambda X: np.tile(g, (len(X), 1))
    fn = lambda X: np.asarray(X) @ g
    X = np.random.default_rng(63).normal(size=(100, 2))
    assert estimate_lipschitz(grad, X, fn=fn) == pytest.approx(5.0)


def test_lipschitz_barrier_is_one():
    def grad(Z):
        Z = np.asarray(Z)
        n = np.linalg.norm(Z[:, :2], axis=1, keepdims=True)
        G = np.zeros_like(Z)
        G[:, :2] = Z[:, :2] / n
        return G
    rng = np.random.default_rng(64)
    Z = rng.normal(size=(200, 3)) + np.array([3.0, 3.0, 0.0])
    assert estimate_lipschitz(grad, Z) == pytest.approx(1.0, abs=1e-12)


def test_lipschitz_quotient_guard():
    bogus_grad = lambda X: 0.1 * _GRADV(X)   # too small by 10x
    X = np.random.default_rng(65).normal(size=(100, 2))
    with pytest.raises(NumericError):
        estimate_lipschitz(bogus_grad, X, fn=_V, pairs=2000)
    with pytest.raises(ContractError):
        estimate_lipschitz(_GRADV, np.zeros((0, 2)))


# ---------------------------------------------------------------------------
# alpha0
# ---------------------------------------------------------------------------

class _Ball:
    def __init__(self, radius, dim=2):
        self.radius = float(radius)
        self.dim = dim

    def contains(self, X, slack: float = 1e-9):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.linalg.norm(X, axis=1) <= self.radius + slack

    def bounding_box(self):
        r = self.radius
        return -r * np.ones(self.dim), r * np.ones(self.dim)


def test_alpha0_ball_oracle():
    a4 = compute_alpha0(_V, _Ball(2.0), density=41)
    assert a4 == pytest.approx(4.0, abs=0.05)
    assert a4 >= 4.0 - 2e-3
    a1 = compute_alpha0(_V, _Ball(1.0), density=41)
    assert a1 == pytest.approx(1.0, abs=0.05)


def test_alpha0_monotone_in_domain():
    small = compute_alpha0(_V, _Ball(1.5), density=31)
    big = compute_alpha0(_V, _Ball(2.5), density=31)
    assert big >= small


def test_alpha0_through_encoder_preimage():
    # vbar depends on x only through z = x1: the level set is a slab, and
    # only encoding-based membership can contain it
    class _Interval:
        def contains(self, Z, slack=1e-9):
            Z = np.atleast_2d(np.asarray(Z, dtype=float))
            return np.abs(Z[:, 0]) <= 2.0 + slack

        def bounding_box(self):
            return np.array([-2.0]), np.array([2.0])

    pre = PreimageDomain(lambda X: np.atleast_2d(X)[:, :1], _Interval(),
                         box=(np.array([-3.0, -3.0]), np.array([3.0, 3.0])))
    vbar = lambda X: np.atleast_2d(X)[:, 0] ** 2
    a = compute_alpha0(vbar, pre, density=41)
    assert 4.0 - 2e-3 <= a <= 4.3


def test_alpha0_degenerate_domains():
    class _All:
        contains = staticmethod(lambda X, slack=1e-9:
                                np.ones(len(np.atleast_2d(X)), dtype=bool))
        bounding_box = staticmethod(lambda: (-np.ones(2), np.ones(2)))

    class _None_:
        contains = staticmethod(lambda X, slack=1e-9:
                                np.zeros(len(np.atleast_2d(X)), dtype=bool))
        bounding_box = staticmethod(lambda: (-np.ones(2), np.ones(2)))

    with pytest.raises(DegenerateGeometryError):
        compute_alpha0(_V, _All())
    with pytest.raises(DegenerateGeometryError):
        compute_alpha0(_V, _None_())


# ---------------------------------------------------------------------------
# transfer arithmetic
# ---------------------------------------------------------------------------

def test_transfer_published_constants():
    rep = transfer_bounds(25.60, 0.0183, rho=0.85)
    assert rep.thresholds["stability_threshold"] == pytest.approx(
        3.1232, abs=1e-10)
    # pure arithmetic: recomputing from stored constants is bit-exact
    c = rep.constants
    assert rep.thresholds["stability_threshold"] == \
        c["L"] * c["gamma"] / (1.0 - c["rho"])


def test_transfer_zero_gamma():
    rep = transfer_bounds(25.60, 0.0, rho=0.85, alpha0=6.71)
    assert rep.thresholds["stability_threshold"] == 0.0
    assert rep.vacuous is False


def test_transfer_vacuity_flag():
    rep = transfer_bounds(10.0, 1.0, rho=0.9, alpha0=5.0)   # threshold 100
    assert rep.vacuous is True
    assert any("invariant band" in n for n in rep.notes)
    ok = transfer_bounds(10.0, 0.01, rho=0.9, alpha0=5.0)   # threshold 1
    assert ok.vacuous is False
    assert ok.thresholds["invariant_band"] == [pytest.approx(1.0), 5.0]


def test_transfer_continuous_stability():
    rep = transfer_bounds(2.0, 0.5, rho=0.25, time="continuous")
    assert rep.thresholds["stability_threshold"] == pytest.approx(4.0)


def test_transfer_barrier_margin():
    # beta' = beta + B_d / alpha holds with equality at the published values
    rep = transfer_bounds(1.0, 1.0, alpha=2.0, beta=4.5, beta_prime=5.0)
    assert rep.thresholds["safety_threshold"] == pytest.approx(-0.5)
    assert rep.thresholds["min_distance_guarantee"] == pytest.approx(4.5)
    assert rep.thresholds["margin_inflation_ok"] is True
    worse = transfer_bounds(1.0, 1.2, alpha=2.0, beta=4.5, beta_prime=5.0)
    assert worse.thresholds["margin_inflation_ok"] is False


def test_transfer_validation():
    with pytest.raises(ContractError):
        transfer_bounds(1.0, 0.1)                      # neither rho nor alpha
    with pytest.raises(ContractError):
        transfer_bounds(1.0, 0.1, rho=0.5, alpha=1.0)  # both
    with pytest.raises(ContractError):
        transfer_bounds(1.0, 0.1, rho=1.0)
    with pytest.raises(ContractError):
        transfer_bounds(1.0, 0.1, rho=-0.2, time="continuous")
    with pytest.raises(ContractError):
        transfer_bounds(1.0, 0.1, alpha=0.0)
    with pytest.raises(ContractError):
        transfer_bounds(-1.0, 0.1, rho=0.5)


# ---------------------------------------------------------------------------
# residuals and trajectory checks
# ---------------------------------------------------------------------------

def test_residual_zero_for_exact_witness():
    model = _contractive_model()
    f_z = lambda Z: 0.5 * np.atleast_2d(Z)
    f = lambda X: 0.5 * np.atleast_2d(X)
    rng = np.random.default_rng(66)
    X = rng.normal(size=(30, 2))
    R = residuals_R(X, model, _V, f, f_z)
    np.testing.assert_allclose(R, 0.0, atol=1e-14)


def test_residual_signed_formula():
    model = _contractive_model()
    f = lambda X: 0.5 * np.atleast_2d(X) + np.array([0.1, 0.0])
    f_z = lambda Z: 0.5 * np.atleast_2d(Z)
    x = np.array([1.0, -2.0])
    expect = _V(np.array([0.6, -1.0])) - _V(np.array([0.5, -1.0]))
    assert residual_R(x, model, _V, f, f_z) == pytest.approx(expect,
                                                             rel=1e-12)


def test_residual_lipschitz_domination():
    # |R| <= L * pointwise forward-discrete error, L from the visited set
    model = _contractive_model()
    f = lambda X: 0.5 * np.atleast_2d(X) + 0.01 * np.sin(np.atleast_2d(X))
    f_z = lambda Z: 0.5 * np.atleast_2d(Z)
    rng = np.random.default_rng(67)
    X = rng.uniform(-2, 2, size=(100, 2))
    R = np.abs(residuals_R(X, model, _V, f, f_z))
    ahead = model.encode(f(X))
    pred = f_z(model.encode(X))
    point_err = np.linalg.norm(ahead - pred, axis=1)
    allpts = np.vstack([ahead, pred])
    L = float(np.max(2.0 * np.linalg.norm(allpts, axis=1)))
    assert np.all(R <= L * point_err + 1e-12)


def test_decay_bound_formulas():
    t = np.arange(4, dtype=float)
    got = decay_bound(2.0, t, L=1.0, gamma=0.3, rho=0.5)
    np.testing.assert_allclose(got, 2.0 * 0.5 ** t + 0.6, rtol=1e-12)
    cont = decay_bound(2.0, t, L=1.0, gamma=0.5, rho=0.25,
                       time="continuous", dt=0.1)
    np.testing.assert_allclose(
        cont, (2.0 - 2.0) * np.exp(-0.25 * 0.1 * t) + 2.0, rtol=1e-12)
    with pytest.raises(ContractError):
        decay_bound(1.0, t, 1.0, 0.1, rho=1.0)
    with pytest.raises(ContractError):
        decay_bound(1.0, t, 1.0, 0.1, rho=0.5, time="continuous")


def test_trajectory_bound_exact_witness():
    # gamma = 0: geometric decay of the witness sits under rho^t exactly
    step = lambda X: 0.5 * np.atleast_2d(X)
    X0 = np.array([[1.0, 1.0], [0.0, 0.0], [-2.0, 0.5]])
    checks = trajectory_bound_check(X0, step, _V, L=25.6, gamma=0.0,
                                    rho=0.85, horizon=20)
    assert all(c.passed for c in checks)
    assert checks[1].v0 == 0.0


def test_trajectory_bound_detects_violation():
    step = lambda X: np.atleast_2d(X)          # no decay at all
    X0 = np.array([[1.0, 0.0]])
    checks = trajectory_bound_check(X0, step, _V, L=0.0, gamma=0.0,
                                    rho=0.85, horizon=5)
    assert not checks[0].passed
    assert checks[0].first_violation == 1
    assert checks[0].worst_gap > 0


def test_invariance_check_both_ways():
    X0 = np.array([[1.0, 0.0], [0.0, -1.0]])   # vbar = 1 on the boundary
    good = invariance_check(X0, lambda X: 0.5 * np.atleast_2d(X), _V,
                            alpha=1.0, horizon=10)
    assert all(c.passed for c in good)
    bad = invariance_check(X0, lambda X: 1.1 * np.atleast_2d(X), _V,
                           alpha=1.0, horizon=3)
    assert not any(c.passed for c in bad)
    assert bad[0].first_violation == 1


def test_rollout_values_shape():
    vals = rollout_values(np.ones((3, 2)), lambda X: 0.5 * np.atleast_2d(X),
                          _V, horizon=4)
    assert vals.shape == (3, 5)
    np.testing.assert_allclose(vals[:, 0], 2.0)
    np.testing.assert_allclose(vals[:, 1], 0.5)


def test_zero_set_scan_identity():
    model = _contractive_model()
    axis = np.linspace(-1, 1, 5)
    grid = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
    near = zero_set_scan(model, grid, tol=1e-6)
    assert near.shape == (1, 2)
    np.testing.assert_array_equal(near[0], [0.0, 0.0])
    everything = zero_set_scan(model, grid, tol=np.inf)
    assert len(everything) == len(grid)
    some = zero_set_scan(model, grid, tol=0.6)
    assert np.all(np.linalg.norm(model.encode(some), axis=1) <= 0.6)
    with pytest.raises(ContractError):
        zero_set_scan(model, np.zeros((0, 2)), tol=1.0)
