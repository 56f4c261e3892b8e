import numpy as np
import pytest

from lowcontrast import fem
from lowcontrast.expansion import compute_series
from lowcontrast.mesh import generate_unit_square
from lowcontrast.relax import (
    RelaxedObjective,
    eval_gradient,
    eval_hessian_form,
    eval_objective,
    kkt_residual,
    solve_v_inf,
)

EPS = 0.08


@pytest.fixture(scope="module")
def mesh():
    return generate_unit_square(10, 10)


@pytest.fixture(scope="module")
def prob(mesh):
    return RelaxedObjective(mesh, alpha=1.0, epsilon=EPS, tol=1e-12)


class TestStateEquation:
    def test_constant_density_gives_zero(self, mesh, prob):
        v = prob.v_inf(np.full(mesh.n_nodes, 0.4))
        assert np.abs(v).max() <= 1e-8

    def test_matches_first_cascade_mode(self, mesh, prob):
        rng = np.random.default_rng(41)
        chi = (rng.random(mesh.n_nodes) < 0.5).astype(float)
        series = compute_series(mesh, chi, 1.0, 1, tol=1e-12)
        v = prob.v_inf(chi)
        assert np.abs(v - series.modes[1]).max() <= 1e-11

    def test_state_identities(self, mesh, prob):
        rng = np.random.default_rng(42)
        u0f = prob.pencil.restrict(prob.ground.u)
        lam0 = prob.ground.lam
        for _ in range(10):
            vf = prob.pencil.restrict(prob.v_inf(rng.uniform(0, 1, mesh.n_nodes)))
            assert abs(float(u0f @ (prob.pencil.M @ vf))) <= 1e-11
            assert abs(float(u0f @ (prob.pencil.K @ vf))) <= 1e-10 * lam0

    def test_wrapper_equivalent(self, mesh, prob):
        rng = np.random.default_rng(43)
        theta = rng.uniform(0, 1, mesh.n_nodes)
        v1 = solve_v_inf(mesh, theta, 1.0, prob.ground)
        np.testing.assert_allclose(v1, prob.v_inf(theta), atol=1e-12)


class TestObjective:
    def test_zero_density(self, mesh, prob):
        assert prob.evaluate(np.zeros(mesh.n_nodes)).F == 0.0

    def test_full_density_gives_ground_state(self, mesh, prob):
        assert prob.evaluate(np.ones(mesh.n_nodes)).F == pytest.approx(
            prob.ground.lam, rel=1e-12
        )

    def test_binary_density_matches_series(self, mesh, prob):
        # for nodal 0/1 densities the mixing term vanishes: F = lam1 + eps lam2
        rng = np.random.default_rng(44)
        chi = (rng.random(mesh.n_nodes) < 0.5).astype(float)
        series = compute_series(mesh, chi, 1.0, 2, tol=1e-12)
        expected = series.lambdas[1] + EPS * series.lambdas[2]
        assert prob.evaluate(chi).F == pytest.approx(expected, rel=1e-11)

    def test_relaxation_gap_sign(self, mesh, prob):
        rng = np.random.default_rng(45)
        theta = rng.uniform(0.2, 0.8, mesh.n_nodes)
        ev = prob.evaluate(theta)
        theta_e = fem.element_average(mesh, theta)
        gv = fem.element_gradient(mesh, ev.v_inf)
        first = float(
            np.sum(
                mesh.elem_area
                * theta_e
                * (prob.gu0_sq + EPS * np.einsum("td,td->t", gv, prob.grad_u0))
            )
        )
        assert ev.F < first  # strictly, since theta(1-theta)|grad u0|^2 > 0 somewhere

    def test_eval_objective_wrapper(self, mesh, prob):
        theta = np.linspace(0, 1, mesh.n_nodes)
        ev = eval_objective(mesh, theta, 1.0, EPS, prob.ground)
        assert ev.F == pytest.approx(prob.evaluate(theta).F, rel=1e-13)


class TestGradient:
    def test_full_density_formula(self, mesh, prob):
        g = prob.gradient(np.ones(mesh.n_nodes))
        expected = (1 + EPS) * prob.p_nodal
        np.testing.assert_allclose(g, expected, rtol=1e-12)

    def test_central_difference(self, mesh, prob):
        rng = np.random.default_rng(46)
        theta = rng.uniform(0.3, 0.7, mesh.n_nodes)
        phi = rng.uniform(-0.2, 0.2, mesh.n_nodes)
        t = 1e-3
        fd = (prob.evaluate(theta + t * phi).F - prob.evaluate(theta - t * phi).F) / (2 * t)
        an = float(prob.lumped @ (prob.gradient(theta) * phi))
        assert fd == pytest.approx(an, rel=1e-8)

    def test_integral_identity(self, mesh, prob):
        rng = np.random.default_rng(47)
        lam0 = prob.ground.lam
        for _ in range(10):
            theta = rng.uniform(0, 1, mesh.n_nodes)
            ev = prob.evaluate(theta)
            total = float(prob.lumped @ ev.grad_density)
            expected = 2 * EPS * ev.lambda1 + (1 - EPS) * lam0
            assert total == pytest.approx(expected, rel=1e-9)

    def test_affine_in_theta(self, mesh, prob):
        rng = np.random.default_rng(48)
        t1 = rng.uniform(0, 1, mesh.n_nodes)
        t2 = rng.uniform(0, 1, mesh.n_nodes)
        g_mid = prob.gradient(0.5 * (t1 + t2))
        g_avg = 0.5 * (prob.gradient(t1) + prob.gradient(t2))
        assert np.abs(g_mid - g_avg).max() <= 1e-12 * np.abs(g_avg).max()

    def test_wrapper(self, mesh, prob):
        theta = np.linspace(0, 1, mesh.n_nodes)
        np.testing.assert_allclose(
            eval_gradient(mesh, theta, 1.0, EPS, prob.ground),
            prob.gradient(theta),
            rtol=1e-12,
        )


class TestHessian:
    def test_zero_direction(self, prob, mesh):
        assert prob.hessian_form(np.zeros(mesh.n_nodes)) == 0.0

    def test_constant_direction(self, mesh, prob):
        c = 0.42
        expected = 2 * EPS * c * c * prob.ground.lam
        assert prob.hessian_form(np.full(mesh.n_nodes, c)) == pytest.approx(expected, rel=1e-9)

    def test_quadratic_exactness(self, mesh, prob):
        rng = np.random.default_rng(49)
        for _ in range(8):
            theta = rng.uniform(0.2, 0.8, mesh.n_nodes)
            phi = rng.uniform(-0.15, 0.15, mesh.n_nodes)
            F0 = prob.evaluate(theta)
            F1 = prob.evaluate(theta + phi)
            taylor = (
                F0.F
                + float(prob.lumped @ (F0.grad_density * phi))
                + 0.5 * prob.hessian_form(phi)
            )
            assert abs(F1.F - taylor) <= 1e-9 * (1 + abs(F0.F))

    def test_wrapper(self, mesh, prob):
        phi = np.linspace(-0.5, 0.5, mesh.n_nodes)
        assert eval_hessian_form(mesh, phi, 1.0, EPS, prob.ground) == pytest.approx(
            prob.hessian_form(phi), rel=1e-12
        )


class TestKKT:
    def test_pure_binary_empty_interior(self, mesh, prob):
        rng = np.random.default_rng(50)
        chi = (rng.random(mesh.n_nodes) < 0.3).astype(float)
        interior_res, _ = prob.kkt(chi, multiplier=0.0)
        assert interior_res == 0.0

    def test_uniform_design_spread(self, mesh, prob):
        theta = np.full(mesh.n_nodes, 0.5)
        g = prob.gradient(theta)
        mult = -float(np.mean(g))
        interior_res, sign_v = prob.kkt(theta, mult)
        assert interior_res == pytest.approx(np.abs(g - g.mean()).max(), rel=1e-12)
        assert interior_res > 0  # a uniform design is not critical
        assert sign_v == 0.0  # no nodes at the bounds

    def test_band_validation(self, mesh, prob):
        with pytest.raises(ValueError):
            prob.kkt(np.full(mesh.n_nodes, 0.5), 0.0, band=0.7)

    def test_wrapper(self, mesh, prob):
        theta = np.full(mesh.n_nodes, 0.3)
        got = kkt_residual(mesh, theta, -1.0, 1.0, EPS, prob.ground)
        assert got == pytest.approx(prob.kkt(theta, -1.0))


def test_epsilon_must_be_positive(mesh):
    with pytest.raises(ValueError):
        RelaxedObjective(mesh, 1.0, epsilon=0.0)
