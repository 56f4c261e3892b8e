"""Relaxed second-order objective over densities: value, gradient density,
Hessian quadratic form and first-order (KKT) residuals.

The objective is

    F(θ) = α ∫ θ (∇u0 + ε ∇v(θ))·∇u0  −  εα ∫ θ(1−θ) |∇u0|²,

with v(θ) the singular shifted state driven by θ; the global-α convention
makes F(χ) = λ1 + ε λ2 for 0/1 densities.  All integrals use element-wise
gradients, per-element vertex averages of θ, and avg(θ)−avg(θ²) for the
mixing term, so F is an exact quadratic in the nodal values; the gradient
and Hessian below are its exact derivatives (the θ-diagonal part of the
mixing term differentiates node-wise, not through the element average).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .eig import DEFAULT_TOL, EigenPair, ShiftedSolver, smallest_eigenpair
from .expansion import check_density


@dataclass(frozen=True)
class RelaxedEval:
    """One objective evaluation: value, first-order eigenvalue, state, gradient."""

    F: float
    lambda1: float
    v_inf: np.ndarray
    grad_density: np.ndarray
    epsilon: float


class RelaxedObjective:
    """Caches the ground state, factorization and element data for one mesh.

    Every evaluation of F, its gradient or its Hessian form then costs a
    single reuse of the bordered factorization.
    """

    def __init__(self, mesh, alpha: float, epsilon: float, tol: float = DEFAULT_TOL,
                 ground: EigenPair | None = None):
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.mesh = mesh
        self.alpha = float(alpha)
        self.epsilon = float(epsilon)
        self.pencil = fem.build_pencil(mesh, alpha * np.ones(mesh.n_elems), alpha)
        self.ground = ground if ground is not None else smallest_eigenpair(self.pencil, tol)
        self.solver = ShiftedSolver(self.pencil, self.ground.lam, self.ground.u)
        self.lumped = self.pencil.lumped
        self.grad_u0 = fem.element_gradient(mesh, self.ground.u)
        self.gu0_sq = np.einsum("td,td->t", self.grad_u0, self.grad_u0)
        self.p_nodal = fem.nodal_project(mesh, self.gu0_sq, self.lumped)
        self._area = mesh.elem_area
        self._Mu0 = self.pencil.M @ self.pencil.restrict(self.ground.u)

    # -- state equation ----------------------------------------------------

    def lambda1(self, theta) -> float:
        theta_e = fem.element_average(self.mesh, theta)
        return self.alpha * float(np.sum(self._area * theta_e * self.gu0_sq))

    def _state(self, theta_e: np.ndarray):
        """Solve the shifted state equation for an element-averaged density."""
        lam1 = self.alpha * float(np.sum(self._area * theta_e * self.gu0_sq))
        rhs_full = fem.divergence_rhs(self.mesh, theta_e, self.ground.u, self.alpha)
        f = rhs_full[self.pencil.free] + lam1 * self._Mu0
        v, _ = self.solver.solve(f)
        return self.pencil.extend(v), lam1

    def v_inf(self, theta) -> np.ndarray:
        theta = check_density(theta, self.mesh.n_nodes)
        return self._state(fem.element_average(self.mesh, theta))[0]

    # -- objective / derivatives --------------------------------------------

    def evaluate(self, theta) -> RelaxedEval:
        theta = check_density(theta, self.mesh.n_nodes)
        mesh, eps, alpha = self.mesh, self.epsilon, self.alpha
        theta_e = fem.element_average(mesh, theta)
        theta_sq_e = fem.element_average(mesh, theta**2)
        v, lam1 = self._state(theta_e)
        gv_dot = np.einsum("td,td->t", fem.element_gradient(mesh, v), self.grad_u0)

        first = alpha * float(np.sum(self._area * theta_e * (self.gu0_sq + eps * gv_dot)))
        mixing = eps * alpha * float(
            np.sum(self._area * (theta_e - theta_sq_e) * self.gu0_sq)
        )
        F = first - mixing

        e_lin = alpha * (2.0 * eps * gv_dot + (1.0 - eps) * self.gu0_sq)
        grad = fem.nodal_project(mesh, e_lin, self.lumped) + (
            2.0 * eps * alpha
        ) * theta * self.p_nodal
        return RelaxedEval(F=F, lambda1=lam1, v_inf=v, grad_density=grad, epsilon=eps)

    def gradient(self, theta) -> np.ndarray:
        return self.evaluate(theta).grad_density

    def hessian_form(self, phi) -> float:
        """Quadratic form F''(φ,φ); θ-independent since F is quadratic."""
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.mesh.n_nodes,):
            raise ValueError("direction must be a nodal field")
        mesh, eps, alpha = self.mesh, self.epsilon, self.alpha
        phi_e = fem.element_average(mesh, phi)
        v, _ = self._state(phi_e)
        gv_dot = np.einsum("td,td->t", fem.element_gradient(mesh, v), self.grad_u0)
        bilinear = float(np.sum(self._area * phi_e * gv_dot))
        diag = float(np.sum(self.lumped * phi**2 * self.p_nodal))
        return 2.0 * eps * alpha * (bilinear + diag)

    def kkt(self, theta, multiplier: float, band: float = 0.01):
        """First-order optimality residuals for a sign-adjusted multiplier.

        Minimality requires g + Λ' ≈ 0 where band < θ < 1−band, ≥ 0 where
        θ ≤ band and ≤ 0 where θ ≥ 1−band; returns (interior_residual,
        sign_violation), with empty maxima counting as zero.
        """
        if not 0.0 < band < 0.5:
            raise ValueError("band must lie in (0, 1/2)")
        theta = check_density(theta, self.mesh.n_nodes)
        r = self.gradient(theta) + multiplier
        interior = (theta > band) & (theta < 1.0 - band)
        interior_residual = float(np.abs(r[interior]).max()) if interior.any() else 0.0
        low, high = theta <= band, theta >= 1.0 - band
        violations = [0.0]
        if low.any():
            violations.append(float((-r[low]).max()))
        if high.any():
            violations.append(float(r[high].max()))
        return interior_residual, max(violations)


# -- one-shot wrappers (module-level contract surface) -----------------------


def solve_v_inf(mesh, theta, alpha: float, ground: EigenPair, tol: float = DEFAULT_TOL) -> np.ndarray:
    """State solve for a density; coincides with the order-1 cascade mode."""
    prob = RelaxedObjective(mesh, alpha, epsilon=1.0, tol=tol, ground=ground)
    return prob.v_inf(theta)


def eval_objective(mesh, theta, alpha: float, epsilon: float, ground: EigenPair,
                   tol: float = DEFAULT_TOL) -> RelaxedEval:
    return RelaxedObjective(mesh, alpha, epsilon, tol=tol, ground=ground).evaluate(theta)


def eval_gradient(mesh, theta, alpha: float, epsilon: float, ground: EigenPair,
                  tol: float = DEFAULT_TOL) -> np.ndarray:
    return RelaxedObjective(mesh, alpha, epsilon, tol=tol, ground=ground).gradient(theta)


def eval_hessian_form(mesh, phi, alpha: float, epsilon: float, ground: EigenPair,
                      tol: float = DEFAULT_TOL) -> float:
    return RelaxedObjective(mesh, alpha, epsilon, tol=tol, ground=ground).hessian_form(phi)


def kkt_residual(mesh, theta, Lambda: float, alpha: float, epsilon: float,
                 ground: EigenPair, band: float = 0.01, tol: float = DEFAULT_TOL):
    """(interior_residual, sign_violation) for the sign-adjusted multiplier."""
    prob = RelaxedObjective(mesh, alpha, epsilon, tol=tol, ground=ground)
    return prob.kkt(theta, Lambda, band=band)
