"""Projected steepest descent on the relaxed objective under a volume
constraint, with the multiplier found by dichotomy.

Each iterate is θ = clip(θ_prev − ρ·g + Λ, 0, 1) where Λ is bisected so
the lumped volume matches the target; ρ follows Armijo backtracking
(grow once per accepted step, shrink on rejection), which guarantees the
monotone-descent invariant the acceptance tests rely on.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eig import DEFAULT_TOL
from .relax import RelaxedObjective

_RHO_FLOOR_FACTOR = 1e-12
_BISECT_RELTOL = 1e-14


@dataclass
class OptimizerConfig:
    """Run parameters; defaults follow the stopping rules documented below.

    volume_fraction is the target m/|Ω| in (0,1).  rho0 defaults to 1/λ0 at
    setup; tol_vol defaults to 1e-10·|Ω|.  A seed switches the uniform
    feasible initialization to a projected random one.
    """

    epsilon: float
    volume_fraction: float
    alpha: float = 1.0
    rho0: float | None = None
    max_iters: int = 2000
    tol_step: float = 1e-7
    tol_vol: float | None = None
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    seed: int | None = None
    eig_tol: float = DEFAULT_TOL
    kkt_band: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.volume_fraction < 1.0:
            raise ValueError("volume_fraction must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.armijo_c < 1.0 or not 0.0 < self.armijo_shrink < 1.0:
            raise ValueError("armijo parameters must lie in (0, 1)")
        for name in ("tol_step", "max_iters"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("rho0", "tol_vol"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive when given")


@dataclass
class OptimizerState:
    """Current iterate plus per-iteration history (index 0 = initialization)."""

    theta: np.ndarray
    iter: int
    Lambda: float
    rho: float
    rho_accepted: float
    rho0: float = 0.0
    last_eval: object = None
    F_history: list = field(default_factory=list)
    vol_history: list = field(default_factory=list)
    rho_history: list = field(default_factory=list)
    Lambda_history: list = field(default_factory=list)
    l1_history: list = field(default_factory=list)
    stalled: bool = False
    converged: bool = False


def project_volume(lumped, theta_tilde, m: float, tol_vol: float):
    """Clip-plus-shift projection onto {θ in [0,1], Σ lumped·θ = m}.

    Bisects the monotone map Λ ↦ Σ lumped·clip(θ̃+Λ, 0, 1) on the bracket
    [−max θ̃, 1−min θ̃]; ties on flat plateaus resolve to the bisection
    midpoint.  Returns (θ, Λ).
    """
    lumped = np.asarray(lumped, dtype=float)
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    total = float(lumped.sum())
    if not 0.0 < m < total:
        raise ValueError(f"target volume {m} outside (0, {total})")

    def vol(lam):
        return float(lumped @ np.clip(theta_tilde + lam, 0.0, 1.0))

    lo = float(-theta_tilde.max())
    hi = float(1.0 - theta_tilde.min())
    if not vol(lo) <= m <= vol(hi):
        raise RuntimeError("volume bracket failure")  # unreachable for valid m
    lam = 0.5 * (lo + hi)
    while True:
        v = vol(lam)
        if abs(v - m) <= tol_vol:
            break
        if v < m:
            lo = lam
        else:
            hi = lam
        if hi - lo <= _BISECT_RELTOL * (1.0 + abs(lam)):
            break
        lam = 0.5 * (lo + hi)
    return np.clip(theta_tilde + lam, 0.0, 1.0), lam


def step(state: OptimizerState, config: OptimizerConfig, mesh, problem: RelaxedObjective):
    """One projected-descent step with Armijo backtracking.

    Mutates and returns ``state``; on step-size underflow the best strictly
    improving candidate (if any) is kept and the stall flag is set.
    """
    lumped = problem.lumped
    m = config.volume_fraction * float(lumped.sum())
    tol_vol = config.tol_vol if config.tol_vol is not None else 1e-10 * float(lumped.sum())

    current = state.last_eval
    if current is None:
        current = problem.evaluate(state.theta)
        state.last_eval = current
    g = current.grad_density
    rho = state.rho
    rho_floor = _RHO_FLOOR_FACTOR * (state.rho0 if state.rho0 > 0 else rho)
    noise = 8.0 * np.finfo(float).eps * (1.0 + abs(current.F))
    best = None

    while True:
        theta_new, lam = project_volume(lumped, state.theta - rho * g, m, tol_vol)
        ev = problem.evaluate(theta_new)
        decrease = float(lumped @ (g * (state.theta - theta_new)))
        if config.armijo_c * decrease <= noise:
            # requested decrease below the fp resolution of F: done at this rho
            state.converged = True
            if ev.F > current.F:
                # keep the previous iterate; (Lambda, rho_accepted) stay paired
                theta_new, ev, lam = state.theta, current, state.Lambda
            else:
                state.rho_accepted = rho
            break
        if ev.F <= current.F - config.armijo_c * decrease:
            state.rho_accepted = rho
            state.rho = rho / config.armijo_shrink
            break
        if best is None or ev.F < best[1].F:
            best = (theta_new, ev, lam, rho)
        rho *= config.armijo_shrink
        if rho < rho_floor:
            state.stalled = True
            if best is not None and best[1].F < current.F:
                theta_new, ev, lam, rho = best
                state.rho_accepted = rho
                state.rho = rho
            else:
                theta_new, ev, lam = state.theta, current, state.Lambda
            break

    l1 = float(lumped @ np.abs(theta_new - state.theta))
    state.theta = theta_new
    state.last_eval = ev
    state.Lambda = lam
    state.iter += 1
    state.F_history.append(ev.F)
    state.vol_history.append(float(lumped @ theta_new))
    state.rho_history.append(state.rho_accepted)
    state.Lambda_history.append(lam)
    state.l1_history.append(l1)
    return state


def run(mesh, config: OptimizerConfig, problem: RelaxedObjective | None = None):
    """Minimize the relaxed objective from a feasible uniform start.

    Returns (state, final RelaxedEval, (interior_residual, sign_violation)).
    The KKT residuals use the sign-adjusted multiplier −Λ/ρ, with Λ re-bisected
    by projecting the final iterate once more (the shift stored during the
    last accepted step belongs to the projection that produced the iterate,
    which lags one step behind stationarity).
    """
    if problem is None:
        problem = RelaxedObjective(mesh, config.alpha, config.epsilon, tol=config.eig_tol)
    lumped = problem.lumped
    total = float(lumped.sum())
    m = config.volume_fraction * total
    tol_vol = config.tol_vol if config.tol_vol is not None else 1e-10 * total

    if config.seed is None:
        theta0 = np.full(mesh.n_nodes, config.volume_fraction)
    else:
        rng = np.random.default_rng(config.seed)
        theta0, _ = project_volume(lumped, rng.uniform(0.0, 1.0, mesh.n_nodes), m, tol_vol)

    rho0 = config.rho0 if config.rho0 is not None else 1.0 / problem.ground.lam
    ev0 = problem.evaluate(theta0)
    state = OptimizerState(
        theta=theta0, iter=0, Lambda=0.0, rho=rho0, rho_accepted=rho0, rho0=rho0, last_eval=ev0
    )
    state.F_history.append(ev0.F)
    state.vol_history.append(float(lumped @ theta0))
    state.rho_history.append(rho0)
    state.Lambda_history.append(0.0)
    state.l1_history.append(0.0)

    for _ in range(config.max_iters):
        step(state, config, mesh, problem)
        if state.l1_history[-1] <= config.tol_step * total or state.stalled or state.converged:
            break

    tilde = state.theta - state.rho_accepted * state.last_eval.grad_density
    _, lam_probe = project_volume(lumped, tilde, m, tol_vol)
    multiplier = -lam_probe / state.rho_accepted
    kkt = problem.kkt(state.theta, multiplier, band=config.kkt_band)
    return state, state.last_eval, kkt


def write_history_csv(state: OptimizerState, path) -> None:
    """Per-iteration history: iter, F, volume, rho, Lambda, L1_change."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "F", "volume", "rho", "Lambda", "L1_change"])
        rows = zip(
            state.F_history,
            state.vol_history,
            state.rho_history,
            state.Lambda_history,
            state.l1_history,
        )
        for i, (F, vol, rho, lam, l1) in enumerate(rows):
            w.writerow([i, f"{F:.17g}", f"{vol:.17g}", f"{rho:.17g}", f"{lam:.17g}", f"{l1:.17g}"])
