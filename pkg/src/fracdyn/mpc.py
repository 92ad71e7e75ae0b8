"""Receding-horizon quadratic control of fractional systems with input boxes.

Certainty equivalence is used throughout: the zero-mean noise is dropped from
the predictions, which leaves the minimizing input stack unchanged for an
expected quadratic cost.  Each solve condenses the depth-p lift so predicted
states become affine in the stacked inputs, then minimizes the strictly
convex quadratic over the box.  The box-constrained QP is reduced exactly,
through a Cholesky factor of its Hessian, to a bounded-variable least-squares
problem and solved by an active-set method; optional linear state constraints
enter as a quadratic penalty (soft) or by penalty escalation (hard).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import DimensionError, DomainError, InfeasibleStateConstraints, NotSPD
from .model import FosModel, AugmentedModel, augment_p
from .simulate import FosSimulator, Trajectory, _resolve_noise, simulate_fos

__all__ = [
    "MpcProblem",
    "MpcSolution",
    "ClosedLoopResult",
    "solve_horizon",
    "run_closed_loop",
    "uncontrolled_baseline",
]

#: Default quadratic penalty weight for soft linear state constraints.
SOFT_PENALTY = 1e6

#: Relative KKT stationarity tolerance of a returned solution.
KKT_RTOL = 1e-8


@dataclass(frozen=True)
class MpcProblem:
    """Horizon problem data: weights, linear cost, box, optional state rows.

    ``P`` is the prediction horizon, ``M`` the control horizon (the prefix of
    inputs actually applied before re-solving), ``p`` the memory depth of the
    predictive lift.  ``Q`` (PSD) and ``R`` (PD, enforced) may be constant or
    per-offset schedules; ``c`` is the linear state cost (zero when omitted).
    ``state_H @ x <= state_h`` rows, when given, apply to every predicted
    state.
    """

    p: int
    P: int
    M: int
    Q: np.ndarray
    R: np.ndarray
    c: np.ndarray | None = None
    u_lo: np.ndarray | float = -np.inf
    u_hi: np.ndarray | float = np.inf
    state_H: np.ndarray | None = None
    state_h: np.ndarray | None = None
    soft_penalty: float = SOFT_PENALTY
    hard_state: bool = False

    def __post_init__(self):
        if self.p < 1:
            raise DomainError("model depth p must be >= 1")
        if self.P < 1:
            raise DomainError("prediction horizon P must be >= 1")
        if not 1 <= self.M <= self.P:
            raise DomainError("control horizon M must satisfy 1 <= M <= P")
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if Q.ndim == 1:
            Q = np.diag(Q)
        if R.ndim == 1:
            R = np.diag(R)
        for name, W in (("Q", Q), ("R", R)):
            stack = W if W.ndim == 3 else W[None] if W.ndim == 2 else W.reshape(1, 1, 1)
            for Wk in stack:
                sym = 0.5 * (Wk + Wk.T)
                if not np.allclose(Wk, Wk.T, rtol=0.0, atol=1e-9 * (1.0 + np.abs(Wk).max())):
                    raise NotSPD(f"{name} must be symmetric")
                lam = np.min(np.linalg.eigvalsh(sym))
                if name == "R" and lam <= 0.0:
                    raise NotSPD("R must be positive definite")
                if name == "Q" and lam < -1e-12 * max(1.0, np.abs(Wk).max()):
                    raise NotSPD("Q must be positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if self.c is not None:
            object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        lo = np.asarray(self.u_lo, dtype=float)
        hi = np.asarray(self.u_hi, dtype=float)
        if np.any(lo > hi):
            raise DomainError("u_lo exceeds u_hi")
        object.__setattr__(self, "u_lo", lo)
        object.__setattr__(self, "u_hi", hi)
        if (self.state_H is None) != (self.state_h is None):
            raise DomainError("state_H and state_h must be given together")


@dataclass(frozen=True)
class MpcSolution:
    """One horizon solve: optimal inputs, predictions, cost, KKT diagnostics."""

    u: np.ndarray  # (P, m)
    predicted: np.ndarray  # (P, n), states k+1 .. k+P
    cost: float
    kkt_residual: float
    active_lower: np.ndarray
    active_upper: np.ndarray
    penalty_cost: float = 0.0


def _weight_seq(W, count: int, size: int) -> list[np.ndarray]:
    W = np.asarray(W, dtype=float)
    if W.ndim == 3:
        if W.shape[0] < count:
            raise DimensionError(f"weight schedule shorter than horizon ({W.shape[0]} < {count})")
        return [W[j] for j in range(count)]
    if W.ndim == 0:
        return [np.eye(size) * float(W)] * count
    return [W] * count


def _condense(aug: AugmentedModel, ztil: np.ndarray, P: int):
    """Free response f (P, n) and input map S (P*n, P*m) of the lift."""
    n, m, d = aug.n, aug.m, aug.dim
    powers = [np.eye(d)]
    for _ in range(P):
        powers.append(aug.Atil @ powers[-1])
    f = np.empty((P, n))
    S = np.zeros((P * n, P * m))
    EB = [(pw @ aug.Btil)[:n] for pw in powers]  # E A^j B, newest block
    for j in range(1, P + 1):
        f[j - 1] = (powers[j] @ ztil)[:n]
        for i in range(j):
            S[(j - 1) * n : j * n, i * m : (i + 1) * m] = EB[j - 1 - i]
    return f, S


def _history_lift(model: FosModel, history, p: int) -> np.ndarray:
    """Stack the last p states, newest first, zero-padding before time 0."""
    hist = np.atleast_2d(np.asarray(history, dtype=float))
    if hist.shape[1] != model.n:
        raise DimensionError(f"history rows must have length {model.n}")
    z = np.zeros(p * model.n)
    take = min(p, hist.shape[0])
    for j in range(take):
        z[j * model.n : (j + 1) * model.n] = hist[hist.shape[0] - 1 - j]
    return z


def solve_horizon(
    problem: MpcProblem, model: FosModel, history, aug: AugmentedModel | None = None
) -> MpcSolution:
    """Solve one horizon from the given state history (rows, oldest first).

    The dynamics equalities are always eliminated by condensing; the
    remaining box QP is solved exactly (bounded-variable least squares on the
    Cholesky-factored objective).  Soft state constraints add a smooth
    one-sided quadratic penalty; in hard mode the penalty is escalated and
    persistent violation raises InfeasibleStateConstraints.
    """
    n, m = model.n, model.m
    if m == 0:
        raise DimensionError("model has no input channels to control")
    if aug is None:
        aug = augment_p(model, problem.p)
    ztil = _history_lift(model, history, problem.p)
    P = problem.P
    f, S = _condense(aug, ztil, P)

    Qs = _weight_seq(problem.Q, P, n)
    Rs = _weight_seq(problem.R, P, m)
    Qbar = scipy.linalg.block_diag(*Qs) if P else np.zeros((0, 0))
    Rbar = scipy.linalg.block_diag(*Rs)
    fvec = f.reshape(-1)
    cvec = np.zeros(P * n)
    if problem.c is not None:
        carr = np.asarray(problem.c, dtype=float)
        cvec = np.tile(carr, P) if carr.ndim == 1 else carr.reshape(-1)
        if cvec.shape != (P * n,):
            raise DimensionError("linear state cost has the wrong length")

    # J(U) = U^T H U + b^T U + const with H PD (R is PD).
    H = S.T @ Qbar @ S + Rbar
    b = 2.0 * S.T @ (Qbar @ fvec) + S.T @ cvec
    const = float(fvec @ Qbar @ fvec + cvec @ fvec)

    lo = np.broadcast_to(np.asarray(problem.u_lo, dtype=float), (m,))
    hi = np.broadcast_to(np.asarray(problem.u_hi, dtype=float), (m,))
    LO = np.tile(lo, P)
    HI = np.tile(hi, P)

    if problem.state_H is None:
        U = _solve_box_qp(H, b, LO, HI)
        penalty, final_weight = 0.0, 0.0
    else:
        U, penalty, final_weight = _solve_with_state_rows(problem, H, b, S, fvec, LO, HI)
    U = np.clip(U, LO, HI)  # bounds hold exactly, not just to solver tolerance

    grad = 2.0 * H @ U + b
    if problem.state_H is not None:
        grad = grad + _penalty_grad(problem, S, fvec, U, final_weight)
    proj = grad.copy()
    finite = np.abs(np.concatenate([LO[np.isfinite(LO)], HI[np.isfinite(HI)]]))
    atol = 1e-9 * (1.0 + (finite.max() if finite.size else 0.0))
    on_lo = U <= LO + atol
    on_hi = U >= HI - atol
    proj[on_lo & (proj > 0)] = 0.0
    proj[on_hi & (proj < 0)] = 0.0
    kkt = float(np.linalg.norm(proj))

    cost = float(U @ H @ U + b @ U + const)
    predicted = (fvec + S @ U).reshape(P, n)
    return MpcSolution(
        u=U.reshape(P, m), predicted=predicted, cost=cost, kkt_residual=kkt,
        active_lower=on_lo.reshape(P, m), active_upper=on_hi.reshape(P, m),
        penalty_cost=penalty,
    )


def _solve_box_qp(H: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Exact box QP: min U^T H U + b^T U s.t. lo <= U <= hi, H PD.

    With H = L L^T the problem is the bounded least-squares
    min || L^T U + L^{-1} b / 2 ||^2, solved by the BVLS active-set method.
    Components pinned by lo == hi are eliminated first.
    """
    pinned = lo == hi
    if np.any(pinned):
        U = np.where(pinned, lo, 0.0)
        free = ~pinned
        if np.any(free):
            Hff = H[np.ix_(free, free)]
            bf = b[free] + 2.0 * H[np.ix_(free, pinned)] @ lo[pinned]
            U[free] = _solve_box_qp(Hff, bf, lo[free], hi[free])
        return U
    if not (np.any(np.isfinite(lo)) or np.any(np.isfinite(hi))):
        return np.linalg.solve(2.0 * H, -b)
    L = np.linalg.cholesky(2.0 * H)
    # 0.5 * ||L^T U + L^{-1} b||^2 = U^T H U + b^T U + const
    rhs = scipy.linalg.solve_triangular(L, b, lower=True)
    res = scipy.optimize.lsq_linear(L.T, -rhs, bounds=(lo, hi), method="bvls", tol=1e-14)
    return res.x


def _penalty_value(problem: MpcProblem, S, fvec, U, weight: float) -> float:
    viol = _violations(problem, S, fvec, U)
    return float(weight * np.sum(viol**2))


def _penalty_grad(problem: MpcProblem, S, fvec, U, weight: float) -> np.ndarray:
    viol, rows = _violations(problem, S, fvec, U, return_rows=True)
    return 2.0 * weight * (rows.T @ viol)


def _state_rows(problem: MpcProblem, n: int):
    Hx = np.atleast_2d(np.asarray(problem.state_H, dtype=float))
    hx = np.atleast_1d(np.asarray(problem.state_h, dtype=float))
    if Hx.shape[1] != n or hx.shape != (Hx.shape[0],):
        raise DimensionError("state constraint rows do not match the state dimension")
    return Hx, hx


def _violations(problem: MpcProblem, S, fvec, U, return_rows: bool = False):
    n = S.shape[0] // problem.P
    Hx, hx = _state_rows(problem, n)
    big_H = scipy.linalg.block_diag(*([Hx] * problem.P))
    big_h = np.tile(hx, problem.P)
    margin = big_H @ (fvec + S @ U) - big_h
    viol = np.maximum(margin, 0.0)
    if return_rows:
        rows = (big_H @ S) * (margin > 0)[:, None]
        return viol, rows
    return viol


def _solve_with_state_rows(problem, H, b, S, fvec, lo, hi):
    """Penalty treatment of linear state rows on top of the box QP."""

    def solve_at(weight: float) -> np.ndarray:
        def fun(U):
            base = U @ H @ U + b @ U
            viol = _violations(problem, S, fvec, U)
            return base + weight * float(viol @ viol)

        def grad(U):
            g = 2.0 * H @ U + b
            return g + _penalty_grad(problem, S, fvec, U, weight)

        x0 = np.clip(np.zeros_like(b), lo, hi)
        res = scipy.optimize.minimize(
            fun, x0, jac=grad, method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-12},
        )
        return res.x

    weight = problem.soft_penalty
    U = solve_at(weight)
    if not problem.hard_state:
        return U, _penalty_value(problem, S, fvec, U, weight), weight
    viol_tol = 1e-8
    for _ in range(6):
        if float(np.max(_violations(problem, S, fvec, U), initial=0.0)) <= viol_tol:
            return U, _penalty_value(problem, S, fvec, U, weight), weight
        weight *= 10.0
        U = solve_at(weight)
    worst = float(np.max(_violations(problem, S, fvec, U), initial=0.0))
    if worst > viol_tol:
        raise InfeasibleStateConstraints(
            f"state rows still violated by {worst:.3e} after penalty escalation"
        )
    return U, _penalty_value(problem, S, fvec, U, weight), weight


@dataclass
class ClosedLoopResult:
    """Receding-horizon run: trajectory, applied inputs, per-cycle solves."""

    trajectory: Trajectory
    applied: np.ndarray  # (K, m)
    cycle_costs: np.ndarray  # one entry per solve event
    solutions: list = field(default_factory=list)
    solve_steps: list = field(default_factory=list)
    noise: np.ndarray | None = None

    @property
    def energy(self) -> float:
        return float(np.sum(self.trajectory.states**2))


def run_closed_loop(
    plant: FosModel,
    problem: MpcProblem,
    K: int,
    noise=None,
    *,
    x0=None,
    noise_sigma: float = 1.0,
    dt: float = 1.0,
) -> ClosedLoopResult:
    """Drive the plant for K steps, re-solving every M steps.

    Exactly the first M inputs of each solve are applied before the next
    solve (fewer at the tail of the run); the plant itself is stepped with
    full memory, so the depth-p predictive lift is an approximation of the
    true dynamics.  ``noise`` is a (K, p) array, an integer seed, or None.
    """
    if K < 1:
        raise DomainError("step count K must be >= 1")
    w = _resolve_noise(noise, K, plant.p, noise_sigma)
    x0 = np.zeros(plant.n) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    sim = FosSimulator(plant, x0, K)
    aug = augment_p(plant, problem.p)
    applied = np.zeros((K, plant.m))
    costs = []
    solutions = []
    solve_steps = []
    k = 0
    while k < K:
        sol = solve_horizon(problem, plant, sim.states, aug=aug)
        solutions.append(sol)
        solve_steps.append(k)
        costs.append(sol.cost)
        take = min(problem.M, K - k)
        for i in range(take):
            applied[k + i] = sol.u[i]
            sim.step(sol.u[i], w[k + i])
        k += take
    traj = Trajectory(states=sim.states.copy(), inputs=applied, noises=w, dt=dt)
    return ClosedLoopResult(
        trajectory=traj, applied=applied, cycle_costs=np.asarray(costs),
        solutions=solutions, solve_steps=solve_steps, noise=w,
    )


def uncontrolled_baseline(
    plant: FosModel, K: int, noise=None, *, x0=None, noise_sigma: float = 1.0, dt: float = 1.0
) -> Trajectory:
    """Zero-input run on the identical noise sequence, for paired comparison."""
    if K < 1:
        raise DomainError("step count K must be >= 1")
    w = _resolve_noise(noise, K, plant.p, noise_sigma)
    x0 = np.zeros(plant.n) if x0 is None else x0
    return simulate_fos(plant, x0, u=None, w=w, K=K, dt=dt)
