"""Discounted LQR with linear controllers and a max-following switch.

Dynamics ``x_{t+1} = A x_t + B u_t + w_t`` with ``w_t ~ N(0, sigma2 I)`` and
per-step cost ``x^T Q x + u^T R u`` discounted by ``gamma``. A linear
controller ``u = -K x`` has cost-to-go ``x^T P x + q`` where ``P`` solves
``P = Q + K^T R K + gamma A_c^T P A_c`` with ``A_c = A - B K`` and
``q = gamma / (1 - gamma) * sigma2 * tr(P)``.

Everything here is a cost (lower is better).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import RngStream
from .value import McEstimate


class LyapunovDivergence(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class LqrSystem:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    gamma: float
    sigma2: float = 0.0

    def __post_init__(self):
        for name in ("A", "B", "Q", "R"):
            m = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, m)
        d = self.A.shape[0]
        if any(getattr(self, n).shape != (d, d) for n in ("A", "B", "Q", "R")):
            raise ValueError("A, B, Q, R must all be d x d")
        for n in ("Q", "R"):
            M = getattr(self, n)
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{n} must be symmetric positive semidefinite")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist(), "Q": self.Q.tolist(), "R": self.R.tolist(),
                "gamma": self.gamma, "sigma2": self.sigma2}

    @classmethod
    def from_dict(cls, d) -> "LqrSystem":
        return cls(d["A"], d["B"], d["Q"], d["R"], float(d["gamma"]), float(d.get("sigma2", 0.0)))


@dataclass(frozen=True, eq=False)
class LinearController:
    K: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", np.atleast_2d(np.asarray(self.K, dtype=float)))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return -x @ self.K.T


@dataclass(frozen=True, eq=False)
class QuadraticValue:
    P: np.ndarray
    q: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return _quad(x, self.P) + self.q


def _quad(x: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Row-wise ``x_n^T M x_n``."""
    return np.einsum("ni,ni->n", x @ M, x)


def closed_loop(system: LqrSystem, ctrl: LinearController, literal: bool = False) -> np.ndarray:
    """``A - B K``; with ``literal`` the B factor is dropped (``A - K``)."""
    return system.A - ctrl.K if literal else system.A - system.B @ ctrl.K


def lyapunov_residual(system: LqrSystem, ctrl: LinearController, P: np.ndarray, literal=False) -> float:
    Ac = closed_loop(system, ctrl, literal)
    rhs = system.Q + ctrl.K.T @ system.R @ ctrl.K + system.gamma * Ac.T @ P @ Ac
    return float(np.max(np.abs(P - rhs)))


def solve_lyapunov(system: LqrSystem, ctrl: LinearController, literal: bool = False,
                   tol: float = 1e-12, max_iter: int = 100_000) -> QuadraticValue:
    """Fixed-point iteration from ``P = 0`` for the discounted Lyapunov equation."""
    Ac = closed_loop(system, ctrl, literal)
    rho = float(np.max(np.abs(np.linalg.eigvals(Ac))))
    if system.gamma * rho**2 >= 1:
        raise LyapunovDivergence(
            f"gamma * rho(A_c)^2 = {system.gamma * rho**2:.6g} >= 1 (rho={rho:.6g}, gamma={system.gamma})")
    C = system.Q + ctrl.K.T @ system.R @ ctrl.K
    G = system.gamma
    P = np.zeros_like(C)
    for _ in range(max_iter):
        P_next = C + G * Ac.T @ P @ Ac
        P_next = 0.5 * (P_next + P_next.T)
        delta = np.max(np.abs(P_next - P))
        P = P_next
        if delta <= tol:
            break
    else:
        raise LyapunovDivergence(f"no convergence after {max_iter} iterations (rho={rho:.6g}, gamma={G})")
    res = lyapunov_residual(system, ctrl, P, literal)
    if res > 1e-10:
        raise LyapunovDivergence(f"fixed-point residual {res:.3g} too large")
    q = G / (1 - G) * system.sigma2 * float(np.trace(P))
    return QuadraticValue(P, q)


def truncation_horizon(system: LqrSystem, controllers, rel_tol: float = 1e-6, cap: int = 20_000) -> int:
    """Steps after which ``(gamma * rho^2)^t`` drops below ``rel_tol``, worst over ``controllers``."""
    worst = 0.0
    for c in controllers:
        rho = float(np.max(np.abs(np.linalg.eigvals(closed_loop(system, c)))))
        worst = max(worst, system.gamma * max(rho, 1.0) ** 2)
    if worst <= 0:
        return 1
    if worst >= 1:
        return cap
    return min(cap, int(math.ceil(math.log(rel_tol) / math.log(worst))) + 1)


@dataclass(frozen=True)
class CostEstimate:
    estimate: McEstimate
    t_max: int
    tail_ratio: float  # gamma^t_max weighted cost at the last step over the mean estimate


def rollout_costs(system: LqrSystem, controller_fn: Callable, x0, t_max: int, gen=None):
    """Truncated discounted cost of one rollout per row of ``x0``.

    Returns ``(costs, last)`` where ``last`` holds each rollout's discounted
    cost at the final kept step. Noise is drawn from ``gen`` when
    ``sigma2 > 0``.
    """
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    n, d = x.shape
    if d != system.dim:
        raise ValueError(f"states must have dimension {system.dim}")
    if system.sigma2 > 0 and gen is None:
        raise ValueError("a generator is needed when sigma2 > 0")
    total = np.zeros(n)
    last = np.zeros(n)
    sd = math.sqrt(system.sigma2)
    disc = 1.0
    for _ in range(t_max):
        u = controller_fn(x)
        last = disc * (_quad(x, system.Q) + _quad(u, system.R))
        total += last
        x = x @ system.A.T + u @ system.B.T
        if sd > 0:
            x = x + sd * gen.standard_normal((n, d))
        disc *= system.gamma
    return total, last


def mc_discounted_cost(system: LqrSystem, controller_fn: Callable, x0, n: int, t_max: int,
                       rng: RngStream) -> CostEstimate:
    """Average truncated discounted cost of ``n`` noisy rollouts from ``x0``.

    ``controller_fn`` maps an ``(n, d)`` batch of states to ``(n, d)``
    controls. The reported ``tail_ratio`` measures how much the last kept
    step still contributes, so truncation is visible rather than assumed.
    """
    x = np.tile(np.asarray(x0, dtype=float).reshape(1, system.dim), (n, 1))
    total, last = rollout_costs(system, controller_fn, x, t_max, rng.generator())
    est = McEstimate.from_samples(total)
    ratio = float(last.mean()) / est.mean if est.mean > 0 else 0.0
    return CostEstimate(est, t_max, ratio)


def max_following_controller(system: LqrSystem, ctrls, values) -> Callable:
    """Apply the controller with the lowest cost-to-go at each state (ties to the lowest index)."""
    if len(ctrls) != len(values) or not ctrls:
        raise ValueError("need matching, non-empty controller and value lists")
    Ks = np.stack([c.K for c in ctrls])

    def policy(x: np.ndarray) -> np.ndarray:
        x2 = np.atleast_2d(x)
        costs = np.stack([v(x2) for v in values])
        i = np.argmin(costs, axis=0)
        return -np.einsum("nij,nj->ni", Ks[i], x2, optimize=False)

    return policy


@dataclass(frozen=True)
class QuadraticFit:
    rms_residual: float
    P: np.ndarray
    q: float


def quadratic_fit_residual(samples) -> QuadraticFit:
    """Least-squares fit of ``v ~ x^T P x + q`` over symmetric ``P`` and scalar ``q``."""
    xs = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in samples])
    v = np.array([float(val) for _, val in samples])
    n, d = xs.shape
    iu = np.triu_indices(d)
    if n < len(iu[0]) + 1:
        raise ValueError(f"need at least {len(iu[0]) + 1} samples")
    scale = np.where(iu[0] == iu[1], 1.0, 2.0)
    X = np.column_stack([xs[:, i] * xs[:, j] * c for i, j, c in zip(*iu, scale)] + [np.ones(n)])
    coef, *_ = np.linalg.lstsq(X, v, rcond=None)
    resid = X @ coef - v
    P = np.zeros((d, d))
    P[iu] = coef[:-1]
    P = P + np.triu(P, 1).T
    return QuadraticFit(float(np.sqrt(np.mean(resid**2))), P, float(coef[-1]))


def polynomial_fit_residual(xs, values, degree: int = 2) -> float:
    """RMS residual of the best 1-D polynomial fit of the given degree."""
    xs = np.asarray(xs, dtype=float)
    X = np.vander(xs, degree + 1)
    coef, *_ = np.linalg.lstsq(X, np.asarray(values, dtype=float), rcond=None)
    return float(np.sqrt(np.mean((X @ coef - values) ** 2)))


def one_axis_instance(b_eps: float = 0.1, stable: float = 0.5, unstable: float = 1.05,
                      gamma: float = 0.9, sigma2: float = 0.01):
    """2-D system ``A = Q = R = I``, ``B = (1 + b_eps) I`` with two mirrored diagonal controllers.

    Controller 1 puts closed-loop eigenvalue ``stable`` on axis 0 and
    ``unstable`` on axis 1; controller 2 is the mirror image.
    """
    I = np.eye(2)
    b = 1.0 + b_eps
    system = LqrSystem(I, b * I, I, I, gamma, sigma2)
    k_s, k_u = (1.0 - stable) / b, (1.0 - unstable) / b
    return system, [LinearController(np.diag([k_s, k_u])), LinearController(np.diag([k_u, k_s]))]
