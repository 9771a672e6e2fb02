"""Application builders: scalar robust linear-quadratic control and the
wind/storage bidding problem.

The LQ solver runs the closed-form backward recursion with nature's
per-stage moment choice found by exhaustive grid search over the declared
parameter box (restricted to covariance-feasible points). The energy
builder produces a finite instance of the bidding problem whose worst case
reduces, under a stochastically minimal wind law, to a classical model.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ambiguity import MIN, AmbiguitySet, find_st_extreme
from .distributions import Density
from .model import (
    ActionSet,
    FiniteDisturbance,
    FiniteRobustMDP,
    Stage,
    StageDynamics,
    StateGrid,
)
from .solver import solve_robust

PSD_TOL = 1e-12


@dataclass(frozen=True)
class ParameterBox:
    """Closed intervals for the stage moments nature may pick.

    mu_u/sigma_u and mu_v/sigma_v parameterize the jointly normal
    multiplicative/control disturbances, sigma_uv their covariance, w2 the
    additive noise's second moment. sigma_u, sigma_v, w2 must be
    nonnegative intervals.
    """

    mu_u: tuple
    sigma_u: tuple
    mu_v: tuple
    sigma_v: tuple
    sigma_uv: tuple
    w2: tuple


@dataclass(frozen=True)
class BoxResolution:
    mu_u: int = 3
    sigma_u: int = 3
    mu_v: int = 3
    sigma_v: int = 3
    sigma_uv: int = 3
    w2: int = 2


@dataclass(frozen=True)
class LQParams:
    horizon: int
    q_weights: tuple  # state-cost weights, length horizon + 1, >= 0
    r_weights: tuple  # control-cost weights, length horizon, > 0
    boxes: tuple  # ParameterBox per stage
    resolution: BoxResolution = BoxResolution()
    trust_bracket_monotonicity: bool = False


@dataclass(frozen=True)
class ThetaPoint:
    mu_u: float
    sigma_u: float
    mu_v: float
    sigma_v: float
    sigma_uv: float
    w2: float

    def second_moment_u(self):
        return self.sigma_u**2 + self.mu_u**2

    def cross_moment(self):
        return self.sigma_uv + self.mu_u * self.mu_v

    def second_moment_v(self):
        return self.sigma_v**2 + self.mu_v**2


@dataclass(frozen=True)
class LQSolution:
    """Quadratic value coefficients, feedback gains and nature's choices.

    J_n(x) = k[n] * x^2 + const[n]; the optimal control is gains[n] * x.
    theta[n] is nature's maximizing box point, state-independent by
    construction (the maximized bracket does not involve the state).
    """

    k: tuple
    gains: tuple
    const: tuple
    theta: tuple


def _axis(interval, count):
    lo, hi = float(interval[0]), float(interval[1])
    if hi < lo:
        raise ValueError(f"interval {interval} is reversed")
    if lo == hi or count <= 1:
        return np.array([lo])
    return np.linspace(lo, hi, count)


def _psd_ok(sigma_u, sigma_v, sigma_uv):
    return sigma_uv**2 <= sigma_u**2 * sigma_v**2 + PSD_TOL


def _bracket(mu_u, sigma_u, mu_v, sigma_v, sigma_uv, r_over_k):
    num = (sigma_uv + mu_u * mu_v) ** 2
    den = r_over_k + sigma_v**2 + mu_v**2
    return sigma_u**2 + mu_u**2 - num / den


def _first_feasible_point(box, res):
    for mu_u in _axis(box.mu_u, res.mu_u):
        for sigma_u in _axis(box.sigma_u, res.sigma_u):
            for mu_v in _axis(box.mu_v, res.mu_v):
                for sigma_v in _axis(box.sigma_v, res.sigma_v):
                    for sigma_uv in _axis(box.sigma_uv, res.sigma_uv):
                        if _psd_ok(sigma_u, sigma_v, sigma_uv):
                            return mu_u, sigma_u, mu_v, sigma_v, sigma_uv
    raise ValueError("empty covariance-feasible parameter grid")


def lq_solve_closed_form(params: LQParams) -> LQSolution:
    """Backward recursion k[n] = q[n] + bracket* k[n+1] with nature's bracket
    maximized by grid search over the feasible box.

    sigma_u is pinned to its box maximum (the bracket increases in it and
    pinning also enlarges covariance feasibility); sigma_v is likewise
    pinned only when trust_bracket_monotonicity is set, and grid-searched
    otherwise as a safety net. The additive-noise contribution separates:
    const[n] = const[n+1] + max w2 * k[n+1].
    """
    N = params.horizon
    if len(params.q_weights) != N + 1 or len(params.r_weights) != N or len(params.boxes) != N:
        raise ValueError("weights/boxes do not match the horizon")
    res = params.resolution
    k = [0.0] * (N + 1)
    const = [0.0] * (N + 1)
    gains = [0.0] * N
    theta = [None] * N
    k[N] = float(params.q_weights[N])
    for n in range(N - 1, -1, -1):
        box = params.boxes[n]
        k_next = k[n + 1]
        w_grid = _axis(box.w2, res.w2)
        if w_grid[0] < 0:
            raise ValueError("w2 interval must be nonnegative")
        if k_next == 0.0:
            point = _first_feasible_point(box, res)
            theta[n] = ThetaPoint(*(float(c) for c in point), w2=float(w_grid[0]))
            k[n] = float(params.q_weights[n])
            gains[n] = 0.0
            const[n] = const[n + 1]
            continue
        r_over_k = params.r_weights[n] / k_next
        sigma_u = float(_axis(box.sigma_u, res.sigma_u)[-1])
        sigma_v_grid = (
            np.array([_axis(box.sigma_v, res.sigma_v)[-1]])
            if params.trust_bracket_monotonicity
            else _axis(box.sigma_v, res.sigma_v)
        )
        best, best_point = None, None
        for mu_u in _axis(box.mu_u, res.mu_u):
            for mu_v in _axis(box.mu_v, res.mu_v):
                for sigma_v in sigma_v_grid:
                    for sigma_uv in _axis(box.sigma_uv, res.sigma_uv):
                        if not _psd_ok(sigma_u, sigma_v, sigma_uv):
                            continue
                        val = _bracket(mu_u, sigma_u, mu_v, sigma_v, sigma_uv, r_over_k)
                        if best is None or val > best:
                            best = val
                            best_point = (mu_u, sigma_u, mu_v, sigma_v, sigma_uv)
        if best is None:
            raise ValueError("empty covariance-feasible parameter grid")
        w_star = float(w_grid[-1])
        point = ThetaPoint(*(float(c) for c in best_point), w2=w_star)
        k[n] = float(params.q_weights[n] + best * k_next)
        ev2 = point.second_moment_v()
        gains[n] = float(
            -point.cross_moment() * k_next / (params.r_weights[n] + ev2 * k_next)
        )
        const[n] = float(const[n + 1] + w_star * k_next)
        theta[n] = point
    return LQSolution(k=tuple(k), gains=tuple(gains), const=tuple(const), theta=tuple(theta))


@dataclass(frozen=True)
class LQVerification:
    """Grid minimax cross-check of the closed form.

    max_deviation: worst |min-max over grids - closed-form value|.
    interchange_gap: worst |min-max - max-min| over the same grids.
    recovered_theta: nature's grid argmax per (stage, state), computed from
    the nature-first direction with the inner minimization solved exactly;
    zero states are skipped (the objective is flat there).
    """

    max_deviation: float
    interchange_gap: float
    recovered_theta: dict


def _theta_grid(box, res):
    points = []
    for mu_u in _axis(box.mu_u, res.mu_u):
        for sigma_u in _axis(box.sigma_u, res.sigma_u):
            for mu_v in _axis(box.mu_v, res.mu_v):
                for sigma_v in _axis(box.sigma_v, res.sigma_v):
                    for sigma_uv in _axis(box.sigma_uv, res.sigma_uv):
                        if _psd_ok(sigma_u, sigma_v, sigma_uv):
                            points.append((mu_u, sigma_u, mu_v, sigma_v, sigma_uv))
    if not points:
        raise ValueError("empty covariance-feasible parameter grid")
    return points


def lq_verify_stagewise(params: LQParams, sol: LQSolution, sample_states, action_grid) -> LQVerification:
    """Stagewise numeric minimax against the closed form.

    For each stage and sampled state: minimize over the action grid the
    maximum over the feasible parameter grid of the exact-moment stage
    objective, and compare with k[n] x^2 + const[n]. Also evaluates the
    interchanged (nature-first) grid value and recovers nature's argmax.
    """
    actions = np.asarray(action_grid, dtype=float)
    res = params.resolution
    max_dev = 0.0
    max_interchange = 0.0
    recovered = {}
    for n in range(params.horizon):
        k_next, const_next = sol.k[n + 1], sol.const[n + 1]
        q_n, r_n = params.q_weights[n], params.r_weights[n]
        box = params.boxes[n]
        thetas = _theta_grid(box, res)
        eu2 = np.array([t[1] ** 2 + t[0] ** 2 for t in thetas])
        euv = np.array([t[4] + t[0] * t[2] for t in thetas])
        ev2 = np.array([t[3] ** 2 + t[2] ** 2 for t in thetas])
        w_grid = _axis(box.w2, res.w2)
        w_max = float(w_grid[-1])
        for x in sample_states:
            # objective(a, theta) with the additive-noise part at its own max
            base = (
                x**2 * q_n
                + (actions[:, None] ** 2) * r_n
                + (
                    eu2[None, :] * x**2
                    + 2.0 * euv[None, :] * x * actions[:, None]
                    + ev2[None, :] * (actions[:, None] ** 2)
                )
                * k_next
                + const_next
            )
            inf_sup = float((base.max(axis=1) + w_max * k_next).min())
            closed = sol.k[n] * x**2 + sol.const[n]
            max_dev = max(max_dev, abs(inf_sup - closed))
            sup_inf = float((base.min(axis=0) + w_max * k_next).max())
            max_interchange = max(max_interchange, abs(inf_sup - sup_inf))
            if x != 0.0:
                if k_next == 0.0:
                    point = _first_feasible_point(box, res)
                    recovered[(n, float(x))] = ThetaPoint(
                        *(float(c) for c in point), w2=float(w_grid[0])
                    )
                else:
                    r_over_k = r_n / k_next
                    best, best_t = None, None
                    for t in thetas:
                        val = _bracket(*t, r_over_k)
                        if best is None or val > best:
                            best, best_t = val, t
                    recovered[(n, float(x))] = ThetaPoint(
                        *(float(c) for c in best_t), w2=w_max
                    )
    return LQVerification(
        max_deviation=max_dev, interchange_gap=max_interchange, recovered_theta=recovered
    )


@dataclass(frozen=True)
class EnergyParams:
    """Wind/storage bidding problem on a battery of the given capacity.

    The owner bids an amount of energy; realized wind above the bid charges
    the battery (clipped at capacity), shortfall drains it and any residual
    shortage pays price + penalty per unit. Wind ambiguity is a generator
    family over the declared support inside [0, wind_max].
    """

    horizon: int
    capacity: float
    wind_max: float
    price: float
    penalty: float
    state_points: int
    action_points: int
    wind_support: tuple
    wind_ref_probs: tuple
    wind_generators: tuple


def _check_energy(params: EnergyParams):
    if params.capacity <= 0 or params.wind_max <= 0:
        raise ValueError("capacity and wind_max must be positive")
    if params.price < 0 or params.penalty < 0:
        raise ValueError("price and penalty must be nonnegative")
    if any(z < 0 or z > params.wind_max for z in params.wind_support):
        raise ValueError("wind support must lie inside [0, wind_max]")


def energy_build(params: EnergyParams) -> FiniteRobustMDP:
    """Finite instance of the bidding problem.

    Battery levels on [0, capacity], bids on [0, wind_max]; the cost is a
    dense per-support table because the shortage penalty depends on the
    wind realization beyond the clipped next state.
    """
    _check_energy(params)
    states = np.linspace(0.0, params.capacity, params.state_points)
    actions = np.linspace(0.0, params.wind_max, params.action_points)
    zs = np.asarray(params.wind_support, dtype=float)
    cap = params.capacity

    def transition(x, a, z):
        return np.clip(x + z - a, 0.0, cap)

    shortfall = np.maximum(
        actions[None, :, None] - states[:, None, None] - zs[None, None, :], 0.0
    )
    cost_table = -actions[None, :, None] * params.price + (
        params.price + params.penalty
    ) * shortfall

    stage = Stage(
        actions=ActionSet(points=tuple(float(a) for a in actions)),
        admissible=tuple(tuple(range(actions.size)) for _ in range(states.size)),
        dynamics=StageDynamics(transition=transition, cost=cost_table),
        disturbance=FiniteDisturbance(
            support=tuple(float(z) for z in zs),
            ref_probs=tuple(float(p) for p in params.wind_ref_probs),
        ),
        ambiguity=AmbiguitySet.from_generators(params.wind_generators),
    )
    return FiniteRobustMDP(
        horizon=params.horizon,
        states=StateGrid(points=tuple(float(x) for x in states)),
        stages=(stage,) * params.horizon,
        terminal_cost=tuple(0.0 for _ in range(states.size)),
    )


def energy_st_reduction_check(params: EnergyParams) -> bool:
    """Whether the robust solve collapses to the classical solve under the
    stochastically minimal wind law.

    Requires a <=_st-minimal generator; its absence is an error, not a
    negative answer.
    """
    model = energy_build(params)
    stage = model.stages[0]
    minimal = find_st_extreme(stage.ambiguity, stage.disturbance, MIN)
    if minimal is None:
        raise ValueError("wind ambiguity has no stochastically minimal element")
    robust = solve_robust(model).values
    reduced_stage = Stage(
        actions=stage.actions,
        admissible=stage.admissible,
        dynamics=stage.dynamics,
        disturbance=stage.disturbance,
        ambiguity=AmbiguitySet(generators=(minimal,)),
    )
    reduced = FiniteRobustMDP(
        horizon=model.horizon,
        states=model.states,
        stages=(reduced_stage,) * model.horizon,
        terminal_cost=model.terminal_cost,
    )
    classical = solve_robust(reduced).values
    return bool(np.max(np.abs(robust - classical)) <= 1e-12)


def discretized_beta_probs(support, wind_max, shape_a, shape_b):
    """Beta(shape_a, shape_b) discretized onto a wind support by pdf weights."""
    zs = np.asarray(support, dtype=float) / wind_max
    zs = np.clip(zs, 1e-9, 1.0 - 1e-9)
    coef = math.gamma(shape_a + shape_b) / (math.gamma(shape_a) * math.gamma(shape_b))
    pdf = coef * zs ** (shape_a - 1.0) * (1.0 - zs) ** (shape_b - 1.0)
    return tuple(float(p) for p in pdf / pdf.sum())


def binomial_mixture_probs(n_points, mix):
    """Mixture of Binomial(n_points-1, q) laws over support indices.

    mix is a list of (weight, q) pairs; weights are normalized.
    """
    total = sum(w for w, _ in mix)
    probs = np.zeros(n_points)
    for w, q in mix:
        for i in range(n_points):
            probs[i] += (w / total) * math.comb(n_points - 1, i) * q**i * (1 - q) ** (
                n_points - 1 - i
            )
    return tuple(float(p) for p in probs)


def density_from_law(target_probs, ref_probs) -> Density:
    """Reweighting that turns the reference law into the target law."""
    t = np.asarray(target_probs, dtype=float)
    r = np.asarray(ref_probs, dtype=float)
    return Density(weights=tuple(float(w) for w in t / r))
