"""Static minimax diagnostics and the inf-sup/sup-inf gap.

The one-stage game between the controller (rows) and nature (columns)
always satisfies weak duality: the nature-first value never exceeds the
controller-first value. In convex models the two coincide; the packaged
counterexample shows a strict gap and a strictly better randomized mix.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .ambiguity import AmbiguitySet
from .model import ActionSet, FiniteDisturbance, FiniteRobustMDP, Stage, StageDynamics, StateGrid
from .solver import solve_nature_first, solve_robust


@dataclass(frozen=True)
class StaticGame:
    """Finite payoff table: controller picks an action, nature a parameter."""

    actions: tuple
    thetas: tuple
    payoff: np.ndarray  # shape (len(actions), len(thetas))

    @staticmethod
    def from_function(actions, thetas, fn: Callable) -> "StaticGame":
        table = np.array([[fn(a, t) for t in thetas] for a in actions], dtype=float)
        return StaticGame(
            actions=tuple(float(a) for a in actions),
            thetas=tuple(float(t) for t in thetas),
            payoff=table,
        )


def upper_value(game: StaticGame):
    """min over actions of max over parameters; lowest-index ties.

    Returns (value, minimizing action value).
    """
    worst = game.payoff.max(axis=1)
    a_idx = int(np.argmin(worst))
    return float(worst[a_idx]), game.actions[a_idx]


def lower_value(game: StaticGame):
    """max over parameters of min over actions; lowest-index ties.

    Returns (value, maximizing parameter value).
    """
    best = game.payoff.min(axis=0)
    t_idx = int(np.argmax(best))
    return float(best[t_idx]), game.thetas[t_idx]


def mixing_value(game: StaticGame, mix) -> float:
    """Worst case of a randomized controller mix over the action grid."""
    mix = np.asarray(mix, dtype=float)
    if mix.shape != (len(game.actions),):
        raise ValueError("mix must weight the action grid")
    if abs(float(mix.sum()) - 1.0) > 1e-9:
        raise ValueError("mix weights must sum to 1")
    return float((mix @ game.payoff).max())


def saddle_search(game: StaticGame, tol) -> Optional[tuple]:
    """A pair satisfying both saddle inequalities within tol, if one exists.

    Exists exactly when the upper and lower values agree within tol; the
    returned pair attains the upper value (action) and the lower value
    (parameter).
    """
    up, a_star = upper_value(game)
    lo, t_star = lower_value(game)
    if up - lo <= tol:
        return a_star, t_star
    return None


def gap(model: FiniteRobustMDP) -> np.ndarray:
    """Pointwise controller-first minus nature-first values.

    Nonnegative up to float noise by weak duality; zero (up to grid error)
    in convex models.
    """
    return solve_robust(model).values - solve_nature_first(model).values


def build_counterexample(grid_step):
    """The static game with a strict minimax gap, and its one-stage instance.

    Quadratic miss -(a-z)^2 of a Bernoulli(p) target is billed as the next
    state; nature picks p. On grids containing {0, 0.5, 1} the
    controller-first value is -1/4, the nature-first value -1/2. The
    instance form realizes p through densities (2(1-p), 2p) over the fair
    Bernoulli reference law, exactly.
    """
    ratio = 0.5 / grid_step
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError(f"grid step {grid_step} must divide 0.5")
    n_pts = int(round(1.0 / grid_step)) + 1
    actions = np.linspace(0.0, 1.0, n_pts)
    p_grid = np.linspace(0.0, 1.0, n_pts)

    def payoff(a, p):
        return -(1.0 - p) * a**2 - p * (a - 1.0) ** 2

    game = StaticGame.from_function(actions, p_grid, payoff)

    reachable = np.concatenate((-((actions - 0.0) ** 2), -((actions - 1.0) ** 2), [0.0]))
    states = np.unique(reachable)
    stage = Stage(
        actions=ActionSet(points=tuple(float(a) for a in actions)),
        admissible=tuple(tuple(range(n_pts)) for _ in states),
        dynamics=StageDynamics(
            transition=lambda x, a, z: -((a - z) ** 2),
            cost=lambda x, a, nxt: nxt,
        ),
        disturbance=FiniteDisturbance(support=(0.0, 1.0), ref_probs=(0.5, 0.5)),
        ambiguity=AmbiguitySet.from_generators(
            [(2.0 * (1.0 - p), 2.0 * p) for p in p_grid]
        ),
    )
    mdp = FiniteRobustMDP(
        horizon=1,
        states=StateGrid(points=tuple(float(x) for x in states)),
        stages=(stage,),
        terminal_cost=tuple(0.0 for _ in states),
    )
    return game, mdp
