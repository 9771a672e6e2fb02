"""Finite robust decision problem instances.

A problem instance bundles a state grid, per-stage action grids with
admissibility, disturbance supports with reference probabilities, transition
and cost maps, per-stage ambiguity sets and a terminal cost. All containers
are immutable after construction and deliberately permissive: structural
problems are reported by :func:`validate` as data, not raised.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .ambiguity import AmbiguitySet
from .distributions import PROB_TOL, Density, DiscreteDistribution, density_violations
from .risk import spectrum_violations


@dataclass(frozen=True)
class StateGrid:
    """Ordered real state values x_1 < ... < x_S."""

    points: tuple

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class ActionSet:
    """Ordered scalar action values a_1 < ... < a_M."""

    points: tuple

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class FiniteDisturbance:
    """Finite disturbance support with its reference probabilities.

    Support entries are usually scalars; vector disturbances (e.g. (u, v, w)
    triples) are carried as tuples and consumed by the transition map only.
    """

    support: tuple
    ref_probs: tuple

    def __len__(self):
        return len(self.support)


@dataclass(frozen=True)
class MonotoneFlags:
    """User assertions of the monotone-model structure on the real line."""

    actions_shrink_with_state: bool = True
    transition_increasing_in_state: bool = True
    cost_increasing: bool = True
    terminal_increasing: bool = True


@dataclass(frozen=True)
class ConvexFlags:
    """User assertions of the convex-model structure (interchange hypotheses)."""

    admissible_convex: bool = True
    transition_convex: bool = True
    cost_convex: bool = True
    terminal_convex: bool = True


@dataclass(frozen=True)
class StageDynamics:
    """Transition and cost maps for one stage.

    transition: callable (x, a, z) -> next state value, or a dense
    (S, M, m) array of next-state values.
    cost: callable (x, a, x') -> cost, evaluated at the projected next
    state, or a dense (S, M, m) array indexed by support point. The array
    form exists for costs that depend on the disturbance beyond the
    projected next state (the energy penalty is the canonical case).
    """

    transition: Union[Callable, np.ndarray]
    cost: Union[Callable, np.ndarray]
    monotone: Optional[MonotoneFlags] = None
    convex: Optional[ConvexFlags] = None


@dataclass(frozen=True)
class Stage:
    """One stage of the instance: actions, admissibility, dynamics, ambiguity.

    admissible[s] is the tuple of admissible action indices in state s.
    generator_mask, when present, restricts nature per (state, action index)
    to a subset of generator indices.
    """

    actions: ActionSet
    admissible: tuple
    dynamics: StageDynamics
    disturbance: FiniteDisturbance
    ambiguity: AmbiguitySet
    generator_mask: Optional[tuple] = None

    def mask_for(self, s, a):
        if self.generator_mask is None:
            return None
        return self.generator_mask[s][a]


@dataclass(frozen=True)
class FiniteRobustMDP:
    horizon: int
    states: StateGrid
    stages: tuple
    terminal_cost: tuple

    def n_states(self):
        return len(self.states)

    def next_state_indices(self, n, s, a) -> np.ndarray:
        """Projected grid indices of T_n(x_s, a, z_i) over the support."""
        stage = self.stages[n]
        x = self.states.points[s]
        av = stage.actions.points[a]
        tr = stage.dynamics.transition
        if isinstance(tr, np.ndarray):
            raw = tr[s, a]
        else:
            raw = np.array([tr(x, av, z) for z in stage.disturbance.support], dtype=float)
        return project_indices(self.states.points, raw)

    def stage_costs(self, n, s, a) -> np.ndarray:
        """Per-support-point costs, evaluated at the projected next state."""
        stage = self.stages[n]
        cost = stage.dynamics.cost
        if isinstance(cost, np.ndarray):
            return np.asarray(cost[s, a], dtype=float)
        x = self.states.points[s]
        av = stage.actions.points[a]
        idx = self.next_state_indices(n, s, a)
        pts = np.asarray(self.states.points)
        return np.array([cost(x, av, pts[j]) for j in idx], dtype=float)

    def stage_payoff(self, n, s, a, v_next) -> np.ndarray:
        """cost + continuation per support point; the integrand of the stage operator."""
        idx = self.next_state_indices(n, s, a)
        v_next = np.asarray(v_next, dtype=float)
        return self.stage_costs(n, s, a) + v_next[idx]


@dataclass(frozen=True)
class Violation:
    """One structural defect, locating the offending stage/state/action."""

    code: str
    message: str
    stage: Optional[int] = None
    state: Optional[int] = None
    action: Optional[int] = None

    def __str__(self):
        where = ", ".join(
            f"{k}={v}"
            for k, v in (("stage", self.stage), ("state", self.state), ("action", self.action))
            if v is not None
        )
        return f"[{self.code}] {self.message}" + (f" ({where})" if where else "")


def project_to_grid(grid: StateGrid, x) -> int:
    """Index of the grid point nearest to x; ties go to the lower index,
    values outside the grid clamp to the boundary."""
    return int(project_indices(grid.points, np.array([x]))[0])


def project_indices(points, xs) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    xs = np.asarray(xs, dtype=float)
    pos = np.searchsorted(pts, xs)
    pos = np.clip(pos, 0, pts.size - 1)
    lo = np.clip(pos - 1, 0, pts.size - 1)
    take_lower = (xs - pts[lo]) <= (pts[pos] - xs)
    inside = pos > 0
    return np.where(inside & take_lower, lo, pos).astype(int)


def induced_distribution(model: FiniteRobustMDP, n, s, a, density: Density) -> DiscreteDistribution:
    """Law of the projected next state under the reweighted disturbance.

    Atoms that project to the same grid point are merged; zero-weight
    support points are dropped.
    """
    stage = model.stages[n]
    if a not in stage.admissible[s]:
        raise ValueError(f"action index {a} not admissible at stage {n}, state {s}")
    idx = model.next_state_indices(n, s, a)
    pts = np.asarray(model.states.points)
    probs = np.asarray(stage.disturbance.ref_probs) * density.as_array()
    return DiscreteDistribution.from_atoms(pts[idx], probs)


def validate(model: FiniteRobustMDP) -> list:
    """All structural violations of the instance; empty iff solvable.

    Covers grid ordering, admissibility nonemptiness, probability and
    density normalization, ambiguity well-formedness, mask consistency and
    totality of the transition/cost maps on the declared grids.
    """
    out = []
    pts = model.states.points
    if len(pts) == 0:
        out.append(Violation("state_grid", "state grid is empty"))
    elif any(b <= a for a, b in zip(pts, pts[1:])):
        out.append(Violation("state_grid", "state grid not strictly increasing"))
    if model.horizon < 1:
        out.append(Violation("horizon", f"horizon {model.horizon} < 1"))
    if len(model.stages) != model.horizon:
        out.append(
            Violation("stages", f"{len(model.stages)} stage blocks for horizon {model.horizon}")
        )
    if len(model.terminal_cost) != len(pts):
        out.append(Violation("terminal_cost", "terminal cost not total on the state grid"))
    elif any(not _finite(c) for c in model.terminal_cost):
        out.append(Violation("terminal_cost", "terminal cost has a non-finite value"))

    for n, stage in enumerate(model.stages):
        out.extend(_validate_stage(model, n, stage))
    return out


def _finite(x):
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False


def _validate_stage(model, n, stage):
    out = []
    S = len(model.states)
    acts = stage.actions.points
    if len(acts) == 0:
        out.append(Violation("actions", "empty action grid", stage=n))
    elif any(b <= a for a, b in zip(acts, acts[1:])):
        out.append(Violation("actions", "action grid not strictly increasing", stage=n))

    if len(stage.admissible) != S:
        out.append(Violation("admissible", "admissibility not total on the state grid", stage=n))
    else:
        for s, adm in enumerate(stage.admissible):
            if len(adm) == 0:
                out.append(Violation("admissible", "no admissible action", stage=n, state=s))
            elif any(a < 0 or a >= len(acts) for a in adm):
                out.append(
                    Violation("admissible", "admissible action index out of range", stage=n, state=s)
                )

    dist = stage.disturbance
    if len(dist.support) != len(dist.ref_probs) or len(dist.support) == 0:
        out.append(Violation("disturbance", "support/probability size mismatch", stage=n))
    else:
        p = np.asarray(dist.ref_probs, dtype=float)
        if np.any(p <= 0):
            out.append(Violation("disturbance", "reference probabilities must be positive", stage=n))
        if abs(float(p.sum()) - 1.0) > PROB_TOL:
            out.append(
                Violation("disturbance", f"reference probabilities sum to {float(p.sum())!r}", stage=n)
            )
        if len(set(dist.support)) != len(dist.support):
            out.append(Violation("disturbance", "support values not distinct", stage=n))

    amb = stage.ambiguity
    if amb.is_spectral:
        for msg in spectrum_violations(amb.spectrum):
            out.append(Violation("ambiguity", msg, stage=n))
        if stage.generator_mask is not None:
            out.append(Violation("mask", "generator mask on a spectral stage", stage=n))
    else:
        if not amb.generators:
            out.append(Violation("ambiguity", "empty generator family", stage=n))
        for g, den in enumerate(amb.generators or ()):
            for msg in density_violations(den.weights, dist.ref_probs):
                out.append(Violation("ambiguity", f"generator {g}: {msg}", stage=n))
        if stage.generator_mask is not None:
            out.extend(_validate_mask(stage, n, S))

    out.extend(_validate_totality(model, n, stage))
    return out


def _validate_mask(stage, n, S):
    out = []
    mask = stage.generator_mask
    n_gen = len(stage.ambiguity.generators)
    if len(mask) != S:
        out.append(Violation("mask", "mask not total on the state grid", stage=n))
        return out
    for s in range(S):
        if len(mask[s]) != len(stage.actions.points):
            out.append(Violation("mask", "mask not total on the action grid", stage=n, state=s))
            continue
        for a in stage.admissible[s]:
            entry = mask[s][a]
            if len(entry) == 0:
                out.append(Violation("mask", "empty masked generator set", stage=n, state=s, action=a))
            elif any(g < 0 or g >= n_gen for g in entry):
                out.append(
                    Violation("mask", "masked generator index out of range", stage=n, state=s, action=a)
                )
    return out


def _validate_totality(model, n, stage):
    out = []
    S, M, m = len(model.states), len(stage.actions), len(stage.disturbance)
    tr, cost = stage.dynamics.transition, stage.dynamics.cost
    # dense tables only need a shape and finiteness sweep
    if isinstance(tr, np.ndarray):
        if tr.shape != (S, M, m):
            out.append(Violation("transition", f"table shape {tr.shape} != {(S, M, m)}", stage=n))
        elif not np.all(np.isfinite(tr)):
            out.append(Violation("transition", "table has a non-finite entry", stage=n))
    if isinstance(cost, np.ndarray):
        if cost.shape != (S, M, m):
            out.append(Violation("cost", f"table shape {cost.shape} != {(S, M, m)}", stage=n))
        elif not np.all(np.isfinite(cost)):
            out.append(Violation("cost", "table has a non-finite entry", stage=n))
    if isinstance(tr, np.ndarray) and isinstance(cost, np.ndarray):
        return out
    for s in range(S):
        for a in stage.admissible[s]:
            try:
                idx = model.next_state_indices(n, s, a)
                if idx.shape != (m,):
                    raise ValueError("wrong arity")
            except Exception as exc:  # totality check: any failure is a violation
                out.append(
                    Violation("transition", f"transition not evaluable: {exc}", stage=n, state=s, action=a)
                )
                continue
            if isinstance(cost, np.ndarray):
                continue
            try:
                costs = model.stage_costs(n, s, a)
                if not np.all(np.isfinite(costs)):
                    raise ValueError("non-finite cost")
            except Exception as exc:
                out.append(
                    Violation("cost", f"cost not evaluable: {exc}", stage=n, state=s, action=a)
                )
    return out


def spot_check_flags(model: FiniteRobustMDP, samples=64, seed=0) -> list:
    """Sampled contradictions of the declared monotone/convex flags.

    The flags are user assertions; this cannot prove them but reports
    counterexamples found on sampled grid points (and midpoints for the
    convexity checks, where the maps are closures over the reals).
    """
    rng = np.random.default_rng(seed)
    warnings = []
    pts = np.asarray(model.states.points)
    term = np.asarray(model.terminal_cost, dtype=float)
    for n, stage in enumerate(model.stages):
        mono, conv = stage.dynamics.monotone, stage.dynamics.convex
        if mono is None and conv is None:
            continue
        tr, cost = stage.dynamics.transition, stage.dynamics.cost
        acts = np.asarray(stage.actions.points)
        zs = stage.disturbance.support
        if mono is not None:
            if mono.actions_shrink_with_state:
                for s in range(len(pts) - 1):
                    if not set(stage.admissible[s + 1]) <= set(stage.admissible[s]):
                        warnings.append(f"stage {n}: admissible sets do not shrink with the state")
                        break
            if mono.terminal_increasing and n == model.horizon - 1 and np.any(np.diff(term) < -1e-12):
                warnings.append("terminal cost asserted increasing but is not")
            if mono.transition_increasing_in_state and not isinstance(tr, np.ndarray) and len(pts) > 1:
                for _ in range(samples):
                    i, j = sorted(rng.choice(len(pts), size=2, replace=False))
                    a = acts[rng.integers(len(acts))]
                    z = zs[rng.integers(len(zs))]
                    if tr(pts[i], a, z) > tr(pts[j], a, z) + 1e-12:
                        warnings.append(f"stage {n}: transition not increasing in the state")
                        break
        if conv is not None:
            if conv.admissible_convex:
                for s, adm in enumerate(stage.admissible):
                    lo, hi = min(adm), max(adm)
                    if set(adm) != set(range(lo, hi + 1)):
                        warnings.append(
                            f"stage {n}, state {s}: admissible set is not an index interval"
                        )
                        break
            if conv.terminal_convex and n == model.horizon - 1 and len(pts) > 2:
                slopes = np.diff(term) / np.diff(pts)
                if np.any(np.diff(slopes) < -1e-9):
                    warnings.append("terminal cost asserted convex but slopes decrease")
            if conv.transition_convex and not isinstance(tr, np.ndarray) and len(acts) > 1:
                for _ in range(samples):
                    x1, x2 = pts[rng.integers(len(pts), size=2)]
                    a1, a2 = acts[rng.integers(len(acts), size=2)]
                    z = zs[rng.integers(len(zs))]
                    mid = tr(0.5 * (x1 + x2), 0.5 * (a1 + a2), z)
                    if mid > 0.5 * tr(x1, a1, z) + 0.5 * tr(x2, a2, z) + 1e-9:
                        warnings.append(f"stage {n}: transition not convex in (state, action)")
                        break
    return warnings
