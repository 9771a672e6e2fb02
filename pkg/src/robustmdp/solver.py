"""Robust backward induction, policy evaluation and enumeration oracles.

The controller-first solver computes J_n(x) = min_a sup_Q L_n J_{n+1}(x,a,Q)
by backward induction; the nature-first solver swaps the order. Both run on
precomputed (state, action, support) tables so stages are single vectorized
sweeps. The oracles enumerate policies outright and exist to check the
recursions, so they share no logic with them beyond the stage tables.
"""

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ambiguity import AmbiguitySet
from .distributions import Density
from .model import FiniteRobustMDP, project_indices, spot_check_flags, validate
from .risk import comonotone_density, expand_spectrum_to_generators

#: argmin/argmax tie window; lowest index wins inside it
TIE_TOL = 1e-12
#: default ceiling on oracle policy-pair evaluations
DEFAULT_ENUMERATION_CAP = 10_000_000
#: slack for monotonicity scans
MONOTONE_TOL = 1e-12

INCREASING = "increasing"
DECREASING = "decreasing"


class ModelValidationError(ValueError):
    """Raised when an operation requires a structurally valid instance."""

    def __init__(self, violations):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


class EnumerationCapError(RuntimeError):
    """Raised when an oracle would exceed its evaluation budget."""


@dataclass
class SolveResult:
    """Backward-induction output.

    values: (horizon+1, S) table, values[horizon] being the terminal cost.
    controller[n][s]: chosen action index.
    nature[n][s][a]: witness generator index (or "comonotone" on spectral
    stages) for each admissible action, None where inadmissible.
    witnesses[n][s]: the witness density at the chosen action.
    response[n][s][g]: nature-first only, the controller's best reply per
    generator.
    """

    values: np.ndarray
    controller: tuple
    nature: tuple
    witnesses: tuple
    response: Optional[tuple] = None
    flag_warnings: tuple = ()


def _validate_or_raise(model: FiniteRobustMDP):
    violations = validate(model)
    if violations:
        raise ModelValidationError(violations)


def argmin_with_ties(values, tol=TIE_TOL):
    """Index of the smallest entry, lowest index within `tol` of the minimum."""
    values = np.asarray(values, dtype=float)
    return int(np.argmax(values <= values.min() + tol))


def _first_within(matrix, mins, tol=TIE_TOL):
    return np.argmax(matrix <= (mins[:, None] + tol), axis=1)


def stage_tables(model: FiniteRobustMDP, n):
    """(next-state index, cost, admissible) tables of shape (S, M, m) / (S, M).

    Vectorized evaluation of the transition/cost closures is attempted
    first; closures that branch on scalars fall back to plain loops.
    """
    stage = model.stages[n]
    pts = np.asarray(model.states.points, dtype=float)
    acts = np.asarray(stage.actions.points, dtype=float)
    S, M, m = pts.size, acts.size, len(stage.disturbance)

    tr = stage.dynamics.transition
    if isinstance(tr, np.ndarray):
        raw = np.asarray(tr, dtype=float)
    else:
        raw = _try_vector_map(tr, pts, acts, stage.disturbance.support, (S, M, m))
        if raw is None:
            raw = np.empty((S, M, m))
            for s in range(S):
                for a in range(M):
                    for i, z in enumerate(stage.disturbance.support):
                        raw[s, a, i] = tr(pts[s], acts[a], z)
    idx = project_indices(pts, raw.ravel()).reshape(S, M, m)

    cost_map = stage.dynamics.cost
    if isinstance(cost_map, np.ndarray):
        cost = np.asarray(cost_map, dtype=float)
    else:
        cost = _try_vector_cost(cost_map, pts, acts, pts[idx])
        if cost is None:
            cost = np.empty((S, M, m))
            for s in range(S):
                for a in range(M):
                    for i in range(m):
                        cost[s, a, i] = cost_map(pts[s], acts[a], pts[idx[s, a, i]])

    legal = np.zeros((S, M), dtype=bool)
    for s, adm in enumerate(stage.admissible):
        legal[s, list(adm)] = True
    return idx, cost, legal


def _try_vector_map(fn, pts, acts, support, shape):
    try:
        zs = np.asarray(support, dtype=float)
        if zs.ndim != 1:
            return None
        out = np.asarray(
            fn(pts[:, None, None], acts[None, :, None], zs[None, None, :]), dtype=float
        )
        return out if out.shape == shape else None
    except Exception:
        return None


def _try_vector_cost(fn, pts, acts, next_vals):
    try:
        out = np.asarray(fn(pts[:, None, None], acts[None, :, None], next_vals), dtype=float)
        return out if out.shape == next_vals.shape else None
    except Exception:
        return None


def _generator_mask_tensor(stage, S, M, n_gen):
    mask = np.ones((S, M, n_gen), dtype=bool)
    if stage.generator_mask is not None:
        mask[:] = False
        for s in range(S):
            for a in stage.admissible[s]:
                mask[s, a, list(stage.generator_mask[s][a])] = True
    return mask


def _rho_matrix(pay, probs, phi):
    """Spectral risk of every (state, action) payoff row; exact step integrals."""
    order = np.argsort(pay, axis=2, kind="stable")
    pay_sorted = np.take_along_axis(pay, order, axis=2)
    p_sorted = probs[order]
    cum = np.cumsum(p_sorted, axis=2)
    knots = np.asarray(phi.breakpoints, dtype=float)
    cumint = np.concatenate(([0.0], np.cumsum(np.asarray(phi.values) * np.diff(knots))))
    upper = np.interp(cum, knots, cumint)
    lower = np.interp(cum - p_sorted, knots, cumint)
    return ((upper - lower) * pay_sorted).sum(axis=2)


def operator_L(model: FiniteRobustMDP, n, s, a, density: Density, v_next) -> float:
    """One-stage operator: expected cost-plus-continuation under a density."""
    stage = model.stages[n]
    if a not in stage.admissible[s]:
        raise ValueError(f"action index {a} not admissible at stage {n}, state {s}")
    payoff = model.stage_payoff(n, s, a, v_next)
    probs = np.asarray(stage.disturbance.ref_probs, dtype=float)
    return float(np.dot(probs * density.as_array(), payoff))


def solve_robust(model: FiniteRobustMDP, check_flags=True) -> SolveResult:
    """Controller-first robust backward induction.

    J[n][s] minimizes, over admissible actions, the worst case over the
    (masked) ambiguity set; argmin ties resolve to the lowest action index
    within TIE_TOL, worst-case ties to the lowest generator index.
    """
    _validate_or_raise(model)
    N, S = model.horizon, len(model.states)
    values = np.zeros((N + 1, S))
    values[N] = np.asarray(model.terminal_cost, dtype=float)
    controller, nature, witnesses = [], [], []

    for n in range(N - 1, -1, -1):
        stage = model.stages[n]
        idx, cost, legal = stage_tables(model, n)
        pay = cost + values[n + 1][idx]
        probs = np.asarray(stage.disturbance.ref_probs, dtype=float)

        if stage.ambiguity.is_spectral:
            sup_vals = _rho_matrix(pay, probs, stage.ambiguity.spectrum)
            gen_of = None
        else:
            # one pass per generator keeps memory at (S, M) however large the family
            gens = stage.ambiguity.generators
            gmask = (
                _generator_mask_tensor(stage, S, len(stage.actions), len(gens))
                if stage.generator_mask is not None
                else None
            )
            sup_vals = np.full((S, len(stage.actions)), -np.inf)
            gen_of = np.zeros((S, len(stage.actions)), dtype=int)
            for g, den in enumerate(gens):
                v = pay @ (probs * den.as_array())
                if gmask is not None:
                    v = np.where(gmask[:, :, g], v, -np.inf)
                better = v > sup_vals
                sup_vals = np.where(better, v, sup_vals)
                gen_of = np.where(better, g, gen_of)

        sup_vals = np.where(legal, sup_vals, np.inf)
        mins = sup_vals.min(axis=1)
        chosen = _first_within(sup_vals, mins)
        values[n] = mins

        row_nat, row_wit = [], []
        for s in range(S):
            a = int(chosen[s])
            if stage.ambiguity.is_spectral:
                entries = tuple("comonotone" if legal[s, j] else None for j in range(len(stage.actions)))
                row_wit.append(comonotone_density(pay[s, a], probs, stage.ambiguity.spectrum))
            else:
                entries = tuple(
                    int(gen_of[s, j]) if legal[s, j] else None for j in range(len(stage.actions))
                )
                row_wit.append(stage.ambiguity.generators[int(gen_of[s, a])])
            row_nat.append(entries)
        controller.insert(0, tuple(int(c) for c in chosen))
        nature.insert(0, tuple(row_nat))
        witnesses.insert(0, tuple(row_wit))

    warnings = tuple(spot_check_flags(model)) if check_flags and _has_flags(model) else ()
    return SolveResult(
        values=values,
        controller=tuple(controller),
        nature=tuple(nature),
        witnesses=tuple(witnesses),
        flag_warnings=warnings,
    )


def _has_flags(model):
    return any(
        st.dynamics.monotone is not None or st.dynamics.convex is not None for st in model.stages
    )


def _stage_generators(stage):
    """Generator family of a stage, expanding spectra into comonotone densities."""
    if stage.ambiguity.is_spectral:
        probs = np.asarray(stage.disturbance.ref_probs, dtype=float)
        return expand_spectrum_to_generators(stage.ambiguity.spectrum, probs)
    return list(stage.ambiguity.generators)


def solve_nature_first(model: FiniteRobustMDP) -> SolveResult:
    """Nature-first backward induction (the game's lower value).

    At each state nature commits to a generator before seeing the action,
    the controller best-responds per generator. Spectral stages are
    expanded into their comonotone generator family; masked models are
    rejected because the mask conditions nature's set on the action.
    """
    _validate_or_raise(model)
    if any(st.generator_mask is not None for st in model.stages):
        raise ValueError("nature-first order is incompatible with action-dependent generator masks")
    N, S = model.horizon, len(model.states)
    values = np.zeros((N + 1, S))
    values[N] = np.asarray(model.terminal_cost, dtype=float)
    controller, nature, witnesses, response = [], [], [], []

    for n in range(N - 1, -1, -1):
        stage = model.stages[n]
        idx, cost, legal = stage_tables(model, n)
        pay = cost + values[n + 1][idx]
        probs = np.asarray(stage.disturbance.ref_probs, dtype=float)
        gens = _stage_generators(stage)

        best_reply_vals = np.empty((S, len(gens)))
        replies = np.empty((S, len(gens)), dtype=int)
        for g, den in enumerate(gens):
            v = np.where(legal, pay @ (probs * den.as_array()), np.inf)
            mins = v.min(axis=1)
            best_reply_vals[:, g] = mins
            replies[:, g] = _first_within(v, mins)
        gamma = best_reply_vals.argmax(axis=1)
        values[n] = best_reply_vals.max(axis=1)

        row_ctrl, row_nat, row_wit, row_resp = [], [], [], []
        for s in range(S):
            g = int(gamma[s])
            row_ctrl.append(int(replies[s, g]))
            row_nat.append(tuple(g if legal[s, j] else None for j in range(len(stage.actions))))
            row_wit.append(gens[g])
            row_resp.append(tuple(int(r) for r in replies[s]))
        controller.insert(0, tuple(row_ctrl))
        nature.insert(0, tuple(row_nat))
        witnesses.insert(0, tuple(row_wit))
        response.insert(0, tuple(row_resp))

    return SolveResult(
        values=values,
        controller=tuple(controller),
        nature=tuple(nature),
        witnesses=tuple(witnesses),
        response=tuple(response),
    )


def _check_controller(model, controller):
    if len(controller) != model.horizon:
        raise ValueError("controller policy has the wrong number of stages")
    for n, row in enumerate(controller):
        if len(row) != len(model.states):
            raise ValueError(f"controller stage {n} not total on the state grid")
        for s, a in enumerate(row):
            if a not in model.stages[n].admissible[s]:
                raise ValueError(f"controller action {a} inadmissible at stage {n}, state {s}")


def evaluate_pair(model: FiniteRobustMDP, controller, nature) -> np.ndarray:
    """Value table of a fixed (controller, nature) policy pair.

    nature[n][s][a] names a generator index, or "comonotone" on spectral
    stages where the witness is rebuilt against the pair's own continuation.
    """
    _check_controller(model, controller)
    N, S = model.horizon, len(model.states)
    values = np.zeros((N + 1, S))
    values[N] = np.asarray(model.terminal_cost, dtype=float)
    for n in range(N - 1, -1, -1):
        stage = model.stages[n]
        probs = np.asarray(stage.disturbance.ref_probs, dtype=float)
        for s in range(S):
            a = controller[n][s]
            entry = nature[n][s][a]
            payoff = model.stage_payoff(n, s, a, values[n + 1])
            if entry == "comonotone":
                if not stage.ambiguity.is_spectral:
                    raise ValueError(f"comonotone tag on non-spectral stage {n}")
                den = comonotone_density(payoff, probs, stage.ambiguity.spectrum)
            else:
                gens = stage.ambiguity.generators
                if gens is None or not isinstance(entry, (int, np.integer)) or not 0 <= entry < len(gens):
                    raise ValueError(f"bad nature entry {entry!r} at stage {n}, state {s}, action {a}")
                den = gens[entry]
            values[n, s] = float(np.dot(probs * den.as_array(), payoff))
    return values


def evaluate_robust_policy(model: FiniteRobustMDP, controller) -> np.ndarray:
    """Robust value of a fixed controller policy: per-stage worst case over
    the (masked) ambiguity set."""
    _check_controller(model, controller)
    N, S = model.horizon, len(model.states)
    values = np.zeros((N + 1, S))
    values[N] = np.asarray(model.terminal_cost, dtype=float)
    for n in range(N - 1, -1, -1):
        stage = model.stages[n]
        probs = np.asarray(stage.disturbance.ref_probs, dtype=float)
        for s in range(S):
            a = controller[n][s]
            payoff = model.stage_payoff(n, s, a, values[n + 1])
            if stage.ambiguity.is_spectral:
                from .distributions import DiscreteDistribution
                from .risk import spectral_rho

                law = DiscreteDistribution.from_atoms(payoff, probs)
                values[n, s] = spectral_rho(law, stage.ambiguity.spectrum)
            else:
                gens = stage.ambiguity.generators
                allowed = stage.mask_for(s, a)
                pool = gens if allowed is None else [gens[g] for g in allowed]
                values[n, s] = max(float(np.dot(probs * g.as_array(), payoff)) for g in pool)
    return values


def _masked_generator_indices(stage, s, a):
    allowed = stage.mask_for(s, a)
    if allowed is None:
        return list(range(len(stage.ambiguity.generators)))
    return list(allowed)


def count_policy_pairs(model: FiniteRobustMDP) -> int:
    """Number of effective (controller, nature) Markov policy pairs.

    Nature's off-path choices never matter, so the count multiplies, per
    (stage, state), the masked generator counts summed over admissible
    actions.
    """
    total = 1
    for n, stage in enumerate(model.stages):
        for s in range(len(model.states)):
            total *= sum(len(_masked_generator_indices(stage, s, a)) for a in stage.admissible[s])
    return total


def oracle_min_max(model: FiniteRobustMDP, cap=DEFAULT_ENUMERATION_CAP, workers=None):
    """Brute-force min over controller policies of max over nature policies.

    Enumerates every Markov controller policy and, for each, every
    effective Markov nature response, evaluating the pair value directly.
    Returns the per-start-state values together with one optimal pair: the
    lowest-index controller attaining the value at every state, and a
    nature response attaining the max at the first state.
    """
    _validate_or_raise(model)
    if any(st.ambiguity.is_spectral for st in model.stages):
        raise ValueError("the enumeration oracle needs generator ambiguity sets")
    pairs = count_policy_pairs(model)
    if pairs > cap:
        raise EnumerationCapError(f"{pairs} policy-pair evaluations exceed the cap {cap}")

    N, S = model.horizon, len(model.states)
    tables = [stage_tables(model, n) for n in range(N)]
    term = np.asarray(model.terminal_cost, dtype=float)
    dens_by_slot = {}
    for n, stage in enumerate(model.stages):
        probs = np.asarray(stage.disturbance.ref_probs, dtype=float)
        for s in range(S):
            for a in stage.admissible[s]:
                gens = _masked_generator_indices(stage, s, a)
                dens_by_slot[(n, s, a)] = (
                    gens,
                    np.array([probs * stage.ambiguity.generators[g].as_array() for g in gens]),
                )

    slot_order = [(n, s) for n in range(N) for s in range(S)]
    slot_pos = {slot: k for k, slot in enumerate(slot_order)}

    def policy_iter():
        return itertools.product(*[model.stages[n].admissible[s] for (n, s) in slot_order])

    def controller_value(flat):
        """(S,) worst-case stage-0 values of the fixed controller, plus the
        per-nature-combo table for witness extraction."""
        shape = tuple(
            len(dens_by_slot[(n, s, flat[slot_pos[(n, s)]])][0]) for (n, s) in slot_order
        )
        combos = np.indices(shape).reshape(len(slot_order), -1)
        K = combos.shape[1]
        V = np.tile(term, (K, 1))
        for n in range(N - 1, -1, -1):
            idx, cost, _ = tables[n]
            Vn = np.empty((K, S))
            for s in range(S):
                a = flat[slot_pos[(n, s)]]
                tot = cost[s, a][None, :] + V[:, idx[s, a]]
                _, dmat = dens_by_slot[(n, s, a)]
                W = tot @ dmat.T
                Vn[:, s] = W[np.arange(K), combos[slot_pos[(n, s)]]]
            V = Vn
        return V, combos

    def worst_case(flat):
        V, _ = controller_value(flat)
        return V.max(axis=0)

    n_workers = workers or env_worker_count()
    values = np.full(S, np.inf)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            for m in pool.map(worst_case, policy_iter(), chunksize=64):
                values = np.minimum(values, m)
    else:
        for flat in policy_iter():
            values = np.minimum(values, worst_case(flat))

    best = next(f for f in policy_iter() if np.all(worst_case(f) <= values + TIE_TOL))
    pi_rows = tuple(tuple(best[slot_pos[(n, s)]] for s in range(S)) for n in range(N))
    V, combos = controller_value(best)
    k_star = int(np.argmax(V[:, 0]))
    gamma = []
    for n in range(N):
        stage = model.stages[n]
        row = []
        for s in range(S):
            entries = []
            for a in range(len(stage.actions.points)):
                if a in stage.admissible[s]:
                    gens = _masked_generator_indices(stage, s, a)
                    if a == best[slot_pos[(n, s)]]:
                        entries.append(gens[combos[slot_pos[(n, s)], k_star]])
                    else:
                        entries.append(gens[0])
                else:
                    entries.append(None)
            row.append(tuple(entries))
        gamma.append(tuple(row))
    return values, (pi_rows, tuple(gamma))


def env_worker_count() -> int:
    raw = os.environ.get("ROBUST_MDP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def oracle_history_value(model: FiniteRobustMDP, cap=DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """inf-sup value over history-dependent deterministic policies, N <= 2.

    Every controller map (a_0, then a_1 as a function of the reached state)
    and every nature map (generator after (x_0,a_0), then after the full
    stage-1 history) is enumerated and the pair value computed as a plain
    path sum, independent of the recursive solvers.
    """
    _validate_or_raise(model)
    if model.horizon > 2:
        raise ValueError("history enumeration supports horizons 1 and 2 only")
    if any(st.ambiguity.is_spectral for st in model.stages):
        raise ValueError("the enumeration oracle needs generator ambiguity sets")
    N, S = model.horizon, len(model.states)
    tables = [stage_tables(model, n) for n in range(N)]
    term = np.asarray(model.terminal_cost, dtype=float)

    def gen_arrays(n, s, a):
        stage = model.stages[n]
        probs = np.asarray(stage.disturbance.ref_probs, dtype=float)
        return [
            probs * stage.ambiguity.generators[g].as_array()
            for g in _masked_generator_indices(stage, s, a)
        ]

    if N == 1:
        idx0, cost0, _ = tables[0]
        out = np.empty(S)
        for s0 in range(S):
            best = np.inf
            for a0 in model.stages[0].admissible[s0]:
                payoff = cost0[s0, a0] + term[idx0[s0, a0]]
                worst = max(float(w @ payoff) for w in gen_arrays(0, s0, a0))
                best = min(best, worst)
            out[s0] = best
        return out

    idx0, cost0, _ = tables[0]
    idx1, cost1, _ = tables[1]
    q1 = {}  # (s1, a1, g) -> one-step-to-go value
    for s1 in range(S):
        for a1 in model.stages[1].admissible[s1]:
            payoff = cost1[s1, a1] + term[idx1[s1, a1]]
            for g, w in enumerate(gen_arrays(1, s1, a1)):
                q1[(s1, a1, g)] = float(w @ payoff)

    out = np.empty(S)
    adm1 = [model.stages[1].admissible[s] for s in range(S)]
    for s0 in range(S):
        evals = 0
        best = np.inf
        for a0 in model.stages[0].admissible[s0]:
            w0_list = gen_arrays(0, s0, a0)
            reach = idx0[s0, a0]
            c0 = cost0[s0, a0]
            for d1 in itertools.product(*adm1):
                worst = -np.inf
                g1_options = [range(len(gen_arrays(1, s1, d1[s1]))) for s1 in range(S)]
                for g0, w0 in enumerate(w0_list):
                    for g1 in itertools.product(*g1_options):
                        evals += 1
                        if evals > cap:
                            raise EnumerationCapError(
                                f"history enumeration exceeds the cap {cap}"
                            )
                        total = float(
                            np.dot(
                                w0,
                                c0
                                + np.array(
                                    [q1[(s1, d1[s1], g1[s1])] for s1 in reach]
                                ),
                            )
                        )
                        worst = max(worst, total)
                best = min(best, worst)
        out[s0] = best
    return out


def check_value_monotone(result: SolveResult, direction) -> bool:
    """Whether every stage's value table is monotone along the state grid."""
    diffs = np.diff(result.values, axis=1)
    if direction == INCREASING:
        return bool(np.all(diffs >= -MONOTONE_TOL))
    if direction == DECREASING:
        return bool(np.all(diffs <= MONOTONE_TOL))
    raise ValueError(f"direction must be {INCREASING!r} or {DECREASING!r}")


def result_to_dict(result: SolveResult) -> dict:
    """JSON-ready view of a solve result."""
    out = {
        "values": [[float(v) for v in row] for row in result.values],
        "controller": [list(row) for row in result.controller],
        "nature": [
            [[e if e is None or isinstance(e, str) else int(e) for e in entry] for entry in row]
            for row in result.nature
        ],
        "witnesses": [
            [list(map(float, w.weights)) for w in row] for row in result.witnesses
        ],
    }
    if result.response is not None:
        out["response"] = [[list(r) for r in row] for row in result.response]
    if result.flag_warnings:
        out["flag_warnings"] = list(result.flag_warnings)
    return out


def result_rows(result: SolveResult) -> list:
    """CSV rows (n, state, J, action, generator); terminal rows leave the
    action and generator blank."""
    rows = []
    n_stages = len(result.controller)
    for n in range(n_stages + 1):
        for s in range(result.values.shape[1]):
            if n < n_stages:
                a = result.controller[n][s]
                gen = result.nature[n][s][a]
                rows.append((n, s, float(result.values[n, s]), a, gen))
            else:
                rows.append((n, s, float(result.values[n, s]), "", ""))
    return rows
