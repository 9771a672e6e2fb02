"""Bounding-function checks and geometric value envelopes.

A bounding pair (lower, upper) dominates one-stage costs in conditional
expectation under every measure in the ambiguity sets and contracts (or
expands) at rate alpha along the dynamics; every policy value then lies in
a geometric envelope around zero. On finite supports the local domination
requirement is vacuous and only the expectation inequalities plus the
generator norm bound remain to be verified.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distributions import DiscreteDistribution
from .model import FiniteRobustMDP, Violation
from .risk import spectral_rho

CHECK_TOL = 1e-12
ENVELOPE_TOL = 1e-9


@dataclass(frozen=True)
class BoundingData:
    """Per-state bounding functions plus the contraction and norm metadata.

    lower[s] <= -eps_lower and upper[s] >= eps_upper with eps_lower +
    eps_upper = 1; alpha >= 0 and alpha != 1; norm_bound >= 1 caps the L^q
    norm of every generator density (q may be float('inf')).
    """

    lower: tuple
    upper: tuple
    alpha: float
    norm_bound: float
    q: float
    eps_lower: float = 0.5
    eps_upper: float = 0.5


def _data_violations(model, data):
    out = []
    S = len(model.states)
    if len(data.lower) != S or len(data.upper) != S:
        out.append(Violation("bounding", "bounding functions not total on the state grid"))
        return out
    if abs(data.eps_lower + data.eps_upper - 1.0) > CHECK_TOL:
        out.append(Violation("bounding", "eps_lower + eps_upper must equal 1"))
    if data.alpha < 0 or data.alpha == 1.0:
        out.append(Violation("bounding", f"alpha={data.alpha} must be >= 0 and != 1"))
    if data.norm_bound < 1.0:
        out.append(Violation("bounding", f"norm bound {data.norm_bound} < 1"))
    for s in range(S):
        if data.lower[s] > -data.eps_lower + CHECK_TOL:
            out.append(Violation("bounding", "lower bound above -eps_lower", state=s))
        if data.upper[s] < data.eps_upper - CHECK_TOL:
            out.append(Violation("bounding", "upper bound below eps_upper", state=s))
        if data.upper[s] - data.lower[s] < 1.0 - CHECK_TOL:
            out.append(Violation("bounding", "upper - lower must be >= 1", state=s))
    return out


def _generator_norm(weights, probs, q):
    w = np.asarray(weights, dtype=float)
    if math.isinf(q):
        return float(w.max())
    return float(np.dot(probs, w**q) ** (1.0 / q))


def _stage_expectations(stage, payoff, probs):
    """Range of E^Q[payoff] over the stage's ambiguity set: (min, max)."""
    if stage.ambiguity.is_spectral:
        hi = spectral_rho(DiscreteDistribution.from_atoms(payoff, probs), stage.ambiguity.spectrum)
        lo = -spectral_rho(
            DiscreteDistribution.from_atoms(-np.asarray(payoff), probs), stage.ambiguity.spectrum
        )
        return lo, hi
    vals = [float(np.dot(probs * g.as_array(), payoff)) for g in stage.ambiguity.generators]
    return min(vals), max(vals)


def check_bounding(model: FiniteRobustMDP, data: BoundingData) -> list:
    """All violations of the bounding-function requirements.

    Per stage, admissible pair and measure in the ambiguity set:
    E[-cost^-] >= lower(x), E[lower(next)] >= alpha*lower(x),
    E[cost^+] <= upper(x), E[upper(next)] <= alpha*upper(x); the terminal
    cost must sit between the bounds and every generator's L^q norm below
    the declared bound. The local L^p domination condition is
    auto-satisfied on finite supports and reported as such, not checked.
    """
    out = _data_violations(model, data)
    if out:
        return out
    lower = np.asarray(data.lower, dtype=float)
    upper = np.asarray(data.upper, dtype=float)
    term = np.asarray(model.terminal_cost, dtype=float)
    for s in range(len(model.states)):
        if term[s] < lower[s] - CHECK_TOL or term[s] > upper[s] + CHECK_TOL:
            out.append(Violation("bounding", "terminal cost escapes the bounds", state=s))

    for n, stage in enumerate(model.stages):
        probs = np.asarray(stage.disturbance.ref_probs, dtype=float)
        if not stage.ambiguity.is_spectral:
            for g, den in enumerate(stage.ambiguity.generators):
                norm = _generator_norm(den.weights, probs, data.q)
                if norm > data.norm_bound + CHECK_TOL:
                    out.append(
                        Violation(
                            "norm",
                            f"generator {g} has L^{data.q} norm {norm:.6g} > {data.norm_bound}",
                            stage=n,
                        )
                    )
        else:
            norm = stage.ambiguity.spectrum.norm(data.q)
            if norm > data.norm_bound + CHECK_TOL:
                out.append(
                    Violation("norm", f"spectral set has L^{data.q} norm {norm:.6g}", stage=n)
                )
        for s in range(len(model.states)):
            for a in stage.admissible[s]:
                costs = model.stage_costs(n, s, a)
                nxt = model.next_state_indices(n, s, a)
                neg_part = np.minimum(costs, 0.0)
                pos_part = np.maximum(costs, 0.0)
                lo, _ = _stage_expectations(stage, neg_part, probs)
                if lo < lower[s] - CHECK_TOL:
                    out.append(
                        Violation("bounding", "E[-cost^-] below the lower bound", n, s, a)
                    )
                _, hi = _stage_expectations(stage, pos_part, probs)
                if hi > upper[s] + CHECK_TOL:
                    out.append(
                        Violation("bounding", "E[cost^+] above the upper bound", n, s, a)
                    )
                lo, _ = _stage_expectations(stage, lower[nxt], probs)
                if lo < data.alpha * lower[s] - CHECK_TOL:
                    out.append(
                        Violation("bounding", "E[lower(next)] below alpha * lower", n, s, a)
                    )
                _, hi = _stage_expectations(stage, upper[nxt], probs)
                if hi > data.alpha * upper[s] + CHECK_TOL:
                    out.append(
                        Violation("bounding", "E[upper(next)] above alpha * upper", n, s, a)
                    )
    return out


def envelope_factor(alpha, stages_to_go) -> float:
    """(1 - alpha^k) / (1 - alpha) for k remaining stages; alpha != 1."""
    return (1.0 - alpha**stages_to_go) / (1.0 - alpha)


def check_envelope(model: FiniteRobustMDP, data: BoundingData, values, tol=ENVELOPE_TOL) -> bool:
    """Whether a value table sits inside the geometric bounding envelope.

    Meaningful only after check_bounding passed; the factor at stage n is
    (1 - alpha^(N+1-n)) / (1 - alpha).
    """
    values = np.asarray(values, dtype=float)
    N = model.horizon
    lower = np.asarray(data.lower, dtype=float)
    upper = np.asarray(data.upper, dtype=float)
    for n in range(N + 1):
        factor = envelope_factor(data.alpha, N + 1 - n)
        if np.any(values[n] < factor * lower - tol):
            return False
        if np.any(values[n] > factor * upper + tol):
            return False
    return True


def auto_satisfied_notes() -> list:
    """Requirements that hold automatically on finite supports."""
    return ["local L^p domination: auto-satisfied (finite support)"]
